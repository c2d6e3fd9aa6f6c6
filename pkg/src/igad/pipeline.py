"""End-to-end training pipeline: pretrain, finetune, score.

Stage one (pretrain) teaches the model to place all observed nodes inside a
radius-r latent ball while repairing masked features. Stage two (finetune)
decodes shell-sampled latent codes into pseudo anomalies, augments the graph
block-diagonally, and pushes real nodes toward the ball and pseudo nodes
toward the shell. The anomaly score of a node is the Euclidean norm of its
latent embedding; larger means more anomalous.

Reproducibility contract: every random draw is derived from
(master_seed, stage, epoch, purpose), so interrupting after any epoch and
resuming from the checkpoint reproduces the uninterrupted run bit for bit at
double precision.
"""
from __future__ import annotations

import dataclasses
import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.stats import spearmanr

from . import rng as rng_mod
from . import tape
from .checkpoint import load_tensors, save_tensors
from .errors import DataError, UsageError
from .graphs import IncompleteGraph
from .impute import (DiffusionConfig, densify, imputer_forward, init_imputer,
                     ppr_diffuse)
from .latent import (decoder_forward, decoder_forward_np, init_decoder,
                     init_projector, normalize_adjacency, project)
from .metrics import auroc as _auroc
from .optim import AdamState, ParamStore, adam_init, adam_step
from .priors import PriorSpec, sample_ball_gaussian, sample_shell_gaussian
from .pseudo import (augment_features, block_diagonal, build_pseudo_adjacency,
                     pseudo_count, sample_pseudo_codes)
from .sinkhorn import sinkhorn_divergence
from .tape import Tensor

LR_GRID = (1e-4, 5e-4, 1e-3)
PROBE_EPOCHS = 10
PROBE_RANK_FLOOR = 0.95
CHECKPOINT_FILE = "tensors.bin"
META_FILE = "state.txt"
CONFIG_FILE = "config.txt"
HISTORY_FILE = "history.tsv"


@dataclass
class TrainConfig:
    """Every knob of a run. Field names double as config-file keys."""

    latent_dim: int = 256
    feat_weight: float = 0.01
    recon_weight: float = 0.001
    pseudo_frac: float = 0.1
    lr: float | None = None
    epochs_pre: int = 100
    epochs_fine: int = 100
    radius: float = 8.0
    shell_inner: float | None = None
    shell_outer: float | None = None
    sinkhorn_eps: float = 0.1
    sinkhorn_iters: int = 200
    sinkhorn_batch: int = 128
    ppr_beta: float = 0.85
    ppr_iters: int = 50
    ppr_tol: float = 1e-6
    ppr_norm: str = "row"
    gcn_norm: str = "none"
    cosine_threshold: float = 0.5
    prior_resample: str = "stage"
    no_feature_pathway: bool = False
    no_structure_pathway: bool = False
    no_feat_loss: bool = False
    no_recon_loss: bool = False
    no_pseudo: bool = False
    precision: str = "f64"
    master_seed: int = 0

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise UsageError("latent_dim must be >= 1")
        if self.feat_weight < 0 or self.recon_weight < 0:
            raise UsageError("loss weights must be non-negative")
        if not 0.0 <= self.pseudo_frac <= 1.0:
            raise UsageError("pseudo_frac must be in [0, 1]")
        if self.lr is not None and self.lr < 0:
            raise UsageError("lr must be non-negative (or omitted to probe)")
        if self.epochs_pre < 0 or self.epochs_fine < 0:
            raise UsageError("epoch counts must be non-negative")
        if self.radius <= 0:
            raise UsageError("radius must be positive")
        if self.sinkhorn_eps <= 0:
            raise UsageError("sinkhorn_eps must be positive")
        if self.sinkhorn_iters < 1 or self.sinkhorn_batch < 1:
            raise UsageError("sinkhorn_iters and sinkhorn_batch must be >= 1")
        if not 0.0 <= self.cosine_threshold <= 1.0:
            raise UsageError("cosine_threshold must be in [0, 1]")
        if self.prior_resample not in ("stage", "epoch"):
            raise UsageError(f"unknown prior_resample {self.prior_resample!r}")
        if self.precision not in ("f64", "f32"):
            raise UsageError(f"unknown precision {self.precision!r}")
        self.prior()      # radius ordering
        self.diffusion()  # diffusion ranges

    def prior(self) -> PriorSpec:
        r = self.radius
        return PriorSpec(dim=self.latent_dim, radius=r,
                         shell_inner=self.shell_inner if self.shell_inner is not None else 1.2 * r,
                         shell_outer=self.shell_outer if self.shell_outer is not None else 2.0 * r)

    def diffusion(self) -> DiffusionConfig:
        return DiffusionConfig(beta=self.ppr_beta, max_iters=self.ppr_iters,
                               tol=self.ppr_tol, normalize=self.ppr_norm)

    @property
    def dtype(self):
        return np.float64 if self.precision == "f64" else np.float32

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "none"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"config line {ln}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in fields:
                raise UsageError(f"config line {ln}: unknown key {key!r}")
            kwargs[key] = _parse_field(fields[key], val, ln)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise UsageError(f"cannot read config {path}: {e}") from e
        return cls.from_text(text)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


def _parse_field(f: dataclasses.Field, val: str, ln: int):
    t = f.type
    low = val.lower()
    try:
        if t == "int":
            return int(val)
        if t == "float":
            return float(val)
        if t in ("float | None", "int | None"):
            if low in ("none", ""):
                return None
            return float(val) if t.startswith("float") else int(val)
        if t == "bool":
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {val!r}")
        return val
    except ValueError as e:
        raise UsageError(f"config line {ln}: {e}") from e


@dataclass
class ModelBundle:
    """Everything needed to continue or apply a training run."""

    cfg: TrainConfig
    params: ParamStore
    adam: AdamState
    stage: str                 # "pretrain" | "finetune"
    epochs_done: int           # completed epochs within the current stage
    lr_used: float
    history: list[dict] = field(default_factory=list)
    pseudo_features: np.ndarray | None = None

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tensors: dict[str, np.ndarray] = {}
        for name, t in self.params.items():
            tensors[f"param.{name}"] = t.value
        for name in self.adam.m:
            tensors[f"adam.m.{name}"] = self.adam.m[name]
            tensors[f"adam.v.{name}"] = self.adam.v[name]
        tensors["adam.step"] = np.array([[float(self.adam.step_count)]])
        if self.pseudo_features is not None:
            tensors["pseudo.features"] = self.pseudo_features
        save_tensors(directory / CHECKPOINT_FILE, tensors)
        (directory / CONFIG_FILE).write_text(self.cfg.to_text())
        (directory / META_FILE).write_text(
            f"stage = {self.stage}\n"
            f"epochs_done = {self.epochs_done}\n"
            f"lr_used = {self.lr_used!r}\n"
            f"has_pseudo = {int(self.pseudo_features is not None)}\n")
        hdr = "stage\tepoch\tdist\tfeat\trecon\ttotal"
        rows = [hdr] + [
            f"{h['stage']}\t{h['epoch']}\t{h['dist']:.17g}\t{h['feat']:.17g}"
            f"\t{h['recon']:.17g}\t{h['total']:.17g}" for h in self.history]
        (directory / HISTORY_FILE).write_text("\n".join(rows) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "ModelBundle":
        directory = Path(directory)
        cfg = TrainConfig.from_file(directory / CONFIG_FILE)
        kv: dict[str, str] = {}
        try:
            for line in (directory / META_FILE).read_text().splitlines():
                if line.strip():
                    k, _, v = line.partition("=")
                    kv[k.strip()] = v.strip()
        except OSError as e:
            raise DataError(f"cannot read checkpoint state: {e}") from e
        try:
            stage = kv["stage"]
            epochs_done = int(kv["epochs_done"])
            lr_used = float(kv["lr_used"])
            has_pseudo = bool(int(kv["has_pseudo"]))
        except (KeyError, ValueError) as e:
            raise DataError(f"malformed checkpoint state: {e}") from e
        if stage not in ("pretrain", "finetune"):
            raise DataError(f"unknown checkpoint stage {stage!r}")
        tensors = load_tensors(directory / CHECKPOINT_FILE)
        params = ParamStore()
        adam = AdamState(lr=lr_used)
        for name, arr in tensors.items():
            if name.startswith("param."):
                params.create(name[len("param."):], arr.astype(cfg.dtype))
        for name, t in params.items():
            try:
                adam.m[name] = tensors[f"adam.m.{name}"].astype(cfg.dtype)
                adam.v[name] = tensors[f"adam.v.{name}"].astype(cfg.dtype)
            except KeyError as e:
                raise DataError(f"checkpoint missing optimizer slot {e}") from e
        adam.step_count = int(tensors["adam.step"][0, 0])
        pseudo = tensors.get("pseudo.features")
        if has_pseudo and pseudo is None:
            raise DataError("checkpoint advertises pseudo features but has none")
        history = _read_history(directory / HISTORY_FILE)
        return cls(cfg=cfg, params=params, adam=adam, stage=stage,
                   epochs_done=epochs_done, lr_used=lr_used, history=history,
                   pseudo_features=pseudo)


def _read_history(path: Path) -> list[dict]:
    out: list[dict] = []
    if not path.exists():
        return out
    lines = path.read_text().splitlines()
    for line in lines[1:]:
        if not line.strip():
            continue
        stage, epoch, dist, feat, recon, total = line.split("\t")
        out.append({"stage": stage, "epoch": int(epoch), "dist": float(dist),
                    "feat": float(feat), "recon": float(recon),
                    "total": float(total)})
    return out


def init_params(cfg: TrainConfig, d: int) -> ParamStore:
    """Fresh parameters; creation order is part of the seed contract."""
    r = rng_mod.stream(cfg.master_seed, rng_mod.INIT_PARAMS)
    store = ParamStore()
    hidden = cfg.latent_dim
    if not cfg.no_feature_pathway:
        init_imputer(store, "imputer", d, hidden, r)
    init_projector(store, "proj", d, cfg.latent_dim, r)
    init_decoder(store, "dec", cfg.latent_dim, hidden, d, r)
    if cfg.dtype is not np.float64:
        for _, t in store.items():
            t.value = t.value.astype(cfg.dtype)
    return store


class _Stage:
    """Precomputed constants for one training stage on one graph."""

    def __init__(self, cfg: TrainConfig, inc: IncompleteGraph,
                 pseudo_features: np.ndarray | None):
        dt = cfg.dtype
        self.cfg = cfg
        self.n = inc.n
        A_obs = inc.adjacency_obs()
        if pseudo_features is None:
            self.m = 0
            X = inc.features_obs
            M = inc.mask.feature_mask
            A_hat = self._repair_structure(A_obs, cfg)
        else:
            self.m = pseudo_features.shape[0]
            X, M = augment_features(inc.features_obs, inc.mask.feature_mask,
                                    pseudo_features)
            A_ps = build_pseudo_adjacency(pseudo_features, cfg.cosine_threshold)
            A_hat = block_diagonal(self._repair_structure(A_obs, cfg),
                                   self._repair_structure(A_ps, cfg))
        self.X_const = Tensor(X.astype(dt))
        self.M_const = Tensor(M.astype(dt))
        self.A_norm = normalize_adjacency(A_hat, cfg.gcn_norm).astype(dt)

    @staticmethod
    def _repair_structure(A: np.ndarray, cfg: TrainConfig) -> np.ndarray:
        if cfg.no_structure_pathway:
            return A + np.eye(A.shape[0], dtype=A.dtype)
        return densify(A, ppr_diffuse(A, cfg.diffusion()))


def _forward(params: ParamStore, cfg: TrainConfig, st: _Stage):
    """(X_hat, Z) tape nodes for the stage's graph."""
    if cfg.no_feature_pathway:
        X_hat = st.X_const
    else:
        X_hat = imputer_forward(params, "imputer", st.X_const)
    Z = project(params, "proj", X_hat, st.A_norm)
    return X_hat, Z


def _batch_rows(Z: Tensor, rows_total: int, offset: int, batch: int,
                r: np.random.Generator) -> Tensor:
    """Subsample rows [offset, offset+rows_total) of Z for the OT loss."""
    if rows_total <= batch:
        return tape.slice_rows(Z, offset, offset + rows_total)
    idx = np.sort(r.choice(rows_total, size=batch, replace=False)) + offset
    return tape.gather_rows(Z, idx)


def _epoch_losses(params: ParamStore, cfg: TrainConfig, st: _Stage,
                  stage_tag: int, epoch: int):
    """Assemble the stage loss for one epoch; returns (loss, telemetry)."""
    X_hat, Z = _forward(params, cfg, st)
    seed = cfg.master_seed
    prior = cfg.prior()
    batch_rng = rng_mod.epoch_stream(seed, stage_tag, epoch, rng_mod.BATCH)
    # "stage" holds one prior draw fixed per stage so the cloud settles
    # against a stationary target; "epoch" redraws every epoch.
    prior_epoch = 0 if cfg.prior_resample == "stage" else epoch

    Z_real = _batch_rows(Z, st.n, 0, cfg.sinkhorn_batch, batch_rng)
    ball = sample_ball_gaussian(
        prior, Z_real.shape[0],
        rng_mod.epoch_stream(seed, stage_tag, prior_epoch, rng_mod.PRIOR_BALL))
    dist = sinkhorn_divergence(Z_real, Tensor(ball), cfg.sinkhorn_eps,
                               cfg.sinkhorn_iters)
    if st.m > 0:
        Z_ps = _batch_rows(Z, st.m, st.n, cfg.sinkhorn_batch, batch_rng)
        shell = sample_shell_gaussian(
            prior, Z_ps.shape[0],
            rng_mod.epoch_stream(seed, stage_tag, prior_epoch,
                                 rng_mod.PRIOR_SHELL))
        dist = tape.add(dist, sinkhorn_divergence(
            Z_ps, Tensor(shell), cfg.sinkhorn_eps, cfg.sinkhorn_iters))

    total = dist
    feat_val = 0.0
    if not cfg.no_feat_loss and not cfg.no_feature_pathway:
        feat = tape.masked_mse(X_hat, st.X_const, st.M_const)
        feat_val = feat.item()
        total = tape.add(total, tape.scale(feat, cfg.feat_weight))
    recon_val = 0.0
    if not cfg.no_recon_loss:
        recon = tape.masked_mse(decoder_forward(params, "dec", Z),
                                st.X_const, st.M_const)
        recon_val = recon.item()
        total = tape.add(total, tape.scale(recon, cfg.recon_weight))
    telemetry = {"dist": dist.item(), "feat": feat_val, "recon": recon_val,
                 "total": total.item()}
    return total, telemetry


def _run_epochs(bundle: ModelBundle, st: _Stage, stage_tag: int,
                first_epoch: int, last_epoch: int) -> None:
    stage_name = "pretrain" if stage_tag == rng_mod.STAGE_PRETRAIN else "finetune"
    for epoch in range(first_epoch, last_epoch):
        loss, telemetry = _epoch_losses(bundle.params, bundle.cfg, st,
                                        stage_tag, epoch)
        bundle.params.zero_grads()
        loss.backward()
        adam_step(bundle.params, bundle.adam)
        telemetry.update(stage=stage_name, epoch=epoch)
        bundle.history.append(telemetry)
        bundle.epochs_done = epoch + 1


def _calibrate_latent_scale(params: ParamStore, cfg: TrainConfig,
                            st: _Stage) -> None:
    """Rescale the projector output layer so the farthest initial embedding
    sits exactly on the prior ball's surface.

    Graph aggregation gives dense hubs initial embeddings tens of times
    farther out than ordinary nodes. Calibrating the cloud's *mean* onto
    the ball leaves those few rows far outside it, and their huge squared
    displacements dominate the transport gradient through the shared
    weights, crushing every embedding toward the origin before useful
    structure forms. Calibrating the *maximum* onto the ball starts all
    rows inside the target support, where per-row pulls are commensurate.
    Z is linear in the output weights, so one deterministic rescale does
    this without changing the init distribution's shape.
    """
    _, Z = _forward(params, cfg, st)
    norms = np.linalg.norm(np.asarray(Z.value, dtype=np.float64), axis=1)
    top = float(norms.max())
    if top > 0.0:
        w2 = params["proj.w2"]
        w2.value = (w2.value * (cfg.radius / top)).astype(cfg.dtype)


def _fresh_params(cfg: TrainConfig, st: _Stage) -> ParamStore:
    params = init_params(cfg, st.X_const.shape[1])
    _calibrate_latent_scale(params, cfg, st)
    return params


def _probe_lr(cfg: TrainConfig, st: _Stage) -> float:
    """Short pretrain per candidate rate; keep the lowest final loss among
    candidates that preserved the latent norm ordering.

    The transport loss has two degenerate attractors that *lower* the loss
    while destroying the anomaly score (the per-node norm ordering).
    Implosion: too-aggressive steps crush every embedding toward the
    origin, where all points are equidistant from the prior. Equalization:
    the latent cloud's effective rank is far below the prior's dimension,
    so transport couplings stay diffuse and their fixed point gives every
    row the *same* norm — the loss drops as the ordering flattens, which
    makes raw loss comparison across rates actively misleading. Both
    failure modes announce themselves within a few epochs: implosion as a
    falling mean radius, equalization as decay in the rank correlation
    between initial and current norms (measured stable rates hold rho >
    0.99 over the probe window; rates that end up equalized are already
    at or below ~0.93). A candidate is excluded if its mean radius fell
    below half its initial value or the Spearman correlation of its norm
    ranking against the init fell below PROBE_RANK_FLOOR; if every
    candidate is excluded, the gentlest rate wins.
    """
    _, Z0 = _forward(_fresh_params(cfg, st), cfg, st)
    norms0 = np.linalg.norm(np.asarray(Z0.value, dtype=np.float64), axis=1)
    floor = 0.5 * float(norms0.mean())
    best_lr, best_loss = None, np.inf
    for lr in LR_GRID:
        params = _fresh_params(cfg, st)
        trial = ModelBundle(cfg=cfg, params=params,
                            adam=adam_init(params, lr), stage="pretrain",
                            epochs_done=0, lr_used=lr)
        _run_epochs(trial, st, rng_mod.STAGE_PRETRAIN, 0, PROBE_EPOCHS)
        _, Z = _forward(trial.params, cfg, st)
        norms = np.linalg.norm(np.asarray(Z.value, dtype=np.float64), axis=1)
        if float(norms.mean()) < floor:
            continue
        stability = spearmanr(norms0, norms).statistic
        if not stability >= PROBE_RANK_FLOOR:  # NaN (constant norms) fails
            continue
        final = trial.history[-1]["total"]
        if final < best_loss:
            best_lr, best_loss = lr, final
    return float(best_lr if best_lr is not None else min(LR_GRID))


def pretrain(inc: IncompleteGraph, cfg: TrainConfig,
             resume: ModelBundle | None = None) -> ModelBundle:
    """Stage one. Pass resume= a mid-pretrain checkpoint to continue it."""
    cfg.validate()
    st = _Stage(cfg, inc, pseudo_features=None)
    if resume is None:
        lr = cfg.lr if cfg.lr is not None else _probe_lr(cfg, st)
        params = _fresh_params(cfg, st)
        bundle = ModelBundle(cfg=cfg, params=params,
                             adam=adam_init(params, lr), stage="pretrain",
                             epochs_done=0, lr_used=lr)
    else:
        bundle = resume
        if bundle.stage != "pretrain":
            raise UsageError("checkpoint is past pretrain; cannot resume it here")
        if bundle.cfg.config_hash() != cfg.config_hash():
            raise UsageError("checkpoint was trained with a different config")
    _run_epochs(bundle, st, rng_mod.STAGE_PRETRAIN, bundle.epochs_done,
                cfg.epochs_pre)
    return bundle


def finetune(inc: IncompleteGraph, bundle: ModelBundle) -> ModelBundle:
    """Stage two. Accepts a finished pretrain bundle or a mid-finetune one."""
    cfg = bundle.cfg
    cfg.validate()
    if bundle.stage == "pretrain":
        if bundle.epochs_done < cfg.epochs_pre:
            raise UsageError(
                f"pretrain incomplete ({bundle.epochs_done}/{cfg.epochs_pre} "
                "epochs); finish it before finetuning")
        m = 0 if cfg.no_pseudo else pseudo_count(inc.n, cfg.pseudo_frac)
        if m > 0:
            codes = sample_pseudo_codes(
                cfg.prior(), m,
                rng_mod.stream(cfg.master_seed, rng_mod.PSEUDO_CODES))
            bundle.pseudo_features = decoder_forward_np(
                bundle.params, "dec", codes.astype(cfg.dtype))
        bundle.stage = "finetune"
        bundle.epochs_done = 0
    st = _Stage(cfg, inc, pseudo_features=bundle.pseudo_features)
    _run_epochs(bundle, st, rng_mod.STAGE_FINETUNE, bundle.epochs_done,
                cfg.epochs_fine)
    return bundle


@dataclass
class ScoreReport:
    """Per-node anomaly scores plus run provenance."""

    scores: np.ndarray            # (n,) latent norms, higher = more anomalous
    ranking: np.ndarray           # node ids, most anomalous first
    config_hash: str
    wall_seconds: float
    auroc: float | None = None


def score_nodes(inc: IncompleteGraph, bundle: ModelBundle,
                labels: np.ndarray | None = None) -> ScoreReport:
    """Embed the original (unaugmented) observed graph and rank by norm."""
    cfg = bundle.cfg
    t0 = time.perf_counter()
    st = _Stage(cfg, inc, pseudo_features=None)
    _, Z = _forward(bundle.params, cfg, st)
    scores = np.linalg.norm(Z.value.astype(np.float64), axis=1)
    ranking = np.lexsort((np.arange(len(scores)), -scores))
    report = ScoreReport(scores=scores, ranking=ranking,
                         config_hash=cfg.config_hash(),
                         wall_seconds=time.perf_counter() - t0)
    if labels is not None:
        report.auroc = _auroc(scores, labels)
    return report
