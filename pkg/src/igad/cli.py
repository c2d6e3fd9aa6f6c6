"""Command-line interface.

Subcommands mirror the pipeline stages (inject, mask, pretrain, finetune,
score, eval) plus composed entry points (run, gradcheck, sweep). Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import DataError, IgadError, NumericalError, UsageError
from .experiment import (ABLATION_VARIANTS, gradcheck_pretrain, run_experiment,
                         run_once, sweep_variants)
from .graphs import (InjectionSpec, apply_masks, inject_anomalies, load_bundle,
                     load_graph, make_masks, read_manifest, save_bundle,
                     save_graph)
from .metrics import auroc, read_scores, write_scores
from .pipeline import ModelBundle, TrainConfig, finetune, pretrain, score_nodes

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad arguments; the contract says 1."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _manifest_path(data: str) -> Path:
    p = Path(data)
    return p / "manifest.txt" if p.is_dir() else p


def _load_dataset(data: str):
    return load_graph(read_manifest(_manifest_path(data)))


def _build_config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    elif not args.deterministic and args.config is None:
        overrides["master_seed"] = int(np.random.SeedSequence().entropy % 2**31)
    if args.precision is not None:
        overrides["precision"] = args.precision
    cfg = cfg.replace(**overrides) if overrides else cfg
    cfg.validate()
    return cfg


def _out_dir(args, default: str) -> Path:
    out = Path(args.out) if args.out else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _injection_from(args) -> InjectionSpec:
    return InjectionSpec(clique_size=args.clique_size,
                         clique_count=args.clique_count,
                         contextual_count=args.contextual,
                         candidate_pool=args.pool)


def _add_injection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--clique-size", type=int, default=15)
    p.add_argument("--clique-count", type=int, default=5)
    p.add_argument("--contextual", type=int, default=75)
    p.add_argument("--pool", type=int, default=50)


def _add_mask_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--node-rate", type=float, default=0.3,
                   help="fraction of feature rows (or cells) to hide")
    p.add_argument("--edge-rate", type=float, default=0.3,
                   help="fraction of edges to hide")
    p.add_argument("--mask-mode", choices=("row", "element"), default="row")


def _read_labels(path: str, n: int) -> np.ndarray:
    try:
        labels = np.loadtxt(path, dtype=np.int64, ndmin=1)
    except (OSError, ValueError) as e:
        raise DataError(f"could not read labels from {path}: {e}") from e
    if labels.shape != (n,):
        raise DataError(f"labels have shape {labels.shape}, expected ({n},)")
    return labels


# --------------------------------------------------------------- subcommands

def _cmd_inject(args) -> int:
    g = _load_dataset(args.data)
    cfg = _build_config(args)
    injected = inject_anomalies(g, _injection_from(args), seed=cfg.master_seed)
    out = _out_dir(args, "injected")
    save_graph(out, injected, args.name)
    print(f"injected {int(injected.labels.sum())} anomalies -> {out}")
    return 0


def _cmd_mask(args) -> int:
    g = _load_dataset(args.data)
    cfg = _build_config(args)
    mask = make_masks(g, args.node_rate, args.edge_rate, args.mask_mode,
                      seed=cfg.master_seed)
    inc = apply_masks(g, mask)
    out = _out_dir(args, "masked")
    save_bundle(out, inc, labels=g.labels)
    print(f"masked graph ({args.node_rate:g} features, {args.edge_rate:g} "
          f"edges) -> {out}")
    return 0


def _cmd_pretrain(args) -> int:
    inc, _ = load_bundle(args.bundle)
    cfg = _build_config(args)
    resume = ModelBundle.load(args.resume) if args.resume else None
    bundle = pretrain(inc, cfg, resume=resume)
    out = _out_dir(args, "checkpoint")
    bundle.save(out)
    print(f"pretrain done: {bundle.epochs_done} epochs, lr={bundle.lr_used:g}, "
          f"final loss {bundle.history[-1]['total']:.6g} -> {out}")
    return 0


def _cmd_finetune(args) -> int:
    inc, _ = load_bundle(args.bundle)
    bundle = ModelBundle.load(args.checkpoint)
    bundle = finetune(inc, bundle)
    out = _out_dir(args, "checkpoint")
    bundle.save(out)
    m = 0 if bundle.pseudo_features is None else bundle.pseudo_features.shape[0]
    print(f"finetune done: {bundle.epochs_done} epochs, {m} pseudo nodes, "
          f"final loss {bundle.history[-1]['total']:.6g} -> {out}")
    return 0


def _cmd_score(args) -> int:
    inc, labels = load_bundle(args.bundle)
    if args.labels:
        labels = _read_labels(args.labels, inc.n)
    bundle = ModelBundle.load(args.checkpoint)
    report = score_nodes(inc, bundle, labels=labels)
    out = _out_dir(args, "scores")
    write_scores(out / "scores.tsv", report.scores)
    lines = [f"config_hash = {report.config_hash}",
             f"wall_seconds = {report.wall_seconds!r}"]
    if report.auroc is not None:
        lines.append(f"auroc = {report.auroc!r}")
        print(f"AUROC {report.auroc:.4f}")
    (out / "metrics.txt").write_text("\n".join(lines) + "\n")
    print(f"scores -> {out / 'scores.tsv'}")
    return 0


def _cmd_eval(args) -> int:
    scores = read_scores(args.scores)
    value = auroc(scores, _read_labels(args.labels, scores.shape[0]))
    print(f"AUROC {value:.6f}")
    if args.out:
        out = _out_dir(args, "eval")
        (out / "metrics.txt").write_text(f"auroc = {value!r}\n")
    return 0


def _cmd_run(args) -> int:
    g = _load_dataset(args.data)
    cfg = _build_config(args)
    injection = _injection_from(args) if g.labels is None else None
    out = _out_dir(args, "run")
    rec = run_once(g, injection, args.node_rate, args.edge_rate, cfg,
                   mask_mode=args.mask_mode, dataset=Path(args.data).stem,
                   out_dir=out)
    print(f"AUROC {rec.auroc:.4f} ({rec.wall_seconds:.1f}s, lr={rec.lr_used:g})"
          f" -> {out}")
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = _build_config(args)
    rep = gradcheck_pretrain(nodes=args.nodes, dim=args.dim, latent=args.latent,
                             seed=cfg.master_seed, sinkhorn_iters=args.iters,
                             h=args.step, tol=args.tol)
    print(f"gradcheck {'PASSED' if rep.passed else 'FAILED'}: "
          f"max relative error {rep.max_rel_err:.3g} "
          f"(tolerance {rep.tol:g}, {len(rep.probes)} probes)")
    if not rep.passed:
        raise NumericalError("analytic gradients disagree with finite "
                             f"differences (max rel err {rep.max_rel_err:.3g})")
    return 0


def _cmd_sweep(args) -> int:
    g = _load_dataset(args.data)
    cfg = _build_config(args)
    injection = _injection_from(args) if g.labels is None else None
    if args.ablations:
        variants = dict(ABLATION_VARIANTS)
    else:
        if not args.param or not args.values:
            raise UsageError("sweep needs --ablations or --param/--values")
        # reuse the config-file parser for field lookup and value coercion
        values = [getattr(TrainConfig.from_text(f"{args.param} = {v}"),
                          args.param)
                  for v in args.values.split(",")]
        variants = sweep_variants(args.param, values)
    rates = [(args.node_rate, args.edge_rate)]
    out = _out_dir(args, "sweep")
    table = run_experiment(g, injection, rates, cfg, repeats=args.repeats,
                           variants=variants, mask_mode=args.mask_mode,
                           dataset=Path(args.data).stem, out_dir=out)
    print(table.summary_text())
    print(f"full table -> {out / 'runs.tsv'}")
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="igad", description=__doc__)
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (overrides config file)")
    parser.add_argument("--config", default=None,
                        help="key = value config file (TrainConfig fields)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--deterministic", default=True,
                        action=argparse.BooleanOptionalAction,
                        help="seeded runs (default); --no-deterministic draws "
                             "the master seed from OS entropy when --seed is "
                             "not given")
    parser.add_argument("--precision", choices=("f64", "f32"), default=None)
    sub = parser.add_subparsers(dest="command", required=True,
                            parser_class=_Parser)

    p = sub.add_parser("inject",
                       help="plant labeled anomalies into a clean dataset")
    p.add_argument("--data", required=True, help="dataset dir or manifest file")
    p.add_argument("--name", default="injected")
    _add_injection_flags(p)
    p.set_defaults(fn=_cmd_inject)

    p = sub.add_parser("mask",
                       help="hide features and edges; write an observed bundle")
    p.add_argument("--data", required=True)
    _add_mask_flags(p)
    p.set_defaults(fn=_cmd_mask)

    p = sub.add_parser("pretrain",
                       help="stage one: fit the latent ball on a masked bundle")
    p.add_argument("--bundle", required=True, help="masked bundle directory")
    p.add_argument("--resume", default=None, help="mid-pretrain checkpoint")
    p.set_defaults(fn=_cmd_pretrain)

    p = sub.add_parser("finetune",
                       help="stage two: pseudo-anomaly augmented refinement")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=_cmd_finetune)

    p = sub.add_parser("score",
                       help="write per-node anomaly scores for a checkpoint")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--labels", default=None,
                   help="labels file (one 0/1 per node) for AUROC")
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("eval",
                       help="AUROC of a score file against labels")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("run",
                       help="end to end: inject if unlabeled, mask, train, score")
    p.add_argument("--data", required=True)
    _add_mask_flags(p)
    _add_injection_flags(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("gradcheck",
                       help="audit backprop against finite differences")
    p.add_argument("--nodes", type=int, default=12)
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--latent", type=int, default=4)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("sweep",
                       help="repeat runs over ablation variants or one knob")
    p.add_argument("--data", required=True)
    p.add_argument("--ablations", action="store_true",
                   help="sweep the built-in ablation variants")
    p.add_argument("--param", default=None, help="config field to sweep")
    p.add_argument("--values", default=None, help="comma-separated values")
    p.add_argument("--repeats", type=int, default=1)
    _add_mask_flags(p)
    _add_injection_flags(p)
    p.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as e:
        code = e.code if isinstance(e.code, int) else 1
        return 1 if code == 2 else code
    except IgadError as e:
        print(f"igad: error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"igad: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
