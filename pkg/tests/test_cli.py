import numpy as np
import pytest

from igad.cli import main
from igad.graphs import (AttributedGraph, load_bundle, load_graph,
                         read_manifest, save_graph)
from igad.metrics import read_scores
from igad import rng as rng_mod

TINY_CONFIG = """
latent_dim = 8
radius = 2.0
sinkhorn_iters = 30
sinkhorn_batch = 16
epochs_pre = 2
epochs_fine = 2
lr = 0.001
pseudo_frac = 0.25
ppr_iters = 20
"""


def make_dataset(tmp_path, labeled=True, n=20, d=5, name="ring"):
    r = rng_mod.stream(11, 98)
    X = r.standard_normal((n, d))
    edges = np.array([(i, (i + 1) % n) for i in range(n)]
                     + [(i, (i + 7) % n) for i in range(0, n, 4)])
    labels = None
    if labeled:
        labels = np.zeros(n, dtype=np.int8)
        labels[r.choice(n, size=3, replace=False)] = 1
    g = AttributedGraph.build(X, edges, labels)
    save_graph(tmp_path / name, g, name)
    return tmp_path / name


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY_CONFIG)
    return str(p)


def test_usage_error_exits_1():
    assert main(["no-such-command"]) == 1
    assert main(["mask"]) == 1  # missing --data


def test_missing_dataset_exits_2(tmp_path, cfg_file):
    code = main(["--config", cfg_file, "mask",
                 "--data", str(tmp_path / "absent")])
    assert code == 2


def test_mask_writes_bundle(tmp_path, cfg_file):
    data = make_dataset(tmp_path, labeled=True)
    out = tmp_path / "masked"
    code = main(["--config", cfg_file, "--out", str(out), "mask",
                 "--data", str(data), "--node-rate", "0.2",
                 "--edge-rate", "0.2"])
    assert code == 0
    inc, labels = load_bundle(out)
    assert inc.n == 20
    assert labels is not None and labels.sum() == 3


def test_inject_labels_clean_dataset(tmp_path, cfg_file):
    data = make_dataset(tmp_path, labeled=False)
    out = tmp_path / "inj"
    code = main(["--config", cfg_file, "--out", str(out), "inject",
                 "--data", str(data), "--clique-size", "3",
                 "--clique-count", "1", "--contextual", "2", "--pool", "5"])
    assert code == 0
    g = load_graph(read_manifest(out / "manifest.txt"))
    assert int(g.labels.sum()) == 5


def test_stagewise_train_score_eval(tmp_path, cfg_file, capsys):
    data = make_dataset(tmp_path, labeled=True)
    masked, ck1, ck2, scored = (tmp_path / x for x in
                                ("m", "ck1", "ck2", "s"))
    base = ["--config", cfg_file, "--seed", "4"]
    assert main([*base, "--out", str(masked), "mask", "--data", str(data),
                 "--node-rate", "0.2", "--edge-rate", "0.2"]) == 0
    assert main([*base, "--out", str(ck1), "pretrain",
                 "--bundle", str(masked)]) == 0
    assert main([*base, "--out", str(ck2), "finetune", "--bundle", str(masked),
                 "--checkpoint", str(ck1)]) == 0
    assert main([*base, "--out", str(scored), "score", "--bundle", str(masked),
                 "--checkpoint", str(ck2)]) == 0
    scores = read_scores(scored / "scores.tsv")
    assert scores.shape == (20,)
    assert "auroc" in (scored / "metrics.txt").read_text()

    labels_file = data / "labels.txt"
    assert main(["eval", "--scores", str(scored / "scores.tsv"),
                 "--labels", str(labels_file)]) == 0
    assert "AUROC" in capsys.readouterr().out


def test_run_end_to_end_and_determinism(tmp_path, cfg_file):
    data = make_dataset(tmp_path, labeled=True)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    base = ["--config", cfg_file, "--seed", "7"]
    args = ["run", "--data", str(data), "--node-rate", "0.2",
            "--edge-rate", "0.2"]
    assert main([*base, "--out", str(out1), *args]) == 0
    assert main([*base, "--out", str(out2), *args]) == 0
    assert (out1 / "scores.tsv").read_bytes() == \
           (out2 / "scores.tsv").read_bytes()


def test_run_injects_unlabeled(tmp_path, cfg_file):
    data = make_dataset(tmp_path, labeled=False)
    out = tmp_path / "r"
    code = main(["--config", cfg_file, "--out", str(out), "run",
                 "--data", str(data), "--node-rate", "0.2",
                 "--edge-rate", "0.2", "--clique-size", "3",
                 "--clique-count", "1", "--contextual", "2", "--pool", "5"])
    assert code == 0
    assert (out / "scores.tsv").exists()


def test_gradcheck_command(capsys):
    code = main(["gradcheck", "--nodes", "8", "--dim", "4", "--latent", "3",
                 "--iters", "60"])
    assert code == 0
    assert "PASSED" in capsys.readouterr().out


def test_sweep_ablations(tmp_path, cfg_file, capsys):
    data = make_dataset(tmp_path, labeled=True)
    out = tmp_path / "sw"
    code = main(["--config", cfg_file, "--out", str(out), "sweep",
                 "--data", str(data), "--node-rate", "0.2",
                 "--edge-rate", "0.2", "--param", "radius",
                 "--values", "1.5,2.5"])
    assert code == 0
    assert (out / "summary.tsv").exists()
    text = (out / "runs.tsv").read_text()
    assert "radius=1.5" in text and "radius=2.5" in text


def test_sweep_requires_param_or_ablations(tmp_path, cfg_file):
    data = make_dataset(tmp_path, labeled=True)
    code = main(["--config", cfg_file, "sweep", "--data", str(data)])
    assert code == 1


def test_precision_flag_reaches_config(tmp_path, cfg_file):
    data = make_dataset(tmp_path, labeled=True)
    out = tmp_path / "r32"
    code = main(["--config", cfg_file, "--precision", "f32", "--out", str(out),
                 "run", "--data", str(data), "--node-rate", "0.2",
                 "--edge-rate", "0.2"])
    assert code == 0
