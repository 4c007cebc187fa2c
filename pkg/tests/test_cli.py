"""End-to-end tests for the command-line interface.

Every test drives `setrans.cli.main` in process with a real argv list, on
small handcrafted datasets (short clips still produce full-size feature
matrices because extraction pads to each task's frame count).  Artifact
contracts are checked by re-reading the files the CLI wrote.
"""

import json
import os

import numpy as np
import pytest

from setrans import data_io
from setrans.cli import DEFAULT_SEED, main
from setrans.data_io import LabeledClip
from setrans.training import build_task_data, evaluate

TINY_MODEL = {"channels": [4, 8], "reduction": 4, "n_heads": 2, "d_ff": 8}


def _tone(rate, seconds, freq, seed=0):
    t = np.arange(int(rate * seconds)) / rate
    rng = np.random.default_rng(seed)
    return 0.4 * np.sin(2 * np.pi * freq * t) + 0.01 * rng.standard_normal(t.size)


def _read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def _read_log(path):
    header, rows = _read_csv(path)
    assert header == ["epoch", "loss", "metric"]
    return [(int(e), float(l), float(m)) for e, l, m in rows]


# ---------------------------------------------------------------------------
# handcrafted datasets (session fixtures, so the cost is paid once)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def asc_manifest(tmp_path_factory):
    clips = []
    for k, freq in enumerate((500.0, 1500.0)):
        for i in range(5):
            split = "train" if i < 3 else "test"
            clips.append(LabeledClip(
                task="asc", labels=k, split=split,
                samples=_tone(44100, 0.3, freq, seed=10 * k + i),
                sample_rate=44100))
    return data_io.write_dataset(clips, str(tmp_path_factory.mktemp("asc_data")))


@pytest.fixture(scope="session")
def ust_manifest(tmp_path_factory):
    tags = [[1, 0, 0, 0], [0, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 0]]
    clips = []
    for split in ("train", "test"):
        for i, y in enumerate(tags):
            clips.append(LabeledClip(
                task="ust", labels=list(y), split=split,
                samples=_tone(20480, 0.4, 400.0 * (i + 1), seed=i),
                sample_rate=20480))
    return data_io.write_dataset(clips, str(tmp_path_factory.mktemp("ust_data")))


@pytest.fixture(scope="session")
def asd_manifest(tmp_path_factory):
    clips = []
    for s, freq in enumerate((220.0, 660.0)):
        for i in range(3):
            clips.append(LabeledClip(
                task="asd", labels=s, split="train", domain="source",
                samples=_tone(16000, 0.4, freq, seed=100 * s + i),
                sample_rate=16000))
        for i, (domain, anomaly) in enumerate(
                [("source", False), ("source", False), ("source", True),
                 ("source", True), ("target", False), ("target", True)]):
            clips.append(LabeledClip(
                task="asd", labels=s, split="test", domain=domain, anomaly=anomaly,
                samples=_tone(16000, 0.4, freq * (1.3 if anomaly else 1.0),
                              seed=200 * s + i),
                sample_rate=16000))
    return data_io.write_dataset(clips, str(tmp_path_factory.mktemp("asd_data")))


@pytest.fixture(scope="session")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps({"model": TINY_MODEL}))
    return str(path)


def _train_args(task, manifest, out, config, *extra):
    return ["train", "--task", task, "--manifest", manifest, "--out", out,
            "--config", config, *extra]


@pytest.fixture(scope="session")
def asc_run(asc_manifest, tiny_config, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("asc_run"))
    assert main(_train_args("asc", asc_manifest, out, tiny_config,
                            "--epochs", "2", "--batch-size", "3",
                            "--lr", "0.005")) == 0
    return out


@pytest.fixture(scope="session")
def ust_run(ust_manifest, tiny_config, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("ust_run"))
    assert main(_train_args("ust", ust_manifest, out, tiny_config,
                            "--epochs", "1", "--batch-size", "2")) == 0
    return out


@pytest.fixture(scope="session")
def asd_run(asd_manifest, tiny_config, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("asd_run"))
    assert main(_train_args("asd", asd_manifest, out, tiny_config,
                            "--epochs", "1", "--batch-size", "3")) == 0
    return out


@pytest.fixture(scope="session")
def asc_features(asc_manifest, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("asc_feats"))
    assert main(["extract", "--task", "asc", "--manifest", asc_manifest,
                 "--split", "test", "--out", out]) == 0
    return out


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def test_synth_writes_manifest_and_audio(tmp_path, capsys):
    out = tmp_path / "data"
    assert main(["synth", "--task", "asc", "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "wrote 60 clips" in stdout
    clips = data_io.load_manifest(str(out / "manifest.jsonl"))
    assert len(clips) == 60
    assert sum(c.split == "train" for c in clips) == 42
    first = data_io.read_wav(str(out / clips[0].path))
    assert first.sample_rate == 44100 and first.samples.size == 441000


def test_synth_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["synth", "--task", "asc", "--out", str(tmp_path / d)]) == 0
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    for name in ["manifest.jsonl", names[0], names[-1]]:
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes()


def test_unwritable_out_dir_exits_2(tmp_path, capsys):
    blocker = tmp_path / "file.txt"
    blocker.write_text("in the way")
    rc = main(["synth", "--task", "asc", "--out", str(blocker / "nested")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------

def test_extract_writes_index_and_matrices(asc_features):
    with open(os.path.join(asc_features, "features.jsonl")) as fh:
        records = [json.loads(line) for line in fh]
    assert len(records) == 4                      # 2 classes x 2 test clips
    assert all(r["split"] == "test" for r in records)
    for r in records:
        mat = data_io.load_matrix(os.path.join(asc_features, r["feature"]))
        assert mat.shape == (500, 40)


def test_extract_empty_split_is_an_error(tmp_path, capsys):
    clip = LabeledClip(task="asc", labels=0, split="train",
                       samples=_tone(44100, 0.2, 500.0), sample_rate=44100)
    manifest = data_io.write_dataset([clip], str(tmp_path / "data"))
    rc = main(["extract", "--task", "asc", "--manifest", manifest,
               "--split", "test", "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "no clips" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_artifacts(asc_run):
    assert os.path.exists(os.path.join(asc_run, "model.ckpt"))
    log = _read_log(os.path.join(asc_run, "log.csv"))
    assert [row[0] for row in log] == [0, 1, 2]   # pre-training row + 2 epochs
    assert all(np.isfinite(row[1]) for row in log)


def test_train_same_seed_is_byte_identical(asc_manifest, tiny_config, tmp_path):
    for d in ("a", "b"):
        assert main(_train_args("asc", asc_manifest, str(tmp_path / d),
                                tiny_config, "--epochs", "1",
                                "--batch-size", "3")) == 0
    for name in ("model.ckpt", "log.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes()


def test_train_augment_arms_share_the_pretraining_row(asc_manifest, tiny_config,
                                                      tmp_path):
    losses = {}
    for arm in ("none", "fmix"):
        out = tmp_path / arm
        assert main(_train_args("asc", asc_manifest, str(out), tiny_config,
                                "--epochs", "1", "--batch-size", "3",
                                "--augment", arm)) == 0
        losses[arm] = _read_log(str(out / "log.csv"))[0][1]
    assert losses["none"] == losses["fmix"]


def test_train_flag_overrides_config_file(asc_manifest, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": TINY_MODEL,
                               "train": {"epochs": 3, "batch_size": 3}}))
    out = tmp_path / "run"
    assert main(_train_args("asc", asc_manifest, str(out), str(cfg),
                            "--epochs", "1")) == 0
    assert "for 1 epochs" in capsys.readouterr().out
    assert [r[0] for r in _read_log(str(out / "log.csv"))] == [0, 1]


def test_train_missing_manifest_leaves_no_artifacts(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(_train_args("asc", str(tmp_path / "nope.jsonl"), str(out),
                          tiny_config, "--epochs", "1"))
    assert rc == 2
    assert "error:" in capsys.readouterr().err
    assert not out.exists()


def test_train_rejects_malformed_config_json(asc_manifest, tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    rc = main(_train_args("asc", asc_manifest, str(tmp_path / "run"), str(cfg)))
    assert rc == 2
    assert "invalid JSON" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def test_eval_asc_report_matches_library_results(asc_run, asc_manifest, tmp_path,
                                                 capsys):
    out = tmp_path / "eval"
    assert main(["eval", "--task", "asc", "--split", "test",
                 "--manifest", asc_manifest,
                 "--checkpoint", os.path.join(asc_run, "model.ckpt"),
                 "--out", str(out)]) == 0
    capsys.readouterr()
    header, rows = _read_csv(str(out / "report.csv"))
    assert header == ["metric", "value"]
    reported = {k: float(v) for k, v in rows}

    model, _ = data_io.load_checkpoint(os.path.join(asc_run, "model.ckpt"))
    clips = [c for c in data_io.load_manifest(asc_manifest) if c.split == "test"]
    data = build_task_data(clips, "asc", n_classes=2,
                           base_dir=os.path.dirname(asc_manifest))
    expected = evaluate(model, data)
    assert reported == {k: float(v) for k, v in expected.metrics.items()}

    header, rows = _read_csv(str(out / "confusion.csv"))
    assert header == ["true\\pred", "class0", "class1"]
    counts = np.array([[int(v) for v in row[1:]] for row in rows])
    assert counts.sum(axis=1).tolist() == [2, 2]  # test clips per class


def test_eval_task_mismatch_exits_2(asc_run, ust_manifest, tmp_path, capsys):
    rc = main(["eval", "--task", "ust", "--manifest", ust_manifest,
               "--checkpoint", os.path.join(asc_run, "model.ckpt"),
               "--out", str(tmp_path)])
    assert rc == 2
    assert "trained for task" in capsys.readouterr().err


def test_eval_ust_writes_pr_curves(ust_run, ust_manifest, tmp_path, capsys):
    out = tmp_path / "eval"
    assert main(["eval", "--task", "ust", "--split", "test",
                 "--manifest", ust_manifest,
                 "--checkpoint", os.path.join(ust_run, "model.ckpt"),
                 "--out", str(out)]) == 0
    capsys.readouterr()
    reported = dict(_read_csv(str(out / "report.csv"))[1])
    assert {"macro_auprc", "micro_auprc", "micro_f1"} <= set(reported)

    header, rows = _read_csv(str(out / "prcurves.csv"))
    assert header == ["class", "recall", "precision"]
    by_class = {int(c) for c, _, _ in rows}
    assert by_class == {0, 1, 2}                  # class 3 has no positives
    for c in by_class:
        pts = [(float(r), float(p)) for cc, r, p in rows if int(cc) == c]
        recalls = [r for r, _ in pts]
        assert recalls[0] == 0.0 and recalls[-1] == 1.0
        assert all(0.0 <= p <= 1.0 for _, p in pts)


def test_eval_asd_roc_rows_span_both_corners(asd_run, asd_manifest, tmp_path,
                                             capsys):
    out = tmp_path / "eval"
    assert main(["eval", "--task", "asd", "--split", "test",
                 "--manifest", asd_manifest,
                 "--checkpoint", os.path.join(asd_run, "model.ckpt"),
                 "--out", str(out)]) == 0
    capsys.readouterr()
    reported = dict(_read_csv(str(out / "report.csv"))[1])
    assert {"mean_auc", "mean_pauc", "auc_s0_source", "auc_s1_source",
            "auc_s0_target", "auc_s1_target"} <= set(reported)

    header, rows = _read_csv(str(out / "roc.csv"))
    assert header == ["section", "domain", "fpr", "tpr"]
    groups = {}
    for s, d, f, t in rows:
        groups.setdefault((int(s), d), []).append((float(f), float(t)))
    assert set(groups) == {(0, "source"), (0, "target"),
                           (1, "source"), (1, "target")}
    for pts in groups.values():
        assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
        assert all(x1 <= x2 for (x1, _), (x2, _) in zip(pts, pts[1:]))


# ---------------------------------------------------------------------------
# augment-demo
# ---------------------------------------------------------------------------

def _feature_file(features_dir):
    name = sorted(n for n in os.listdir(features_dir) if n.endswith(".txt"))[0]
    return os.path.join(features_dir, name)


def test_augment_demo_fmix_mask_contract(asc_features, tmp_path, capsys):
    out = tmp_path / "demo"
    assert main(["augment-demo", "--method", "fmix",
                 "--feature-file", _feature_file(asc_features),
                 "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    lam = float(stdout.split("lambda = ")[1].split()[0])

    mask = np.loadtxt(str(out / "mask.csv"), delimiter=",")
    assert set(np.unique(mask)) <= {0.0, 1.0}
    assert abs(mask.mean() - lam) <= 1.0 / mask.size

    original = np.loadtxt(str(out / "original.csv"), delimiter=",")
    mixed = np.loadtxt(str(out / "mixed.csv"), delimiter=",")
    partner = original[::-1]
    cellwise = np.where(mask == 1.0, original, partner)
    assert np.allclose(mixed, cellwise, atol=1e-12)

    with open(out / "mask.pgm", "rb") as fh:
        magic, size, maxval, pixels = fh.read().split(b"\n", 3)
    assert magic == b"P5" and maxval == b"255"
    assert set(np.frombuffer(pixels, dtype=np.uint8)) <= {0, 255}


def test_augment_demo_mixup_blends_with_reported_lambda(asc_features, tmp_path,
                                                        capsys):
    out = tmp_path / "demo"
    assert main(["augment-demo", "--method", "mixup",
                 "--feature-file", _feature_file(asc_features),
                 "--out", str(out)]) == 0
    lam = float(capsys.readouterr().out.split("lambda = ")[1].split()[0])
    original = np.loadtxt(str(out / "original.csv"), delimiter=",")
    mixed = np.loadtxt(str(out / "mixed.csv"), delimiter=",")
    mask = np.loadtxt(str(out / "mask.csv"), delimiter=",")
    assert np.allclose(mask, lam, atol=1e-15)
    assert np.allclose(mixed, lam * original + (1 - lam) * original[::-1],
                       atol=1e-12)


def test_augment_demo_is_seed_deterministic(asc_features, tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["augment-demo", "--method", "fmix", "--seed", "11",
                     "--feature-file", _feature_file(asc_features),
                     "--out", str(tmp_path / d)]) == 0
    capsys.readouterr()
    for name in ("mask.csv", "mixed.csv", "mask.pgm"):
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes()


def test_augment_demo_specaugment_masks_cells(asc_features, tmp_path, capsys):
    out = tmp_path / "demo"
    assert main(["augment-demo", "--method", "specaugment",
                 "--feature-file", _feature_file(asc_features),
                 "--out", str(out)]) == 0
    capsys.readouterr()
    original = np.loadtxt(str(out / "original.csv"), delimiter=",")
    mixed = np.loadtxt(str(out / "mixed.csv"), delimiter=",")
    changed = mixed != original
    assert changed.any()
    assert np.all(mixed[changed] == 0.0)


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------

def test_inspect_exports_attention_gates_and_feature_map(asc_run, asc_features,
                                                         tmp_path, capsys):
    out = tmp_path / "inspect"
    assert main(["inspect", "--checkpoint", os.path.join(asc_run, "model.ckpt"),
                 "--feature-file", _feature_file(asc_features),
                 "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    top = int(stdout.split("top block2 channel = ")[1].split()[0])

    attention = np.loadtxt(str(out / "attention.csv"), delimiter=",")
    assert attention.shape == (16, 16)
    assert np.allclose(attention.sum(axis=1), 1.0, atol=1e-6)

    header, rows = _read_csv(str(out / "se_weights.csv"))
    assert header == ["block", "channel", "weight"]
    weights = {(b, int(c)): float(w) for b, c, w in rows}
    assert all(0.0 < w < 1.0 for w in weights.values())
    block2 = [weights[("block2", c)] for c in range(TINY_MODEL["channels"][1])]
    assert top == int(np.argmax(block2))

    feature_map = np.loadtxt(str(out / "top_feature_map.csv"), delimiter=",")
    assert feature_map.shape == (125, 10)         # (500, 40) after two 2x2 pools


def test_inspect_windows_long_features(asd_run, asd_manifest, tmp_path, capsys):
    feats = tmp_path / "feats"
    assert main(["extract", "--task", "asd", "--manifest", asd_manifest,
                 "--split", "test", "--out", str(feats)]) == 0
    out = tmp_path / "inspect"
    assert main(["inspect", "--checkpoint", os.path.join(asd_run, "model.ckpt"),
                 "--feature-file", _feature_file(str(feats)),
                 "--out", str(out)]) == 0
    capsys.readouterr()
    attention = np.loadtxt(str(out / "attention.csv"), delimiter=",")
    assert attention.shape == (16, 16)
    assert np.allclose(attention.sum(axis=1), 1.0, atol=1e-6)


def test_inspect_rejects_wrong_shape(asc_run, tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    data_io.save_matrix(str(bad), np.zeros((10, 12)))
    rc = main(["inspect", "--checkpoint", os.path.join(asc_run, "model.ckpt"),
               "--feature-file", str(bad), "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "model wants" in capsys.readouterr().err


def test_default_seed_is_fixed(capsys):
    with pytest.raises(SystemExit):
        main(["synth", "--help"])
    capsys.readouterr()
    assert DEFAULT_SEED == 7
