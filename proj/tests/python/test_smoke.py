import json
import math

import numpy as np
import pytest

import maldistill as md


def test_murmur_and_hashing():
    assert md.murmur3_32(b"") == 0
    assert md.murmur3_32(b"abc") == 3017643002
    assert md.hash_vectorize(["abc", "abc"], 1 << 20) == [3017643002 % (1 << 20)]


def test_api_tokens():
    tokens = md.api_arg_tokens("CreateFileW", {"path": "C:\\Windows\\System32\\x.dll"})
    assert tokens == ["CreateFile|path=system32"]
    assert md.api_arg_tokens("GetTickCount", {}) == ["GetTickCount"]


def test_ember_lite_layout():
    row = md.ember_lite(bytes(range(256)) * 16)
    assert row.shape == (2381,)
    assert row.dtype == np.float32
    assert math.isclose(float(row[:256].sum()), 1.0, rel_tol=1e-5)


def test_kd_losses():
    assert md.kd_kl_term([math.log(3.0), 0.0], [0.0, 0.0], 1.0) == pytest.approx(0.1308, abs=1e-4)
    zs, zt, y = [0.3, -1.2], [2.0, 0.5], [0.0, 1.0]
    ce = md.ce_loss(md.softmax_tau(zs, 1.0), y)
    assert md.kd_loss(zs, zt, y, alpha=1.0) == pytest.approx(ce, abs=1e-12)
    assert md.kd_mse_term(zs, zs) == 0.0
    grad = md.kd_loss_grad(zs, zt, y, alpha=0.5, tau=5.0, loss="kd-kl")
    assert len(grad) == 2
    with pytest.raises(ValueError):
        md.kd_loss(zs, zt, y, alpha=1.5)


def test_shapes_and_specs():
    assert md.length_chain("ember") == [2381, 595, 119, 29, 7, 1]
    assert set(md.builtin_spec_names()) == {"ember", "opcode", "apiarg", "agg2_org", "agg3_org"}
    assert md.spec("ember")["input_dim"] == 2381


def test_metrics():
    m = md.metrics_from_counts(40, 5, 45, 10)
    assert m["f1"] == pytest.approx(0.8421, abs=1e-4)
    assert m["fpr"] == pytest.approx(0.1)
    assert md.metrics([1, 0, 1], [1, 0, 0])["accuracy"] == pytest.approx(2 / 3)
    assert md.metrics_from_counts(0, 2, 3, 0)["fnr"] is None


def test_simulation_matches_budget():
    s = md.simulate(n_jobs=40, crash_prob=1.0, seed=1)
    assert s["failed_permanent"] == 40
    assert s["attempts_histogram"][4] == 40
    dist = md.attempts_distribution(0.3, 3)
    assert sum(dist[1:]) == pytest.approx(1.0)


def test_pipeline_through_cli(tmp_path):
    data, model, ev = tmp_path / "data", tmp_path / "model", tmp_path / "eval"
    assert md.generate_synthetic(data, n_samples=120, static_dim=32, dynamic_dim=64, opcode_dim=0, window=4,
                                 n_components=8) == 120
    status, out, err = md.cli("train", "--data", data, "--arch", "desk_32", "--epochs", "1", "--out", model)
    assert status == 0, err
    assert json.loads(out)["command"] == "train"
    status, _, err = md.cli("eval", "--checkpoint", model / "checkpoint", "--data", data, "--out", ev)
    assert status == 0, err
    report = json.loads((ev / "metrics.json").read_text())
    assert {"accuracy", "f1", "fpr", "fnr"} <= set(report["metrics"])

    logits = md.predict(str(model / "checkpoint"), [np.zeros((3, 32), dtype=np.float32)])
    assert logits.shape == (3, 2)
    assert np.isfinite(logits).all()

    status, _, err = md.cli("train", "--data", tmp_path / "missing", "--arch", "desk_32", "--out", tmp_path / "x")
    assert status != 0
    assert "error" in json.loads(err)
