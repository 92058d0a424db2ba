import json
import math
import os

import numpy as np
import pytest

import lada


def test_kalman_gain_equal_trust():
    q = np.eye(3)
    r = np.eye(3)
    k = lada.kalman_gain(q, r)
    assert np.allclose(k, 0.5 * np.eye(3), atol=1e-12)


def test_analysis_update_full_trust():
    k = np.eye(2)
    out = lada.analysis_update([0.0, 0.0], [1.0, 2.0], k)
    assert out == pytest.approx([1.0, 2.0])


def test_sample_covariance_properties():
    rng = np.random.default_rng(7)
    samples = rng.normal(size=(12, 5))
    c = lada.sample_covariance(samples)
    assert np.allclose(c, c.T)
    evals = np.linalg.eigvalsh(c)
    assert evals.min() >= -1e-9
    single = lada.sample_covariance(samples[:1])
    assert np.all(single == 0.0)


def test_split_enumeration():
    s = lada.split(9, 1, [5])
    assert s["train"] == [0, 1, 3, 4, 6, 7]
    assert s["val"] == [2, 8]
    assert s["test"] == [5]


def _micro_config(tmp_path):
    cfg = json.loads(lada.default_config())
    cfg["out_dir"] = str(tmp_path / "out")
    cfg["scene"]["rows"] = 12
    cfg["scene"]["cols"] = 16
    cfg["scene"]["steps"] = 60
    cfg["observation_timesteps"] = [20, 30, 40, 50]
    cfg["cae"]["train"]["epochs"] = 2
    cfg["cae"]["train"]["early_stop_val_mse"] = 0.0
    cfg["lstm"]["train"]["epochs"] = 3
    cfg["baseline"]["background_cap"] = 8
    return cfg


def test_simulate_shape_and_bounds():
    cfg = _micro_config_nopath()
    stack = lada.simulate(json.dumps(cfg))
    assert stack.shape == (60, 12, 16)
    assert stack.min() >= cfg["scene"]["ambient_ppm"] - 1e-9
    assert stack.max() <= cfg["scene"]["initial_ppm"] + 1e-9


def _micro_config_nopath():
    cfg = json.loads(lada.default_config())
    cfg["scene"]["rows"] = 12
    cfg["scene"]["cols"] = 16
    cfg["scene"]["steps"] = 60
    cfg["observation_timesteps"] = [20, 30, 40, 50]
    return cfg


def test_pipeline_micro_run(tmp_path):
    cfg = _micro_config(tmp_path)
    summary = lada.run_pipeline(json.dumps(cfg))
    out = summary["out_dir"]
    for name in ("manifest.txt", "analysis.csv", "split.csv", "cae_model.lada"):
        assert os.path.exists(os.path.join(out, name)), name
    la = summary["latent_assimilation"]
    assert set(la) == {"sample", "sigma_0.01", "sigma_0.001", "sigma_0.0001"}
    for mode in la.values():
        assert mode["records"] == 4
        assert math.isfinite(mode["latent_mse_analysis"])
    assert summary["full_space"]["records"] == 4

    model = lada.Autoencoder.load(os.path.join(out, "cae_model.lada"))
    field = np.zeros((12, 16))
    latent = model.encode(field)
    assert len(latent) == model.latent_dim
    decoded = model.decode(latent)
    assert decoded.shape == (12, 16)

    surrogate = lada.Surrogate.load(os.path.join(out, "lstm_model.lada"))
    window = [latent] * surrogate.lookback
    nxt = surrogate.forecast(window)
    assert len(nxt) == model.latent_dim


def test_config_rejects_unknown_keys():
    cfg = json.loads(lada.default_config())
    cfg["never_a_key"] = 1
    with pytest.raises(ValueError):
        lada.run_pipeline(json.dumps(cfg))
