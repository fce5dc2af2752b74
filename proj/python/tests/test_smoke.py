import json
import math

import numpy as np
import pytest

import coupled_balance as cb


def test_params_defaults_and_validation():
    p = cb.ModelParams()
    assert p.gamma == 50.0 and p.alpha == 22.0 and p.tau == 0.1
    assert p.beta == pytest.approx(cb.CALIBRATED_SINGLE_BETA)
    with pytest.raises(ValueError):
        cb.ModelParams(tau=0.1005)


def test_simulate_is_deterministic():
    p = cb.ModelParams(seed=3)
    a = cb.simulate("coupled", p, horizon=5, channels=["dq1", "dq1_dot"], downsample=10)
    b = cb.simulate("coupled", p, horizon=5, channels=["dq1", "dq1_dot"], downsample=10)
    assert a["dt_sample"] == pytest.approx(0.01)
    assert a["diverged_at"] is None
    assert len(a["channels"]["dq1"]) == 500
    np.testing.assert_array_equal(a["channels"]["dq1"], b["channels"]["dq1"])
    assert "dx_dot" in cb.available_channels("single")


def test_divergence_is_reported():
    r = cb.simulate("single", cb.ModelParams(beta=0, nu=0), horizon=100, channels=["dx"])
    assert r["diverged_at"] is not None and r["diverged_at"] < 100


def test_root_and_deterministic_exponent():
    root = cb.characteristic_root(50, 22, 0, 0.1)
    assert root == pytest.approx((-50 + math.sqrt(2500 + 88)) / 2, rel=1e-9)
    p = cb.ModelParams(beta=21, nu=0)
    lam, se = cb.largest_lyapunov("single", p, horizon=1000)
    assert lam == pytest.approx(cb.characteristic_root(50, 22, 21, 0.1), rel=0.02)
    assert se >= 0


def test_spectrum_and_slope_fit():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(2**15)
    f, pw = cb.power_spectrum(x, 0.01, segment=1024)
    assert f[0] == 0 and len(f) == len(pw) == 513
    fit = cb.fit_two_regime_slopes(f, pw, f_lo=0.2, f_hi=45)
    assert abs(fit["single_slope"]) < 0.2


def test_stcc_finds_a_shift():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(4000)
    y = np.roll(x, 7)
    lag, c = cb.stcc(x, y, dt=0.01, t=1.0, window=20.0, lag_min=0.0, lag_max=0.3)
    assert c.max() <= 1 + 1e-12
    assert cb.first_dominant_peak(lag, c, 0.0, 0.3) == pytest.approx(0.07)


def test_density_ratio_of_identical_samples():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(200000)
    assert cb.density_ratio(x, x)["central_mean"] == pytest.approx(1.0)


def test_pixel_map():
    assert cb.model_to_px(-3.0) == 1
    assert cb.model_to_px(3.0) == 1200
    assert all(cb.model_to_px(cb.px_to_model(px)) == px for px in range(1, 1201))


def test_wire_messages():
    assert cb.message_type('{"type":"mouse","tick":3,"px":10}') == "mouse"
    assert cb.canonical_message('{"px":10,"tick":3,"type":"mouse"}') == '{"type":"mouse","tick":3,"px":10}'
    with pytest.raises(ValueError):
        cb.message_type('{"type":"launch"}')


def test_trial_file_round_trip(tmp_path):
    rows = []
    header = {
        "type": "header", "format_version": 1, "session": "PY", "subjects": ["A"],
        "config": {"mode": "single", "gamma": 50.0, "alpha": 21.0, "beta": 21.0, "nu": 0.6, "tau": 0.1,
                   "dt": 0.001, "seed": 1, "rod_length": 1.0, "tick_rate": 50.0, "max_duration": 600.0,
                   "visible_lo": -3.0, "visible_hi": 3.0, "screen_width": 1200, "countdown": 0},
    }
    rows.append(header)
    n = 1500
    t = np.arange(n) / 50.0
    tip = 0.3 * np.sin(2 * np.pi * 0.4 * t)
    base = np.roll(tip, 6)
    for k in range(n):
        rows.append({"type": "tick", "tick": k, "t": t[k], "tip": tip[k], "v_tip": 0.0, "bases": [base[k]],
                     "v_bases": [0.0], "errors": [tip[k] - base[k]], "px": [cb.model_to_px(base[k])]})
    rows.append({"type": "end", "cause": "completed", "ticks": n})
    path = tmp_path / "PY-single.trial.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")

    loaded = cb.load_trial(path)
    assert loaded["cause"] == "completed" and loaded["warnings"] == []
    np.testing.assert_allclose(loaded["tip"], tip)
    report = cb.analyze_trials([path])
    assert len(report["trials"]) == 1
    assert report["trials"][0]["tau_hat"] == pytest.approx(0.12)
