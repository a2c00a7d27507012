import json

import numpy as np
import pytest

import dvislam


def test_se3_roundtrip():
    xi = np.array([0.3, -0.2, 0.5, 0.1, 0.4, -0.7])
    T = dvislam.se3_exp(xi)
    assert np.allclose(dvislam.se3_log(T), xi, atol=1e-12)
    Tinv = T.inverse()
    assert np.allclose((T * Tinv).matrix(), np.eye(4), atol=1e-12)


def test_log_near_pi_raises():
    with pytest.raises(ValueError):
        dvislam.so3_log(dvislam.so3_exp(np.array([0.0, 0.0, np.pi])))


def test_reconstruct_joint_keeps_conditional():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 5))
    cov = a @ a.T + np.eye(5)
    mean = rng.normal(size=5)
    new_cov = np.diag([2.0, 0.5])
    new_mean = np.array([1.0, -1.0])
    m, c = dvislam.reconstruct_joint(mean, cov, [1, 3], new_mean, new_cov)
    assert np.allclose(m[[1, 3]], new_mean)
    assert np.allclose(c[np.ix_([1, 3], [1, 3])], new_cov)
    x = [0, 2, 4]
    lam0 = np.linalg.inv(cov)[np.ix_(x, x)]
    lam1 = np.linalg.inv(c)[np.ix_(x, x)]
    assert np.allclose(lam0, lam1, atol=1e-9)


def test_correlated_gain_reduces_to_textbook():
    P = np.diag([1.0, 2.0])
    H = np.array([[1.0, 0.5]])
    V = np.array([[0.3]])
    K, _, _ = dvislam.correlated_gain(P, H, V, np.zeros((2, 1)))
    assert np.allclose(K, P @ H.T @ np.linalg.inv(H @ P @ H.T + V), atol=1e-12)


def test_metropolis_complete_three():
    A = dvislam.metropolis_weights([(0, 1), (0, 2), (1, 2)], 3)
    assert np.allclose(A, np.full((3, 3), 1.0 / 3.0))


def test_dvi_single_node_one_step():
    rng = np.random.default_rng(5)
    n = 2
    model = dvislam.LinearModel(
        F=0.9 * np.eye(n), G=np.ones((n, 1)), W=0.1 * np.eye(n), H=np.eye(1, n), V=np.eye(1),
        prior_mean=np.zeros(n), prior_cov=np.eye(n))
    lifted = dvislam.LiftedModel(model, [rng.normal(size=1) for _ in range(3)], [rng.normal(size=1) for _ in range(4)])
    N = lifted.lifted_dim
    out = dvislam.dvi_round([np.zeros(N)], [10 * np.eye(N)], [[]], [lifted], [], alpha=1.0)
    mean, cov = dvislam.batch_solution(lifted)
    assert np.allclose(out[0][0], mean, atol=1e-9)
    assert np.allclose(out[0][1], cov, atol=1e-9)


def test_triangulate_stereo():
    cam = dvislam.CameraModel()
    p = np.array([0.5, -0.2, 9.0])
    poses = [dvislam.Pose(), dvislam.Pose(np.eye(3), np.array([1.0, 0.0, 0.0]))]
    pixels = [dvislam.project(cam, T.inverse().transform(p)) for T in poses]
    point, rms = dvislam.triangulate(poses, pixels, cam)
    assert np.allclose(point, p, atol=1e-8)
    assert rms < 1e-6


def test_scenario_and_short_run(tmp_path):
    sc = dvislam.generate_scenario(n_robots=2, horizon=20, n_objects=30, seed=2)
    assert len(sc["trajectories"]) == 2
    assert sc["trajectories"][0].shape == (20, 3)
    cfg = json.dumps({"schema_version": 1, "sim": {"n_robots": 2, "horizon": 20, "n_objects": 40}})
    sep = dvislam.run_single(cfg, "separate", 0.0, 1)
    con = dvislam.run_single(cfg, "consensus", 0.0, 1)
    assert not sep["failed"] and not con["failed"]
    assert con["communication_bytes"] > 0
    assert sep["report_csv"].startswith("row,trajectory_rmse_m")
    assert dvislam.run_config(cfg, str(tmp_path / "out")) == 0
    assert (tmp_path / "out" / "manifest.json").exists()


def test_config_error_is_line_anchored():
    with pytest.raises(ValueError, match=r"<config>:3: bogus"):
        dvislam.run_single('{\n"schema_version": 1,\n"bogus": 1\n}', "separate")
