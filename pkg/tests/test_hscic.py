import itertools
import json

import numpy as np
import pytest

from iaac.envs import InformationOverride, PomdpEnv
from iaac.hscic import (HscicSamples, KernelConfig, _weights, collect_hscic_samples,
                        hscic_pointwise, mean_statistic, median_heuristic, permutation_test,
                        pointwise_all, rbf_matrix, resolve_bandwidth)
from iaac.pomdp import discounted_return
from iaac.synthetic import SyntheticConfig, generate


def test_rbf_examples():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(50, 3))
    K = rbf_matrix(pts, 0.7)
    assert np.all(np.diag(K) == 1.0)
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K).min() >= -1e-10
    two = rbf_matrix(np.array([[0.0, 0.0], [0.5 * np.sqrt(2), 0.0]]), 0.5)
    assert two[0, 1] == pytest.approx(np.exp(-1))
    with pytest.raises(ValueError):
        rbf_matrix(pts, 0.0)


def test_median_heuristic_examples():
    assert median_heuristic([0.0, 2.0]) == 2.0
    assert median_heuristic([0.0, 1.0, 2.0]) == 1.0
    pts = np.random.default_rng(1).normal(size=(100, 2))
    dists = sorted(np.linalg.norm(pts[i] - pts[j]) for i, j in itertools.combinations(range(100), 2))
    m = len(dists)
    expected = dists[m // 2] if m % 2 else 0.5 * (dists[m // 2 - 1] + dists[m // 2])
    assert median_heuristic(pts) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        median_heuristic(np.ones((5, 2)))


def test_bandwidth_fallbacks():
    assert resolve_bandwidth(np.ones((4, 1)), "median-heuristic") == 1.0
    # more than half the pairs coincide
    pts = np.array([0.0, 0.0, 0.0, 0.0, 3.0])
    assert resolve_bandwidth(pts, "median-heuristic") == 3.0
    assert resolve_bandwidth(pts, 0.4) == 0.4


def test_kernel_config_validation():
    with pytest.raises(ValueError):
        KernelConfig(ridge=0.0)
    with pytest.raises(ValueError):
        KernelConfig(bandwidth_x=-1.0)
    with pytest.raises(ValueError):
        KernelConfig(bandwidth_y="silverman")
    assert KernelConfig().ridge_for(500) == pytest.approx(0.5)


def test_pointwise_single_sample():
    one = np.ones((1, 1))
    assert hscic_pointwise(one, one, one, np.ones(1), 1.0) == pytest.approx(0.0625, abs=1e-15)


def random_problem(n=30, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, 2))
    Y = rng.normal(size=(n, 1))
    X = Y[:, 0] + 0.3 * Z[:, 0] + 0.1 * rng.normal(size=n)
    return HscicSamples(X, Y, Z)


def test_vectorized_matches_pointwise_formula():
    s = random_problem()
    K_X, K_Y, K_Z = rbf_matrix(s.X, 1.0), rbf_matrix(s.Y, 0.8), rbf_matrix(s.Z, 1.3)
    fast = pointwise_all(K_X, K_Y, _weights(K_Z, 0.05))
    # explicit inverse and the printed three-term form
    W = np.linalg.inv(K_Z + 0.05 * np.eye(s.n))
    A = K_X * K_Y
    for j in range(s.n):
        k = K_Z[:, j]
        direct = (k @ W @ A @ W.T @ k - 2 * k @ W @ ((K_X @ W.T @ k) * (K_Y @ W.T @ k))
                  + (k @ W @ K_X @ W.T @ k) * (k @ W @ K_Y @ W.T @ k))
        assert fast[j] == pytest.approx(direct, rel=1e-8, abs=1e-12)
        assert hscic_pointwise(K_X, K_Y, K_Z, k, 0.05) == pytest.approx(direct, rel=1e-8, abs=1e-12)


def test_constant_information_vanishes_for_small_ridge():
    # well-separated Z, so the kernel-ridge weights at sample points sum to 1
    Z = np.arange(20.0)[:, None] * 10
    X = np.random.default_rng(0).normal(size=20)
    s = HscicSamples(X, np.zeros(20), Z)
    cfg = KernelConfig(bandwidth_z=1.0, ridge=1e-9)
    assert mean_statistic(s, cfg) < 1e-6


def test_relabeling_invariance():
    s = random_problem(40, 3)
    perm = np.random.default_rng(9).permutation(40)
    cfg = KernelConfig()
    assert mean_statistic(s, cfg) == pytest.approx(mean_statistic(s.subset(perm), cfg), rel=1e-9)


def test_dependence_dominates_constant():
    rng = np.random.default_rng(4)
    n = 200
    Z = rng.normal(size=(n, 2))
    Y = rng.normal(size=(n, 1))
    X = 3 * Y[:, 0] + 0.05 * rng.normal(size=n)
    cfg = KernelConfig()
    dep = mean_statistic(HscicSamples(X, Y, Z), cfg)
    const = mean_statistic(HscicSamples(X, np.zeros(n), Z), cfg)
    assert dep >= 10 * const


def test_permutation_extremes():
    s = random_problem(60, 1)
    const = HscicSamples(s.X, np.full(60, 2.5), s.Z)
    rep = permutation_test(const, B=30, seed=0)
    assert rep.p_value == 1.0 and all(v == rep.mean_statistic for v in rep.permuted)
    rng = np.random.default_rng(2)
    Y = rng.normal(size=(150, 1))
    strong = HscicSamples(5 * Y[:, 0], Y, rng.normal(size=(150, 2)))
    rep = permutation_test(strong, B=30, seed=0)
    assert rep.mean_statistic > max(rep.permuted) and rep.p_value == 0.0
    assert rep.B == 30 and rep.n == 150 and not rep.rejects(-1) and rep.rejects(0.1)


def test_permutation_deterministic_and_split():
    s = random_problem(50, 5)
    a = permutation_test(s, B=10, seed=7)
    b = permutation_test(s, B=10, seed=7)
    assert a.to_dict() == b.to_dict()
    split = permutation_test(s, KernelConfig(split=True), B=10, seed=7)
    assert split.n == 25 and 0.0 <= split.p_value <= 1.0
    doc = json.loads(split.to_json())
    assert doc["config"]["split"] is True
    assert split.csv_row("inst-0").split(",")[0] == "inst-0"
    with pytest.raises(ValueError):
        permutation_test(s, B=0)


def test_samples_validation(tmp_path):
    with pytest.raises(ValueError):
        HscicSamples(np.zeros(3), np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        HscicSamples(np.array([0.0, np.nan]), np.zeros(2), np.zeros(2))
    s = random_problem(10)
    s.save(tmp_path / "s.npz")
    back = HscicSamples.load(tmp_path / "s.npz")
    assert np.array_equal(back.Z, s.Z)


def test_collect_counts_and_returns():
    p = generate(SyntheticConfig(seed=1))
    s = collect_hscic_samples(p, episodes=3, horizon=1, seed=0)
    assert s.n == 3
    env = PomdpEnv(p, max_steps=25)
    s = collect_hscic_samples(env, episodes=20, horizon=25, gamma=p.discount, seed=4)
    assert s.n == 500 and s.Y.shape[1] == 4
    # reproduce the rollouts and compare every return
    from iaac.envs import RandomAgent, run_episode
    seq = np.random.SeedSequence(4)
    env_rng, agent_rng = (np.random.default_rng(x) for x in seq.spawn(2))
    row = 0
    for _ in range(20):
        traj = run_episode(env, RandomAgent(4), env_rng, agent_rng, 25)
        for t in range(len(traj)):
            assert s.X[row, 0] == pytest.approx(discounted_return(traj, t, p.discount), rel=1e-12)
            assert np.array_equal(s.Y[row], traj.steps[t].information)
            row += 1


def test_horizon_one_is_immediate_reward():
    p = generate(SyntheticConfig(seed=2))
    env = PomdpEnv(p, max_steps=1)
    s = collect_hscic_samples(env, episodes=5, horizon=1, seed=3)
    from iaac.envs import RandomAgent, run_episode
    seq = np.random.SeedSequence(3)
    env_rng, agent_rng = (np.random.default_rng(x) for x in seq.spawn(2))
    r0 = [run_episode(env, RandomAgent(4), env_rng, agent_rng, 1).rewards[0] for _ in range(5)]
    assert np.array_equal(s.X[:, 0], r0)


def test_history_summary_width_and_padding():
    p = generate(SyntheticConfig(seed=0))
    s = collect_hscic_samples(InformationOverride(PomdpEnv(p, 25), "none"), episodes=1,
                              horizon=25, seed=0)
    assert s.Z.shape[1] == 4 * 4 + 4 * 4 + 1 + 4
    # at t = 0 only the newest observation slot and the current action are filled
    assert np.all(s.Z[0, 4:16] == 0) and np.all(s.Z[0, 16:32] == 0)
    assert s.Z[0, 32] == 0.0 and s.Z[0, 33:].sum() == 1
