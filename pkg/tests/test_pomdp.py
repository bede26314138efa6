import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iaac.pomdp import (Belief, ContinuousChannelError, DiscreteChannel, EnumerationBudgetError,
                        ExactOracle, History, ImpossibleEvidenceError, InformedPomdp,
                        belief_filter, belief_refine, discounted_return, enumerate_histories,
                        exact_history_q, exact_informed_q, exact_informed_v, information_posterior,
                        read_trajectories_csv, reset, returns_to_go, rollout, step, uniform_policy,
                        write_trajectories_csv)
from iaac.synthetic import SyntheticConfig, generate, random_discrete


def chain(n=5, terminal_at=None):
    T = np.zeros((n, 1, n))
    for s in range(n):
        T[s, 0, min(s + 1, n - 1)] = 1.0
    term = None
    if terminal_at is not None:
        term = np.zeros(n, dtype=bool)
        term[terminal_at] = True
    return InformedPomdp(
        transition=T, reward=np.ones((n, 1)), initial_dist=np.eye(n)[0],
        info_channel=DiscreteChannel(np.eye(n)), obs_channel=DiscreteChannel(np.eye(n)),
        discount=0.9, terminal=term)


def single_state(reward=1.0, gamma=0.9):
    return InformedPomdp(
        transition=np.ones((1, 1, 1)), reward=np.full((1, 1), reward), initial_dist=np.ones(1),
        info_channel=DiscreteChannel(np.ones((1, 1))), obs_channel=DiscreteChannel(np.ones((1, 1))),
        discount=gamma)


def uniform_probs(num_actions):
    return lambda h: np.full(num_actions, 1.0 / num_actions)


def biased_probs(h):
    # depends on the whole history so that memoization bugs would show up
    x = 0.3 + 0.1 * sum(h.observations) + 0.05 * len(h.actions)
    p = 1 / (1 + np.exp(-x))
    return np.array([p, 1 - p])


# -- model validation ------------------------------------------------------


def test_rejects_non_stochastic_rows():
    T = np.full((2, 1, 2), 0.6)
    with pytest.raises(ValueError):
        InformedPomdp(T, np.zeros((2, 1)), np.array([0.5, 0.5]),
                      DiscreteChannel(np.eye(2)), DiscreteChannel(np.eye(2)))


def test_rejects_reward_above_rmax():
    with pytest.raises(ValueError):
        InformedPomdp(np.ones((1, 1, 1)), np.full((1, 1), 2.0), np.ones(1),
                      DiscreteChannel(np.ones((1, 1))), DiscreteChannel(np.ones((1, 1))), r_max=1.0)


def test_model_is_immutable():
    p = chain()
    with pytest.raises(ValueError):
        p.transition[0, 0, 0] = 0.5


def test_json_round_trip_discrete_and_gaussian(tmp_path):
    for model in (random_discrete(3, 2, 3, 2, seed=1), generate(SyntheticConfig(seed=3))):
        path = tmp_path / "m.json"
        model.save(path)
        back = InformedPomdp.load(path)
        assert np.array_equal(back.transition, model.transition)
        assert np.array_equal(back.reward, model.reward)
        assert back.to_json() == model.to_json()


# -- reset / step ----------------------------------------------------------


def test_reset_single_state():
    assert reset(single_state(), seed=5)[0] == 0


def test_reset_deterministic():
    p = generate(SyntheticConfig(seed=2))
    a, b = reset(p, seed=11), reset(p, seed=11)
    assert a[0] == b[0]
    assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])


def test_reset_uniform_frequencies():
    n = 10
    p = InformedPomdp(np.tile(np.eye(n)[:, None, :], (1, 1, 1)), np.zeros((n, 1)),
                      np.full(n, 0.1), DiscreteChannel(np.eye(n)), DiscreteChannel(np.eye(n)))
    rng = np.random.default_rng(0)
    counts = np.bincount([reset(p, rng=rng)[0] for _ in range(100_000)], minlength=n)
    assert np.all(np.abs(counts / 1e5 - 0.1) <= 0.01)


def test_step_deterministic_chain():
    p = chain()
    r, s2, i2, o2 = step(p, 2, 0, np.random.default_rng(0))
    assert (r, s2) == (1.0, 3)


def test_step_absorbing():
    p = chain()
    assert step(p, 4, 0, np.random.default_rng(0))[1] == 4


def test_step_stochastic_frequencies():
    T = np.zeros((2, 1, 2))
    T[:, 0] = [0.3, 0.7]
    p = InformedPomdp(T, np.zeros((2, 1)), np.array([1.0, 0.0]),
                      DiscreteChannel(np.eye(2)), DiscreteChannel(np.eye(2)))
    rng = np.random.default_rng(1)
    freq = np.mean([step(p, 0, 0, rng)[1] for _ in range(100_000)])
    assert abs(freq - 0.7) <= 0.01


def test_step_index_errors():
    with pytest.raises(IndexError):
        step(chain(), 7, 0, np.random.default_rng(0))
    with pytest.raises(IndexError):
        step(chain(), 0, 3, np.random.default_rng(0))


# -- rollout ---------------------------------------------------------------


def test_rollout_single_step():
    traj = rollout(chain(), uniform_policy(1), max_steps=1, seed=0)
    assert len(traj) == 1 and traj.truncated


def test_rollout_stops_at_terminal():
    traj = rollout(chain(10, terminal_at=3), uniform_policy(1), max_steps=100, seed=0)
    assert len(traj) == 3
    assert not traj.truncated and traj.terminated


def test_rollout_deterministic():
    p = generate(SyntheticConfig(seed=4))
    first = lambda h, rng: 0
    a = rollout(p, first, 20, seed=9)
    b = rollout(p, first, 20, seed=9)
    assert [s.state for s in a.steps] == [s.state for s in b.steps]
    assert all(np.array_equal(x.observation, y.observation) for x, y in zip(a.steps, b.steps))


def test_rollout_policy_sees_history_only():
    p = random_discrete(3, 2, 3, 2, seed=0)
    seen = []

    def policy(history, rng):
        assert isinstance(history, History)
        seen.append(len(history))
        return 0

    rollout(p, policy, 5, seed=0)
    assert seen == [1, 2, 3, 4, 5]


# -- returns ---------------------------------------------------------------


def _traj_with_rewards(rewards):
    from iaac.pomdp import Step, Trajectory
    return Trajectory([Step(0, 0, 0, 0, r) for r in rewards])


def test_discounted_return_geometric():
    assert discounted_return(_traj_with_rewards([1, 1, 1]), 0, 0.5) == pytest.approx(1.75)
    assert discounted_return(_traj_with_rewards([0, 0, 0]), 1, 0.9) == 0.0


@given(st.lists(st.floats(-1, 1), min_size=20, max_size=20), st.floats(0, 0.99))
def test_discounted_return_matches_recursion(rewards, gamma):
    traj = _traj_with_rewards(rewards)

    def recursive(t):
        return 0.0 if t == len(rewards) else rewards[t] + gamma * recursive(t + 1)

    rtg = returns_to_go(rewards, gamma)
    for t in range(20):
        assert discounted_return(traj, t, gamma) == pytest.approx(recursive(t), abs=1e-12)
        assert rtg[t] == pytest.approx(recursive(t), abs=1e-12)


# -- beliefs ---------------------------------------------------------------


def test_identifying_observation_gives_one_hot():
    p = random_discrete(3, 2, 3, 3, seed=0)
    p = InformedPomdp(p.transition, p.reward, p.initial_dist, DiscreteChannel(np.eye(3)),
                      DiscreteChannel(np.eye(3)))
    b = belief_filter(p, History([2, 0], [1]))
    assert np.array_equal(b.weights, np.eye(3)[0])


def test_uninformative_observation_keeps_prior():
    p = random_discrete(3, 2, 3, 2, seed=0)
    p = InformedPomdp(p.transition, p.reward, p.initial_dist,
                      DiscreteChannel(np.full((3, 3), 1 / 3)), DiscreteChannel(np.full((3, 2), 0.5)))
    assert np.allclose(belief_filter(p, History([1])).weights, p.initial_dist, atol=1e-15)


def joint_posterior(p, observations, actions, information=None):
    """Brute-force p(s_t | o_0..o_t, a_0..a_{t-1}[, i_t]) over every state/info path."""
    t = len(actions)
    S, I = p.num_states, p.num_informations
    post = np.zeros(S)
    for states in itertools.product(range(S), repeat=t + 1):
        for infos in itertools.product(range(I), repeat=t + 1):
            w = p.initial_dist[states[0]]
            for k in range(t + 1):
                if k > 0:
                    w *= p.transition[states[k - 1], actions[k - 1], states[k]]
                w *= p.info_channel.table[states[k], infos[k]]
                w *= p.obs_channel.table[infos[k], observations[k]]
            if information is not None and infos[t] != information:
                continue
            post[states[t]] += w
    return post / post.sum()


def test_filter_matches_enumeration():
    p = random_discrete(3, 2, 2, 2, seed=7)
    for obs, acts in [([0], []), ([1, 0], [1]), ([0, 1, 1], [0, 1])]:
        b = belief_filter(p, History(obs, acts))
        assert np.allclose(b.weights, joint_posterior(p, obs, acts), atol=1e-12, rtol=0)


def test_refine_and_info_posterior_match_enumeration():
    p = random_discrete(3, 2, 3, 2, seed=8)
    obs, acts = [1, 0, 1], [0, 1]
    b = belief_filter(p, History(obs, acts))
    pi = information_posterior(p, b, obs[-1])
    for i in range(3):
        refined = belief_refine(p, b, i, obs[-1])
        assert np.allclose(refined.weights, joint_posterior(p, obs, acts, i), atol=1e-12, rtol=0)
    # p(i | h) from enumeration
    joint = np.array([joint_posterior(p, obs, acts, i) for i in range(3)])
    unnorm = []
    for i in range(3):
        # mass of the event {i_t = i} given h via total probability
        unnorm.append(sum(b.weights[s] * p.info_channel.table[s, i] * p.obs_channel.table[i, obs[-1]]
                          / (p.info_channel.table[s] @ p.obs_channel.table[:, obs[-1]])
                          for s in range(3)))
    assert np.allclose(pi, unnorm, atol=1e-12)
    assert np.allclose(pi @ joint, b.weights, atol=1e-12)


def test_impossible_evidence():
    p = chain(3)
    with pytest.raises(ImpossibleEvidenceError):
        belief_filter(p, History([1]))
    b = belief_filter(p, History([0]))
    with pytest.raises(ImpossibleEvidenceError):
        belief_refine(p, b, 2, 0)


def test_continuous_channels_refuse_exact_filtering():
    p = generate(SyntheticConfig(seed=0))
    with pytest.raises(ContinuousChannelError):
        belief_filter(p, History([np.zeros(4)]))
    with pytest.raises(ContinuousChannelError):
        ExactOracle(p, uniform_probs(4))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(0, 1), min_size=1, max_size=4))
def test_beliefs_stay_normalized(seed, acts):
    p = random_discrete(4, 2, 3, 2, seed=seed)
    rng = np.random.default_rng(seed)
    obs = [int(rng.integers(2)) for _ in range(len(acts) + 1)]
    b = belief_filter(p, History(obs, acts))
    assert abs(b.weights.sum() - 1) < 1e-10
    for i in range(3):
        r = belief_refine(p, b, i, obs[-1])
        assert abs(r.weights.sum() - 1) < 1e-10 and np.all(r.weights >= 0)


# -- exact oracles ---------------------------------------------------------


@pytest.mark.parametrize("H", [1, 2, 5])
def test_single_state_geometric(H):
    p = single_state(gamma=0.9)
    q = exact_history_q(p, uniform_probs(1), History([0]), 0, H)
    assert q == pytest.approx((1 - 0.9 ** H) / (1 - 0.9), abs=1e-12)
    qi = exact_informed_q(p, uniform_probs(1), History([0]), 0, 0, H)
    assert qi == pytest.approx((1 - 0.9 ** H) / (1 - 0.9), abs=1e-12)


def test_horizon_one_is_informed_reward():
    p = random_discrete(3, 2, 3, 2, seed=3)
    h = History([1, 0], [1])
    b = belief_filter(p, h)
    for i in range(3):
        refined = belief_refine(p, b, i, 0)
        for a in range(2):
            q = exact_informed_q(p, biased_probs, h, i, a, 1)
            assert q == pytest.approx(refined.weights @ p.reward[:, a], abs=1e-14)
    assert exact_informed_q(p, biased_probs, h, 0, 0, 0) == 0.0


def brute_force_history_q(p, policy, obs, acts, action, H):
    """Forward enumeration of E[sum_j gamma^j r_j | h, a] over full state/info/obs paths."""
    S, I, O, A = p.num_states, p.num_informations, p.num_observations, p.num_actions
    b = joint_posterior(p, obs, acts)
    total = 0.0

    def recurse(state, hist_obs, hist_act, a, depth, weight):
        nonlocal total
        total += weight * p.discount ** depth * p.reward[state, a]
        if depth + 1 == H:
            return
        for s2 in range(S):
            ws = weight * p.transition[state, a, s2]
            if ws == 0:
                continue
            for i2 in range(I):
                for o2 in range(O):
                    w = ws * p.info_channel.table[s2, i2] * p.obs_channel.table[i2, o2]
                    probs = policy(History(hist_obs + [o2], hist_act + [a]))
                    for a2 in range(A):
                        recurse(s2, hist_obs + [o2], hist_act + [a], a2, depth + 1, w * probs[a2])

    for s in range(S):
        recurse(s, list(obs), list(acts), action, 0, b[s])
    return total


def test_history_q_matches_forward_enumeration():
    p = random_discrete(3, 2, 2, 2, seed=5)
    for H in (1, 2, 3):
        q = exact_history_q(p, biased_probs, History([0, 1], [1]), 0, H)
        assert q == pytest.approx(brute_force_history_q(p, biased_probs, [0, 1], [1], 0, H), abs=1e-12)


def test_lemma2_on_small_model():
    p = random_discrete(3, 2, 2, 2, seed=11)
    oracle = ExactOracle(p, biased_probs)
    for h in enumerate_histories(p, 1):
        pi = information_posterior(p, belief_filter(p, h), h.observations[-1])
        for a in range(2):
            lhs = sum(pi[i] * exact_informed_q(p, biased_probs, h, i, a, 4, oracle) for i in range(2))
            assert lhs == pytest.approx(exact_history_q(p, biased_probs, h, a, 4, oracle), abs=1e-10)


def test_informed_v_is_policy_average():
    p = random_discrete(3, 2, 3, 2, seed=2)
    h = History([1])
    for i in range(3):
        v = exact_informed_v(p, biased_probs, h, i, 3)
        q = [exact_informed_q(p, biased_probs, h, i, a, 3) for a in range(2)]
        assert v == pytest.approx(biased_probs(h) @ q, abs=1e-14)


def test_budget_guard():
    p = random_discrete(4, 2, 3, 2, seed=0)
    with pytest.raises(EnumerationBudgetError):
        exact_history_q(p, uniform_probs(2), History([0]), 0, 12)


# -- CSV -------------------------------------------------------------------


def test_trajectory_csv_round_trip(tmp_path):
    p = generate(SyntheticConfig(seed=1))
    trajs = [rollout(p, uniform_policy(4), 5, seed=k) for k in range(3)]
    path = tmp_path / "t.csv"
    write_trajectories_csv(path, trajs)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:3] == ["episode", "t", "state"]
    assert "info_3" in header and "obs_3" in header
    back = read_trajectories_csv(path)
    assert len(back) == 3
    for a, b in zip(trajs, back):
        assert np.array_equal(a.rewards, b.rewards)
        assert [s.state for s in a.steps] == [s.state for s in b.steps]
        assert all(np.array_equal(x.information, y.information) for x, y in zip(a.steps, b.steps))
