"""Brute-force reference computations shared by the tests.

Everything here enumerates complete state/information/observation paths and
never calls the package's filters or value recursions.
"""

import itertools

import numpy as np


def joint_posterior(p, observations, actions, information=None):
    """p(s_t | o_0..o_t, a_0..a_{t-1}[, i_t]) by summing over every state/info path."""
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


def info_marginal(p, observations, actions):
    """p(i_t | h_t) by enumeration."""
    t = len(actions)
    S, I = p.num_states, p.num_informations
    mass = np.zeros(I)
    for states in itertools.product(range(S), repeat=t + 1):
        for infos in itertools.product(range(I), repeat=t + 1):
            w = p.initial_dist[states[0]]
            for k in range(t + 1):
                if k > 0:
                    w *= p.transition[states[k - 1], actions[k - 1], states[k]]
                w *= p.info_channel.table[states[k], infos[k]]
                w *= p.obs_channel.table[infos[k], observations[k]]
            mass[infos[t]] += w
    return mass / mass.sum()


def forward_q(p, policy, observations, actions, action, horizon, start_belief):
    """E[sum_{j<horizon} gamma^j r_j] from ``start_belief`` over s_t, then the policy.

    The policy maps a (observations, actions) pair of tuples to action probabilities.
    """
    S, I, O, A = p.num_states, p.num_informations, p.num_observations, p.num_actions
    total = 0.0

    def recurse(state, obs, acts, a, depth, weight):
        nonlocal total
        total += weight * p.discount ** depth * p.reward[state, a]
        if depth + 1 == horizon:
            return
        for s2 in range(S):
            ws = weight * p.transition[state, a, s2]
            if ws == 0:
                continue
            for i2 in range(I):
                for o2 in range(O):
                    w = ws * p.info_channel.table[s2, i2] * p.obs_channel.table[i2, o2]
                    if w == 0:
                        continue
                    nobs, nacts = obs + (o2,), acts + (a,)
                    probs = policy(nobs, nacts)
                    for a2 in range(A):
                        if probs[a2] > 0:
                            recurse(s2, nobs, nacts, a2, depth + 1, w * probs[a2])

    if horizon <= 0:
        return 0.0
    for s in range(S):
        if start_belief[s] > 0:
            recurse(s, tuple(observations), tuple(actions), action, 0, start_belief[s])
    return total
