"""
Informed values on a toy model
==============================

Build a three-state informed POMDP, filter a history, refine the belief with
the privileged information, and check that averaging the informed Q-values
over p(i | h) gives back the history Q-values.

Run:  python3 demos/01_informed_values.py
"""

import numpy as np

from iaac.pomdp import (DiscreteChannel, ExactOracle, History, InformedPomdp, belief_filter,
                        belief_refine, exact_history_q, exact_informed_q, information_posterior)

np.set_printoptions(precision=4, suppress=True)

# two actions: 0 stays put, 1 moves right (and wraps around)
stay = np.eye(3)
move = np.roll(np.eye(3), 1, axis=1)
transition = np.stack([0.9 * stay + 0.05, 0.9 * move + 0.05], axis=1)
transition /= transition.sum(axis=-1, keepdims=True)

# the information is a noisy copy of the state; the observation a blurred
# copy of the information with only two symbols
model = InformedPomdp(
    transition=transition,
    reward=np.array([[0.0, 0.0], [0.0, 0.0], [1.0, -0.2]]),
    initial_dist=np.full(3, 1 / 3),
    info_channel=DiscreteChannel(np.array([[0.9, 0.05, 0.05],
                                           [0.05, 0.9, 0.05],
                                           [0.05, 0.05, 0.9]])),
    obs_channel=DiscreteChannel(np.array([[0.8, 0.2], [0.5, 0.5], [0.2, 0.8]])),
    discount=0.9,
    r_max=1.0,
)


def policy(history):
    # move right more often after seeing symbol 0
    return np.array([0.3, 0.7]) if history.observations[-1] == 0 else np.array([0.6, 0.4])


h = History([0, 1], [1])
b = belief_filter(model, h)
print("p(s | h)        ", b.weights)

p_i = information_posterior(model, b, h.observations[-1])
print("p(i | h)        ", p_i)
for i in range(3):
    print(f"p(s | h, i={i})  ", belief_refine(model, b, i, h.observations[-1]).weights)

# %%
# Informed and history Q-values, four reward terms ahead.  One oracle is
# shared so the recursion is only enumerated once.
oracle = ExactOracle(model, policy)
H = 4
for a in range(2):
    q_h = exact_history_q(model, policy, h, a, H, oracle)
    q_i = np.array([exact_informed_q(model, policy, h, i, a, H, oracle) for i in range(3)])
    print(f"a={a}  Q(h,a)={q_h:.6f}  Q(h,i,a)={q_i}  sum_i p(i|h) Q(h,i,a)={p_i @ q_i:.6f}")

# the spread of Q(h, i, a) across i is what an informed critic can exploit
