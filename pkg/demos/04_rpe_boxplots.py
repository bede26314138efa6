"""
Return-prediction errors
========================

Compares a symmetric and an informed critic by their squared errors against
the realized return.  Per episode, a Bernstein bound gives a high-probability
lower bound epsilon on the mean gain; epsilon > 0 rejects "the information
does not help".

Three pairs are scored on one synthetic instance:

* a constant vs the realized return (always informative),
* two identical critics (never informative),
* a history critic vs an informed critic, both briefly trained.

Run:  python3 demos/04_rpe_boxplots.py [out_dir]
"""

import sys
from pathlib import Path

from iaac.actor_critic import Architecture, HyperParams, Trainer, pomdp_env
from iaac.envs import RandomAgent
from iaac.plots import epsilon_boxplots
from iaac.rpe import BootstrapQ, ConstantCritic, ReturnOracle, evaluate_signal, write_rows_csv
from iaac.synthetic import SyntheticConfig, generate

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out/rpe")
out.mkdir(parents=True, exist_ok=True)

pomdp = generate(SyntheticConfig(seed=3, info_noise=0.0))
bound = pomdp.r_max / (1 - pomdp.discount)
agent = RandomAgent(pomdp.num_actions)

oracle = evaluate_signal(pomdp, ConstantCritic(bound), ReturnOracle(pomdp.discount), agent,
                         episodes=200, instance_id="oracle")
same = evaluate_signal(pomdp, ReturnOracle(pomdp.discount), ReturnOracle(pomdp.discount), agent,
                       episodes=200, instance_id="identical")

# %%
# Learned critics: short runs, so expect small or negative epsilons
env = pomdp_env(pomdp, max_steps=50)
arch = Architecture(encoder="elman", hidden_dim=32, critic_head=(64,))
critics = {}
for variant in ("history", "history-information"):
    trainer = Trainer(env, variant, HyperParams.for_env("pomdp", discount=pomdp.discount), seed=0, arch=arch)
    trainer.run(20_000)
    critics[variant] = BootstrapQ(trainer.critic, variant, pomdp.discount, pomdp.num_actions)
learned = evaluate_signal(env, critics["history"], critics["history-information"], agent,
                          episodes=200, horizon=50, gamma=pomdp.discount, instance_id="learned")

for rep in (oracle, same, learned):
    for row in rep.summary():
        print(f"{rep.instance_id:<10} delta={row['delta']:<5} median eps={row['median']:+.4f} "
              f"reject fraction={row['reject_fraction']:.2f}")

write_rows_csv(out / "episodes.csv", [oracle, same, learned])
for f in epsilon_boxplots([out / "episodes.csv"], out, delta=0.05, title="epsilon at delta = 0.05"):
    print("wrote", f)
