"""
Four critics on Heaven-Hell-3
=============================

Trains the history, state, history-state and informed critics side by side
and writes ``learning_curves.svg`` with the per-step numbers next to it.

The default budget is small so the script finishes in a few minutes; pass a
step count (e.g. 300000) for the desk-scale setting.

Run:  python3 demos/03_learning_curves.py [steps] [out_dir]
"""

import sys
from pathlib import Path

from iaac.actor_critic import HyperParams, VARIANTS, architecture_for, random_baseline, train, write_train_log
from iaac.envs import make_env
from iaac.plots import learning_curves

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
out = Path(sys.argv[2] if len(sys.argv) > 2 else "out/learning")
env_name = "heaven-hell-3"

logs = []
for variant in VARIANTS:
    for seed in (0, 1):
        env = make_env(env_name)
        run = train(env, variant, HyperParams.for_env(env_name), steps, seed=seed,
                    arch=architecture_for(env_name))
        path = out / variant / f"seed_{seed:03d}" / "log.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_train_log(path, run.log)
        logs.append(path)
        print(f"{variant:<20} seed {seed}  final rolling return {run.log[-1]['rolling_return_100']:.3f}")

print("random policy:", round(random_baseline(make_env(env_name), 1000, seed=0), 3))
for f in learning_curves(logs, out, title=f"{env_name}, {steps} steps"):
    print("wrote", f)
