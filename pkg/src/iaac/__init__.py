"""Actor-critic learning with privileged information in partially observable tasks.

Modules: ``pomdp`` (informed POMDP models, exact values), ``synthetic``
(random instances), ``envs`` (benchmark tasks), ``nn`` (recurrent networks
with hand-written backpropagation), ``actor_critic`` (training), ``hscic``
(pre-training kernel test), ``rpe`` (post-hoc return-prediction test) and
``cli``.
"""

__version__ = "0.1.0"
