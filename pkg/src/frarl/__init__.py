"""Falsification-based robust adversarial RL for longitudinal driving.

Modules:

* :mod:`frarl.mtl` -- MTL parsing and quantitative robustness monitoring
* :mod:`frarl.falsify` -- cross-entropy and uniform falsifiers
* :mod:`frarl.safety` -- the driving safety formula and falsification search space
* :mod:`frarl.sim` -- longitudinal two-vehicle simulator and scenarios
* :mod:`frarl.data` -- trajectory files, preprocessing, synthetic data
* :mod:`frarl.policy` -- actor-critic MLP, GAE, PPO loss, Adam, checkpoints
* :mod:`frarl.trainers` -- PPO / RARL / FRARL training loops
* :mod:`frarl.evaluation` -- evaluation reports, tables, learning curves
* :mod:`frarl.config` -- ``key = value`` run configuration
* :mod:`frarl.cli` -- the ``frarl`` command
"""

__version__ = "0.1.0"
