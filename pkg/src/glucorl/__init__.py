"""Offline reinforcement learning laboratory for basal insulin dosing.

The package couples a seedable virtual-patient glucose simulator with
classical PID/bolus control baselines, offline RL learners (TD3-BC and
discrete BCQ/CQL variants), clinical glycemic metrics and a scenario
experiment runner.  Everything is deterministic given explicit seeds.
"""

__version__ = "0.1.0"
