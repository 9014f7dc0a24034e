"""Hybrid reinforcement-learning agents with static external priors."""

__version__ = "0.1.0"
