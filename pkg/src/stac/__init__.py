"""Signal-conditioned team actor-critic and exact team-game evaluation."""

__version__ = "0.1.0"
