from stac.train.loop import (
    StacAgents,
    TrainConfig,
    TrainResult,
    adversary_policy_table,
    extract_profile,
    save_agents,
    train,
)
from stac.train.rollout import Episode, RolloutBatch, TreeRollout, rollout_episode
from stac.train.replay import InsufficientData, ReplayBuffer, SarsasRecord, sample_balanced_batch
from stac.train.sac import SacLearner

__all__ = [
    "Episode",
    "InsufficientData",
    "ReplayBuffer",
    "RolloutBatch",
    "SacLearner",
    "SarsasRecord",
    "StacAgents",
    "TrainConfig",
    "TrainResult",
    "TreeRollout",
    "adversary_policy_table",
    "extract_profile",
    "rollout_episode",
    "sample_balanced_batch",
    "save_agents",
    "train",
]
