from .learner import Learner, StepRecord
from .mixer import MixerNet, check_monotonicity, mix, mixer_agent_weights
from .replay import Batch, ReplayBuffer, Segment, Transition, segment_episode

__all__ = [
    "Learner", "StepRecord", "MixerNet", "check_monotonicity", "mix", "mixer_agent_weights",
    "Batch", "ReplayBuffer", "Segment", "Transition", "segment_episode",
]
