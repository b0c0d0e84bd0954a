"""Edge-rendered VR streaming simulator with a continual actor-critic
resource allocator.

Users watch tile-gridded video whose per-tile resolution follows gaze
attention; an edge server renders GoPs and downlinks them over fading
channels under a hard latency budget. A digital twin observes the system
with bounded calibration bias, and a continually trained DDPG agent with
freshness-prioritized experience replay allocates resolutions, bandwidth
and CPU to maximize attention-weighted QoE under horizon fairness.
"""

from .config import ConfigError, SimConfig
from .env import EdgeEnv, FairnessTracker
from .agents import ContinualSchedule, DdpgAgent, RunResult, VARIANTS, \
    run_continual
from .mdp import ActionVector, decode_action, reward
from .replay import BufferConfig, ReplayBuffer, SumTree
from .nets import Adam, Mlp, MlpSpec, soft_update

__version__ = "0.1.0"

__all__ = [
    "ActionVector", "Adam", "BufferConfig", "ConfigError",
    "ContinualSchedule", "DdpgAgent", "EdgeEnv", "FairnessTracker", "Mlp",
    "MlpSpec", "ReplayBuffer", "RunResult", "SimConfig", "SumTree",
    "VARIANTS", "decode_action", "reward", "run_continual", "soft_update",
    "__version__",
]
