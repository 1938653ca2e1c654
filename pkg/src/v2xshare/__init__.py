"""Spectrum-sharing laboratory for vehicular networks.

Modules: channel (mobility + gains), environment (the decision process),
neuralnet (MLP substrate), ppo (inner-loop learner), meta (task grids and
the two-loop schedule), evaluation (baselines and metrics), studies
(figure datasets), config/cli (orchestration).
"""

from .environment import SpectrumEnv, TaskConfig
from .meta import FactorGrid, TaskSet, generate_task_set, meta_train, reptile_update
from .neuralnet import ParameterSet, init_params

__version__ = "0.1.0"

__all__ = [
    "SpectrumEnv",
    "TaskConfig",
    "FactorGrid",
    "TaskSet",
    "generate_task_set",
    "meta_train",
    "reptile_update",
    "ParameterSet",
    "init_params",
    "__version__",
]
