"""Architecture search for small recurrent forecasters.

A binary bat swarm evolves the hyperparameters of an LSTM one-step
forecaster: window length, which optional layers exist, unit counts,
and dense activations. The package also ships the case-count data
pipeline the search trains on.
"""

from .bba import BbaConfig, SearchResult, SwarmState, run, transfer
from .data import (
    FramedDataset,
    Scaler,
    augment,
    fit_scaler,
    frame,
    ingest,
    load_holidays,
    prepare_supervised,
    split,
)
from .errors import (
    BatnasError,
    CheckpointError,
    ConfigError,
    DataError,
    DivergenceError,
    EvaluationError,
)
from .genome import (
    ArchitectureSpec,
    Genome,
    GenomeLayout,
    LayerSpec,
    decode,
    default_layout,
    encode,
    gray_decode,
    gray_encode,
)
from .network import Network, TrainConfig, build, evaluate, gradient_check, train
from .search import NasConfig, NasResult, fitness_of, run_search

__version__ = "0.1.0"

__all__ = [
    "ArchitectureSpec",
    "BatnasError",
    "BbaConfig",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "EvaluationError",
    "FramedDataset",
    "Genome",
    "GenomeLayout",
    "LayerSpec",
    "NasConfig",
    "NasResult",
    "Network",
    "Scaler",
    "SearchResult",
    "SwarmState",
    "TrainConfig",
    "augment",
    "build",
    "decode",
    "default_layout",
    "encode",
    "evaluate",
    "fit_scaler",
    "fitness_of",
    "frame",
    "gradient_check",
    "gray_decode",
    "gray_encode",
    "ingest",
    "load_holidays",
    "prepare_supervised",
    "run",
    "run_search",
    "split",
    "train",
    "transfer",
    "__version__",
]
