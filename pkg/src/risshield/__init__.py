"""RIS-assisted ISAC beamforming with sensing-region protection."""

__version__ = "0.1.0"

from .scenario import (ScenarioConfig, GeometryConfig, ElementPartition, ChannelSet,
                       PartitionedChannels, build_scenario, partition_channels)
from .metrics import BeamformingState, DetectionStats
from .algorithms import AlgorithmSettings, RunTrace, RunOutcome, run_main
from .harness import ExperimentSpec, AggregateResult, run_experiment, sweep, heatmap

__all__ = [
    "ScenarioConfig", "GeometryConfig", "ElementPartition", "ChannelSet",
    "PartitionedChannels", "build_scenario", "partition_channels",
    "BeamformingState", "DetectionStats",
    "AlgorithmSettings", "RunTrace", "RunOutcome", "run_main",
    "ExperimentSpec", "AggregateResult", "run_experiment", "sweep", "heatmap",
    "__version__",
]
