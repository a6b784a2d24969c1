"""
Configuration for landmark retrieval runs.
"""

from .config_manager import (
    ConfigManager,
    config_to_dict,
    get_config_manager,
    get_default_log_level,
    get_output_root,
    parse_overrides,
)
from .run_config import (
    CosegConfig,
    DatasetConfig,
    LoggingConfig,
    PoseEvalConfig,
    RetrievalEvalConfig,
    RunConfig,
    SceneConfig,
    SegmentationEvalConfig,
    TrainConfig,
)

__all__ = [
    "ConfigManager",
    "CosegConfig",
    "DatasetConfig",
    "LoggingConfig",
    "PoseEvalConfig",
    "RetrievalEvalConfig",
    "RunConfig",
    "SceneConfig",
    "SegmentationEvalConfig",
    "TrainConfig",
    "config_to_dict",
    "get_config_manager",
    "get_default_log_level",
    "get_output_root",
    "parse_overrides",
]
