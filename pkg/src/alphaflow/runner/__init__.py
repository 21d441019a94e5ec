"""Configuration, scenarios, persistence and plotting."""
from .checkpoint import (Checkpoint, CheckpointError, load_checkpoint, read_checkpoint,
                         read_series_csv, save_checkpoint, series_csv, write_checkpoint)
from .config import ConfigError, ScenarioConfig, parse_config
from .scenarios import (GoodSlice, NumericalFailure, ScenarioResult, find_good_slice,
                        gronwall_constant, make_initial_map, run_scenario)

__all__ = ["Checkpoint", "CheckpointError", "ConfigError", "GoodSlice", "NumericalFailure",
           "ScenarioConfig", "ScenarioResult", "find_good_slice", "gronwall_constant",
           "load_checkpoint", "make_initial_map", "parse_config", "read_checkpoint",
           "read_series_csv", "run_scenario", "save_checkpoint", "series_csv", "write_checkpoint"]
