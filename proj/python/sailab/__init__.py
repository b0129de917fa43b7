"""Optimizer laboratory: SGD-SaI and baselines over a deterministic autodiff core.

The heavy lifting lives in the C++ extension; this package re-exports the
bound operations and adds small JSON conveniences.
"""

import json as _json

from ._core import (
    GsnrStats,
    arch_presets,
    block_stats,
    estimate_state_memory,
    estimate_state_memory_spec,
    normalize,
    optimizer_names,
)
from ._core import run_grid as _run_grid_json
from ._core import run_training as _run_training_json

__all__ = [
    "GsnrStats",
    "arch_presets",
    "block_stats",
    "estimate_state_memory",
    "estimate_state_memory_spec",
    "normalize",
    "optimizer_names",
    "run_training",
    "run_grid",
]


def run_training(config):
    """Run one training configuration (dict or JSON string); returns the run record dict."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _json.loads(_run_training_json(config))


def run_grid(grid, optimizers):
    """Run a hyperparameter grid; returns {'cells': [...], 'summary': [...]}."""
    if not isinstance(grid, str):
        grid = _json.dumps(grid)
    return _json.loads(_run_grid_json(grid, list(optimizers)))
