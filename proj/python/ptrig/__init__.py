"""Predictive triggering for multi-agent control over a slotted network."""

import json as _json

from ._core import (  # noqa: F401
    ConfigError,
    ExitTable,
    PtrigError,
    TableFormatError,
    build_exit_table,
    chain_expansion,
    load_table,
    m_step_probability,
    network_utilization,
    preset,
    preset_names,
    quantize,
    sequence_weights,
    solve_dare,
)
from . import _core


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def resolve_config(config):
    """Canonical, validated form of a config dict (or JSON text)."""
    return _json.loads(_core.resolve_config(_text(config)))


def build_table_for(config):
    return _core.build_table_for(_text(config))


def run(config, table=None):
    """Run one experiment; returns summary values and per-step arrays."""
    return _core.run(_text(config), table)


def run_csv(config, table=None):
    return _core.run_csv(_text(config), table)
