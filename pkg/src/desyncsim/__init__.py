"""Simulator for idle waves and desynchronization in bulk-synchronous
message-passing programs whose processes share memory bandwidth.

The package has three layers:

* closed-form performance model (:mod:`desyncsim.model`, machine presets in
  :mod:`desyncsim.machines`),
* a deterministic event-driven simulator (:mod:`desyncsim.engine`) configured
  through sectioned config files (:mod:`desyncsim.config`),
* trace analysis, serialization and SVG rendering (:mod:`desyncsim.analysis`,
  :mod:`desyncsim.traceio`, :mod:`desyncsim.render`).
"""

from .analysis import (
    activity_stats,
    build_report,
    desync_metric,
    developed_window,
    edge_velocity,
    fit_slopes,
    iteration_breakdown,
    wavefront,
)
from .config import SimConfig, config_from_mapping, config_from_text, load_config
from .engine import DeadlockError, SimulationError, run
from .fileformat import ConfigError, ParseError
from .machines import list_presets, load_preset
from .model import (
    BandwidthCurve,
    CommPattern,
    ContentionDomain,
    MachinePreset,
    ProcessSpec,
    WorkloadSpec,
    bandwidth_at,
    chebfd_code_balance,
    exec_time,
    predicted_velocity,
    saturation_point,
    velocity_from_times,
)
from .perturb import Injection, NoiseModel, noise_factors, perturb_duration
from .render import RenderOptions, render_timeline
from .trace import Trace
from .traceio import export_trace, import_trace, trace_from_text, trace_to_text

__version__ = "0.1.0"

__all__ = [
    "BandwidthCurve",
    "CommPattern",
    "ConfigError",
    "ContentionDomain",
    "DeadlockError",
    "Injection",
    "MachinePreset",
    "NoiseModel",
    "ParseError",
    "ProcessSpec",
    "RenderOptions",
    "SimConfig",
    "SimulationError",
    "Trace",
    "WorkloadSpec",
    "activity_stats",
    "bandwidth_at",
    "build_report",
    "chebfd_code_balance",
    "config_from_mapping",
    "config_from_text",
    "desync_metric",
    "developed_window",
    "edge_velocity",
    "exec_time",
    "export_trace",
    "fit_slopes",
    "import_trace",
    "iteration_breakdown",
    "list_presets",
    "load_config",
    "load_preset",
    "noise_factors",
    "perturb_duration",
    "predicted_velocity",
    "render_timeline",
    "run",
    "saturation_point",
    "trace_from_text",
    "trace_to_text",
    "velocity_from_times",
    "wavefront",
]
