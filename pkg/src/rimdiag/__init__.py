"""Product-perspective fault diagnosis for rotary indexing machines."""

from .constraints import ExpectedValue, ExpectedValueSet, TraceEvent, check_sat
from .diagnosis import diagnose_multistep, diagnose_stepwise, render_report
from .model import ProcessDescription, load_process_description, reference_config_path, validate
from .sim import FaultKind, FaultSpec, load_machine_config, simulate_machine, simulate_product_run

__version__ = "0.1.0"

__all__ = [
    "ExpectedValue",
    "ExpectedValueSet",
    "FaultKind",
    "FaultSpec",
    "ProcessDescription",
    "TraceEvent",
    "check_sat",
    "diagnose_multistep",
    "diagnose_stepwise",
    "load_machine_config",
    "load_process_description",
    "reference_config_path",
    "render_report",
    "simulate_machine",
    "simulate_product_run",
    "validate",
]
