"""Self-stabilizing Byzantine-tolerant repeated reliable broadcast, with a deterministic simulator."""

from .params import Params, checked, validate
from .scenario import Scenario, parse_scenario, run_seed

__all__ = ["Params", "checked", "validate", "Scenario", "parse_scenario", "run_seed"]
__version__ = "0.1.0"
