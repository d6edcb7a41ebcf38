from .config import SolveReport, SolverConfig
from .indicator import default_indicator_cap, project_monotone_box, solve_indicator, warm_start
from .nodal import solve_nodal
from .residuals import residual_norms
from .scan import ScanResult, blowup_scan

__all__ = [
    "ScanResult",
    "blowup_scan",
    "SolveReport",
    "SolverConfig",
    "default_indicator_cap",
    "project_monotone_box",
    "residual_norms",
    "solve_indicator",
    "solve_nodal",
    "warm_start",
]
