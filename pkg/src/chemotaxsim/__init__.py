"""Finite-volume simulator for chemotaxis with singular sensitivity and nutrient consumption.

    u_t = div(D(u) grad u) - div((u / v) grad v),    v_t = lap v - u v

on boxes with no-flux walls, in (u, v) or logarithmic (u, w) variables.
"""

__version__ = "0.1.0"

from .errors import (ChemotaxError, ConfigError, ContractViolation, DataIntegrityError,  # noqa: E402
                     ParameterError, PositivityError, SolverError, StepSizeError)
from .grid import (GridSpec, cell_grad_sq, div_flux, face_gradient, grad_l2_sq,  # noqa: E402
                   integrate, laplacian, lp_norm, read_field, write_field)
from .model import (DiffusionSpec, InitialData, eval_D, eval_Dbar, make_initial, power,  # noqa: E402
                    power_offset, shift_regularize, v_to_w, w_to_v)
from .diagnostics import (AuditReport, DiagOptions, DiagSeries, audit_all, audit_energy_w,  # noqa: E402
                          audit_growth_envelope, audit_mass, audit_pointwise_bounds, compute_record)
from .stepper import RunResult, SchemeConfig, SimState, run, stable_dt, step_uv, step_uw  # noqa: E402
from .ladder import LadderConfig, LadderReport, TestFunction, run_ladder, weak_residual_u, weak_residual_v  # noqa: E402
from .sweep import SweepBase, threshold_sweep  # noqa: E402
