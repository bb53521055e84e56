"""Time integration of the chemotaxis-consumption system.

Two formulations are supported:

``uv``
    u_t = div(D(u) grad u) - div(u grad(v)/v),  v_t = lap v - u v
``uw``
    u_t = div(D(u) grad u + u grad w),  w_t = lap w - |grad w|^2 + u,
    with v = v0_max * exp(-w).

The u-equation is advanced explicitly in flux form with upwinded transport,
so the discrete mass is conserved to roundoff.  The second component is
advanced with implicit diffusion (and implicit absorption for v); the linear
systems are M-matrices solved by Jacobi iteration.  Started from a guess in
``[0, max v^n]``, every Jacobi iterate stays inside ``(0, max v^n]``, which
makes positivity and the discrete maximum principle hold independently of
the solver tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .diagnostics import Accumulator, DiagOptions, DiagRecord, DiagSeries
from .errors import ParameterError, PositivityError, SolverError, StepSizeError
from .grid import GridSpec, cell_grad_sq
from .model import DiffusionSpec, InitialData, v_to_w, w_to_v

logger = logging.getLogger(__name__)

FORMULATIONS = ("uv", "uw")
V_FLOOR = np.finfo(float).tiny
_VEL_FLOOR = 1e-30


@dataclass(frozen=True)
class SchemeConfig:
    t_end: float
    sample_every: float
    dt_max: float = math.inf
    cfl_safety: float = 0.5
    diffusion_face_average: str = "arithmetic"
    v_solver_tol: float = 1e-10
    v_solver_max_iters: int | None = None
    overflow_factor: float = 1e6

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ParameterError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.diffusion_face_average not in ("arithmetic", "harmonic"):
            raise ParameterError("diffusion_face_average must be 'arithmetic' or 'harmonic'")
        if not self.v_solver_tol > 0:
            raise ParameterError("v_solver_tol must be > 0")
        if self.v_solver_max_iters is not None and self.v_solver_max_iters < 1:
            raise ParameterError("v_solver_max_iters must be >= 1")
        if not self.dt_max > 0:
            raise ParameterError("dt_max must be > 0")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ParameterError("t_end must be > 0")
        if not self.sample_every > 0:
            raise ParameterError("sample_every must be > 0")
        if not self.overflow_factor > 1:
            raise ParameterError("overflow_factor must be > 1")

    def max_iters(self, grid: GridSpec) -> int:
        return self.v_solver_max_iters or 10 * grid.size


@dataclass
class SimState:
    t: float
    u: np.ndarray
    v: np.ndarray
    step_index: int = 0
    w: np.ndarray | None = None

    @classmethod
    def initial(cls, data: InitialData, formulation: str = "uv") -> "SimState":
        if formulation not in FORMULATIONS:
            raise ParameterError(f"formulation must be one of {FORMULATIONS}")
        w = data.w0 if formulation == "uw" else None
        return cls(0.0, np.array(data.u0), np.array(data.v0), 0, w)


# ---------------------------------------------------------------------------
# Face terms and the step-size bound

@dataclass
class _Faces:
    D: list            # face diffusivity, interior faces
    gu: list           # face gradient of u
    vel: list          # transport velocity of u
    d_max: float
    vel_max: float


def _face_diffusivity(Dl, Dh, average):
    if average == "arithmetic":
        return 0.5 * (Dl + Dh)
    s = Dl + Dh
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s > 0, 2.0 * Dl * Dh / np.where(s > 0, s, 1.0), 0.0)


def _faces(grid: GridSpec, u, second, spec: DiffusionSpec, average: str, formulation: str) -> _Faces:
    Du = spec(np.maximum(u, 0.0))
    if np.ndim(Du) == 0:
        Du = np.full(grid.cells, Du)
    D, gu, vel = [], [], []
    d_max = 0.0
    vel_max = 0.0
    for (lo, hi), h in zip(grid.slices, grid.spacing):
        Df = _face_diffusivity(Du[lo], Du[hi], average)
        g = (u[hi] - u[lo]) / h
        gs = (second[hi] - second[lo]) / h
        if formulation == "uv":
            W = gs / (0.5 * (second[lo] + second[hi]))
        else:
            W = -gs
        D.append(Df)
        gu.append(g)
        vel.append(W)
        if Df.size:
            d_max = max(d_max, float(np.max(Df)))
            vel_max = max(vel_max, float(np.max(np.abs(W))))
    return _Faces(D, gu, vel, d_max, vel_max)


def _dt_bound(grid: GridSpec, faces: _Faces, cfg: SchemeConfig) -> float:
    N = grid.dim
    diff = math.inf
    if faces.d_max > 0:
        diff = min(h * h for h in grid.spacing) / (2 * N * faces.d_max)
    adv = min(grid.spacing) / (faces.vel_max + _VEL_FLOOR)
    return min(cfg.cfl_safety * min(diff, adv), cfg.dt_max)


def _second(state: SimState, formulation: str):
    return state.v if formulation == "uv" else state.w


def stable_dt(state: SimState, spec: DiffusionSpec, cfg: SchemeConfig,
              grid: GridSpec, formulation: str = "uv") -> float:
    """Largest admissible explicit step for ``state``.

    ``cfl_safety * min(h^2 / (2 N D_face_max), h / V_max)``, capped by
    ``dt_max``; ``D_face_max`` is the largest face diffusivity used by the
    flux and ``V_max`` the largest chemotactic face velocity.
    """
    if formulation == "uw" and state.w is None:
        raise ParameterError("uw formulation needs state.w")
    faces = _faces(grid, state.u, _second(state, formulation), spec,
                   cfg.diffusion_face_average, formulation)
    return _dt_bound(grid, faces, cfg)


# ---------------------------------------------------------------------------
# Kernels

def _flux_divergence(grid: GridSpec, u: np.ndarray, faces: _Faces) -> np.ndarray:
    out = np.zeros(grid.cells)
    for (lo, hi), h, Df, g, W in zip(grid.slices, grid.spacing, faces.D, faces.gu, faces.vel):
        u_up = np.where(W > 0, u[lo], u[hi])
        Fh = (Df * g - u_up * W) / h
        out[lo] += Fh
        out[hi] -= Fh
    return out


def _neighbor_sum(grid: GridSpec, x: np.ndarray, coef: tuple[float, ...]) -> np.ndarray:
    S = np.zeros(grid.cells)
    for (lo, hi), c in zip(grid.slices, coef):
        S[lo] += c * x[hi]
        S[hi] += c * x[lo]
    return S


def jacobi_solve(grid: GridSpec, b: np.ndarray, absorption, dt: float, x0: np.ndarray,
                 tol: float, max_iters: int) -> tuple[np.ndarray, int]:
    """Solve ``(1 + dt*absorption) x - dt*lap_h x = b`` by Jacobi iteration.

    Stops once the max-norm residual drops below ``tol * max|b|``; the
    residual of iterate k is ``diag * (x_{k+1} - x_k)`` so it costs no extra
    operator application.
    """
    coef = tuple(dt / h**2 for h in grid.spacing)
    diag = 1.0 + dt * grid.neighbor_weight
    if absorption is not None:
        diag = diag + dt * absorption
    target = tol * max(float(np.max(np.abs(b))), V_FLOOR)
    x = x0
    res = math.inf
    for k in range(1, max_iters + 1):
        x_new = (b + _neighbor_sum(grid, x, coef)) / diag
        res = float(np.max(np.abs(diag * (x_new - x))))
        x = x_new
        if res <= target:
            return x, k
    raise SolverError(f"Jacobi solve did not converge in {max_iters} iterations "
                      f"(residual {res:.3e}, target {target:.3e})",
                      iterations=max_iters, residual=res)


def _check_u(u_new: np.ndarray) -> float:
    u_min = float(np.min(u_new))
    u_max = float(np.max(u_new))
    if not (math.isfinite(u_min) and math.isfinite(u_max)):
        raise PositivityError("u became non-finite")
    if u_min < -1e-12 * max(u_max, 0.0):
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(u_new)), u_new.shape))
        raise PositivityError(f"u negative at cell {idx}: {u_min:.3e} (max u {u_max:.3e})",
                              index=idx, value=u_min)
    return u_max


def _advance(grid, state, data, spec, cfg, dt, faces, formulation, guess=None) -> SimState:
    u = state.u
    u_new = u + dt * _flux_divergence(grid, u, faces)
    _check_u(u_new)
    max_iters = cfg.max_iters(grid)
    if formulation == "uv":
        v = state.v
        vmax = float(np.max(v))
        x0 = v / (1.0 + dt * np.maximum(u, 0.0)) if guess is None else np.clip(guess, 0.0, vmax)
        v_new, _ = jacobi_solve(grid, v, np.maximum(u, 0.0), dt, x0, cfg.v_solver_tol, max_iters)
        return SimState(state.t + dt, u_new, v_new, state.step_index + 1)
    w = state.w
    rhs = w - dt * cell_grad_sq(grid, w) + dt * u
    x0 = rhs if guess is None else guess
    w_new, _ = jacobi_solve(grid, rhs, None, dt, x0, cfg.v_solver_tol, max_iters)
    w_min = float(np.min(w_new))
    if w_min < -1e-10:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmin(w_new)), w_new.shape))
        raise PositivityError(f"w negative at cell {idx}: {w_min:.3e}", index=idx, value=w_min)
    if w_min < 0:
        w_new = np.maximum(w_new, 0.0)
    v_new = w_to_v(w_new, data.v0_max)
    return SimState(state.t + dt, u_new, v_new, state.step_index + 1, w_new)


def _step(state, data, spec, cfg, dt, formulation, guess=None) -> SimState:
    grid = data.grid
    if not dt > 0:
        raise StepSizeError(f"dt must be > 0, got {dt}")
    faces = _faces(grid, state.u, _second(state, formulation), spec,
                   cfg.diffusion_face_average, formulation)
    bound = _dt_bound(grid, faces, cfg)
    if dt > bound * (1.0 + 1e-12):
        raise StepSizeError(f"dt={dt:.6g} exceeds the stability bound {bound:.6g}")
    return _advance(grid, state, data, spec, cfg, dt, faces, formulation, guess)


def step_uv(state: SimState, data: InitialData, spec: DiffusionSpec, cfg: SchemeConfig,
            dt: float, guess: np.ndarray | None = None) -> SimState:
    """Advance (u, v) by one step of size ``dt``."""
    return _step(state, data, spec, cfg, dt, "uv", guess)


def step_uw(state: SimState, data: InitialData, spec: DiffusionSpec, cfg: SchemeConfig,
            dt: float, guess: np.ndarray | None = None) -> SimState:
    """Advance (u, w) by one step of size ``dt``; ``state.w`` must be set."""
    if state.w is None:
        raise ParameterError("step_uw needs a state carrying w")
    return _step(state, data, spec, cfg, dt, "uw", guess)


# ---------------------------------------------------------------------------
# Driver

COMPLETED = "completed"
BLOWUP = "blowup_suspected"
ABORTED = "aborted"


@dataclass
class RunResult:
    status: str
    reason: str
    records: list[DiagRecord]
    final: SimState
    steps: int
    formulation: str
    samples: list[SimState] = field(default_factory=list)

    @property
    def series(self) -> DiagSeries:
        return DiagSeries.from_records(self.records)

    @property
    def ok(self) -> bool:
        return self.status == COMPLETED


def sample_times(cfg: SchemeConfig) -> list[float]:
    n = int(math.floor(cfg.t_end / cfg.sample_every + 1e-9))
    times = [k * cfg.sample_every for k in range(1, n + 1)]
    times = [t for t in times if t < cfg.t_end * (1 - 1e-12)]
    return times + [cfg.t_end]


def run(data: InitialData, spec: DiffusionSpec, cfg: SchemeConfig, formulation: str = "uv",
        diag: DiagOptions | None = None, keep_samples: bool = False,
        on_sample: Callable[[SimState], None] | None = None) -> RunResult:
    """Integrate from t = 0 to ``cfg.t_end``, emitting a record at every sample time.

    The step is the stability bound, shortened to land exactly on sample
    times.  Failures inside a step end the run with status ``aborted``; a
    sup-norm exceeding ``overflow_factor`` times its initial value ends it with
    status ``blowup_suspected``.
    """
    if formulation not in FORMULATIONS:
        raise ParameterError(f"formulation must be one of {FORMULATIONS}")
    grid = data.grid
    state = SimState.initial(data, formulation)
    acc = Accumulator(data, spec, diag)
    records = [acc.record(state)]
    samples = [state] if keep_samples else []
    if on_sample:
        on_sample(state)
    sup0 = float(np.max(data.u0))
    cap = cfg.overflow_factor * sup0 if sup0 > 0 else math.inf
    prev_second = None
    prev_dt = None
    status, reason = COMPLETED, ""

    for target in sample_times(cfg):
        while state.t < target:
            second = _second(state, formulation)
            try:
                faces = _faces(grid, state.u, second, spec, cfg.diffusion_face_average, formulation)
                bound = _dt_bound(grid, faces, cfg)
                remaining = target - state.t
                if remaining <= bound * (1.0 + 1e-9):  # absorb roundoff in sample times
                    dt = remaining
                elif remaining < 2.0 * bound:
                    dt = 0.5 * remaining
                else:
                    dt = bound
                guess = None
                if prev_second is not None:
                    guess = second + (second - prev_second) * (dt / prev_dt)
                new = _advance(grid, state, data, spec, cfg, dt, faces, formulation, guess)
            except (PositivityError, SolverError, StepSizeError) as exc:
                status, reason = ABORTED, f"{type(exc).__name__}: {exc}"
                break
            if dt == remaining:
                new.t = target
            prev_second, prev_dt = second, dt
            state = new
            if float(np.min(state.v)) < V_FLOOR:
                status, reason = ABORTED, f"v underflow at t={state.t:.6g}"
                break
            sup = float(np.max(state.u))
            if sup > cap:
                status, reason = BLOWUP, f"sup u={sup:.6g} exceeded cap {cap:.6g} at t={state.t:.6g}"
                break
            acc.advance(state)
        if status == ABORTED:
            break
        records.append(acc.record(state))
        if keep_samples:
            samples.append(state)
        if on_sample:
            on_sample(state)
        if status != COMPLETED:
            break

    if status == ABORTED:
        logger.warning("run aborted at t=%.6g: %s", state.t, reason)
    return RunResult(status, reason, records, state, state.step_index, formulation, samples)
