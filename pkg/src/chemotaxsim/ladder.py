"""Vanishing-shift limit of degenerate diffusion and weak-form residuals.

Each rung of the ladder solves the problem with ``D_eps(s) = D(s + eps)``
on a shared grid and shared initial data.  Successive rungs are compared in
space-time L1 (for u) and in the sampled sup norm (for v); the finest rung is
checked against the space-time weak formulation with analytic test
functions.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .grid import GridSpec
from .model import DiffusionSpec, InitialData, shift_regularize
from .stepper import COMPLETED, RunResult, SchemeConfig, SimState, run


# ---------------------------------------------------------------------------
# Test functions

def bump(t, t_cut):
    """C-infinity time profile with psi(0) = 1, vanishing for t >= t_cut."""
    t = np.asarray(t, dtype=float)
    s = t / t_cut
    inside = (s >= 0) & (s < 1)
    ss = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - ss * ss)), 0.0)


def bump_dt(t, t_cut):
    t = np.asarray(t, dtype=float)
    s = t / t_cut
    inside = (s >= 0) & (s < 1)
    ss = np.where(inside, s, 0.0)
    q = 1.0 - ss * ss
    return np.where(inside, bump(t, t_cut) * (-2.0 * ss / (t_cut * q * q)), 0.0)


@dataclass(frozen=True)
class TestFunction:
    """phi(x, t) = scale * psi(t) * prod_a P_a(x_a).

    ``P_a(x) = sum_k c_k cos(k pi x / L_a)`` with ``coefficients[a] = (c_0,
    c_1, ...)``; each profile has zero normal derivative at the walls.
    ``coefficients=None`` means the spatially constant profile.
    """

    __test__ = False  # not a pytest class

    t_cut: float
    coefficients: tuple[tuple[float, ...], ...] | None = None
    scale: float = 1.0

    def __post_init__(self):
        if not self.t_cut > 0:
            raise ParameterError("test function t_cut must be > 0")

    def _coeffs(self, grid: GridSpec):
        if self.coefficients is None:
            return [(1.0,)] * grid.dim
        if len(self.coefficients) != grid.dim:
            raise ParameterError("test function needs one coefficient list per axis")
        return self.coefficients

    @staticmethod
    def _profile(x, coeffs, L, derivative=False):
        out = np.zeros_like(x, dtype=float)
        for k, c in enumerate(coeffs):
            if derivative:
                out = out - c * (k * math.pi / L) * np.sin(k * math.pi * x / L)
            else:
                out = out + c * np.cos(k * math.pi * x / L)
        return out

    def spatial(self, grid: GridSpec) -> np.ndarray:
        out = np.ones(grid.cells)
        for x, c, L in zip(grid.mesh(), self._coeffs(grid), grid.lengths):
            out = out * self._profile(x, c, L)
        return self.scale * out

    def spatial_grad(self, grid: GridSpec) -> list[np.ndarray]:
        """Exact spatial gradient on the interior faces of each axis."""
        coeffs = self._coeffs(grid)
        grads = []
        for a in range(grid.dim):
            mesh = grid.face_mesh(a)
            out = np.ones(())
            for b, (x, c, L) in enumerate(zip(mesh, coeffs, grid.lengths)):
                out = out * self._profile(x, c, L, derivative=(a == b))
            out = np.broadcast_to(out, tuple(n + (1 if b == a else 0) for b, n in enumerate(grid.cells)))
            sl = [slice(None)] * grid.dim
            sl[a] = slice(1, -1)
            grads.append(self.scale * np.ascontiguousarray(out[tuple(sl)]))
        return grads

    def psi(self, t):
        return bump(t, self.t_cut)

    def psi_t(self, t):
        return bump_dt(t, self.t_cut)

    def __call__(self, grid: GridSpec, t: float) -> np.ndarray:
        return float(self.psi(t)) * self.spatial(grid)

    def phi_t(self, grid: GridSpec, t: float) -> np.ndarray:
        return float(self.psi_t(t)) * self.spatial(grid)

    def grad(self, grid: GridSpec, t: float) -> list[np.ndarray]:
        p = float(self.psi(t))
        return [p * g for g in self.spatial_grad(grid)]

    def scaled(self, c: float) -> "TestFunction":
        return TestFunction(self.t_cut, self.coefficients, self.scale * c)


def default_test_functions(grid: GridSpec, t_cut: float) -> tuple[TestFunction, ...]:
    return (
        TestFunction(t_cut),
        TestFunction(t_cut, tuple((0.5, 0.0, 0.5) for _ in range(grid.dim))),
    )


# ---------------------------------------------------------------------------
# Weak residuals

def trapezoid_weights(t: Sequence[float]) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    w = np.zeros_like(t)
    if len(t) > 1:
        d = np.diff(t)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
    return w


def _check_window(samples: Sequence[SimState], phi: TestFunction) -> np.ndarray:
    if len(samples) < 2:
        raise ParameterError("weak residual needs at least two samples")
    t = np.array([s.t for s in samples])
    if t[0] != 0.0:
        raise ParameterError("trajectory must start at t = 0")
    if phi.t_cut > t[-1] * (1 + 1e-12):
        raise ParameterError(f"test function support (t_cut={phi.t_cut}) exceeds the trajectory window [0, {t[-1]}]")
    return t


def _face_pairing(grid: GridSpec, f: np.ndarray, dphi: list[np.ndarray], coef=None) -> float:
    """sum over interior faces of (face gradient of f) . grad phi, times the cell volume."""
    total = 0.0
    for (lo, hi), h, gphi, c in zip(grid.slices, grid.spacing, dphi, coef or [None] * grid.dim):
        g = (f[hi] - f[lo]) / h
        if c is not None:
            g = g * c
        total += float(np.sum(g * gphi))
    return total * grid.cell_volume


def weak_residual_u(samples: Sequence[SimState], data: InitialData, spec: DiffusionSpec,
                    phi: TestFunction) -> float:
    """Residual of the space-time weak form of the u-equation.

    | -int int u phi_t - int u0 phi(0) + int int grad Dbar(u) . grad phi
      - int int (u/v) grad v . grad phi |
    with trapezoid weights over the sample times and face gradients of the
    discrete fields paired with the exact gradient of phi.
    """
    grid = data.grid
    t = _check_window(samples, phi)
    wts = trapezoid_weights(t)
    V = grid.cell_volume
    P = phi.spatial(grid)
    dP = phi.spatial_grad(grid)
    psi = phi.psi(t)
    psi_t = phi.psi_t(t)
    total = -float(np.sum(data.u0 * P)) * V * float(psi[0])
    for s, wt, p, pt in zip(samples, wts, psi, psi_t):
        if p == 0.0 and pt == 0.0:
            continue
        u = np.maximum(s.u, 0.0)
        term = -float(np.sum(s.u * P)) * V * pt
        if p != 0.0:
            term += p * _face_pairing(grid, spec.antiderivative(u), dP)
            v = s.v
            ratio = [0.5 * (u[lo] + u[hi]) / (0.5 * (v[lo] + v[hi])) for lo, hi in grid.slices]
            term -= p * _face_pairing(grid, v, dP, ratio)
        total += wt * term
    return abs(total)


def weak_residual_v(samples: Sequence[SimState], data: InitialData, phi: TestFunction) -> float:
    """Residual of the space-time weak form of the v-equation.

    | -int int v phi_t - int v0 phi(0) + int int grad v . grad phi + int int u v phi |
    """
    grid = data.grid
    t = _check_window(samples, phi)
    wts = trapezoid_weights(t)
    V = grid.cell_volume
    P = phi.spatial(grid)
    dP = phi.spatial_grad(grid)
    psi = phi.psi(t)
    psi_t = phi.psi_t(t)
    total = -float(np.sum(data.v0 * P)) * V * float(psi[0])
    for s, wt, p, pt in zip(samples, wts, psi, psi_t):
        if p == 0.0 and pt == 0.0:
            continue
        term = -float(np.sum(s.v * P)) * V * pt
        if p != 0.0:
            term += p * _face_pairing(grid, s.v, dP)
            term += p * float(np.sum(s.u * s.v * P)) * V
        total += wt * term
    return abs(total)


# ---------------------------------------------------------------------------
# Ladder

@dataclass(frozen=True)
class LadderConfig:
    base: DiffusionSpec
    data: InitialData
    scheme: SchemeConfig
    eps: tuple[float, ...] = tuple(0.1 * 0.5**k for k in range(11))
    test_functions: tuple[TestFunction, ...] | None = None
    compare_unregularized: bool = False
    formulation: str = "uv"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        object.__setattr__(self, "eps", eps)
        if not eps:
            raise ParameterError("ladder needs at least one eps value")
        if any(not e > 0 for e in eps):
            raise ParameterError("ladder eps values must all be > 0")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ParameterError("ladder eps values must be strictly decreasing")
        if self.base.shift:
            raise ParameterError("ladder base spec must be unshifted")

    @property
    def tests(self) -> tuple[TestFunction, ...]:
        if self.test_functions is not None:
            return self.test_functions
        return default_test_functions(self.data.grid, 0.75 * self.scheme.t_end)


@dataclass
class Rung:
    eps: float
    status: str
    reason: str
    steps: int
    max_sup_u: float
    d_to_next: float | None = None
    e_to_next: float | None = None
    residual_u: list[float] = field(default_factory=list)
    residual_v: list[float] = field(default_factory=list)


@dataclass
class LadderReport:
    rungs: list[Rung]
    cauchy_consistent: bool
    direct_l1: float | None = None
    results: list[RunResult] = field(default_factory=list, repr=False)

    @property
    def d(self) -> list[float]:
        return [r.d_to_next for r in self.rungs if r.d_to_next is not None]

    @property
    def e(self) -> list[float]:
        return [r.e_to_next for r in self.rungs if r.e_to_next is not None]

    @property
    def finest(self) -> Rung | None:
        done = [r for r in self.rungs if r.status == COMPLETED]
        return done[-1] if done else None

    def to_csv_text(self) -> str:
        ntest = max((len(r.residual_u) for r in self.rungs), default=0)
        head = ["eps", "status", "d_to_next", "e_to_next"]
        head += [f"R_u_phi{i}" for i in range(ntest)] + [f"R_v_phi{i}" for i in range(ntest)]
        lines = [",".join(head)]

        def f(x):
            return "" if x is None else format(float(x), ".17g")

        for r in self.rungs:
            ru = r.residual_u + [None] * (ntest - len(r.residual_u))
            rv = r.residual_v + [None] * (ntest - len(r.residual_v))
            row = [f(r.eps), r.status, f(r.d_to_next), f(r.e_to_next)] + [f(x) for x in ru + rv]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        verdict = "PASS" if self.cauchy_consistent else "FAIL"
        lines = [f"{verdict} cauchy_consistency d={['%.6g' % x for x in self.d]} e={['%.6g' % x for x in self.e]}"]
        fin = self.finest
        if fin is not None:
            lines.append(f"finest eps={fin.eps:.6g} R_u={['%.3e' % x for x in fin.residual_u]} "
                         f"R_v={['%.3e' % x for x in fin.residual_v]}")
        if self.direct_l1 is not None:
            lines.append(f"finest-vs-unregularized L1 = {self.direct_l1:.6g}")
        failed = [r for r in self.rungs if r.status != COMPLETED]
        for r in failed:
            lines.append(f"FAIL rung eps={r.eps:.6g} status={r.status} reason={r.reason}")
        return "\n".join(lines) + "\n"


def spacetime_l1(grid: GridSpec, a: Sequence[SimState], b: Sequence[SimState]) -> float:
    t = np.array([s.t for s in a])
    if len(a) != len(b) or not np.array_equal(t, [s.t for s in b]):
        raise ParameterError("trajectories must share sample times")
    wts = trapezoid_weights(t)
    V = grid.cell_volume
    return float(sum(w * np.sum(np.abs(x.u - y.u)) * V for w, x, y in zip(wts, a, b)))


def sup_difference_v(a: Sequence[SimState], b: Sequence[SimState]) -> float:
    return float(max(np.max(np.abs(x.v - y.v)) for x, y in zip(a, b)))


def _zero_like(s: SimState) -> SimState:
    return SimState(s.t, np.zeros_like(s.u), np.zeros_like(s.v))


def _run_rung(args) -> RunResult:
    data, spec, scheme, formulation = args
    return run(data, spec, scheme, formulation, keep_samples=True)


def _nonincreasing(seq: Sequence[float], floor: float, tol: float = 0.10) -> bool:
    """Nonincreasing within ``tol``; differences below ``floor`` count as roundoff zeros."""
    return all(b <= (1.0 + tol) * a or b <= floor for a, b in zip(seq, seq[1:]))


def run_ladder(cfg: LadderConfig, jobs: int = 1) -> LadderReport:
    grid = cfg.data.grid
    specs = [shift_regularize(cfg.base, e) for e in cfg.eps]
    tasks = [(cfg.data, s, cfg.scheme, cfg.formulation) for s in specs]
    if cfg.compare_unregularized:
        tasks.append((cfg.data, cfg.base, cfg.scheme, cfg.formulation))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_rung, tasks))
    else:
        results = [_run_rung(t) for t in tasks]
    direct = results.pop() if cfg.compare_unregularized else None

    rungs = []
    for e, res in zip(cfg.eps, results):
        rungs.append(Rung(e, res.status, res.reason, res.steps,
                          max(r.sup_u for r in res.records)))
    for k in range(len(rungs) - 1):
        a, b = results[k], results[k + 1]
        if a.ok and b.ok:
            rungs[k].d_to_next = spacetime_l1(grid, a.samples, b.samples)
            rungs[k].e_to_next = sup_difference_v(a.samples, b.samples)
    for rung, res, spec in zip(rungs, results, specs):
        if res.ok:
            rung.residual_u = [weak_residual_u(res.samples, cfg.data, spec, phi) for phi in cfg.tests]
            rung.residual_v = [weak_residual_v(res.samples, cfg.data, phi) for phi in cfg.tests]

    report = LadderReport(rungs, False, results=results)
    ok = [res for res in results if res.ok]
    d_floor = 1e-12 * max((spacetime_l1(grid, res.samples, [_zero_like(s) for s in res.samples])
                           for res in ok), default=0.0)
    e_floor = 1e-12 * cfg.data.v0_max
    report.cauchy_consistent = (all(r.status == COMPLETED for r in rungs)
                                and _nonincreasing(report.d, d_floor)
                                and _nonincreasing(report.e, e_floor))
    fin = report.finest
    if direct is not None and direct.ok and fin is not None:
        idx = rungs.index(fin)
        report.direct_l1 = spacetime_l1(grid, results[idx].samples, direct.samples)
    return report
