"""Time series of a-priori functionals and audits of the inequalities they obey.

A :class:`DiagRecord` holds one sample of every monitored functional.  The
cumulative (space-time) functionals are accumulated by :class:`Accumulator`
with the trapezoid rule over whatever cadence ``advance`` is called at; the
stepper calls it after every step so that cumulative values do not depend on
the sampling interval.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataIntegrityError, ParameterError
from .grid import GridSpec, atomic_write_text
from .model import DiffusionSpec, InitialData

BASE_COLUMNS = (
    "t", "mass_u", "sup_u", "min_v", "max_v", "sup_w", "int_w", "cum_grad_w_sq",
    "int_u_pow_m1", "du_grad_u_l2_cum", "grad_um1_l2_cum", "mixed_cum",
    "grad_v_sup", "grad_logv_sup",
)
CUMULATIVE_COLUMNS = ("cum_grad_w_sq", "du_grad_u_l2_cum", "grad_um1_l2_cum", "mixed_cum")


def _pkey(p: float) -> str:
    return format(float(p), "g")


@dataclass(frozen=True)
class DiagOptions:
    """Which optional L^p functionals to monitor."""

    p_list: tuple[float, ...] = (2.0,)
    pr_list: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        for p in self.p_list:
            if not p >= 1:
                raise ParameterError(f"diagnostic p must be >= 1, got {p}")
        for p, r in self.pr_list:
            if not (p >= 1 and r > 0):
                raise ParameterError(f"diagnostic (p, r) needs p >= 1 and r > 0, got ({p}, {r})")

    def columns(self) -> tuple[str, ...]:
        extra = [f"lp_{_pkey(p)}" for p in self.p_list]
        extra += [f"cum_{_pkey(p)}_{_pkey(r)}" for p, r in self.pr_list]
        return BASE_COLUMNS + tuple(extra)


@dataclass
class DiagRecord:
    t: float
    mass_u: float
    sup_u: float
    min_v: float
    max_v: float
    sup_w: float
    int_w: float
    cum_grad_w_sq: float
    int_u_pow_m1: float
    du_grad_u_l2_cum: float
    grad_um1_l2_cum: float
    mixed_cum: float
    grad_v_sup: float
    grad_logv_sup: float
    lp_norms: dict[float, float] = field(default_factory=dict)
    cum_lp_pow_r: dict[tuple[float, float], float] = field(default_factory=dict)

    def as_row(self) -> dict[str, float]:
        row = {name: getattr(self, name) for name in BASE_COLUMNS}
        for p, val in self.lp_norms.items():
            row[f"lp_{_pkey(p)}"] = val
        for (p, r), val in self.cum_lp_pow_r.items():
            row[f"cum_{_pkey(p)}_{_pkey(r)}"] = val
        return row


# ---------------------------------------------------------------------------
# Instantaneous functionals

def _face_terms(grid: GridSpec, f: np.ndarray):
    for (lo, hi), h in zip(grid.slices, grid.spacing):
        yield lo, hi, (f[hi] - f[lo]) / h


def _integrands(grid: GridSpec, u: np.ndarray, w: np.ndarray, spec: DiffusionSpec,
                opts: DiagOptions) -> dict:
    """Spatial integrals whose time integrals are accumulated."""
    V = grid.cell_volume
    m = spec.m
    up = np.maximum(u, 0.0)
    grad_w = 0.0
    du = 0.0
    mixed = 0.0
    for lo, hi, g in _face_terms(grid, w):
        grad_w += float(np.sum(g * g))
    um1 = up ** (m - 1.0) if m != 2.0 else up
    grad_um1 = 0.0
    if m != 1.0:
        for lo, hi, g in _face_terms(grid, um1):
            grad_um1 += float(np.sum(g * g))
    for lo, hi, g in _face_terms(grid, up):
        uf = 0.5 * (up[lo] + up[hi])
        Df = spec(uf)
        g2 = g * g
        du += float(np.sum(Df * Df * g2))
        if m >= 3.0:
            mixed += float(np.sum(Df * uf ** (m - 3.0) * g2))
        else:
            # D u^(m-3) |g|^2 written as D u^(m-1) (g/u)^2, bounded since |g| <= 2u/h;
            # faces with u = 0 carry no flux and contribute 0.
            pos = uf > 0
            safe = np.where(pos, uf, 1.0)
            q = np.where(pos, g / safe, 0.0)
            mixed += float(np.sum(Df * safe ** (m - 1.0) * q * q))
    out = {
        "cum_grad_w_sq": grad_w * V,
        "du_grad_u_l2_cum": du * V,
        "grad_um1_l2_cum": grad_um1 * V,
        "mixed_cum": mixed * V,
    }
    for p, r in opts.pr_list:
        out[("lp", p, r)] = _lp(grid, up, p) ** r
    for k, val in out.items():
        if not math.isfinite(val):
            raise DataIntegrityError(f"non-finite integrand for {k}")
    return out


def _lp(grid: GridSpec, a: np.ndarray, p: float) -> float:
    if p == 1:
        return float(np.sum(a)) * grid.cell_volume
    if p == 2:
        return math.sqrt(float(np.sum(a * a)) * grid.cell_volume)
    return (float(np.sum(a**p)) * grid.cell_volume) ** (1.0 / p)


class Accumulator:
    """Trapezoid-in-time accumulation of the space-time functionals."""

    def __init__(self, data: InitialData, spec: DiffusionSpec, opts: DiagOptions | None = None):
        self.data = data
        self.grid = data.grid
        self.spec = spec
        self.opts = opts or DiagOptions()
        self.t: float | None = None
        self._last: dict | None = None
        self.totals: dict = {}

    def _w(self, state) -> np.ndarray:
        w = getattr(state, "w", None)
        if w is None:
            from .model import v_to_w
            w = v_to_w(state.v, self.data.v0_max)
        return w

    def advance(self, state) -> None:
        """Add the trapezoid contribution from the previous call up to ``state.t``."""
        cur = _integrands(self.grid, state.u, self._w(state), self.spec, self.opts)
        if self._last is None:
            self.totals = {k: 0.0 for k in cur}
        else:
            dt = state.t - self.t
            if dt < 0:
                raise ParameterError("accumulator times must be nondecreasing")
            for k, val in cur.items():
                self.totals[k] += 0.5 * dt * (self._last[k] + val)
        self._last = cur
        self.t = state.t

    def record(self, state) -> DiagRecord:
        if self.t is None or state.t != self.t:
            self.advance(state)
        grid = self.grid
        u, v = state.u, state.v
        w = self._w(state)
        V = grid.cell_volume
        up = np.maximum(u, 0.0)
        m = self.spec.m
        gv_sup = 0.0
        glogv_sup = 0.0
        for lo, hi, g in _face_terms(grid, v):
            if g.size:
                gv_sup = max(gv_sup, float(np.max(np.abs(g))))
                glogv_sup = max(glogv_sup, float(np.max(np.abs(g) / (0.5 * (v[lo] + v[hi])))))
        rec = DiagRecord(
            t=float(state.t),
            mass_u=float(np.sum(u)) * V,
            sup_u=float(np.max(np.abs(u))),
            min_v=float(np.min(v)),
            max_v=float(np.max(v)),
            sup_w=float(np.max(np.abs(w))),
            int_w=float(np.sum(w)) * V,
            cum_grad_w_sq=self.totals["cum_grad_w_sq"],
            int_u_pow_m1=float(np.sum(up ** (m - 1.0))) * V,
            du_grad_u_l2_cum=self.totals["du_grad_u_l2_cum"],
            grad_um1_l2_cum=self.totals["grad_um1_l2_cum"],
            mixed_cum=self.totals["mixed_cum"],
            grad_v_sup=gv_sup,
            grad_logv_sup=glogv_sup,
            lp_norms={p: _lp(grid, up, p) for p in self.opts.p_list},
            cum_lp_pow_r={(p, r): self.totals[("lp", p, r)] for p, r in self.opts.pr_list},
        )
        for k, val in rec.as_row().items():
            if not math.isfinite(val):
                raise DataIntegrityError(f"non-finite diagnostic {k} at t={state.t}")
        return rec


def compute_record(state, data: InitialData, spec: DiffusionSpec,
                   accumulator: Accumulator | None = None,
                   opts: DiagOptions | None = None) -> DiagRecord:
    """One diagnostics row for ``state``.

    ``accumulator`` carries the cumulative integrals from the previous
    sample; pass ``None`` at t = 0 (all cumulative entries start at zero).
    """
    acc = accumulator or Accumulator(data, spec, opts)
    return acc.record(state)


# ---------------------------------------------------------------------------
# Series and CSV

class DiagSeries:
    """Column-oriented view of a diagnostics time series."""

    def __init__(self, columns: dict[str, np.ndarray]):
        if "t" not in columns:
            raise ParameterError("a diagnostics series needs a 't' column")
        self.columns = {k: np.asarray(v, dtype=float) for k, v in columns.items()}

    @classmethod
    def from_records(cls, records: Sequence[DiagRecord]) -> "DiagSeries":
        rows = [r.as_row() for r in records]
        names = list(rows[0]) if rows else list(BASE_COLUMNS)
        return cls({k: np.array([row[k] for row in rows]) for k in names})

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise ParameterError(f"series has no column {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def __len__(self) -> int:
        return len(self.columns["t"])

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def with_column(self, name: str, values) -> "DiagSeries":
        cols = dict(self.columns)
        cols[name] = np.asarray(values, dtype=float)
        return DiagSeries(cols)

    def to_csv_text(self) -> str:
        names = list(self.columns)
        buf = io.StringIO()
        buf.write(",".join(names) + "\n")
        for i in range(len(self)):
            buf.write(",".join(format(float(self.columns[k][i]), ".17g") for k in names) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv_text())

    @classmethod
    def read_csv(cls, path) -> "DiagSeries":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise DataIntegrityError(f"{path}: empty diagnostics file")
            rows = []
            for no, row in enumerate(reader, 2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataIntegrityError(f"{path}:{no}: expected {len(header)} fields, got {len(row)}")
                try:
                    rows.append([float(x) for x in row])
                except ValueError:
                    raise DataIntegrityError(f"{path}:{no}: non-numeric field") from None
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        return cls({name: data[:, i] for i, name in enumerate(header)})


# ---------------------------------------------------------------------------
# Audits

@dataclass
class AuditEntry:
    name: str
    passed: bool
    max_ratio: float
    lhs: np.ndarray
    rhs: np.ndarray
    t: np.ndarray
    detail: str = ""

    def to_text(self) -> str:
        head = f"{'PASS' if self.passed else 'FAIL'} {self.name} max_ratio={self.max_ratio:.6g}"
        lines = [head]
        if self.detail:
            lines += [f"  {line}" for line in self.detail.splitlines()]
        return "\n".join(lines)


@dataclass
class AuditReport:
    entries: list[AuditEntry] = field(default_factory=list)

    def add(self, entry: AuditEntry) -> AuditEntry:
        self.entries.append(entry)
        return entry

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_text(self) -> str:
        blocks = [e.to_text() for e in self.entries]
        summary = f"SUMMARY {'PASS' if self.passed else 'FAIL'} {sum(e.passed for e in self.entries)}/{len(self.entries)} checks passed"
        return "\n\n".join(blocks + [summary]) + "\n"

    def __getitem__(self, name: str) -> AuditEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


def _require_samples(series: DiagSeries, n: int, what: str) -> None:
    if len(series) < n:
        raise ParameterError(f"{what} needs at least {n} samples, got {len(series)}")


def audit_mass(series: DiagSeries, rel_tol: float = 1e-10, abs_tol: float = 1e-14) -> AuditEntry:
    """Conservation of the total amount of u."""
    _require_samples(series, 2, "audit_mass")
    mass = series["mass_u"]
    dev = np.abs(mass - mass[0])
    if mass[0] > 0:
        allowed = rel_tol * mass[0]
        branch = f"relative tol {rel_tol:g}"
    else:
        allowed = abs_tol
        branch = f"absolute tol {abs_tol:g}"
    ratio = dev / allowed
    worst = int(np.argmax(ratio))
    passed = bool(np.all(dev <= allowed))
    detail = f"mass0={mass[0]:.17g} max_dev={dev[worst]:.3e} at t={series.t[worst]:.17g} ({branch})"
    return AuditEntry("mass_conservation", passed, float(ratio[worst]), dev,
                      np.full_like(dev, allowed), series.t, detail)


def audit_energy_w(series: DiagSeries, data: InitialData | None = None,
                   slack: float = 0.05) -> AuditEntry:
    """Space-time gradient bound: int_0^t int |grad w|^2 <= int w0 + t int u0."""
    _require_samples(series, 1, "audit_energy_w")
    if data is not None:
        from .grid import integrate
        int_w0 = integrate(data.grid, data.w0)
        int_u0 = integrate(data.grid, data.u0)
    else:
        int_w0 = float(series["int_w"][0])
        int_u0 = float(series["mass_u"][0])
    t = series.t
    lhs = series["cum_grad_w_sq"]
    rhs = int_w0 + t * int_u0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    worst = int(np.argmax(ratio))
    passed = bool(np.all(lhs <= (1.0 + slack) * rhs))
    detail = (f"int_w0={int_w0:.10g} int_u0={int_u0:.10g} slack={slack:g} "
              f"worst t={t[worst]:.6g} lhs={lhs[worst]:.6g} rhs={rhs[worst]:.6g}")
    return AuditEntry("energy_grad_w", passed, float(ratio[worst]), lhs, rhs, t, detail)


def audit_growth_envelope(series: DiagSeries, name: str, shape: str = "linear",
                          r: float | None = None, abs_floor: float = 1e-12) -> AuditEntry:
    """Check that a functional grows no faster than C(1+t)**k.

    ``k = 1`` for ``shape='linear'`` and ``k = r + 1`` for ``shape='power'``.
    The audit passes when the peak of functional/(1+t)**k is reached in the
    first half of the window, or when that ratio is nonincreasing over the
    last quarter.  The reported ``max_ratio`` is the fitted constant C*.
    A functional with C* <= ``abs_floor`` is roundoff around zero and passes.
    """
    if len(series) == 0:
        raise ParameterError("audit_growth_envelope needs a nonempty series")
    if shape == "linear":
        k = 1.0
    elif shape == "power":
        if r is None:
            raise ParameterError("power envelope needs r")
        k = float(r) + 1.0
    else:
        raise ParameterError(f"unknown envelope shape {shape!r}")
    t = series.t
    f = series[name]
    env = (1.0 + t) ** k
    ratio = f / env
    c_star = float(np.max(ratio))
    tol = 1e-12 * max(abs(c_star), 1e-300)
    peak = int(np.argmax(ratio >= c_star - tol))
    t0, t1 = float(t[0]), float(t[-1])
    early_peak = t[peak] <= t0 + 0.5 * (t1 - t0)
    tail = ratio[t >= t0 + 0.75 * (t1 - t0)]
    tail_ok = bool(np.all(np.diff(tail) <= tol))
    negligible = c_star <= abs_floor
    passed = bool(early_peak or tail_ok or negligible)
    detail = (f"shape={shape} exponent={k:g} C*={c_star:.6g} at t={t[peak]:.6g} "
              f"early_peak={bool(early_peak)} tail_nonincreasing={tail_ok}")
    if negligible:
        detail += f" negligible (C* <= {abs_floor:g})"
    return AuditEntry(f"growth_{name}", passed, c_star, f, c_star * env, t, detail)


def audit_pointwise_bounds(series: DiagSeries, data: InitialData | None = None,
                           w_cap: float = math.inf, v0_max: float | None = None) -> AuditEntry:
    """0 < v <= v0_max and sup w below a cap, at every sample."""
    _require_samples(series, 1, "audit_pointwise_bounds")
    if v0_max is None:
        v0_max = data.v0_max if data is not None else float(series["max_v"][0])
    min_v = series["min_v"]
    max_v = series["max_v"]
    sup_w = series["sup_w"]
    bound = v0_max * (1.0 + 1e-12)
    ok_v = bool(np.all(min_v > 0) and np.all(max_v <= bound))
    ok_w = bool(np.all(sup_w <= w_cap))
    ratio = max_v / v0_max
    worst = int(np.argmax(ratio))
    detail = (f"v0_max={v0_max:.17g} min_v={float(np.min(min_v)):.6g} "
              f"max_v/v0_max={ratio[worst]:.17g} at t={series.t[worst]:.6g} "
              f"max_sup_w={float(np.max(sup_w)):.6g} w_cap={w_cap:g}")
    return AuditEntry("pointwise_bounds", ok_v and ok_w, float(ratio[worst]), max_v,
                      np.full_like(max_v, v0_max), series.t, detail)


def audit_all(series: DiagSeries, data: InitialData | None = None, *,
              energy_slack: float = 0.05, w_cap: float = math.inf,
              pr_list: Iterable[tuple[float, float]] = ()) -> AuditReport:
    """The standard audit battery used by the CLI."""
    report = AuditReport()
    if len(series) >= 2:
        report.add(audit_mass(series))
    report.add(audit_energy_w(series, data, slack=energy_slack))
    report.add(audit_pointwise_bounds(series, data, w_cap=w_cap))
    for name in ("int_u_pow_m1", "grad_um1_l2_cum", "mixed_cum"):
        if name in series:
            report.add(audit_growth_envelope(series, name, "linear"))
    for p, r in pr_list:
        col = f"cum_{_pkey(p)}_{_pkey(r)}"
        if col in series:
            report.add(audit_growth_envelope(series, col, "power", r=r))
    return report
