"""Diffusion laws, initial data and the logarithmic change of variables.

The admissible diffusion laws form the closed family

    D(s) = delta * (s + shift)**(m - 1) + d0,     s >= 0,

with ``delta > 0``, ``m >= 1``, ``d0 >= 0`` and ``shift >= 0``.  ``shift = 0``
and ``d0 = 0`` is the bare (degenerate for m > 1) power law; ``d0 > 0`` is the
power law with a positive floor; ``shift > 0`` is the translate ``s -> D(s +
shift)`` of one of the former two.  Every member satisfies
``D(s) >= delta * s**(m - 1)`` and has a closed-form antiderivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ParameterError, PositivityError
from .grid import GridSpec

__all__ = [
    "DiffusionSpec",
    "InitialData",
    "power",
    "power_offset",
    "shift_regularize",
    "eval_D",
    "eval_Dbar",
    "v_to_w",
    "w_to_v",
    "make_initial",
    "PRESETS",
]


@dataclass(frozen=True)
class DiffusionSpec:
    delta: float
    m: float
    d0: float = 0.0
    shift: float = 0.0

    def __post_init__(self):
        for name in ("delta", "m", "d0", "shift"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"diffusion parameter {name} must be finite")
        if not self.delta > 0:
            raise ParameterError(f"delta must be > 0, got {self.delta}")
        if not self.m >= 1:
            raise ParameterError(f"m must be >= 1, got {self.m}")
        if self.d0 < 0:
            raise ParameterError(f"d0 must be >= 0, got {self.d0}")
        if self.shift < 0:
            raise ParameterError(f"shift must be >= 0, got {self.shift}")

    @property
    def kind(self) -> str:
        if self.shift > 0:
            return "shifted"
        return "power_offset" if self.d0 > 0 else "power"

    @property
    def base(self) -> "DiffusionSpec":
        """The unshifted law this spec was derived from (itself if unshifted)."""
        return DiffusionSpec(self.delta, self.m, self.d0)

    @property
    def nondegenerate(self) -> bool:
        """True iff D(0) > 0, i.e. the law belongs to the strictly positive class."""
        return self(0.0) > 0

    def __call__(self, s):
        """Evaluate D without argument checks (``s`` assumed >= 0)."""
        e = self.m - 1.0
        x = s + self.shift if self.shift else s
        if e == 0.0:
            val = self.delta + 0.0 * np.asarray(x, dtype=float)
        elif e == 1.0:
            val = self.delta * x
        else:
            val = self.delta * np.power(x, e)
        if self.d0:
            val = val + self.d0
        return float(val) if np.ndim(val) == 0 else val

    def antiderivative(self, s):
        """Evaluate Dbar(s) = int_0^s D without argument checks."""
        m = self.m
        e = self.shift
        s = np.asarray(s, dtype=float)
        if e:
            val = self.delta * (np.power(s + e, m) - e**m) / m
        else:
            val = self.delta * np.power(s, m) / m
        if self.d0:
            val = val + self.d0 * s
        return float(val) if val.ndim == 0 else val


def power(delta: float, m: float) -> DiffusionSpec:
    return DiffusionSpec(float(delta), float(m))


def power_offset(delta: float, m: float, d0: float) -> DiffusionSpec:
    if not d0 > 0:
        raise ParameterError(f"power_offset needs d0 > 0, got {d0}")
    return DiffusionSpec(float(delta), float(m), float(d0))


def shift_regularize(spec: DiffusionSpec, eps: float) -> DiffusionSpec:
    """Return the law ``s -> D(s + eps)``; shifts compose additively."""
    if not (math.isfinite(eps) and eps > 0):
        raise ParameterError(f"eps must be > 0, got {eps}")
    return DiffusionSpec(spec.delta, spec.m, spec.d0, spec.shift + float(eps))


def _check_nonnegative(s, what):
    arr = np.asarray(s, dtype=float)
    if arr.size and not np.all(arr >= 0):
        raise ParameterError(f"{what} requires s >= 0")
    return arr


def eval_D(spec: DiffusionSpec, s):
    _check_nonnegative(s, "eval_D")
    return spec(s)


def eval_Dbar(spec: DiffusionSpec, s):
    _check_nonnegative(s, "eval_Dbar")
    return spec.antiderivative(s)


# ---------------------------------------------------------------------------
# v <-> w

def _first_bad_index(mask: np.ndarray):
    flat = int(np.flatnonzero(mask)[0])
    return tuple(int(i) for i in np.unravel_index(flat, mask.shape))


def v_to_w(v: np.ndarray, v0_max: float) -> np.ndarray:
    """w = -log(v / v0_max), cellwise."""
    if not v0_max > 0:
        raise ParameterError(f"v0_max must be > 0, got {v0_max}")
    v = np.asarray(v, dtype=float)
    bad = ~(v > 0)
    if bad.any():
        idx = _first_bad_index(bad)
        raise PositivityError(f"v is not positive at cell {idx}", index=idx, value=float(v[idx]))
    return -np.log(v / v0_max)


def w_to_v(w: np.ndarray, v0_max: float) -> np.ndarray:
    """Inverse of :func:`v_to_w`."""
    if not v0_max > 0:
        raise ParameterError(f"v0_max must be > 0, got {v0_max}")
    w = np.asarray(w, dtype=float)
    bad = ~(w >= -1e-12)
    if bad.any():
        idx = _first_bad_index(bad)
        raise ParameterError(f"w is negative at cell {idx}: {float(w[idx])!r}")
    return v0_max * np.exp(-w)


# ---------------------------------------------------------------------------
# Initial data

@dataclass(frozen=True)
class InitialData:
    grid: GridSpec
    u0: np.ndarray
    v0: np.ndarray
    v0_max: float = field(init=False)

    def __post_init__(self):
        u0 = self.grid.check_field(self.u0, "u0").copy()
        v0 = self.grid.check_field(self.v0, "v0").copy()
        if not np.all(np.isfinite(u0)) or not np.all(np.isfinite(v0)):
            raise ParameterError("initial fields must be finite")
        if not np.all(u0 >= 0):
            raise ParameterError("u0 must be >= 0 everywhere")
        if not np.all(v0 > 0):
            raise ParameterError("v0 must be > 0 everywhere")
        u0.setflags(write=False)
        v0.setflags(write=False)
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "v0_max", float(v0.max()))

    @property
    def w0(self) -> np.ndarray:
        return v_to_w(self.v0, self.v0_max)


def _gauss(grid: GridSpec, center, width) -> np.ndarray:
    r2 = 0.0
    for x, c in zip(grid.mesh(), center):
        r2 = r2 + (x - c) ** 2
    return np.broadcast_to(np.exp(-r2 / (2.0 * width**2)), grid.cells).copy()


def _cos_product(grid: GridSpec, modes) -> np.ndarray:
    out = np.ones(grid.cells)
    for x, k, L in zip(grid.mesh(), modes, grid.lengths):
        out = out * np.cos(k * math.pi * x / L)
    return out


def _vector(value, dim, name):
    if np.ndim(value) == 0:
        return (float(value),) * dim
    value = tuple(float(x) for x in value)
    if len(value) != dim:
        raise ParameterError(f"{name} needs {dim} components, got {len(value)}")
    return value


def _rng(seed) -> np.random.Generator:
    # PCG64 bit generator; runs are bit-reproducible for a given numpy build.
    if seed is None:
        seed = 0
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def _constant(grid, p, seed):
    u, v = float(p.get("u", 1.0)), float(p.get("v", 1.0))
    if u < 0 or v <= 0:
        raise ParameterError("constant preset needs u >= 0 and v > 0")
    return grid.full(u), grid.full(v)


def _gaussian_bump(grid, p, seed):
    amp = float(p.get("amplitude", 1.0))
    center = _vector(p.get("center", [L / 2 for L in grid.lengths]), grid.dim, "center")
    width = float(p.get("width", 0.1 * min(grid.lengths)))
    background = float(p.get("background", 0.0))
    v_background = float(p.get("v_background", 1.0))
    v_amplitude = float(p.get("v_amplitude", 0.0))
    v_width = float(p.get("v_width", width))
    noise = float(p.get("noise", 0.0))
    if amp < 0 or background < 0 or width <= 0 or v_width <= 0:
        raise ParameterError("gaussian_bump needs amplitude >= 0, background >= 0, widths > 0")
    if v_background <= 0 or v_background + min(v_amplitude, 0.0) <= 0:
        raise ParameterError("gaussian_bump must keep v0 > 0 (v_background + min(v_amplitude, 0) > 0)")
    if not 0 <= noise < 1:
        raise ParameterError("gaussian_bump noise must lie in [0, 1)")
    u0 = background + amp * _gauss(grid, center, width)
    if noise:
        u0 = u0 * (1.0 + noise * _rng(seed).uniform(-1.0, 1.0, size=grid.cells))
    v0 = v_background + v_amplitude * _gauss(grid, center, v_width)
    return u0, v0


def _perturbed_constant(grid, p, seed):
    u, v = float(p.get("u", 1.0)), float(p.get("v", 1.0))
    a = float(p.get("amplitude", 0.1))
    modes = _vector(p.get("modes", 1), grid.dim, "modes")
    if u < 0 or v <= 0 or not 0 <= a < 1:
        raise ParameterError("perturbed_constant needs u >= 0, v > 0 and 0 <= amplitude < 1")
    shape = _cos_product(grid, modes)
    return u * (1.0 + a * shape), v * (1.0 + a * shape)


def _seeded_random(grid, p, seed):
    u_lo, u_hi = float(p.get("u_min", 0.0)), float(p.get("u_max", 1.0))
    v_lo, v_hi = float(p.get("v_min", 0.5)), float(p.get("v_max", 1.0))
    if not (0 <= u_lo <= u_hi and 0 < v_lo <= v_hi):
        raise ParameterError("seeded_random needs 0 <= u_min <= u_max and 0 < v_min <= v_max")
    rng = _rng(seed)
    return rng.uniform(u_lo, u_hi, size=grid.cells), rng.uniform(v_lo, v_hi, size=grid.cells)


PRESETS = {
    "constant": _constant,
    "gaussian_bump": _gaussian_bump,
    "perturbed_constant": _perturbed_constant,
    "seeded_random": _seeded_random,
}


def make_initial(preset: str, grid: GridSpec, params: Mapping[str, Any] | None = None,
                 seed: int | None = None) -> InitialData:
    """Build initial data from a named preset.

    Presets: ``constant(u, v)``, ``gaussian_bump(amplitude, center, width,
    background, v_background, v_amplitude, v_width, noise)``,
    ``perturbed_constant(u, v, amplitude, modes)`` and
    ``seeded_random(u_min, u_max, v_min, v_max)``.  Random draws use
    ``numpy.random.PCG64(seed)``.
    """
    try:
        builder = PRESETS[preset]
    except KeyError:
        raise ParameterError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
    u0, v0 = builder(grid, dict(params or {}), seed)
    return InitialData(grid, u0, v0)
