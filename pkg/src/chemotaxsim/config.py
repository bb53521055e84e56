"""Flat ``section.key = value`` run configuration.

Example::

    mode = run
    formulation = uv
    grid.cells = 64, 64
    grid.lengths = 4, 4
    model.kind = power
    model.delta = 1
    model.m = 2
    initial.preset = gaussian_bump
    initial.amplitude = 2
    initial.seed = 7
    scheme.t_end = 5
    diagnostics.sample_every = 0.05

Lists are comma separated; ``(p, r)`` pairs are written ``p:r``.  ``#`` starts
a comment.  Parsing collects every problem and raises a single
:class:`ConfigError` listing all of them.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .diagnostics import DiagOptions
from .errors import ChemotaxError, ConfigError
from .grid import GridSpec
from .model import DiffusionSpec, PRESETS, shift_regularize
from .stepper import FORMULATIONS, SchemeConfig

MODES = ("run", "sweep", "ladder", "audit")
KINDS = ("power", "power_offset", "shifted")


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(s)


def _float(s: str) -> float:
    x = float(s)
    if math.isnan(x):
        raise ValueError(s)
    return x


def _uint(s: str) -> int:
    x = int(s)
    if x < 0:
        raise ValueError(s)
    return x


def _list(conv):
    def parse(s: str):
        items = [x.strip() for x in s.split(",") if x.strip()]
        if not items:
            raise ValueError(s)
        return tuple(conv(x) for x in items)
    return parse


def _pair(s: str):
    p, r = s.split(":")
    return (_float(p.strip()), _float(r.strip()))


# key -> (converter, type name shown in errors)
_T_FLOAT = (_float, "float")
_T_INT = (int, "integer")
_T_UINT = (_uint, "non-negative integer")
_T_STR = (str, "string")
_T_BOOL = (_bool, "boolean")
_T_FLOATS = (_list(_float), "list of floats")
_T_INTS = (_list(int), "list of integers")
_T_PAIRS = (_list(_pair), "list of p:r pairs")
_T_FLOAT_OR_LIST = (_list(_float), "float or list of floats")

SCHEMA: dict[str, tuple[Callable[[str], Any], str]] = {
    "mode": _T_STR,
    "formulation": _T_STR,
    "grid.dim": _T_INT,
    "grid.cells": _T_INTS,
    "grid.lengths": _T_FLOATS,
    "model.kind": _T_STR,
    "model.delta": _T_FLOAT,
    "model.m": _T_FLOAT,
    "model.d0": _T_FLOAT,
    "model.eps": _T_FLOAT,
    "initial.preset": _T_STR,
    "initial.seed": _T_UINT,
    "scheme.t_end": _T_FLOAT,
    "scheme.dt_max": _T_FLOAT,
    "scheme.cfl_safety": _T_FLOAT,
    "scheme.diffusion_face_average": _T_STR,
    "scheme.advection": _T_STR,
    "scheme.v_solver_tol": _T_FLOAT,
    "scheme.v_solver_max_iters": _T_INT,
    "scheme.overflow_factor": _T_FLOAT,
    "diagnostics.p_list": _T_FLOATS,
    "diagnostics.pr_list": _T_PAIRS,
    "diagnostics.sample_every": _T_FLOAT,
    "diagnostics.energy_slack": _T_FLOAT,
    "diagnostics.w_cap": _T_FLOAT,
    "output.directory": _T_STR,
    "output.snapshots": _T_BOOL,
    "sweep.m_values": _T_FLOATS,
    "sweep.trials": _T_INT,
    "ladder.eps": _T_FLOATS,
    "ladder.t_cut": _T_FLOAT,
    "ladder.compare_unregularized": _T_BOOL,
    "audit.input": _T_STR,
}

# Preset parameters live under ``initial.`` next to preset and seed.
PRESET_PARAMS: dict[str, dict[str, tuple]] = {
    "constant": {"u": _T_FLOAT, "v": _T_FLOAT},
    "gaussian_bump": {
        "amplitude": _T_FLOAT, "center": _T_FLOAT_OR_LIST, "width": _T_FLOAT,
        "background": _T_FLOAT, "v_background": _T_FLOAT, "v_amplitude": _T_FLOAT,
        "v_width": _T_FLOAT, "noise": _T_FLOAT,
    },
    "perturbed_constant": {"u": _T_FLOAT, "v": _T_FLOAT, "amplitude": _T_FLOAT, "modes": _T_FLOAT_OR_LIST},
    "seeded_random": {"u_min": _T_FLOAT, "u_max": _T_FLOAT, "v_min": _T_FLOAT, "v_max": _T_FLOAT},
}

DEFAULT_OUTPUT = "chemotaxsim_out"


@dataclass
class RunConfig:
    mode: str
    formulation: str = "uv"
    grid: GridSpec | None = None
    spec: DiffusionSpec | None = None
    preset: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    scheme: SchemeConfig | None = None
    diag: DiagOptions = field(default_factory=DiagOptions)
    energy_slack: float = 0.05
    w_cap: float = math.inf
    output_dir: str = DEFAULT_OUTPUT
    snapshots: bool = False
    m_values: tuple[float, ...] = ()
    trials: int = 1
    ladder_eps: tuple[float, ...] = tuple(0.1 * 0.5**k for k in range(11))
    ladder_t_cut: float | None = None
    compare_unregularized: bool = False
    audit_input: str | None = None
    text_sha256: str = ""
    raw: dict[str, Any] = field(default_factory=dict)


def tokenize(text: str) -> tuple[dict[str, tuple[int, str]], list[str]]:
    """Split text into ``{key: (line number, raw value)}`` and syntax problems."""
    entries: dict[str, tuple[int, str]] = {}
    problems = []
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {no}: expected 'key = value', got {line!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            problems.append(f"line {no}: empty key")
        elif key in entries:
            problems.append(f"{key}: duplicate key (lines {entries[key][0]} and {no})")
        elif not value:
            problems.append(f"{key}: empty value")
        else:
            entries[key] = (no, value)
    return entries, problems


def _convert(entries, problems, preset):
    values: dict[str, Any] = {}
    allowed_params = PRESET_PARAMS.get(preset, {})
    for key, (no, raw) in entries.items():
        if key in SCHEMA:
            conv, tname = SCHEMA[key]
        elif key.startswith("initial.") and key[len("initial."):] in allowed_params:
            conv, tname = allowed_params[key[len("initial."):]]
        elif key.startswith("initial.") and preset is not None and preset in PRESET_PARAMS:
            problems.append(f"{key}: unknown parameter for preset {preset!r} "
                            f"(allowed: {', '.join(sorted(allowed_params))})")
            continue
        elif key.startswith("initial.") and preset not in PRESET_PARAMS:
            continue  # reported through initial.preset
        else:
            problems.append(f"{key}: unknown key")
            continue
        try:
            values[key] = conv(raw)
        except (ValueError, TypeError):
            problems.append(f"{key}: expected {tname}, got {raw!r}")
    return values


def _need(values, problems, key, what=None):
    if key not in values:
        problems.append(f"{key}: required{' ' + what if what else ''} but missing")
        return False
    return True


def _check(problems, ok: bool, msg: str) -> None:
    if not ok:
        problems.append(msg)


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raise :class:`ConfigError` listing every problem."""
    entries, problems = tokenize(text)
    preset = entries.get("initial.preset", (0, None))[1]
    values = _convert(entries, problems, preset)

    mode = values.get("mode", "run")
    if mode not in MODES:
        problems.append(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
        mode = "run"
    cfg = RunConfig(mode=mode, raw=values)
    cfg.text_sha256 = hashlib.sha256(text.encode("utf-8")).hexdigest()
    cfg.formulation = values.get("formulation", "uv")
    _check(problems, cfg.formulation in FORMULATIONS,
           f"formulation must be one of {', '.join(FORMULATIONS)}, got {cfg.formulation!r}")

    cfg.output_dir = values.get("output.directory", DEFAULT_OUTPUT)
    cfg.snapshots = values.get("output.snapshots", False)
    _parse_diagnostics(values, problems, cfg)

    if mode == "audit":
        if _need(values, problems, "audit.input", "in audit mode"):
            cfg.audit_input = values["audit.input"]
    else:
        _parse_grid(values, problems, cfg)
        _parse_model(values, problems, cfg)
        _parse_initial(values, problems, cfg)
        _parse_scheme(values, problems, cfg)
        if mode == "sweep":
            _parse_sweep(values, problems, cfg)
        if mode == "ladder":
            _parse_ladder(values, problems, cfg)

    if problems:
        raise ConfigError(problems)
    return cfg


def _block_present(values, problems, section) -> bool:
    if not any(k.startswith(section + ".") for k in values):
        problems.append(f"{section}: block missing")
        return False
    return True


def _parse_grid(values, problems, cfg):
    if not _block_present(values, problems, "grid"):
        return
    if not (_need(values, problems, "grid.cells") & _need(values, problems, "grid.lengths")):
        return
    cells, lengths = values["grid.cells"], values["grid.lengths"]
    dim = values.get("grid.dim", max(len(cells), len(lengths)))
    if dim not in (1, 2, 3):
        problems.append(f"grid.dim must be 1, 2 or 3, got {dim}")
        return
    if len(cells) == 1:
        cells = cells * dim
    if len(lengths) == 1:
        lengths = lengths * dim
    ok = True
    if len(cells) != dim:
        problems.append(f"grid.cells must have grid.dim = {dim} entries, got {len(cells)}")
        ok = False
    if len(lengths) != dim:
        problems.append(f"grid.lengths must have grid.dim = {dim} entries, got {len(lengths)}")
        ok = False
    if any(n < 2 for n in cells):
        problems.append("grid.cells must be >= 2 on every axis")
        ok = False
    if any(not (math.isfinite(L) and L > 0) for L in lengths):
        problems.append("grid.lengths must be > 0 on every axis")
        ok = False
    if ok:
        cfg.grid = GridSpec(cells, lengths)


def _parse_model(values, problems, cfg):
    if not _block_present(values, problems, "model"):
        return
    kind = values.get("model.kind", "power")
    ok = True
    if kind not in KINDS:
        problems.append(f"model.kind must be one of {', '.join(KINDS)}, got {kind!r}")
        ok = False
    ok &= _need(values, problems, "model.delta") & _need(values, problems, "model.m")
    delta, m = values.get("model.delta"), values.get("model.m")
    d0 = values.get("model.d0", 0.0)
    if delta is not None and not (math.isfinite(delta) and delta > 0):
        problems.append("model.delta must be > 0")
        ok = False
    if m is not None and not (math.isfinite(m) and m >= 1):
        problems.append("model.m must be >= 1")
        ok = False
    if not (math.isfinite(d0) and d0 >= 0):
        problems.append("model.d0 must be >= 0")
        ok = False
    if kind == "power_offset" and not d0 > 0:
        problems.append("model.d0 must be > 0 for kind power_offset")
        ok = False
    if kind == "power" and d0 != 0:
        problems.append("model.d0 is only allowed with kind power_offset or shifted")
        ok = False
    eps = values.get("model.eps")
    if kind == "shifted":
        if eps is None:
            problems.append("model.eps: required for kind shifted but missing")
            ok = False
        elif not (math.isfinite(eps) and eps > 0):
            problems.append("model.eps must be > 0")
            ok = False
    elif eps is not None:
        problems.append("model.eps is only allowed with kind shifted")
        ok = False
    if ok:
        spec = DiffusionSpec(delta, m, d0)
        cfg.spec = shift_regularize(spec, eps) if kind == "shifted" else spec


def _parse_initial(values, problems, cfg):
    if not _block_present(values, problems, "initial"):
        return
    if not _need(values, problems, "initial.preset"):
        return
    preset = values["initial.preset"]
    if preset not in PRESETS:
        problems.append(f"initial.preset must be one of {', '.join(sorted(PRESETS))}, got {preset!r}")
        return
    cfg.preset = preset
    cfg.seed = values.get("initial.seed", 0)
    _check(problems, cfg.seed < 2**64, "initial.seed must fit in 64 bits")
    params = {}
    for key, val in values.items():
        name = key[len("initial."):]
        if key.startswith("initial.") and name in PRESET_PARAMS[preset]:
            params[name] = val[0] if isinstance(val, tuple) and len(val) == 1 else val
    cfg.params = params
    if cfg.grid is not None:
        from .model import make_initial

        try:
            make_initial(preset, cfg.grid, params, cfg.seed)
        except ChemotaxError as exc:
            problems.append(f"initial: {exc}")


def _parse_scheme(values, problems, cfg):
    if not _need(values, problems, "scheme.t_end"):
        return
    t_end = values["scheme.t_end"]
    ok = True
    if not (math.isfinite(t_end) and t_end > 0):
        problems.append("scheme.t_end must be > 0")
        ok = False
    sample_every = values.get("diagnostics.sample_every", t_end / 100 if t_end > 0 else 1.0)
    if not sample_every > 0:
        problems.append("diagnostics.sample_every must be > 0")
        ok = False
    kw = {}
    checks = {
        "dt_max": (lambda x: x > 0, "> 0"),
        "cfl_safety": (lambda x: 0 < x <= 1, "in (0, 1]"),
        "v_solver_tol": (lambda x: x > 0, "> 0"),
        "v_solver_max_iters": (lambda x: x >= 1, ">= 1"),
        "overflow_factor": (lambda x: x > 1, "> 1"),
    }
    for name, (pred, text) in checks.items():
        key = "scheme." + name
        if key in values:
            if pred(values[key]):
                kw[name] = values[key]
            else:
                problems.append(f"{key} must be {text}")
                ok = False
    avg = values.get("scheme.diffusion_face_average", "arithmetic")
    if avg not in ("arithmetic", "harmonic"):
        problems.append(f"scheme.diffusion_face_average must be arithmetic or harmonic, got {avg!r}")
        ok = False
    if values.get("scheme.advection", "upwind") != "upwind":
        problems.append("scheme.advection must be upwind")
        ok = False
    if ok:
        cfg.scheme = SchemeConfig(t_end, sample_every, diffusion_face_average=avg, **kw)


def _parse_diagnostics(values, problems, cfg):
    p_list = values.get("diagnostics.p_list", (2.0,))
    pr_list = values.get("diagnostics.pr_list", ())
    ok = True
    if any(not p >= 1 for p in p_list):
        problems.append("diagnostics.p_list entries must be >= 1")
        ok = False
    if any(not (p >= 1 and r > 0) for p, r in pr_list):
        problems.append("diagnostics.pr_list needs p >= 1 and r > 0 in every p:r pair")
        ok = False
    if ok:
        cfg.diag = DiagOptions(tuple(p_list), tuple(pr_list))
    cfg.energy_slack = values.get("diagnostics.energy_slack", 0.05)
    _check(problems, cfg.energy_slack >= 0, "diagnostics.energy_slack must be >= 0")
    cfg.w_cap = values.get("diagnostics.w_cap", math.inf)
    _check(problems, cfg.w_cap > 0, "diagnostics.w_cap must be > 0")


def _parse_sweep(values, problems, cfg):
    if not _block_present(values, problems, "sweep"):
        return
    if _need(values, problems, "sweep.m_values"):
        cfg.m_values = values["sweep.m_values"]
        _check(problems, all(m >= 1 for m in cfg.m_values), "sweep.m_values entries must be >= 1")
    cfg.trials = values.get("sweep.trials", 1)
    _check(problems, cfg.trials >= 1, "sweep.trials must be >= 1")


def _parse_ladder(values, problems, cfg):
    if "ladder.eps" in values:
        eps = values["ladder.eps"]
        if any(not e > 0 for e in eps):
            problems.append("ladder.eps entries must be > 0")
        elif any(b >= a for a, b in zip(eps, eps[1:])):
            problems.append("ladder.eps must be strictly decreasing")
        else:
            cfg.ladder_eps = eps
    if cfg.spec is not None and cfg.spec.shift:
        problems.append("model.kind must not be shifted in ladder mode (the ladder applies the shifts)")
    t_cut = values.get("ladder.t_cut")
    if t_cut is not None:
        t_end = values.get("scheme.t_end", math.inf)
        if not 0 < t_cut <= t_end:
            problems.append("ladder.t_cut must lie in (0, scheme.t_end]")
        else:
            cfg.ladder_t_cut = t_cut
    cfg.compare_unregularized = values.get("ladder.compare_unregularized", False)
