"""Seeded parameter sweeps over the diffusion exponent m."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ParameterError
from .grid import GridSpec
from .model import DiffusionSpec, make_initial
from .stepper import RunResult, SchemeConfig, run


def threshold_m(dim: int) -> float:
    """Boundedness threshold 1 + N/4 for the exponent m."""
    return 1.0 + dim / 4.0


@dataclass(frozen=True)
class SweepBase:
    grid: GridSpec
    spec: DiffusionSpec
    scheme: SchemeConfig
    preset: str
    params: Mapping[str, Any]
    base_seed: int = 0
    formulation: str = "uv"


@dataclass(frozen=True)
class SweepTask:
    m: float
    trial: int
    seed: int


@dataclass
class SweepRow:
    m: float
    trial: int
    seed: int
    status: str
    max_sup_u: float
    t_of_max: float
    above_threshold: bool
    result: RunResult | None = None

    def as_csv(self) -> str:
        return (f"{format(self.m, '.17g')},{self.trial},{self.seed},{self.status},"
                f"{format(self.max_sup_u, '.17g')},{format(self.t_of_max, '.17g')}")


SWEEP_HEADER = "m,trial,seed,status,max_sup_u,t_of_max"


def plan(m_values: Sequence[float], trials: int, base_seed: int = 0) -> list[SweepTask]:
    if not len(m_values):
        raise ParameterError("sweep needs a non-empty m list")
    if trials < 1:
        raise ParameterError("sweep trials must be >= 1")
    for m in m_values:
        if not m >= 1:
            raise ParameterError(f"sweep m values must be >= 1, got {m}")
    return [SweepTask(float(m), k, base_seed + k) for m in m_values for k in range(trials)]


def _execute(args) -> SweepRow:
    base, task, keep = args
    data = make_initial(base.preset, base.grid, base.params, task.seed)
    spec = replace(base.spec, m=task.m)
    res = run(data, spec, base.scheme, base.formulation)
    sup = np.array([r.sup_u for r in res.records])
    i = int(np.argmax(sup))
    return SweepRow(task.m, task.trial, task.seed, res.status, float(sup[i]), float(res.records[i].t),
                    task.m > threshold_m(base.grid.dim), res if keep else None)


def threshold_sweep(base: SweepBase, m_values: Sequence[float], trials: int, jobs: int = 1,
                    keep_results: bool = False) -> list[SweepRow]:
    """Run every (m, trial) pair; rows come back in plan order whatever ``jobs`` is."""
    tasks = [(base, t, keep_results) for t in plan(m_values, trials, base.base_seed)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_execute, tasks))
    return [_execute(t) for t in tasks]


def sweep_csv_text(rows: Sequence[SweepRow]) -> str:
    return "\n".join([SWEEP_HEADER] + [r.as_csv() for r in rows]) + "\n"


def sweep_passed(rows: Sequence[SweepRow]) -> bool:
    """Above-threshold rows must complete with finite sup u; others are informational."""
    return all(r.status == "completed" and math.isfinite(r.max_sup_u)
               for r in rows if r.above_threshold)
