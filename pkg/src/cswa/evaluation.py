"""Error metric, communication accounting, and the experiment sweep harness.

A sweep varies one of the four performance factors (participants m,
coverage cap s, window w, latent size l) over a list of values, re-running
the chosen methods for each (value, seed) cell on freshly generated
coverage and observations. Cells are independent and may run concurrently;
records are canonicalized to a deterministic order afterwards.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from statistics import median

import numpy as np

from .baselines import mean_fill, tsvd_impute
from .datagen import assign_coverage, observe
from .errors import CswaError, NumericError, ParameterError, ShapeError
from .factorization import solve_centralized
from .model import Field, Hyperparams, build_window
from .protocol import aggregate_for_baseline, run_simulation
from .rng import substream

METHODS = ("cswa", "centralized", "tsvd", "meanfill")

AXES = {
    "m": "num_participants",
    "s": "max_subareas",
    "w": "window",
    "l": "latent",
}


@dataclass(frozen=True)
class SweepSpec:
    """One axis, its values, the seeds to repeat over, and the methods to
    compare."""

    base: Hyperparams
    axis: str
    values: tuple
    seeds: tuple[int, ...]
    methods: tuple[str, ...]

    def __post_init__(self):
        if self.axis not in AXES:
            raise ParameterError(f"axis must be one of {sorted(AXES)}, got {self.axis!r}")
        if not self.values:
            raise ParameterError("sweep needs at least one axis value")
        if not self.seeds:
            raise ParameterError("sweep needs at least one seed")
        if not self.methods:
            raise ParameterError("sweep needs at least one method")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ParameterError(f"unknown methods {unknown}; choose from {METHODS}")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass(frozen=True)
class SweepRecord:
    axis: str
    value: object
    method: str
    seed: int
    abs_error: float
    iterations: int
    scalars: int
    wall_ms: float

    def to_jsonable(self) -> dict:
        return {
            "axis": self.axis, "value": self.value, "method": self.method,
            "seed": self.seed, "abs_error": self.abs_error,
            "iterations": self.iterations, "scalars": self.scalars,
            "wall_ms": self.wall_ms,
        }


def absolute_error(recovered: np.ndarray, truth: np.ndarray,
                   where: np.ndarray | None = None) -> float:
    """Mean element-wise absolute difference over all cells (covered and
    uncovered alike). ``where`` restricts the mean to selected cells, which
    is the diagnostic missing-cells-only variant."""
    a = np.asarray(recovered, dtype=np.float64)
    b = np.asarray(truth, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shapes {a.shape} and {b.shape} differ")
    diff = np.abs(a - b)
    if where is None:
        return float(diff.mean())
    sel = np.asarray(where, dtype=bool)
    if sel.shape != a.shape:
        raise ShapeError(f"selection shape {sel.shape} does not match {a.shape}")
    if not sel.any():
        raise ParameterError("selection is empty; no cells to average over")
    return float(diff[sel].mean())


def comm_bound_scalars(num_subareas: int, latent: int, window: int,
                       max_iters: int, batch_size: int) -> int:
    """Worst-case scalar transfers after every chain exhausts its budget,
    excluding the batch_size initialization sends (reported separately)."""
    return (num_subareas * latent + latent * window) * max_iters * batch_size


def comm_bound(params: Hyperparams, num_subareas: int) -> int:
    return comm_bound_scalars(num_subareas, params.latent, params.window,
                              params.max_iters, params.batch_size)


def compose_params(base: Hyperparams, axis: str, value) -> Hyperparams:
    """Set one axis field on the base parameters.

    Sweeping m below the base batch size clamps the batch size to m: a
    batch cannot exceed the population."""
    if axis not in AXES:
        raise ParameterError(f"axis must be one of {sorted(AXES)}, got {axis!r}")
    try:
        fields = {AXES[axis]: value}
        if axis == "m" and base.batch_size > value:
            fields["batch_size"] = value
        return replace(base, **fields)
    except (ParameterError, TypeError) as err:
        raise ParameterError(f"invalid {axis}={value!r} under the base "
                             f"parameters: {err}") from err


def _run_cell(field: Field, spec: SweepSpec, value, seed: int, method: str,
              end_cycle: int | None, exclude_self: bool, literal_update: bool,
              require_convergence: bool) -> SweepRecord:
    try:
        params = replace(compose_params(spec.base, spec.axis, value), seed=seed)
        last = field.num_cycles if end_cycle is None else end_cycle
        window = build_window(field, last, params.window)
        params.check_against(field.num_subareas)
        schedule = assign_coverage(params, field.num_subareas,
                                   substream(seed, "coverage"))
        all_obs = observe(window, schedule, params.noise_sigma,
                          substream(seed, "observe"))
    except NumericError:
        raise
    except CswaError as err:
        raise ParameterError(
            f"sweep cell {spec.axis}={value!r} seed={seed} method={method}: "
            f"{err}") from err

    start = time.perf_counter()
    scalars = 0
    if method == "cswa":
        result = run_simulation(all_obs, params, exclude_self=exclude_self,
                                literal_update=literal_update,
                                require_convergence=require_convergence)
        recovered = result.recovered
        iterations = sum(result.per_chain_iters)
        scalars = result.scalars_transferred()
    elif method == "centralized":
        aggregated = aggregate_for_baseline(all_obs)
        factors, iterations = solve_centralized(
            aggregated, params, substream(seed, "centralized"))
        recovered = factors.product()
    elif method == "tsvd":
        aggregated = aggregate_for_baseline(all_obs)
        impute = tsvd_impute(aggregated, k=params.latent)
        recovered = impute.completed
        iterations = impute.iterations
    elif method == "meanfill":
        recovered = mean_fill(aggregate_for_baseline(all_obs))
        iterations = 0
    else:
        raise ParameterError(f"unknown method {method!r}")
    wall_ms = (time.perf_counter() - start) * 1e3

    return SweepRecord(spec.axis, value, method, seed,
                       absolute_error(recovered, window), iterations,
                       scalars, wall_ms)


def run_sweep(spec: SweepSpec, field: Field, *, end_cycle: int | None = None,
              max_workers: int = 1, exclude_self: bool = True,
              literal_update: bool = False,
              require_convergence: bool = False) -> list[SweepRecord]:
    """Run every (axis value x seed x method) cell and return records in
    deterministic (value, seed, method) order.

    Cell randomness derives only from the cell's composed parameters, so
    any worker count (or concurrent execution) returns identical records,
    wall time aside. Observations for a given (value, seed) are shared by
    all methods, keeping comparisons paired.
    """
    cells = [(value, seed, method)
             for value in spec.values
             for seed in spec.seeds
             for method in spec.methods]

    def run(cell):
        value, seed, method = cell
        return _run_cell(field, spec, value, seed, method, end_cycle,
                         exclude_self, literal_update, require_convergence)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            records = list(pool.map(run, cells))
    else:
        records = [run(cell) for cell in cells]

    order = {cell: i for i, cell in enumerate(cells)}
    records.sort(key=lambda r: order[(r.value, r.seed, r.method)])
    return records


def median_errors(records: list[SweepRecord]) -> dict[tuple, float]:
    """Median absolute error per (axis value, method), for summary tables."""
    groups: dict[tuple, list[float]] = {}
    for record in records:
        groups.setdefault((record.value, record.method), []).append(record.abs_error)
    return {key: median(errors) for key, errors in groups.items()}


def records_to_csv(records: list[SweepRecord]) -> str:
    """CSV rendering: ``axis,value,method,seed,abs_error,iters,scalars,wall_ms``."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["axis", "value", "method", "seed", "abs_error",
                     "iters", "scalars", "wall_ms"])
    for r in records:
        writer.writerow([r.axis, r.value, r.method, r.seed,
                         repr(float(r.abs_error)), r.iterations, r.scalars,
                         repr(float(r.wall_ms))])
    return out.getvalue()
