"""Domain types shared by all modules: the sensed field, per-participant
observation windows, hyperparameters, and low-rank factor pairs.

All types are immutable after construction (arrays are locked read-only),
so they can be shared across concurrently executing chains.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ParameterError, ShapeError


def _frozen_matrix(values, name: str) -> np.ndarray:
    """Copy ``values`` into a read-only float64 2-D array."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Field:
    """Ground-truth sensor readings: one row per subarea, one column per
    sensing cycle.

    Entries must be finite and non-negative. Data on a naturally signed
    scale (e.g. Celsius) is stored after an affine shift, with the offset
    recorded in ``unit`` (e.g. ``"degC+30"``); the low-rank model cannot
    represent negative values.
    """

    values: np.ndarray
    unit: str = ""

    def __post_init__(self):
        arr = _frozen_matrix(self.values, "field")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParameterError(f"field dimensions must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ParameterError("field contains non-finite entries")
        if (arr < 0).any():
            a, t = np.argwhere(arr < 0)[0]
            raise ParameterError(
                f"field entry at subarea {a + 1}, cycle {t + 1} is negative; "
                "pre-shift the data to a non-negative scale and record the "
                "offset in the unit label"
            )
        object.__setattr__(self, "values", arr)

    @property
    def num_subareas(self) -> int:
        return self.values.shape[0]

    @property
    def num_cycles(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Hyperparams:
    """Run parameters. Defaults follow the package-wide conventions; the
    first five have no sensible universal value and must be given.

    ``grad_tol=0`` is allowed and means "never converge early" (every chain
    runs to the iteration cap), which is how worst-case communication is
    exercised.
    """

    num_participants: int      # m, population size of the peer network
    batch_size: int            # N, number of chains started by the organizer
    max_subareas: int          # s, per-participant per-cycle coverage cap
    window: int                # w, cycles jointly recovered
    latent: int                # l, factorization rank
    step_size: float = 1e-3
    reg_p: float = 1e-4
    reg_q: float = 1e-4
    grad_tol: float = 1e-4
    max_iters: int = 5000      # t_max, per-chain update budget
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_participants", "batch_size", "max_subareas",
                     "window", "latent", "max_iters"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ParameterError(f"{name} must be a positive integer, got {v!r}")
        if self.batch_size > self.num_participants:
            raise ParameterError(
                f"batch_size ({self.batch_size}) cannot exceed "
                f"num_participants ({self.num_participants})"
            )
        if self.latent > self.window:
            raise ParameterError(
                f"latent ({self.latent}) must not exceed the window "
                f"({self.window}); the factorization would not reduce rank"
            )
        if not self.step_size > 0:
            raise ParameterError(f"step_size must be positive, got {self.step_size!r}")
        for name in ("reg_p", "reg_q", "grad_tol", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ParameterError(f"seed must be an integer, got {self.seed!r}")

    def check_against(self, num_subareas: int) -> None:
        """Validate the constraints that need the field's row count."""
        if self.latent > num_subareas:
            raise ParameterError(
                f"latent ({self.latent}) must not exceed the number of "
                f"subareas ({num_subareas})"
            )
        if self.max_subareas > num_subareas:
            raise ParameterError(
                f"max_subareas ({self.max_subareas}) exceeds the number of "
                f"subareas ({num_subareas})"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LocalObservations:
    """One participant's masked, noisy view of the field window.

    ``r_local`` never leaves the participant's device; only factor matrices
    travel. ``f_mask`` is exactly 0/1 per cell (1 = collected), and
    ``r_local`` is exactly 0 wherever the mask is 0, so masked-out cells
    carry no information.

    ``participant_id`` 0 is reserved for the organizer-side aggregate that
    feeds the centralized baselines; real participants are numbered 1..m.
    """

    participant_id: int
    r_local: np.ndarray
    f_mask: np.ndarray

    def __post_init__(self):
        if not isinstance(self.participant_id, (int, np.integer)) or self.participant_id < 0:
            raise ParameterError(
                f"participant_id must be a non-negative integer, got {self.participant_id!r}")
        r = _frozen_matrix(self.r_local, "r_local")
        f = _frozen_matrix(self.f_mask, "f_mask")
        if r.shape != f.shape:
            raise ShapeError(f"r_local {r.shape} and f_mask {f.shape} differ in shape")
        if not (((f == 0.0) | (f == 1.0)).all()):
            raise ParameterError("f_mask entries must be exactly 0 or 1")
        covered = f == 1.0
        if not np.isfinite(r[covered]).all():
            raise ParameterError("observed cells must be finite")
        if (r[covered] < 0).any():
            raise ParameterError("observed cells must be non-negative")
        if (r[~covered] != 0.0).any():
            raise ParameterError("masked-out cells of r_local must be exactly 0")
        object.__setattr__(self, "r_local", r)
        object.__setattr__(self, "f_mask", f)

    @property
    def num_subareas(self) -> int:
        return self.r_local.shape[0]

    @property
    def window(self) -> int:
        return self.r_local.shape[1]

    def observed_mean(self) -> float:
        """Mean of the collected cells; 0.0 when nothing was collected."""
        covered = self.f_mask == 1.0
        if not covered.any():
            return 0.0
        return float(self.r_local[covered].mean())

    def to_jsonable(self) -> dict:
        return {
            "participant_id": int(self.participant_id),
            "r_local": self.r_local.tolist(),
            "f_mask": self.f_mask.astype(int).tolist(),
        }


@dataclass(frozen=True)
class FactorPair:
    """Low-rank factors: ``p`` (subareas x latent) and ``q`` (latent x
    window). The only payload that ever travels between parties.

    Entries are non-negative after every update because each update ends in
    truncation; negatives may appear transiently in a pair that has not been
    truncated yet, so the constructor checks finiteness only.
    """

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = _frozen_matrix(self.p, "p")
        q = _frozen_matrix(self.q, "q")
        if p.shape[1] != q.shape[0]:
            raise ShapeError(
                f"inner dimensions of p {p.shape} and q {q.shape} do not agree")
        for name, m in (("p", p), ("q", q)):
            if not np.isfinite(m).all():
                raise ParameterError(f"factor {name} contains non-finite entries")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def latent(self) -> int:
        return self.p.shape[1]

    def product(self) -> np.ndarray:
        """The reconstruction this pair encodes."""
        return self.p @ self.q

    def scalar_count(self) -> int:
        """Number of real values a message carrying this pair transfers."""
        return self.p.size + self.q.size


def build_window(field: Field, end_cycle: int, window: int) -> np.ndarray:
    """Return the ``window`` most recent columns up to and including
    ``end_cycle`` (1-based), as a fresh writable matrix.

    Pure projection: adjacent windows concatenate back to the field slice.
    """
    if window < 1:
        raise ParameterError(f"window must be positive, got {window}")
    if not window <= end_cycle <= field.num_cycles:
        raise ParameterError(
            f"window of {window} cycles ending at cycle {end_cycle} does not "
            f"fit a field with {field.num_cycles} cycles"
        )
    return field.values[:, end_cycle - window:end_cycle].copy()
