"""Data model shared by every module: observations, samples, structural
parameters, observable moments and the reduced-form theta vector.

All containers are immutable after construction.  Binary fields are stored
as 0/1 integers so moment arithmetic needs no casting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np


# --- errors ---------------------------------------------------------------

class MisclassError(Exception):
    """Base class.  ``code`` is the machine-readable tag used by the CLI."""

    code = "ERROR"


class InputError(MisclassError, ValueError):
    code = "INPUT"


class DegenerateCellError(InputError):
    code = "DEGENERATE_CELL"


class IdentificationError(MisclassError, ValueError):
    code = "IDENTIFICATION"


class NoFirstStageError(IdentificationError):
    code = "NO_FIRST_STAGE"


class InconsistentMomentsError(IdentificationError):
    """The observed moments cannot have come from the maintained model."""

    code = "INCONSISTENT_MOMENTS"

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InfeasibleSystemError(IdentificationError):
    code = "INFEASIBLE_SYSTEM"


class SpecError(MisclassError, ValueError):
    code = "INVALID_SPEC"


class InvariantBreach(MisclassError, AssertionError):
    code = "INVARIANT_BREACH"


# --- observations ---------------------------------------------------------

@dataclass(frozen=True)
class Observation:
    y: float
    t: int
    z: int
    cell: int = 0

    def __post_init__(self):
        if self.t not in (0, 1):
            raise InputError(f"t must be 0 or 1, got {self.t!r}")
        if self.z not in (0, 1):
            raise InputError(f"z must be 0 or 1, got {self.z!r}")
        if not math.isfinite(self.y):
            raise InputError(f"y must be finite, got {self.y!r}")
        if self.cell < 0:
            raise InputError(f"cell id must be >= 0, got {self.cell!r}")


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """Column-oriented collection of observations.

    Rows keep their insertion order; ``cell`` defaults to 0 everywhere.
    """

    y: np.ndarray
    t: np.ndarray
    z: np.ndarray
    cell: Optional[np.ndarray] = None

    def __post_init__(self):
        y = _frozen(self.y, np.float64)
        t = _frozen(self.t, np.int64)
        z = _frozen(self.z, np.int64)
        cell = _frozen(np.zeros(len(y)) if self.cell is None else self.cell, np.int64)
        if not (len(y) == len(t) == len(z) == len(cell)):
            raise InputError("y, t, z and cell must have equal length")
        if not np.all(np.isfinite(y)):
            raise InputError("y must be finite")
        if np.any((t != 0) & (t != 1)):
            raise InputError("t must be binary")
        if np.any((z != 0) & (z != 1)):
            raise InputError("z must be binary")
        if np.any(cell < 0):
            raise InputError("cell ids must be non-negative")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "cell", cell)

    @classmethod
    def from_observations(cls, obs: Iterable[Observation]) -> "Sample":
        rows = list(obs)
        return cls(
            y=[o.y for o in rows],
            t=[o.t for o in rows],
            z=[o.z for o in rows],
            cell=[o.cell for o in rows],
        )

    def __len__(self) -> int:
        return len(self.y)

    def __iter__(self) -> Iterator[Observation]:
        for y, t, z, c in zip(self.y, self.t, self.z, self.cell):
            yield Observation(float(y), int(t), int(z), int(c))

    def cells(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.cell))

    def subset(self, cell: int) -> "Sample":
        keep = self.cell == cell
        return Sample(self.y[keep], self.t[keep], self.z[keep], self.cell[keep])

    def counts(self, cell: Optional[int] = None) -> dict[tuple[int, int], int]:
        """Sub-cell counts ``n[(t, k)]`` (number of rows with T=t, z=k)."""
        s = self if cell is None else self.subset(cell)
        return {
            (t, k): int(np.count_nonzero((s.t == t) & (s.z == k)))
            for t in (0, 1)
            for k in (0, 1)
        }


# --- structural side ------------------------------------------------------

@dataclass(frozen=True)
class StructuralParams:
    """Latent truth for one covariate cell: y = c + beta*T* + eps and the
    misclassification rates alpha0 = P(T=1|T*=0), alpha1 = P(T=0|T*=1)."""

    c: float
    beta: float
    alpha0: float
    alpha1: float

    def __post_init__(self):
        for name in ("alpha0", "alpha1"):
            a = getattr(self, name)
            if not (0.0 <= a < 1.0):
                raise ValueError(f"{name} must lie in [0, 1), got {a!r}")
        if self.alpha0 + self.alpha1 >= 1.0:
            raise ValueError(
                f"alpha0 + alpha1 must be < 1, got {self.alpha0 + self.alpha1!r}"
            )

    @property
    def attenuation(self) -> float:
        """1 - alpha0 - alpha1, strictly positive."""
        return 1.0 - self.alpha0 - self.alpha1


@dataclass(frozen=True)
class MomentSet:
    """Observable moments of one cell.

    ``mu[t][k]`` is E[y | T=t, z=k] and ``ey[k]`` is E[y | z=k].  All
    covariances are with z: pi = Cov(T,z), eta_j = Cov(y^j,z),
    tau_j = Cov(T y^j, z).
    """

    q: float
    p0: float
    p1: float
    pi: float
    eta1: float
    eta2: float
    eta3: float
    tau1: float
    tau2: float
    mu: tuple[tuple[float, float], tuple[float, float]]
    ey: tuple[float, float]
    source: str = "empirical"
    n: Optional[int] = None

    def p(self, k: int) -> float:
        return self.p1 if k == 1 else self.p0

    @property
    def var_z(self) -> float:
        return self.q * (1.0 - self.q)

    def scale(self) -> float:
        """A rough outcome scale, used to make tolerances unit-free."""
        return max(1.0, max(abs(m) for row in self.mu for m in row))


@dataclass(frozen=True)
class ThetaVector:
    theta1: float
    theta2: float
    theta3: float

    @classmethod
    def from_structural(cls, params: StructuralParams) -> "ThetaVector":
        a0, a1 = params.alpha0, params.alpha1
        t1 = params.beta / (1.0 - a0 - a1)
        t2 = t1 ** 2 * (1.0 + a0 - a1)
        t3 = t1 ** 3 * ((1.0 - a0 - a1) ** 2 + 6.0 * a0 * (1.0 - a1))
        return cls(t1, t2, t3)

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3])

    def scaled_discriminant(self) -> float:
        """3*theta2^2 - 2*theta1*theta3; equals theta1^4 (1-a0-a1)^2 = theta1^2 beta^2
        under the model (theta1^4 times the discriminant 3A^2 - 2B)."""
        return 3.0 * self.theta2 ** 2 - 2.0 * self.theta1 * self.theta3


@dataclass(frozen=True)
class QuadraticSummary:
    """Roots of (A^2 - B) + 2 A r - 2 r^2 = 0 with A = theta2/theta1^2,
    B = theta3/theta1^3.  The roots are alpha0 and 1 - alpha1."""

    A: float
    B: float
    discriminant: float
    root_small: float
    root_large: float


# --- sample diagnostics ---------------------------------------------------

@dataclass(frozen=True)
class CellReport:
    cell: int
    n: int
    counts: dict
    q_hat: float
    p_hat: tuple[float, float]
    first_stage_z: float
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.flags


@dataclass(frozen=True)
class ValidityReport:
    cells: tuple[CellReport, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.cells)

    def __getitem__(self, cell: int) -> CellReport:
        for c in self.cells:
            if c.cell == cell:
                return c
        raise KeyError(cell)


def validate_sample(sample: Sample, first_stage_z: float = 2.0) -> ValidityReport:
    """Per-cell diagnostics; never raises.

    A cell is flagged ``"no first stage"`` when the difference in observed
    treatment rates across z is within ``first_stage_z`` standard errors of
    zero (this includes exact equality).
    """
    reports = []
    for c in sample.cells():
        s = sample.subset(c)
        n = len(s)
        counts = s.counts()
        flags = []
        n1 = int(np.count_nonzero(s.z == 1))
        q_hat = n1 / n
        if n1 == 0 or n1 == n:
            flags.append("instrument degenerate")
        for (t, k), m in counts.items():
            if m == 0 and 0 < n1 < n:
                flags.append(f"empty sub-cell T={t},z={k}")
        p_hat = []
        for k in (0, 1):
            nk = counts[(0, k)] + counts[(1, k)]
            p_hat.append(counts[(1, k)] / nk if nk else float("nan"))
        stat = float("nan")
        if 0 < n1 < n:
            n0 = n - n1
            diff = p_hat[1] - p_hat[0]
            var = p_hat[1] * (1 - p_hat[1]) / n1 + p_hat[0] * (1 - p_hat[0]) / n0
            if diff == 0.0:
                stat = 0.0
            elif var > 0:
                stat = diff / math.sqrt(var)
            else:
                stat = math.copysign(math.inf, diff)
            if abs(stat) < first_stage_z:
                flags.append("no first stage")
        reports.append(
            CellReport(c, n, counts, q_hat, (p_hat[0], p_hat[1]), stat, tuple(flags))
        )
    return ValidityReport(tuple(reports))
