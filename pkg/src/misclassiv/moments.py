"""Observable moments, conditional quantiles and truncated means.

Two sources feed the same downstream code:

* a :class:`~misclassiv.core_types.Sample` (empirical mode), and
* a :class:`~misclassiv.dgp.DGPSpec` evaluated in closed form (population mode).

Conditional outcome distributions given (T=t, z=k) are held as weighted,
sorted atoms (:class:`EmpiricalCell`); a sample is the special case of equal
weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .core_types import DegenerateCellError, MomentSet, Sample, SpecError
from .dgp import DGPSpec

# slack when locating a probability level on the cumulative-weight grid
_LEVEL_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalCell:
    """Sorted outcome values of one (T=t, z=k) sub-cell with their masses."""

    values: np.ndarray
    weights: np.ndarray
    count: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if v.ndim != 1 or v.shape != w.shape or len(v) == 0:
            raise ValueError("values and weights must be equal-length, non-empty 1-d arrays")
        if np.any(np.diff(v) < 0):
            raise ValueError("values must be sorted ascending")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        w = w / math.fsum(w)
        v.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_values(cls, values) -> "EmpiricalCell":
        v = np.sort(np.asarray(values, dtype=np.float64))
        return cls(v, np.full(len(v), 1.0 / len(v)), len(v))

    @classmethod
    def from_atoms(cls, locations, masses) -> "EmpiricalCell":
        """Discrete law; duplicate locations are merged, zero masses dropped."""
        loc = np.asarray(locations, dtype=np.float64)
        mass = np.asarray(masses, dtype=np.float64)
        keep = mass > 0
        uniq, inv = np.unique(loc[keep], return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv, mass[keep])
        return cls(uniq, merged, len(uniq))

    @cached_property
    def cum_weights(self) -> np.ndarray:
        if np.all(self.weights == self.weights[0]):
            cw = np.arange(1, len(self.values) + 1) / len(self.values)
        else:
            cw = np.cumsum(self.weights)
        cw[-1] = 1.0
        return cw

    @cached_property
    def cum_sums(self) -> np.ndarray:
        return np.cumsum(self.values * self.weights)

    @cached_property
    def _reversed(self) -> "EmpiricalCell":
        # the top of the distribution as the bottom of the reflected law
        return EmpiricalCell(-self.values[::-1], self.weights[::-1], self.count)

    @cached_property
    def mean(self) -> float:
        return math.fsum(self.values * self.weights)

    @cached_property
    def variance(self) -> float:
        return math.fsum(self.weights * (self.values - self.mean) ** 2)

    def _index(self, u):
        j = np.searchsorted(self.cum_weights, np.asarray(u) - _LEVEL_EPS, side="left")
        return np.clip(j, 0, len(self.values) - 1)

    def lower_sum(self, mass):
        """Sum of y over the lowest ``mass`` of probability, splitting the
        boundary atom fractionally.  Vectorised over ``mass``."""
        mass = np.asarray(mass, dtype=np.float64)
        j = self._index(mass)
        prev_w = np.where(j > 0, self.cum_weights[j - 1], 0.0)
        prev_s = np.where(j > 0, self.cum_sums[j - 1], 0.0)
        return prev_s + (mass - prev_w) * self.values[j]

    def upper_sum(self, mass):
        """Sum of y over the highest ``mass`` of probability (fractional)."""
        return -self._reversed.lower_sum(mass)


def empirical_quantile(cell: EmpiricalCell, u: float) -> float:
    """Left-continuous inverse CDF: the smallest value whose cumulative mass
    reaches ``u``.  ``u = 0`` gives the minimum."""
    if not (0.0 <= u <= 1.0):
        raise ValueError(f"u must lie in [0, 1], got {u!r}")
    return float(cell.values[cell._index(u)])


def truncated_means(cell: EmpiricalCell, q_low: float, q_high: float) -> tuple[float, float]:
    """(E[y | y <= q_low], E[y | y > q_high]) over the cell.

    An empty lower set gives the minimum and an empty upper set the maximum.
    """
    v, w = cell.values, cell.weights
    lo = v <= q_low
    hi = v > q_high
    lower = math.fsum(v[lo] * w[lo]) / math.fsum(w[lo]) if lo.any() else float(v[0])
    upper = math.fsum(v[hi] * w[hi]) / math.fsum(w[hi]) if hi.any() else float(v[-1])
    return lower, upper


def tail_means(cell: EmpiricalCell, r):
    """Means of the lowest and the highest ``r`` share of probability mass.

    The atom straddling the quantile F^{-1}(r) (resp. F^{-1}(1-r)) contributes
    only the fraction needed to make up mass r.  For a continuous law these
    are E[y | y <= F^{-1}(r)] and E[y | y > F^{-1}(1-r)]; for atoms they are
    the extreme means attainable by any sub-distribution of mass r.  At
    r = 0 the limits (min, max) are returned.  Vectorised over ``r``.
    """
    r = np.asarray(r, dtype=np.float64)
    safe = np.where(r > 0, r, 1.0)
    lower = np.where(r > 0, cell.lower_sum(r) / safe, cell.values[0])
    upper = np.where(r > 0, cell.upper_sum(r) / safe, cell.values[-1])
    if lower.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


@dataclass(frozen=True, eq=False)
class ObservedLaw:
    """Everything the partial-identification machinery needs for one cell:
    q, p_k = P(T=1|z=k) and the four conditional outcome laws."""

    q: float
    p: tuple[float, float]
    cells: dict
    source: str = "empirical"

    def cell(self, t: int, k: int) -> EmpiricalCell:
        return self.cells[(t, k)]

    def mu(self, t: int, k: int) -> float:
        return self.cells[(t, k)].mean

    def ey(self, k: int) -> float:
        p = self.p[k]
        return p * self.mu(1, k) + (1.0 - p) * self.mu(0, k)

    def mean_gap_se(self, k: int) -> float:
        """Standard error of mu(0,k) - mu(1,k); zero in population mode."""
        if self.source != "empirical":
            return 0.0
        c0, c1 = self.cells[(0, k)], self.cells[(1, k)]
        return math.sqrt(c0.variance / c0.count + c1.variance / c1.count)

    def scale(self) -> float:
        return max(1.0, max(float(np.max(np.abs(c.values))) for c in self.cells.values()))


def _cell_sample(sample: Sample, cell: Optional[int]) -> Sample:
    if cell is None:
        if len(sample) and len(np.unique(sample.cell)) > 1:
            raise DegenerateCellError("sample holds several cells; pass cell=")
        return sample
    return sample.subset(cell)


def _check_cell(s: Sample, cell, require_subcells: bool = True) -> None:
    label = "" if cell is None else f" in cell {cell}"
    if len(s) == 0:
        raise DegenerateCellError(f"no observations{label}")
    if np.all(s.z == s.z[0]):
        raise DegenerateCellError(f"instrument degenerate{label}: z is constant")
    for (t, k), n in s.counts().items():
        if n == 0 and require_subcells:
            raise DegenerateCellError(f"empty sub-cell T={t}, z={k}{label}")


def empirical_law(sample: Sample, cell: Optional[int] = None) -> ObservedLaw:
    s = _cell_sample(sample, cell)
    _check_cell(s, cell)
    cells = {}
    for t in (0, 1):
        for k in (0, 1):
            cells[(t, k)] = EmpiricalCell.from_values(s.y[(s.t == t) & (s.z == k)])
    n1 = int(np.count_nonzero(s.z == 1))
    p = []
    for k in (0, 1):
        nk = cells[(0, k)].count + cells[(1, k)].count
        p.append(cells[(1, k)].count / nk)
    return ObservedLaw(n1 / len(s), (p[0], p[1]), cells, "empirical")


def empirical_moments(sample: Sample, cell: Optional[int] = None,
                      allow_empty_subcells: bool = False) -> MomentSet:
    """Sample moments; covariances are mean-of-products minus product-of-means
    with exactly rounded (fsum) accumulation.

    An empty (T=t, z=k) sub-cell is an error unless ``allow_empty_subcells``,
    in which case its conditional mean is NaN (a constant z is always an
    error).
    """
    s = _cell_sample(sample, cell)
    _check_cell(s, cell, require_subcells=not allow_empty_subcells)
    n = len(s)
    y = s.y
    t = s.t.astype(np.float64)
    z = s.z.astype(np.float64)

    def mean(a):
        return math.fsum(a) / n

    q = mean(z)

    def cov(a):
        return mean(a * z) - mean(a) * q

    y2 = y * y
    y3 = y2 * y
    counts = s.counts()
    mu = [[0.0, 0.0], [0.0, 0.0]]
    for tt in (0, 1):
        for k in (0, 1):
            nk = counts[(tt, k)]
            mu[tt][k] = math.fsum(y[(s.t == tt) & (s.z == k)]) / nk if nk else math.nan
    p = [counts[(1, k)] / (counts[(0, k)] + counts[(1, k)]) for k in (0, 1)]
    ey = [math.fsum(y[s.z == k]) / (counts[(0, k)] + counts[(1, k)]) for k in (0, 1)]
    return MomentSet(
        q=q, p0=p[0], p1=p[1],
        pi=cov(t),
        eta1=cov(y), eta2=cov(y2), eta3=cov(y3),
        tau1=cov(t * y), tau2=cov(t * y2),
        mu=((mu[0][0], mu[0][1]), (mu[1][0], mu[1][1])),
        ey=(ey[0], ey[1]),
        source="empirical",
        n=n,
    )


def _y_raw_moment(spec: DGPSpec, t_star: int, k: int, j: int) -> float:
    """E[y^j | T*=t_star, z=k] by binomial expansion in eps."""
    a = spec.structural.c + spec.structural.beta * t_star
    return math.fsum(math.comb(j, i) * a ** (j - i) * spec.eps_moment(t_star, k, i)
                     for i in range(j + 1))


def population_moments(spec: DGPSpec) -> MomentSet:
    """Exact moments of the DGP (jitter included in continuous mode)."""
    q = spec.q

    def cond(j, weight_t):
        # E[w(T) y^j | z=k] where weight_t(t_star) = E[w(T) | T*=t_star]
        return [math.fsum(spec.latent_prob(ts, k) * weight_t(ts) * _y_raw_moment(spec, ts, k, j)
                          for ts in (0, 1)) for k in (0, 1)]

    def cov(e):
        return q * (1.0 - q) * (e[1] - e[0])

    one = lambda ts: 1.0  # noqa: E731
    treat = lambda ts: spec.report_prob(1, ts)  # noqa: E731
    p = [spec.observed_p(k) for k in (0, 1)]
    ey = cond(1, one)
    mu = [[0.0, 0.0], [0.0, 0.0]]
    for t in (0, 1):
        for k in (0, 1):
            num = math.fsum(spec.latent_prob(ts, k) * spec.report_prob(t, ts)
                            * _y_raw_moment(spec, ts, k, 1) for ts in (0, 1))
            mu[t][k] = num / (p[k] if t == 1 else 1.0 - p[k])
    return MomentSet(
        q=q, p0=p[0], p1=p[1],
        pi=cov(cond(0, treat)),
        eta1=cov(ey), eta2=cov(cond(2, one)), eta3=cov(cond(3, one)),
        tau1=cov(cond(1, treat)), tau2=cov(cond(2, treat)),
        mu=((mu[0][0], mu[0][1]), (mu[1][0], mu[1][1])),
        ey=(ey[0], ey[1]),
        source="population",
    )


def observed_components(spec: DGPSpec, t: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Atoms (before jitter) and masses of y given (T=t, z=k)."""
    s = spec.structural
    pt = spec.observed_p(k) if t == 1 else 1.0 - spec.observed_p(k)
    locs, masses = [], []
    for ts in (0, 1):
        w = spec.latent_prob(ts, k) * spec.report_prob(t, ts) / pt
        d = spec.errors[ts][k]
        for x, pr in zip(d.points, d.probs):
            locs.append(s.c + s.beta * ts + x)
            masses.append(w * pr)
    return np.array(locs), np.array(masses)


def population_law(spec: DGPSpec) -> ObservedLaw:
    """Exact observed law of a discrete-mode DGP."""
    if spec.effective_jitter > 0:
        raise SpecError("continuous-mode DGPs have no finite-support law; simulate instead")
    cells = {(t, k): EmpiricalCell.from_atoms(*observed_components(spec, t, k))
             for t in (0, 1) for k in (0, 1)}
    return ObservedLaw(spec.q, (spec.observed_p(0), spec.observed_p(1)), cells, "population")
