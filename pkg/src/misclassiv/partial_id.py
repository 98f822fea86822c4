"""Bounds on (alpha0, alpha1) and beta when only first moments are restricted.

``alpha_rectangle`` and ``beta_interval_first_order`` use the first stage
alone.  ``sharp_set_grid`` adds non-differential measurement error: at a
candidate (alpha0, alpha1) each observed law F_tk must split into a T*=1
component of mass r_tk and a T*=0 component, with component means common
across t.  That is possible iff the implied T*=1 mean lies between the means
of the lowest and highest r_tk share of F_tk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core_types import (
    InfeasibleSystemError,
    MomentSet,
    NoFirstStageError,
    Sample,
)
from .moments import ObservedLaw, empirical_law, tail_means

# mixing weights this close to 0 or 1 leave one component unrestricted
_R_EPS = 1e-12

Observable = Union[MomentSet, ObservedLaw]


def _parts(obs: Observable, k: int) -> tuple[float, float, float, float]:
    """(p_k, E[y|T=0,z=k], E[y|T=1,z=k], E[y|z=k])"""
    if isinstance(obs, MomentSet):
        return obs.p(k), obs.mu[0][k], obs.mu[1][k], obs.ey[k]
    return obs.p[k], obs.mu(0, k), obs.mu(1, k), obs.ey(k)


def _p_pair(obs: Observable) -> tuple[float, float]:
    if isinstance(obs, MomentSet):
        return obs.p0, obs.p1
    return obs.p


@dataclass(frozen=True)
class AlphaRectangle:
    """alpha0 <= min_k p_k, alpha1 <= 1 - max_k p_k, alpha0 + alpha1 < 1."""

    alpha0_max: float
    alpha1_max: float

    def contains(self, alpha0: float, alpha1: float) -> bool:
        return (0.0 <= alpha0 <= self.alpha0_max and 0.0 <= alpha1 <= self.alpha1_max
                and alpha0 + alpha1 < 1.0)


def alpha_rectangle(obs: Observable) -> AlphaRectangle:
    p0, p1 = _p_pair(obs)
    return AlphaRectangle(min(p0, p1), 1.0 - max(p0, p1))


def beta_interval_first_order(moments: MomentSet) -> tuple[float, float]:
    """Closed interval between the reduced-form and IV estimands.

    The reduced-form end is Cov(y,z)/Var(z) oriented so that the first stage
    is increasing in z; with p1 < p0 its sign flips, because beta =
    theta1 * (1 - alpha0 - alpha1) with 1 - alpha0 - alpha1 >= |p1 - p0|.
    """
    m = moments
    if not math.isfinite(m.pi) or abs(m.pi) <= 1e-12 * m.var_z:
        raise NoFirstStageError(f"no first stage: Cov(T, z) = {m.pi!r}")
    iv = m.eta1 / m.pi
    rf = math.copysign(1.0, m.pi) * m.eta1 / m.var_z
    return (min(rf, iv), max(rf, iv))


@dataclass(frozen=True)
class MixingWeights:
    """r_tk = P(T*=1 | T=t, z=k) for one k."""

    r0k: float
    r1k: float


def latent_first_stage(alpha0: float, alpha1: float, p_k: float) -> float:
    """P(T*=1 | z=k) implied by the observed p_k and the misclassification rates."""
    return (p_k - alpha0) / (1.0 - alpha0 - alpha1)


def mixing_weights(alpha0: float, alpha1: float, p_star_k: float, p_k: float) -> MixingWeights:
    if p_k <= 0.0 or p_k >= 1.0:
        raise ZeroDivisionError(f"degenerate observed treatment arm: p_k = {p_k!r}")
    return MixingWeights(r0k=alpha1 * p_star_k / (1.0 - p_k),
                         r1k=(1.0 - alpha1) * p_star_k / p_k)


def solve_conditional_means(alpha0: float, alpha1: float, obs: Observable,
                            k: int, tol: float = 1e-12) -> tuple[float, float]:
    """(E[y|T*=0,z=k], E[y|T*=1,z=k]) under non-differential error.

    When the mixing system is singular (alpha0 = p_k or alpha1 = 1 - p_k) it
    is consistent only if the two observed means agree, in which case both
    latent means equal that common value.
    """
    p, mu0, mu1, ey = _parts(obs, k)
    singular = abs(p - alpha0) <= tol or abs(1.0 - p - alpha1) <= tol
    if singular:
        if abs(mu0 - mu1) > tol * max(1.0, abs(mu0), abs(mu1)):
            raise InfeasibleSystemError(
                f"infeasible: inconsistent system at alpha=({alpha0}, {alpha1}), k={k}: "
                f"E[y|T=0,z=k]={mu0!r} != E[y|T=1,z=k]={mu1!r}"
            )
        return mu0, mu1
    lat1 = (p * mu1 - alpha0 * ey) / (p - alpha0)
    lat0 = ((1.0 - p) * mu0 - alpha1 * ey) / (1.0 - p - alpha1)
    return lat0, lat1


def _law(data, cell: Optional[int] = None) -> ObservedLaw:
    if isinstance(data, ObservedLaw):
        return data
    if isinstance(data, Sample):
        return empirical_law(data, cell)
    raise TypeError(f"expected Sample or ObservedLaw, got {type(data).__name__}")


def _default_feas_tol(law: ObservedLaw) -> float:
    return 1e-9 * law.scale()


def _feasible_k(law: ObservedLaw, k: int, a0, a1, feas_tol: float):
    """Vectorised feasibility of (a0, a1) for one instrument value k.

    Points outside alpha0 < p_k < 1 - alpha1 come back False.
    """
    a0 = np.asarray(a0, dtype=np.float64)
    a1 = np.asarray(a1, dtype=np.float64)
    p, _, mu1_obs, ey = _parts(law, k)
    # compare against 1 - p as the rectangle computes it, so its edge is excluded
    inside = (a0 < p) & (a1 < 1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_star = (p - a0) / (1.0 - a0 - a1)
        r = {1: (1.0 - a1) * p_star / p, 0: a1 * p_star / (1.0 - p)}
        target = (p * mu1_obs - a0 * ey) / (p - a0)
    # r_1k - r_0k is the determinant of the mixture system; when it rounds
    # to zero both weights sit at the same end and the means cannot differ
    inside &= (r[1] - r[0]) > _R_EPS
    ok = inside.copy()
    for t in (0, 1):
        rt = np.clip(np.where(inside, r[t], 0.0), 0.0, 1.0)
        active = inside & (rt > _R_EPS) & (rt < 1.0 - _R_EPS)
        lo, hi = tail_means(law.cell(t, k), np.where(active, rt, 0.5))
        within = (lo - feas_tol <= target) & (target <= hi + feas_tol)
        ok &= ~active | within
    return ok


def feasible_at(alpha0: float, alpha1: float, data, k: int,
                feas_tol: Optional[float] = None, cell: Optional[int] = None) -> bool:
    """Whether (alpha0, alpha1) admits the required mixtures for z = k.

    For t = 0, 1 the implied mean of the T*=1 component must lie between
    the mean of the lowest and of the highest r_tk share of F_tk.  Mixing
    weights equal to 0 or 1 impose nothing.  ``feas_tol`` is a numerical
    slack (default 1e-9 times the outcome scale).
    """
    law = _law(data, cell)
    tol = _default_feas_tol(law) if feas_tol is None else feas_tol
    return bool(_feasible_k(law, k, alpha0, alpha1, tol))


CASES = ("both_k", "one_k", "none")


@dataclass(frozen=True, eq=False)
class SharpSet:
    h: float
    alpha0_grid: np.ndarray
    alpha1_grid: np.ndarray
    mask: np.ndarray            # [i, j] <-> (alpha0_grid[i], alpha1_grid[j])
    evaluated: np.ndarray       # grid points inside the closed rectangle
    case: str
    restricting_k: tuple[int, ...]
    rectangle: AlphaRectangle
    theta1: float
    beta_interval: tuple[float, float]

    def points(self):
        """Rows (alpha0, alpha1, feasible) for every evaluated grid point."""
        idx = np.argwhere(self.evaluated)
        return [(float(self.alpha0_grid[i]), float(self.alpha1_grid[j]), bool(self.mask[i, j]))
                for i, j in idx]

    def contains(self, alpha0: float, alpha1: float) -> bool:
        """Membership of the grid point nearest (alpha0, alpha1)."""
        i = int(np.argmin(np.abs(self.alpha0_grid - alpha0)))
        j = int(np.argmin(np.abs(self.alpha1_grid - alpha1)))
        return bool(self.mask[i, j])

    @property
    def n_feasible(self) -> int:
        return int(self.mask.sum())


def alpha_grid(rect: AlphaRectangle, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid points i*h covering the closed rectangle.  Halving h keeps every
    old point bit-for-bit (2i * (h/2) == i*h in floating point)."""
    n0 = int(math.floor(rect.alpha0_max / h + 1e-9))
    n1 = int(math.floor(rect.alpha1_max / h + 1e-9))
    return np.arange(n0 + 1) * h, np.arange(n1 + 1) * h


def restricting_instruments(law: ObservedLaw, mean_tol: Optional[float] = None) -> tuple[int, ...]:
    """Instrument values whose observed conditional means differ across T.

    Equality is judged within ``mean_tol``; the default is two standard errors
    of the difference for samples and 1e-12 times the outcome scale for
    population laws.
    """
    out = []
    for k in (0, 1):
        gap = abs(law.mu(0, k) - law.mu(1, k))
        if mean_tol is not None:
            tol = mean_tol
        elif law.source == "empirical":
            tol = 2.0 * law.mean_gap_se(k)
        else:
            tol = 1e-12 * law.scale()
        if gap > tol:
            out.append(k)
    return tuple(out)


def feasibility_mask(data, alpha0_grid, alpha1_grid, mean_tol: Optional[float] = None,
                     feas_tol: Optional[float] = None, cell: Optional[int] = None):
    """Analytic membership on an arbitrary product grid.

    Returns ``(mask, evaluated, restricting_k)``; ``evaluated`` marks the grid
    points inside the closed first-stage rectangle.
    """
    law = _law(data, cell)
    rect = alpha_rectangle(law)
    A0, A1 = np.meshgrid(np.asarray(alpha0_grid, dtype=np.float64),
                         np.asarray(alpha1_grid, dtype=np.float64), indexing="ij")
    evaluated = ((A0 >= 0) & (A1 >= 0) & (A0 <= rect.alpha0_max) & (A1 <= rect.alpha1_max)
                 & (A0 + A1 < 1.0))
    ftol = _default_feas_tol(law) if feas_tol is None else feas_tol
    restricting = restricting_instruments(law, mean_tol)
    mask = evaluated.copy()
    for k in restricting:
        mask &= _feasible_k(law, k, A0, A1, ftol)
    return mask, evaluated, restricting


def sharp_set_grid(data, h: float = 0.005, mean_tol: Optional[float] = None,
                   feas_tol: Optional[float] = None, cell: Optional[int] = None) -> SharpSet:
    """Grid approximation of the identified set for (alpha0, alpha1) and the
    induced interval hull for beta.

    Instrument values whose two observed conditional means agree (see
    :func:`restricting_instruments`) impose no restriction.  If neither
    restricts, the closed first-stage rectangle is returned.
    """
    law = _law(data, cell)
    p0, p1 = law.p
    if p0 == p1:
        raise NoFirstStageError("no first stage: p_0 == p_1")
    if not (0.0 < h <= 0.5):
        raise ValueError(f"grid step must lie in (0, 0.5], got {h!r}")
    rect = alpha_rectangle(law)
    g0, g1 = alpha_grid(rect, h)
    mask, evaluated, restricting = feasibility_mask(law, g0, g1, mean_tol, feas_tol)
    case = CASES[2 - len(restricting)]

    A0, A1 = np.meshgrid(g0, g1, indexing="ij")
    theta1 = (law.ey(1) - law.ey(0)) / (p1 - p0)
    betas = theta1 * (1.0 - A0[mask] - A1[mask])
    interval = (float(betas.min()), float(betas.max())) if betas.size else (math.nan, math.nan)
    return SharpSet(h, g0, g1, mask, evaluated, case, restricting, rect, theta1, interval)
