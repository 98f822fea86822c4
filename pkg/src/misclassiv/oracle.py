"""Brute-force checks that do not share code with the analytic routines.

* ``lp_feasible_mixture`` decides, on a finite-support instance, whether
  each observed law F_tk splits into T*=1 / T*=0 sub-masses with latent
  means shared across t.  Atoms may be split fractionally.  The default
  solver is an exact greedy fractional knapsack; ``method="highs"`` poses
  the full linear program to scipy's HiGHS instead.
* ``mahajan_incompatibility_check`` works the 2x2 system showing that
  z-invariant latent error means force either exogeneity or no first stage.
  It runs in exact rational arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .moments import EmpiricalCell, ObservedLaw
from .partial_id import feasibility_mask

MAX_SUPPORT = 32


@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    """Finite-support observed law: ``masses[(t, k)][i]`` = P(y = support[i] | T=t, z=k)."""

    support: np.ndarray
    masses: dict
    p: tuple[float, float]
    q: float = 0.5

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=np.float64)
        if len(sup) > MAX_SUPPORT:
            raise ValueError(f"support has {len(sup)} points; cap is {MAX_SUPPORT}")
        if np.any(np.diff(sup) <= 0):
            raise ValueError("support must be strictly increasing")
        masses = {}
        for key in ((0, 0), (0, 1), (1, 0), (1, 1)):
            m = np.asarray(self.masses[key], dtype=np.float64)
            if m.shape != sup.shape or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12:
                raise ValueError(f"masses[{key}] must be a probability vector on the support")
            masses[key] = m
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_law(cls, law: ObservedLaw) -> "DiscreteInstance":
        sup = np.unique(np.concatenate([c.values for c in law.cells.values()]))
        masses = {}
        for key, c in law.cells.items():
            m = np.zeros(len(sup))
            np.add.at(m, np.searchsorted(sup, c.values), c.weights)
            masses[key] = m
        return cls(sup, masses, tuple(law.p), law.q)

    def to_law(self) -> ObservedLaw:
        cells = {key: EmpiricalCell.from_atoms(self.support, m) for key, m in self.masses.items()}
        return ObservedLaw(self.q, tuple(self.p), cells, "population")

    def mean(self, t: int, k: int) -> float:
        return float(np.dot(self.support, self.masses[(t, k)]))


def knapsack_extreme_mean(support, masses, r: float, maximize: bool) -> float:
    """Extreme mean of a sub-distribution of total mass r carved out of
    ``masses`` (fractional knapsack: fill from the top or the bottom)."""
    order = range(len(support) - 1, -1, -1) if maximize else range(len(support))
    left = r
    total = 0.0
    for i in order:
        if left <= 0:
            break
        take = min(masses[i], left)
        total += take * support[i]
        left -= take
    return total / r


def lp_extreme_mean(support, masses, r: float, maximize: bool) -> float:
    """Same quantity as :func:`knapsack_extreme_mean`, solved by HiGHS."""
    support = np.asarray(support, dtype=np.float64)
    sign = -1.0 if maximize else 1.0
    res = linprog(sign * support, A_eq=np.ones((1, len(support))), b_eq=[r],
                  bounds=list(zip(np.zeros(len(support)), masses)), method="highs")
    if res.status != 0:
        raise RuntimeError(f"extreme-mean LP failed: {res.message}")
    return float(sign * res.fun / r)


def _latent_setup(inst: DiscreteInstance, alpha0: float, alpha1: float, k: int):
    """Mixing weights r_tk = P(T*=1 | T=t, z=k) from the joint law of (T*, T)."""
    p = inst.p[k]
    p_star = (p - alpha0) / (1.0 - alpha0 - alpha1)
    joint = {1: p_star * (1.0 - alpha1), 0: p_star * alpha1}   # P(T*=1, T=t | z=k)
    marg = {1: p, 0: 1.0 - p}
    return {t: joint[t] / marg[t] for t in (0, 1)}


def _greedy_k(inst, alpha0, alpha1, k, tol):
    r = _latent_setup(inst, alpha0, alpha1, k)
    mu_obs = np.array([inst.mean(0, k), inst.mean(1, k)])
    # mu_obs[t] = (1 - r_t) * latent0 + r_t * latent1
    M = np.array([[1.0 - r[0], r[0]], [1.0 - r[1], r[1]]])
    sol, *_ = np.linalg.lstsq(M, mu_obs, rcond=None)
    if np.max(np.abs(M @ sol - mu_obs)) > tol:
        return False
    singular = abs(np.linalg.det(M)) <= 1e-14
    if singular:
        # r_0 == r_1; only the degenerate weights 0 or 1 arise on the rectangle
        rr = r[0]
        if rr <= 1e-12 or rr >= 1.0 - 1e-12:
            return True
        lo = max(knapsack_extreme_mean(inst.support, inst.masses[(t, k)], rr, False) for t in (0, 1))
        hi = min(knapsack_extreme_mean(inst.support, inst.masses[(t, k)], rr, True) for t in (0, 1))
        return lo <= hi + tol
    latent1 = sol[1]
    for t in (0, 1):
        rt = r[t]
        if rt <= 1e-12 or rt >= 1.0 - 1e-12:
            continue
        lo = knapsack_extreme_mean(inst.support, inst.masses[(t, k)], rt, False)
        hi = knapsack_extreme_mean(inst.support, inst.masses[(t, k)], rt, True)
        if not (lo - tol <= latent1 <= hi + tol):
            return False
    return True


def _highs_k(inst, alpha0, alpha1, k):
    r = _latent_setup(inst, alpha0, alpha1, k)
    y = inst.support
    S = len(y)
    # variables: g_0 (S), g_1 (S), latent0, latent1
    nvar = 2 * S + 2
    A, b = [], []
    for t in (0, 1):
        off = t * S
        row = np.zeros(nvar)
        row[off:off + S] = 1.0
        A.append(row)
        b.append(r[t])
        row = np.zeros(nvar)
        row[off:off + S] = y
        row[2 * S + 1] = -r[t]
        A.append(row)
        b.append(0.0)
        row = np.zeros(nvar)
        row[off:off + S] = -y
        row[2 * S] = -(1.0 - r[t])
        A.append(row)
        b.append(-float(np.dot(y, inst.masses[(t, k)])))
    bounds = [(0.0, m) for t in (0, 1) for m in inst.masses[(t, k)]] + [(None, None)] * 2
    res = linprog(np.zeros(nvar), A_eq=np.array(A), b_eq=np.array(b), bounds=bounds,
                  method="highs")
    if res.status not in (0, 2):
        raise RuntimeError(f"mixture LP failed: {res.message}")
    return res.status == 0


def lp_feasible_mixture(instance: DiscreteInstance, alpha0: float, alpha1: float,
                        method: str = "greedy", tol: Optional[float] = None) -> bool:
    """Whether (alpha0, alpha1) is compatible with the instance under
    non-differential measurement error (fractional atom splitting allowed)."""
    inst = instance
    for k in (0, 1):
        if not (alpha0 <= inst.p[k] <= 1.0 - alpha1):
            return False
    if alpha0 + alpha1 >= 1.0:
        return False
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.max(np.abs(inst.support))))
    for k in (0, 1):
        if method == "greedy":
            ok = _greedy_k(inst, alpha0, alpha1, k, tol)
        elif method == "highs":
            ok = _highs_k(inst, alpha0, alpha1, k)
        else:
            raise ValueError(f"unknown method {method!r}")
        if not ok:
            return False
    return True


def bruteforce_sharp_set(instance: DiscreteInstance, alpha0_grid: Sequence[float],
                         alpha1_grid: Sequence[float], method: str = "greedy") -> np.ndarray:
    """Mask ``[i, j]`` of LP feasibility at (alpha0_grid[i], alpha1_grid[j])."""
    mask = np.zeros((len(alpha0_grid), len(alpha1_grid)), dtype=bool)
    for i, a0 in enumerate(alpha0_grid):
        for j, a1 in enumerate(alpha1_grid):
            mask[i, j] = lp_feasible_mixture(instance, float(a0), float(a1), method)
    return mask


def near_boundary(mask: np.ndarray) -> np.ndarray:
    """Grid points with a differently classified neighbour (8-connected),
    i.e. within one grid step of the feasibility boundary."""
    m = np.asarray(mask, dtype=bool)
    out = np.zeros_like(m)
    P = np.pad(m, 1, mode="edge")
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            shifted = P[1 + di:1 + di + m.shape[0], 1 + dj:1 + dj + m.shape[1]]
            out |= shifted != m
    return out


@dataclass(frozen=True, eq=False)
class OracleComparison:
    alpha0_grid: np.ndarray
    alpha1_grid: np.ndarray
    analytic: np.ndarray
    bruteforce: np.ndarray
    boundary: np.ndarray

    @property
    def disagreements(self) -> int:
        return int(np.count_nonzero((self.analytic != self.bruteforce) & ~self.boundary))

    @property
    def boundary_disagreements(self) -> int:
        return int(np.count_nonzero((self.analytic != self.bruteforce) & self.boundary))

    @property
    def checked(self) -> int:
        return int(np.count_nonzero(~self.boundary))


def compare_with_analytic(instance: DiscreteInstance, alpha0_grid, alpha1_grid,
                          method: str = "greedy") -> OracleComparison:
    """Brute-force mask against the analytic sandwich rule on the same grid."""
    analytic, _, _ = feasibility_mask(instance.to_law(), alpha0_grid, alpha1_grid)
    brute = bruteforce_sharp_set(instance, alpha0_grid, alpha1_grid, method)
    return OracleComparison(np.asarray(alpha0_grid), np.asarray(alpha1_grid),
                            analytic, brute, near_boundary(analytic))


# --- z-invariant latent error means -----------------------------------------

@dataclass(frozen=True)
class IncompatibilityReport:
    matrix: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]
    determinant: Fraction
    rank: int
    null_space: Optional[tuple[Fraction, Fraction]]
    candidate: tuple[Fraction, Fraction]
    residual: tuple[Fraction, Fraction]
    consistent: bool
    branch: str

    @property
    def unique_solution(self) -> Optional[tuple[float, float]]:
        return (0.0, 0.0) if self.rank == 2 else None


def mahajan_incompatibility_check(p_star_0: float, p_star_1: float, m) -> IncompatibilityReport:
    """Test whether latent error means that do not vary with z,
    m*_t = E[eps | T*=t], can satisfy E[eps | z=k] = 0 for both k.

    The restrictions read  (1 - p*_k) m*_0 + p*_k m*_1 = 0,  k = 0, 1,
    a 2x2 system with determinant p*_1 - p*_0.  ``m`` is either the
    endogeneity level m*_1 (m*_0 is then fixed by the k=0 equation) or an
    explicit pair (m*_0, m*_1).  All arithmetic is exact.
    """
    p0, p1 = Fraction(p_star_0), Fraction(p_star_1)
    A = ((1 - p0, p0), (1 - p1, p1))
    det = A[0][0] * A[1][1] - A[0][1] * A[1][0]
    if isinstance(m, (tuple, list)):
        cand = (Fraction(m[0]), Fraction(m[1]))
    else:
        m1 = Fraction(m)
        cand = ((-p0 * m1 / (1 - p0)) if p0 != 1 else Fraction(0), m1)
    residual = tuple(row[0] * cand[0] + row[1] * cand[1] for row in A)
    consistent = all(x == 0 for x in residual)
    if det != 0:
        rank, null = 2, None
    else:
        rank = 1
        row = A[0] if any(A[0]) else A[1]
        null = (row[1], -row[0])
    if all(x == 0 for x in cand):
        branch = "exogenous"
    elif rank == 1:
        branch = "no_first_stage"
    else:
        branch = "inconsistent"
    return IncompatibilityReport(A, det, rank, null, cand, residual, consistent, branch)
