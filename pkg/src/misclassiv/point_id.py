"""Closed-form point identification from second and third moment restrictions.

The covariances of (y, y^2, y^3, Ty, Ty^2, T) with z satisfy a triangular
linear system in (theta1, theta2, theta3).  When beta != 0 the theta vector
maps back to (beta, alpha0, alpha1) through the roots of a quadratic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core_types import (
    IdentificationError,
    InconsistentMomentsError,
    MomentSet,
    NoFirstStageError,
    QuadraticSummary,
    ThetaVector,
)

BRANCHES = ("full", "beta_zero", "one_sided_a0", "one_sided_a1")


@dataclass(frozen=True)
class PointEstimate:
    beta: float
    alpha0: Optional[float]
    alpha1: Optional[float]
    theta: ThetaVector
    quadratic: Optional[QuadraticSummary]
    branch: str
    warnings: tuple[str, ...] = ()

    def as_array(self) -> np.ndarray:
        nan = float("nan")
        return np.array([
            self.beta,
            nan if self.alpha0 is None else self.alpha0,
            nan if self.alpha1 is None else self.alpha1,
        ])


def _check_first_stage(m: MomentSet) -> None:
    if not math.isfinite(m.pi) or abs(m.pi) <= 1e-12 * m.var_z:
        raise NoFirstStageError(f"no first stage: Cov(T, z) = {m.pi!r}")


def solve_theta(moments: MomentSet) -> ThetaVector:
    """Back-substitute eta1 = pi*t1, eta2 = 2*tau1*t1 - pi*t2,
    eta3 = 3*tau2*t1 - 3*tau1*t2 + pi*t3."""
    m = moments
    _check_first_stage(m)
    t1 = m.eta1 / m.pi
    t2 = (2.0 * m.tau1 * t1 - m.eta2) / m.pi
    t3 = (m.eta3 - 3.0 * m.tau2 * t1 + 3.0 * m.tau1 * t2) / m.pi
    return ThetaVector(t1, t2, t3)


def quadratic_summary(theta: ThetaVector, disc_tol: float = 1e-10) -> QuadraticSummary:
    t1, t2, t3 = theta.theta1, theta.theta2, theta.theta3
    A = t2 / t1 ** 2
    B = t3 / t1 ** 3
    disc = 3.0 * A * A - 2.0 * B
    if disc < -disc_tol:
        raise InconsistentMomentsError(
            f"moments inconsistent with model: 3A^2 - 2B = {disc!r} < 0",
            {"A": A, "B": B, "discriminant": disc},
        )
    root = math.sqrt(max(disc, 0.0))
    return QuadraticSummary(A, B, disc, (A - root) / 2.0, (A + root) / 2.0)


def theta_to_structural(theta: ThetaVector, zero_tol: float = 1e-8,
                        disc_tol: float = 1e-10, check_range: bool = True,
                        range_tol: float = 1e-9) -> PointEstimate:
    """Recover (beta, alpha0, alpha1) from theta.

    ``|theta1| <= zero_tol`` is read as beta = 0, which leaves the alphas
    unidentified (returned as None).  Otherwise alpha0 is the smaller root
    and 1 - alpha1 the larger root of (A^2 - B) + 2 A r - 2 r^2 = 0, and
    beta = theta1 * (1 - alpha0 - alpha1).  A slightly negative
    discriminant (within ``disc_tol``) is clamped to zero.

    With ``check_range`` estimates outside 0 <= alpha < 1, alpha0 + alpha1 < 1
    raise InconsistentMomentsError; otherwise they are returned with a warning.
    """
    if abs(theta.theta1) <= zero_tol:
        return PointEstimate(0.0, None, None, theta, None, "beta_zero",
                             ("beta = 0: misclassification rates are not identified",))
    quad = quadratic_summary(theta, disc_tol)
    a0 = quad.root_small
    a1 = 1.0 - quad.root_large
    beta = math.copysign(abs(theta.theta1) * math.sqrt(max(quad.discriminant, 0.0)),
                         theta.theta1)
    problems = []
    if not (-range_tol <= a0 < 1.0):
        problems.append(f"alpha0 = {a0:.9g} outside [0, 1)")
    if not (-range_tol <= a1 < 1.0):
        problems.append(f"alpha1 = {a1:.9g} outside [0, 1)")
    if a0 + a1 >= 1.0:
        problems.append(f"alpha0 + alpha1 = {a0 + a1:.9g} >= 1")
    if problems and check_range:
        raise InconsistentMomentsError(
            "moments inconsistent with model: " + "; ".join(problems),
            {"alpha0": a0, "alpha1": a1, "A": quad.A, "B": quad.B,
             "discriminant": quad.discriminant},
        )
    return PointEstimate(beta, a0, a1, theta, quad, "full", tuple(problems))


def alpha_difference(theta1: float, theta2: float) -> float:
    """alpha1 - alpha0 = 1 - theta2 / theta1^2 (needs beta != 0)."""
    if theta1 == 0:
        raise IdentificationError("difference unidentified at beta=0 (theta1 = 0)")
    return 1.0 - theta2 / theta1 ** 2


_SIDES = {"alpha0_zero": "alpha0_zero", "a0": "alpha0_zero",
          "alpha1_zero": "alpha1_zero", "a1": "alpha1_zero"}


def one_sided_point_estimate(theta1: float, theta2: float, side: str,
                             theta3: float = float("nan")) -> PointEstimate:
    """Point estimate when one misclassification rate is known to be zero.

    ``side="alpha0_zero"`` (or ``"a0"``) imposes alpha0 = 0, ``"alpha1_zero"``
    (or ``"a1"``) imposes alpha1 = 0.
    """
    try:
        side = _SIDES[side]
    except KeyError:
        raise ValueError(f"side must be one of {sorted(_SIDES)}, got {side!r}") from None
    if theta1 == 0:
        raise IdentificationError("theta1 = 0: one-sided estimate needs beta != 0")
    A = theta2 / theta1 ** 2
    theta = ThetaVector(theta1, theta2, theta3)
    if side == "alpha0_zero":
        a0, a1 = 0.0, 1.0 - A
        bad = a1
        branch = "one_sided_a0"
    else:
        a0, a1 = A - 1.0, 0.0
        bad = a0
        branch = "one_sided_a1"
    if not (0.0 <= bad < 1.0):
        raise InconsistentMomentsError(
            f"one-sided restriction rejected by moments: implied rate {bad:.9g} outside [0, 1)",
            {"A": A, "alpha0": a0, "alpha1": a1},
        )
    beta = theta1 * (1.0 - a0 - a1)
    return PointEstimate(beta, a0, a1, theta, None, branch)


def recover_intercept(moments: MomentSet, beta: float, alpha0: float, alpha1: float) -> float:
    """c from E[y] = c + beta * (P(T=1) - alpha0) / (1 - alpha0 - alpha1).

    This follows from the conditional-mean equation averaged over z; it is a
    consequence of identifying (beta, alpha0, alpha1), not a separate result.
    """
    q = moments.q
    ey = q * moments.ey[1] + (1 - q) * moments.ey[0]
    pbar = q * moments.p1 + (1 - q) * moments.p0
    return ey - beta * (pbar - alpha0) / (1.0 - alpha0 - alpha1)


def structural_map(theta) -> np.ndarray:
    """theta (array) -> (beta, alpha0, alpha1) with no range checks; used for
    numerical differentiation."""
    est = theta_to_structural(ThetaVector(*map(float, theta)), zero_tol=0.0,
                              disc_tol=math.inf, check_range=False)
    return est.as_array()
