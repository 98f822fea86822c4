"""Just-identified GMM for (theta, kappa) within a covariate cell.

With w = (T, y, yT, y^2, y^2 T, y^3) the moment conditions are

    E[{Psi(theta) w - kappa} (x) (1, z)] = 0,

six equations in six unknowns.  They are linear in (theta, kappa), so the
sample version is solved exactly rather than by numerical optimisation.
Instruments are (1, z - zbar); this spans the same space as (1, z) and keeps
the 6x6 system well conditioned.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core_types import MomentSet, NoFirstStageError, Sample, ThetaVector
from .moments import _cell_sample, _check_cell
from .point_id import PointEstimate, structural_map, theta_to_structural

# |theta1| below this many standard errors is treated as beta = 0
WEAK_BAND = 3.0
FD_STEP = 1e-6


def psi_matrix(theta: ThetaVector) -> np.ndarray:
    t1, t2, t3 = theta.theta1, theta.theta2, theta.theta3
    return np.array([
        [-t1, 1.0, 0.0, 0.0, 0.0, 0.0],
        [t2, 0.0, -2.0 * t1, 1.0, 0.0, 0.0],
        [-t3, 0.0, 3.0 * t2, 0.0, -3.0 * t1, 1.0],
    ])


def observables(y, t) -> np.ndarray:
    """n x 6 matrix with columns (T, y, yT, y^2, y^2 T, y^3)."""
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    y2 = y * y
    return np.column_stack([t, y, y * t, y2, y2 * t, y2 * y])


@dataclass(frozen=True, eq=False)
class MomentSystem:
    w: np.ndarray           # n x 6
    kappa: np.ndarray       # 3
    psi: np.ndarray         # 3 x 6

    @classmethod
    def build(cls, y, t, theta: ThetaVector, kappa) -> "MomentSystem":
        return cls(observables(y, t), np.asarray(kappa, dtype=np.float64), psi_matrix(theta))

    def residuals(self) -> np.ndarray:
        """n x 3 rows of Psi(theta) w_i - kappa."""
        return self.w @ self.psi.T - self.kappa

    def stacked(self, z) -> np.ndarray:
        """n x 6 moment contributions ordered (r1, r1 z, r2, r2 z, r3, r3 z)."""
        r = self.residuals()
        z = np.asarray(z, dtype=np.float64)[:, None]
        out = np.empty((r.shape[0], 6))
        out[:, 0::2] = r
        out[:, 1::2] = r * z
        return out


def _jacobian_rows(w: np.ndarray, inst: np.ndarray) -> np.ndarray:
    """n x 6 x 6 would be wasteful; return the 6 x 6 mean Jacobian of the
    stacked moments with respect to (theta1, theta2, theta3, k1, k2, k3)."""
    T, yT, y2T = w[:, 0], w[:, 2], w[:, 4]
    # d r_j / d(theta, kappa), one row per residual
    d = [
        [-T, 0.0 * T, 0.0 * T],
        [-2.0 * yT, T, 0.0 * T],
        [-3.0 * y2T, 3.0 * yT, -T],
    ]
    G = np.zeros((6, 6))
    for j in range(3):
        for col, x in enumerate((1.0, inst)):
            row = 2 * j + col
            for l in range(3):
                G[row, l] = np.mean(d[j][l] * x)
            G[row, 3 + j] = -np.mean(np.broadcast_to(x, T.shape))
    return G


def theta_from_cov(cz) -> ThetaVector:
    """Solve Cov(Psi(theta) w, z) = 0 for theta given the vector
    Cov(w, z) = (pi, eta1, tau1, eta2, tau2, eta3)."""
    c_T, c_y, c_yT, c_y2, c_y2T, c_y3 = map(float, cz)
    M = np.array([
        [c_T, 0.0, 0.0],
        [2.0 * c_yT, -c_T, 0.0],
        [3.0 * c_y2T, -3.0 * c_yT, c_T],
    ])
    rhs = np.array([c_y, c_y2, c_y3])
    return ThetaVector(*map(float, np.linalg.solve(M, rhs)))


def moments_cov_vector(m: MomentSet) -> np.ndarray:
    return np.array([m.pi, m.eta1, m.tau1, m.eta2, m.tau2, m.eta3])


@dataclass(frozen=True)
class DeltaMethodSE:
    se: Optional[np.ndarray]    # (beta, alpha0, alpha1) or None
    gradient: Optional[np.ndarray]
    diagnostic: str = ""

    @property
    def available(self) -> bool:
        return self.se is not None


def delta_method_se(cov, theta_hat: ThetaVector, band: float = WEAK_BAND,
                    step: float = FD_STEP) -> DeltaMethodSE:
    """Standard errors of (beta, alpha0, alpha1) by the delta method.

    ``cov`` is the covariance of theta hat (3x3) or of (theta, kappa) (6x6).
    The gradient of the structural map uses central differences with step
    ``step * max(|theta_i|, 1)``.
    """
    S = np.asarray(cov, dtype=np.float64)[:3, :3]
    th = theta_hat.as_array()
    se1 = math.sqrt(max(S[0, 0], 0.0))
    if abs(th[0]) < band * se1 or th[0] == 0.0:
        return DeltaMethodSE(None, None,
                             f"weak identification: |theta1| = {abs(th[0]):.9g} "
                             f"< {band:g} * SE = {band * se1:.9g}")
    G = np.empty((3, 3))
    for i in range(3):
        h = step * max(abs(th[i]), 1.0)
        up, dn = th.copy(), th.copy()
        up[i] += h
        dn[i] -= h
        G[:, i] = (structural_map(up) - structural_map(dn)) / (2.0 * h)
    if not np.all(np.isfinite(G)):
        return DeltaMethodSE(None, G, "structural map not differentiable at theta hat")
    V = G @ S @ G.T
    return DeltaMethodSE(np.sqrt(np.clip(np.diag(V), 0.0, None)), G)


@dataclass(frozen=True, eq=False)
class GmmResult:
    theta: ThetaVector
    kappa: np.ndarray
    structural: PointEstimate
    cov: np.ndarray             # 6x6 covariance of (theta, kappa)
    se: DeltaMethodSE
    cell: Optional[int]
    n: int
    orthogonality: float        # max |fitted moment mean|
    warnings: tuple[str, ...] = ()

    @property
    def theta_se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov)[:3], 0.0, None))


def estimate_cell(sample: Sample, cell: Optional[int] = None,
                  band: float = WEAK_BAND) -> GmmResult:
    """Solve the sample moment system for one cell and attach inference."""
    s = _cell_sample(sample, cell)
    _check_cell(s, cell)
    n = len(s)
    z = s.z.astype(np.float64)
    p = [np.mean(s.t[s.z == k]) for k in (0, 1)]
    if p[0] == p[1]:
        raise NoFirstStageError(f"no first stage: p_0 == p_1 = {p[0]!r}")
    w = observables(s.y, s.t)
    zc = z - np.mean(z)
    G = _jacobian_rows(w, zc)
    # stacked moments are  b + G x  with b the moment means at x = 0
    b = np.empty(6)
    b[0::2] = np.mean(w[:, [1, 3, 5]], axis=0)
    b[1::2] = np.mean(w[:, [1, 3, 5]] * zc[:, None], axis=0)
    x = np.linalg.solve(G, -b)
    theta = ThetaVector(*map(float, x[:3]))
    psi = psi_matrix(theta)
    kappa = np.mean(w @ psi.T, axis=0)
    system = MomentSystem(w, kappa, psi)
    g = system.stacked(zc)
    orth = float(np.max(np.abs(g.mean(axis=0))))
    omega = g.T @ g / n
    Ginv = np.linalg.inv(G)
    cov = Ginv @ omega @ Ginv.T / n

    se1 = math.sqrt(max(cov[0, 0], 0.0))
    warnings = []
    if abs(theta.theta1) < band * se1:
        warnings.append(f"weak identification: |theta1| < {band:g} SE(theta1); "
                        "misclassification rates only weakly informed")
    est = theta_to_structural(theta, zero_tol=band * se1, check_range=False)
    warnings.extend(est.warnings)
    se = delta_method_se(cov, theta, band)
    return GmmResult(theta, kappa, est, cov, se, cell, n, orth, tuple(warnings))


def estimate_cells(sample: Sample, band: float = WEAK_BAND, workers: int = 4) -> dict:
    """estimate_cell over every cell; results keyed by cell id in sorted order."""
    cells = sample.cells()
    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(cells)))) as ex:
        results = list(ex.map(lambda c: estimate_cell(sample, c, band), cells))
    return dict(zip(cells, results))


def estimate_from_moments(moments: MomentSet, zero_tol: float = 1e-8) -> PointEstimate:
    """Population (or any precomputed) moments straight through the
    covariance form of the moment system."""
    if abs(moments.pi) <= 1e-12 * moments.var_z:
        raise NoFirstStageError(f"no first stage: Cov(T, z) = {moments.pi!r}")
    theta = theta_from_cov(moments_cov_vector(moments))
    return theta_to_structural(theta, zero_tol=zero_tol)
