"""Synthetic data-generating processes for the misclassified-regressor model.

Each DGP fixes, for one covariate cell, the instrument probability q, the
latent first stage P(T*=1|z=k), the structural parameters and a three-point
error law D[t][k] for eps given (T*=t, z=k).  The error laws are moment
matched so that E[eps|z], E[eps^2|z] and E[eps^3|z] do not depend on z while
E[eps|T*] can be far from zero (endogeneity).  Misclassification flips are
drawn independently of eps, so non-differential error holds by construction.

In continuous mode an independent Uniform(-h, h) jitter is added to eps.
That shifts E[eps^2|z] by h^2/3 for both z and E[eps^3|z] by
h^2 * E[eps|z] = 0, so every moment restriction survives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core_types import Sample, SpecError, StructuralParams

PRNG_NAME = "numpy Philox-4x64-10 (counter-based)"
CONFIG_TAG = "# format: misclassiv-dgp/1"


@dataclass(frozen=True)
class ThreePoint:
    points: tuple[float, float, float]
    probs: tuple[float, float, float]

    def raw_moment(self, j: int) -> float:
        return math.fsum(p * x ** j for x, p in zip(self.points, self.probs))


def three_point_distribution(mean: float, second: float, third: float,
                             center_mass: float = 1.0 / 3.0) -> ThreePoint:
    """Three-point law with the given first three raw moments.

    One atom of mass ``center_mass`` sits at the mean; the other two carry
    the variance and skewness.  Any triple with ``second > mean**2`` is
    attainable (the only Hankel condition involving three moments).  The
    boundary ``second == mean**2`` is accepted only with ``third == mean**3``
    and gives a point mass.
    """
    var = second - mean ** 2
    if var < 0 or (var == 0 and not math.isclose(third, mean ** 3, rel_tol=0, abs_tol=1e-12)):
        raise SpecError(
            "Hankel condition violated: need E[e^2] - E[e]^2 > 0, got "
            f"{second!r} - {mean!r}^2 = {var!r}"
        )
    if var == 0:
        return ThreePoint((mean, mean, mean), (1 / 3, 1 / 3, 1 / 3))
    if not (0.0 <= center_mass < 1.0):
        raise SpecError("center_mass must lie in [0, 1)")
    sd = math.sqrt(var)
    skew = (third - 3.0 * mean * var - mean ** 3) / sd ** 3
    # Conditional on leaving the centre atom: a mean-zero two-point law with
    # E[Y^2] = v and E[Y^3] = tau has atoms a + b = tau/v, a*b = -v.
    v = 1.0 / (1.0 - center_mass)
    tau = skew * v
    s = tau / v
    root = math.sqrt(s * s + 4.0 * v)
    a, b = (s - root) / 2.0, (s + root) / 2.0
    pa = (1.0 - center_mass) * b / (b - a)
    pb = (1.0 - center_mass) * (-a) / (b - a)
    return ThreePoint(
        (mean + sd * a, mean, mean + sd * b),
        (pa, center_mass, pb),
    )


@dataclass(frozen=True)
class DGPSpec:
    """One cell's data-generating process.

    ``endogeneity[t][k]`` is the prescribed E[eps | T*=t, z=k]; ``errors[t][k]``
    is the three-point law actually sampled.  ``build_spec`` guarantees the two
    agree; specs assembled by hand (fault injection) need not.
    """

    q: float
    p_star: tuple[float, float]
    structural: StructuralParams
    endogeneity: tuple[tuple[float, float], tuple[float, float]]
    V: float
    W: float
    errors: tuple[tuple[ThreePoint, ThreePoint], tuple[ThreePoint, ThreePoint]]
    mode: str = "discrete"
    jitter: float = 0.0
    cell: int = 0
    name: str = ""

    @property
    def effective_jitter(self) -> float:
        return self.jitter if self.mode == "continuous" else 0.0

    def latent_prob(self, t_star: int, k: int) -> float:
        """P(T* = t_star | z = k)."""
        p = self.p_star[k]
        return p if t_star == 1 else 1.0 - p

    def report_prob(self, t: int, t_star: int) -> float:
        """P(T = t | T* = t_star)."""
        a0, a1 = self.structural.alpha0, self.structural.alpha1
        p1 = (1.0 - a1) if t_star == 1 else a0
        return p1 if t == 1 else 1.0 - p1

    def observed_p(self, k: int) -> float:
        """P(T = 1 | z = k)."""
        return sum(self.latent_prob(s, k) * self.report_prob(1, s) for s in (0, 1))

    def eps_moment(self, t_star: int, k: int, j: int) -> float:
        """E[eps^j | T*=t_star, z=k], jitter included, for j = 0..3."""
        d = self.errors[t_star][k]
        h2 = self.effective_jitter ** 2 / 3.0
        m1, m2, m3 = d.raw_moment(1), d.raw_moment(2), d.raw_moment(3)
        return (1.0, m1, m2 + h2, m3 + 3.0 * m1 * h2)[j]


def build_spec(q: float, p_star: Sequence[float], structural: StructuralParams,
               m1: Sequence[float], V: float, W: float, mode: str = "discrete",
               jitter: float = 0.0, cell: int = 0, name: str = "") -> DGPSpec:
    """Construct a DGP meeting every maintained restriction.

    ``m1[k]`` is E[eps | T*=1, z=k]; the T*=0 level is derived so that
    E[eps | z=k] = 0.  All four cells share second raw moment V and third
    raw moment W.
    """
    if not (0.0 < q < 1.0):
        raise SpecError(f"q must lie in (0, 1), got {q!r}")
    p_star = (float(p_star[0]), float(p_star[1]))
    for p in p_star:
        if not (0.0 < p < 1.0):
            raise SpecError(f"latent first-stage probabilities must lie in (0, 1), got {p!r}")
    if p_star[0] == p_star[1]:
        raise SpecError("p_star_0 == p_star_1: no first stage")
    if mode not in ("discrete", "continuous"):
        raise SpecError(f"mode must be 'discrete' or 'continuous', got {mode!r}")
    if jitter < 0:
        raise SpecError("jitter half-width must be >= 0")
    if mode == "continuous" and jitter == 0:
        raise SpecError("continuous mode needs a positive jitter half-width")

    m = [[0.0, 0.0], [float(m1[0]), float(m1[1])]]
    for k in (0, 1):
        m[0][k] = -m[1][k] * p_star[k] / (1.0 - p_star[k])
    worst = max(x * x for row in m for x in row)
    if V < worst or (V == worst and worst > 0):
        raise SpecError(f"V = {V!r} must exceed max m_tk^2 = {worst!r}")
    errors = tuple(
        tuple(three_point_distribution(m[t][k], V, W) for k in (0, 1)) for t in (0, 1)
    )
    spec = DGPSpec(
        q=float(q),
        p_star=p_star,
        structural=structural,
        endogeneity=((m[0][0], m[0][1]), (m[1][0], m[1][1])),
        V=float(V),
        W=float(W),
        errors=errors,
        mode=mode,
        jitter=float(jitter),
        cell=int(cell),
        name=name,
    )
    report = verify_assumptions(spec)
    if report.max_violation > 1e-10:
        raise SpecError(f"constructed spec violates restrictions: {report}")
    return spec


@dataclass(frozen=True, eq=False)
class LatentDraw:
    sample: Sample
    t_star: np.ndarray
    eps: np.ndarray


def simulate(spec: DGPSpec, n: int, seed: int) -> Sample:
    """Draw ``n`` rows.  Identical (spec, n, seed) gives identical output."""
    return simulate_latent(spec, n, seed).sample


def simulate_latent(spec: DGPSpec, n: int, seed: int) -> LatentDraw:
    """As :func:`simulate`, also returning the latent T* and eps.

    The uniform stream is consumed in a fixed order (z, T*, error atom,
    jitter, flip) regardless of mode, so discrete and continuous samples
    with the same seed share z, T* and T.
    """
    n = int(n)
    rng = np.random.Generator(np.random.Philox(int(seed)))
    z = (rng.random(n) < spec.q).astype(np.int64)
    p = np.where(z == 1, spec.p_star[1], spec.p_star[0])
    t_star = (rng.random(n) < p).astype(np.int64)
    u = rng.random(n)
    eps = np.empty(n)
    for ts in (0, 1):
        for k in (0, 1):
            sel = (t_star == ts) & (z == k)
            d = spec.errors[ts][k]
            cut = np.cumsum(d.probs)[:-1]
            idx = np.searchsorted(cut, u[sel], side="right")
            eps[sel] = np.asarray(d.points)[idx]
    v = rng.random(n)
    eps += spec.effective_jitter * (2.0 * v - 1.0)
    flip = rng.random(n)
    s = spec.structural
    rate = np.where(t_star == 1, s.alpha1, s.alpha0)
    t = np.where(flip < rate, 1 - t_star, t_star)
    y = s.c + s.beta * t_star + eps
    return LatentDraw(Sample(y, t, z, np.full(n, spec.cell)), t_star, eps)


# --- certification --------------------------------------------------------

@dataclass(frozen=True)
class AssumptionReport:
    mean_independence: float      # max_k |E[eps|z=k]|
    second_moment: float          # |E[eps^2|z=1] - E[eps^2|z=0]|
    third_moment: float           # |E[eps^3|z=1] - E[eps^3|z=0]|
    cell_moments: float           # max |raw moments of D[t][k] - (m_tk, V, W)|
    distribution: float           # negative mass or mass not summing to one
    first_stage: bool
    misclassification: bool
    endogeneity: float            # max over all four cells of |E[eps|T*=t, z=k]|
    supplied_endogeneity: float   # max_k |E[eps|T*=1, z=k]|, the user-set levels
    assumption4: bool
    families: dict = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        worst = max(self.mean_independence, self.second_moment, self.third_moment,
                    self.cell_moments, self.distribution)
        if not (self.first_stage and self.misclassification):
            worst = max(worst, math.inf)
        return worst

    def ok(self, tol: float = 1e-12) -> bool:
        return self.max_violation < tol


def verify_assumptions(spec: DGPSpec) -> AssumptionReport:
    """Evaluate every moment restriction analytically from the error laws."""
    cond = {
        j: [math.fsum(spec.latent_prob(t, k) * spec.eps_moment(t, k, j) for t in (0, 1))
            for k in (0, 1)]
        for j in (1, 2, 3)
    }
    mean_v = max(abs(x) for x in cond[1])
    second_v = abs(cond[2][1] - cond[2][0])
    third_v = abs(cond[3][1] - cond[3][0])
    cell_v = 0.0
    dist_v = 0.0
    for t in (0, 1):
        for k in (0, 1):
            d = spec.errors[t][k]
            target = (spec.endogeneity[t][k], spec.V, spec.W)
            for j, want in zip((1, 2, 3), target):
                cell_v = max(cell_v, abs(d.raw_moment(j) - want))
            dist_v = max(dist_v, abs(math.fsum(d.probs) - 1.0), -min(d.probs))
    means = [[spec.errors[t][k].raw_moment(1) for k in (0, 1)] for t in (0, 1)]
    endog = max(abs(x) for row in means for x in row)
    a4 = all(abs(means[t][0] - means[t][1]) <= 1e-12 for t in (0, 1))
    s = spec.structural
    return AssumptionReport(
        mean_independence=mean_v,
        second_moment=second_v,
        third_moment=third_v,
        cell_moments=cell_v,
        distribution=dist_v,
        first_stage=spec.p_star[0] != spec.p_star[1],
        misclassification=(s.alpha0 + s.alpha1 < 1.0),
        endogeneity=endog,
        supplied_endogeneity=max(abs(x) for x in means[1]),
        assumption4=a4,
        families={
            "E[eps|z]=0": mean_v,
            "E[eps^2|z] const": second_v,
            "E[eps^3|z] const": third_v,
            "cell moment match": cell_v,
            "valid distribution": dist_v,
        },
    )


# --- canonical configurations ---------------------------------------------

def c1(mode: str = "discrete", jitter: float = 0.0) -> DGPSpec:
    """Exogenous, error-free: q=0.5, p*=(0.3, 0.7), (c, beta, a0, a1)=(1, 2, 0.1, 0.2)."""
    return build_spec(0.5, (0.3, 0.7), StructuralParams(1.0, 2.0, 0.1, 0.2),
                      (0.0, 0.0), 0.0, 0.0, mode=mode, jitter=jitter, name="C1")


def c1_endog(mode: str = "discrete", jitter: float = 0.25) -> DGPSpec:
    """C1 structure with E[eps|T*=1, z] = 0.5, V = 2, W = 0.5."""
    return build_spec(0.5, (0.3, 0.7), StructuralParams(1.0, 2.0, 0.1, 0.2),
                      (0.5, 0.5), 2.0, 0.5, mode=mode,
                      jitter=jitter if mode == "continuous" else 0.0,
                      name="C1-endog")


def c_null(mode: str = "discrete", jitter: float = 0.25) -> DGPSpec:
    """C1-endog with beta = 0."""
    return build_spec(0.5, (0.3, 0.7), StructuralParams(1.0, 0.0, 0.1, 0.2),
                      (0.5, 0.5), 2.0, 0.5, mode=mode,
                      jitter=jitter if mode == "continuous" else 0.0,
                      name="C-null")


def shipped_configs() -> dict[str, DGPSpec]:
    return {
        "C1": c1(),
        "C1-continuous": c1("continuous", 0.5),
        "C1-endog": c1_endog(),
        "C1-endog-continuous": c1_endog("continuous"),
        "C-null": c_null(),
        "C-null-continuous": c_null("continuous"),
    }


# --- key = value config files ----------------------------------------------

_NUMERIC_KEYS = ("q", "p_star_0", "p_star_1", "c", "beta", "alpha0", "alpha1",
                 "m_10", "m_11", "V", "W", "jitter")


def dump_config(spec: DGPSpec) -> str:
    s = spec.structural
    lines = [
        CONFIG_TAG,
        f"name = {spec.name}",
        f"cell = {spec.cell}",
        f"q = {spec.q!r}",
        f"p_star_0 = {spec.p_star[0]!r}",
        f"p_star_1 = {spec.p_star[1]!r}",
        f"c = {s.c!r}",
        f"beta = {s.beta!r}",
        f"alpha0 = {s.alpha0!r}",
        f"alpha1 = {s.alpha1!r}",
        f"m_10 = {spec.endogeneity[1][0]!r}",
        f"m_11 = {spec.endogeneity[1][1]!r}",
        f"V = {spec.V!r}",
        f"W = {spec.W!r}",
        f"mode = {spec.mode}",
        f"jitter = {spec.jitter!r}",
    ]
    return "\n".join(lines) + "\n"


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def spec_from_config(values: dict, mode: Optional[str] = None) -> DGPSpec:
    """Build a spec from parsed config values.

    Keys ``d_<t><k>_points`` / ``d_<t><k>_probs`` replace the moment-matched
    error law of cell (T*=t, z=k) verbatim, bypassing validation, so that
    broken specs can be fed to ``verify_assumptions``.
    """
    try:
        num = {k: float(values[k]) for k in _NUMERIC_KEYS if k in values}
    except ValueError as exc:
        raise SpecError(f"non-numeric config value: {exc}") from None
    missing = [k for k in _NUMERIC_KEYS if k not in num and k != "jitter"]
    if missing:
        raise SpecError(f"config missing keys: {', '.join(missing)}")
    try:
        structural = StructuralParams(num["c"], num["beta"], num["alpha0"], num["alpha1"])
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    spec = build_spec(
        num["q"], (num["p_star_0"], num["p_star_1"]), structural,
        (num["m_10"], num["m_11"]), num["V"], num["W"],
        mode=mode or values.get("mode", "discrete"),
        jitter=num.get("jitter", 0.0),
        cell=int(values.get("cell", 0)),
        name=values.get("name", ""),
    )
    errors = [list(row) for row in spec.errors]
    touched = False
    for t in (0, 1):
        for k in (0, 1):
            pk, rk = f"d_{t}{k}_points", f"d_{t}{k}_probs"
            if pk in values or rk in values:
                if not (pk in values and rk in values):
                    raise SpecError(f"need both {pk} and {rk}")
                pts = tuple(float(x) for x in values[pk].split(","))
                prs = tuple(float(x) for x in values[rk].split(","))
                if len(pts) != 3 or len(prs) != 3:
                    raise SpecError(f"{pk}/{rk} need exactly three entries")
                errors[t][k] = ThreePoint(pts, prs)
                touched = True
    if touched:
        spec = replace(spec, errors=tuple(tuple(row) for row in errors))
    return spec


def load_config(path, mode: Optional[str] = None) -> DGPSpec:
    path = Path(path)
    return spec_from_config(parse_config(path.read_text(encoding="utf-8"), str(path)), mode)
