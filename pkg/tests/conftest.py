import itertools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from misclassiv import dgp
from misclassiv.core_types import StructuralParams

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


# --- random configurations ---------------------------------------------------

def random_structural(rng, beta_min=0.1, beta_max=5.0, alpha_sum=0.9, positive=False):
    while True:
        b = rng.uniform(beta_min if positive else -beta_max, beta_max)
        if abs(b) < beta_min:
            continue
        a0, a1 = rng.uniform(0.0, alpha_sum, 2)
        if a0 + a1 > alpha_sum:
            continue
        return StructuralParams(float(rng.uniform(-2, 2)), float(b), float(a0), float(a1))


def random_p_star(rng, gap=0.1):
    while True:
        ps = rng.uniform(0.15, 0.85, 2)
        if abs(ps[1] - ps[0]) >= gap:
            return float(ps[0]), float(ps[1])


def random_spec(rng, mode="discrete", endogenous=True, structural=None, p_star=None):
    s = structural or random_structural(rng)
    ps = p_star or random_p_star(rng)
    m1 = rng.uniform(-0.5, 0.5, 2) if endogenous else np.zeros(2)
    m = [-m1[k] * ps[k] / (1 - ps[k]) for k in (0, 1)] + list(m1)
    V = max(x * x for x in m) + rng.uniform(0.5, 2.0)
    W = rng.uniform(-2.0, 2.0)
    return dgp.build_spec(float(rng.uniform(0.2, 0.8)), ps, s, m1, V, W, mode=mode,
                          jitter=0.3 if mode == "continuous" else 0.0)


def joint_atoms(spec):
    """Enumerate the discrete joint law of (y, T, z) as (prob, y, t, z)
    rows directly from the DGP primitives."""
    s = spec.structural
    rows = []
    for k, t_star, t in itertools.product((0, 1), repeat=3):
        pz = spec.q if k == 1 else 1 - spec.q
        pts = spec.p_star[k] if t_star == 1 else 1 - spec.p_star[k]
        flip = (s.alpha1 if t_star == 1 else s.alpha0)
        pt = (1 - flip) if t == t_star else flip
        d = spec.errors[t_star][k]
        for e, pe in zip(d.points, d.probs):
            rows.append((pz * pts * pt * pe, s.c + s.beta * t_star + e, t, k))
    return rows


def joint_cov(rows, f):
    """Cov(f(y, t), z) under the enumerated law."""
    ef = math.fsum(p * f(y, t) for p, y, t, z in rows)
    ez = math.fsum(p * z for p, y, t, z in rows)
    efz = math.fsum(p * f(y, t) * z for p, y, t, z in rows)
    return efz - ef * ez


@pytest.fixture(scope="session")
def c1_population():
    from misclassiv.moments import population_moments
    return population_moments(dgp.c1())


@pytest.fixture(scope="session")
def c1_endog_sample():
    return dgp.simulate(dgp.c1_endog("continuous"), 200_000, 3)
