"""Analytic feasibility rule against the brute-force mixture LP.

Draws random discrete laws (from random DGPs and from Dirichlet masses on a
random support), evaluates both rules on a grid over the first-stage
rectangle and counts disagreements away from and on the boundary band.

    python scripts/oracle_sweep.py --instances 50 --grid 21 --method highs
"""
import argparse
import time

import numpy as np

from misclassiv import dgp
from misclassiv.core_types import SpecError, StructuralParams
from misclassiv.moments import population_law
from misclassiv.oracle import DiscreteInstance, compare_with_analytic

KEYS = ((0, 0), (0, 1), (1, 0), (1, 1))


def dirichlet_instance(rng, size):
    sup = np.sort(rng.choice(np.arange(-60, 61), size, replace=False)) / 6
    masses = {key: rng.dirichlet(np.full(size, 0.7)) for key in KEYS}
    p = np.sort(rng.uniform(0.1, 0.9, 2))
    return DiscreteInstance(sup, masses, (float(p[0]), float(p[1])))


def dgp_instance(rng):
    while True:
        a0, a1 = rng.uniform(0, 0.45, 2)
        ps = np.sort(rng.uniform(0.15, 0.85, 2))
        if ps[1] - ps[0] < 0.1:
            continue
        s = StructuralParams(0.0, float(rng.uniform(-3, 3)), float(a0), float(a1))
        m1 = rng.uniform(-0.5, 0.5, 2)
        m = [-m1[k] * ps[k] / (1 - ps[k]) for k in (0, 1)] + list(m1)
        try:
            spec = dgp.build_spec(0.5, tuple(ps), s, m1, max(x * x for x in m) + 1.0,
                                  float(rng.uniform(-2, 2)))
        except SpecError:
            continue
        return DiscreteInstance.from_law(population_law(spec))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--grid", type=int, default=21)
    ap.add_argument("--support", type=int, default=12)
    ap.add_argument("--method", default="greedy", choices=("greedy", "highs"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    off = on = checked = 0
    t0 = time.perf_counter()
    for i in range(args.instances):
        inst = dgp_instance(rng) if i % 2 == 0 else dirichlet_instance(rng, args.support)
        g0 = np.linspace(0.0, min(inst.p), args.grid)
        g1 = np.linspace(0.0, 1.0 - max(inst.p), args.grid)
        cmp = compare_with_analytic(inst, g0, g1, args.method)
        off += cmp.disagreements
        on += cmp.boundary_disagreements
        checked += cmp.checked
    print(f"{args.instances} instances, {args.grid}x{args.grid} grid, method {args.method}")
    print(f"off-boundary points checked {checked}, disagreements {off}; on-boundary disagreements {on}")
    print(f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
