"""Command-line front end.

    misclassiv simulate --dgp-config C1-endog --n 100000 --seed 3 --output s.csv
    misclassiv bounds   --input s.csv --grid-step 0.005 --output b.txt
    misclassiv estimate --input s.csv [--one-sided a0|a1]
    misclassiv gmm      --input s.csv
    misclassiv verify   [--dgp-config FILE ...]
    misclassiv oracle   --dgp-config C1-endog

``--dgp-config`` takes a key = value file or the name of a shipped
configuration.  Reports are flat ``key = value`` text, written to stdout and,
with ``--output``, to that path; ``bounds`` also writes one
``<output>.cell<c>.mask.csv`` per cell.  Every file starts with a format tag
and a metadata block.  Numbers in reports carry 9 significant digits;
sample files keep full precision so that they round-trip exactly.

Exit status: 0 success (warnings included), 2 input error, 3 identification
failure, 4 internal invariant breach.  Errors go to stderr as one JSON line.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core_types import (
    IdentificationError,
    InputError,
    InvariantBreach,
    MisclassError,
    Sample,
    SpecError,
    validate_sample,
)
from .dgp import PRNG_NAME, DGPSpec, load_config, shipped_configs, simulate, verify_assumptions
from .gmm import estimate_cell
from .moments import empirical_law, empirical_moments, population_law, population_moments
from .oracle import DiscreteInstance, MAX_SUPPORT, compare_with_analytic, mahajan_incompatibility_check
from .partial_id import alpha_grid, beta_interval_first_order, sharp_set_grid
from .point_id import (
    one_sided_point_estimate,
    recover_intercept,
    solve_theta,
    theta_to_structural,
)

SUBCOMMANDS = ("simulate", "bounds", "estimate", "gmm", "verify", "oracle")
SAMPLE_TAG = "# format: misclassiv-sample/1"
REPORT_TAG = "# format: misclassiv-report/1"
MASK_TAG = "# format: misclassiv-mask/1"
POPULATION_ZERO_TOL = 1e-8

EXIT_OK, EXIT_INPUT, EXIT_IDENT, EXIT_BREACH = 0, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    input: Optional[str] = None
    output: Optional[str] = None
    grid_step: float = 0.005
    mean_tol: Optional[float] = None
    theta1_tol: Optional[float] = None
    seed: int = 0
    n: int = 10_000
    dgp_config: tuple[str, ...] = ()
    cell: Optional[int] = None
    one_sided: Optional[str] = None
    mode: Optional[str] = None

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise InputError(f"unknown subcommand {self.subcommand!r}")
        for name in ("mean_tol", "theta1_tol"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise InputError(f"{name} must be positive, got {v!r}")
        if not (0.0 < self.grid_step <= 0.1):
            raise InputError(f"grid step must lie in (0, 0.1], got {self.grid_step!r}")
        if self.n <= 0:
            raise InputError(f"n must be positive, got {self.n!r}")
        if self.seed < 0:
            raise InputError(f"seed must be non-negative, got {self.seed!r}")
        if self.one_sided not in (None, "a0", "a1"):
            raise InputError(f"--one-sided takes a0 or a1, got {self.one_sided!r}")
        if self.mode not in (None, "discrete", "continuous"):
            raise InputError(f"--mode takes discrete or continuous, got {self.mode!r}")


# --- formatting -------------------------------------------------------------

def fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    if isinstance(x, (tuple, list, np.ndarray)):
        return ",".join(fmt(v) for v in x) if len(x) else "none"
    return str(x)


def metadata(cfg: RunConfig, tag: str, **extra) -> list[str]:
    rows = [
        tag,
        f"# version: misclassiv {__version__}",
        f"# subcommand: {cfg.subcommand}",
        f"# prng: {PRNG_NAME}",
        f"# seed: {cfg.seed}",
        f"# grid_step: {fmt(cfg.grid_step)}",
        f"# mean_tol: {'auto' if cfg.mean_tol is None else fmt(cfg.mean_tol)}",
        f"# theta1_tol: {'auto' if cfg.theta1_tol is None else fmt(cfg.theta1_tol)}",
        f"# input: {cfg.input or 'none'}",
        f"# dgp_config: {fmt(list(cfg.dgp_config))}",
    ]
    rows += [f"# {k}: {fmt(v)}" for k, v in extra.items()]
    return rows


class Report:
    def __init__(self):
        self.rows: list[str] = []

    def put(self, key: str, value) -> None:
        self.rows.append(f"{key} = {fmt(value)}")

    def text(self, header: list[str]) -> str:
        return "\n".join(header + self.rows) + "\n"


# --- data files ---------------------------------------------------------------

def ingest(path) -> Sample:
    """Read a comma-separated sample with header y,t,z[,cell].

    Lines starting with '#' are skipped; error messages use physical line
    numbers.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such input file: {path}")
    header = None
    cols = None
    ys, ts, zs, cs = [], [], [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if header is None:
                header = fields
                missing = [c for c in ("y", "t", "z") if c not in header]
                if missing:
                    raise InputError(f"missing column {', '.join(missing)} in header at line {lineno}")
                cols = {name: header.index(name) for name in ("y", "t", "z", "cell") if name in header}
                continue
            if len(fields) != len(header):
                raise InputError(f"expected {len(header)} fields, got {len(fields)} at line {lineno}")
            try:
                y = float(fields[cols["y"]])
            except ValueError:
                raise InputError(f"unparseable numeric y at line {lineno}") from None
            if not math.isfinite(y):
                raise InputError(f"y not finite at line {lineno}")
            row = [y]
            for name in ("t", "z"):
                try:
                    v = float(fields[cols[name]])
                except ValueError:
                    raise InputError(f"unparseable numeric {name} at line {lineno}") from None
                if v not in (0.0, 1.0):
                    raise InputError(f"{name} not binary at line {lineno}")
                row.append(int(v))
            c = 0
            if "cell" in cols:
                try:
                    c = int(fields[cols["cell"]])
                except ValueError:
                    raise InputError(f"unparseable cell id at line {lineno}") from None
                if c < 0:
                    raise InputError(f"negative cell id at line {lineno}")
            ys.append(row[0])
            ts.append(row[1])
            zs.append(row[2])
            cs.append(c)
    if header is None:
        raise InputError(f"{path}: no header row")
    if not ys:
        raise InputError(f"{path}: no data rows")
    return Sample(ys, ts, zs, cs)


def sample_text(sample: Sample, header: list[str]) -> str:
    # repr of a Python float is the shortest string that round-trips exactly
    body = [f"{y!r},{t},{z},{c}" for y, t, z, c in
            zip(sample.y.tolist(), sample.t.tolist(), sample.z.tolist(), sample.cell.tolist())]
    return "\n".join(header + ["y,t,z,cell"] + body) + "\n"


def resolve_dgp(ref: str, mode: Optional[str] = None) -> DGPSpec:
    shipped = shipped_configs()
    if ref in shipped and not Path(ref).exists():
        return shipped[ref]
    path = Path(ref)
    if not path.is_file():
        raise InputError(f"no DGP config file or shipped config named {ref!r} "
                         f"(shipped: {', '.join(shipped)})")
    return load_config(path, mode)


def _write(path: Optional[str], text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")


# --- subcommands ----------------------------------------------------------------

def _cells(sample: Sample, cfg: RunConfig) -> list[int]:
    cells = sample.cells()
    if cfg.cell is not None:
        if cfg.cell not in cells:
            raise InputError(f"cell {cfg.cell} not present (cells: {fmt(cells)})")
        return [cfg.cell]
    return cells


def _data_source(cfg: RunConfig):
    """Either ('sample', Sample) or ('population', DGPSpec)."""
    if cfg.input:
        return "sample", ingest(cfg.input)
    if cfg.dgp_config:
        return "population", resolve_dgp(cfg.dgp_config[0], cfg.mode)
    raise InputError(f"{cfg.subcommand} needs --input or --dgp-config")


def _validity_warnings(sample: Sample, cell: int) -> tuple[str, ...]:
    return validate_sample(sample.subset(cell))[cell].flags


def cmd_simulate(cfg: RunConfig, out) -> int:
    spec = resolve_dgp(cfg.dgp_config[0], cfg.mode) if cfg.dgp_config else shipped_configs()["C1-endog"]
    sample = simulate(spec, cfg.n, cfg.seed)
    header = metadata(cfg, SAMPLE_TAG, n=cfg.n, dgp=spec.name or "unnamed", mode=spec.mode)
    text = sample_text(sample, header)
    if cfg.output:
        _write(cfg.output, text)
        out.write(f"wrote {len(sample)} rows to {cfg.output}\n")
    else:
        out.write(text)
    return EXIT_OK


def _write_mask(path: str, sharp, cfg: RunConfig, cell: int) -> None:
    rows = metadata(cfg, MASK_TAG, cell=cell) + ["alpha0,alpha1,feasible"]
    rows += [f"{fmt(a0)},{fmt(a1)},{int(ok)}" for a0, a1, ok in sharp.points()]
    _write(path, "\n".join(rows) + "\n")


def cmd_bounds(cfg: RunConfig, out) -> int:
    kind, data = _data_source(cfg)
    rep = Report()
    rep.put("source", kind)
    if kind == "population":
        if data.mode != "discrete":
            raise InputError("population bounds need a discrete-mode DGP config")
        units = [(data.cell, population_law(data), population_moments(data), ())]
    else:
        units = [(c, empirical_law(data, c), empirical_moments(data, c), _validity_warnings(data, c))
                 for c in _cells(data, cfg)]
    for c, law, mom, warn in units:
        pre = f"cell{c}."
        sharp = sharp_set_grid(law, cfg.grid_step, cfg.mean_tol)
        lo, hi = beta_interval_first_order(mom)
        rep.put(pre + "n", mom.n)
        rep.put(pre + "p0", mom.p0)
        rep.put(pre + "p1", mom.p1)
        rep.put(pre + "alpha0_max", sharp.rectangle.alpha0_max)
        rep.put(pre + "alpha1_max", sharp.rectangle.alpha1_max)
        rep.put(pre + "beta_first_order_lo", lo)
        rep.put(pre + "beta_first_order_hi", hi)
        rep.put(pre + "case", sharp.case)
        rep.put(pre + "restricting_k", list(sharp.restricting_k))
        rep.put(pre + "theta1", sharp.theta1)
        rep.put(pre + "grid_points", int(sharp.evaluated.sum()))
        rep.put(pre + "feasible_points", sharp.n_feasible)
        rep.put(pre + "beta_sharp_lo", sharp.beta_interval[0])
        rep.put(pre + "beta_sharp_hi", sharp.beta_interval[1])
        mask_path = f"{cfg.output}.cell{c}.mask.csv" if cfg.output else None
        if mask_path:
            _write_mask(mask_path, sharp, cfg, c)
        rep.put(pre + "mask_file", mask_path)
        rep.put(pre + "warnings", list(warn))
    text = rep.text(metadata(cfg, REPORT_TAG))
    out.write(text)
    _write(cfg.output, text)
    return EXIT_OK


def _point_report(rep: Report, pre: str, est, mom) -> None:
    rep.put(pre + "branch", est.branch)
    rep.put(pre + "beta", est.beta)
    rep.put(pre + "alpha0", est.alpha0)
    rep.put(pre + "alpha1", est.alpha1)
    th = est.theta
    rep.put(pre + "theta", [th.theta1, th.theta2, th.theta3])
    if est.quadratic is not None:
        rep.put(pre + "A", est.quadratic.A)
        rep.put(pre + "B", est.quadratic.B)
        rep.put(pre + "discriminant", est.quadratic.discriminant)
    c = None
    if est.alpha0 is not None and est.alpha0 + est.alpha1 < 1.0:
        c = recover_intercept(mom, est.beta, est.alpha0, est.alpha1)
    rep.put(pre + "intercept", c)


def cmd_estimate(cfg: RunConfig, out) -> int:
    kind, data = _data_source(cfg)
    rep = Report()
    rep.put("source", kind)
    if kind == "population":
        units = [(data.cell, population_moments(data), None)]
    else:
        units = [(c, empirical_moments(data, c), c) for c in _cells(data, cfg)]
    for c, mom, sample_cell in units:
        pre = f"cell{c}."
        theta = solve_theta(mom)
        warn: list[str] = []
        if cfg.one_sided:
            est = one_sided_point_estimate(theta.theta1, theta.theta2, cfg.one_sided, theta.theta3)
        else:
            if cfg.theta1_tol is not None:
                tol = cfg.theta1_tol
            elif sample_cell is None:
                tol = POPULATION_ZERO_TOL
            else:
                tol = 3.0 * estimate_cell(data, sample_cell).theta_se[0]
            rep.put(pre + "theta1_zero_tol", tol)
            est = theta_to_structural(theta, zero_tol=tol, check_range=sample_cell is None)
        if sample_cell is not None:
            warn += _validity_warnings(data, sample_cell)
        warn += est.warnings
        rep.put(pre + "n", mom.n)
        _point_report(rep, pre, est, mom)
        rep.put(pre + "warnings", warn)
    text = rep.text(metadata(cfg, REPORT_TAG))
    out.write(text)
    _write(cfg.output, text)
    return EXIT_OK


def cmd_gmm(cfg: RunConfig, out) -> int:
    if not cfg.input:
        raise InputError("gmm needs --input")
    sample = ingest(cfg.input)
    rep = Report()
    for c in _cells(sample, cfg):
        pre = f"cell{c}."
        res = estimate_cell(sample, c)
        mom = empirical_moments(sample, c)
        rep.put(pre + "n", res.n)
        _point_report(rep, pre, res.structural, mom)
        rep.put(pre + "theta_se", res.theta_se)
        rep.put(pre + "kappa", res.kappa)
        if res.se.available:
            rep.put(pre + "se_beta", res.se.se[0])
            rep.put(pre + "se_alpha0", res.se.se[1])
            rep.put(pre + "se_alpha1", res.se.se[2])
        else:
            rep.put(pre + "se", "unavailable")
            rep.put(pre + "se_diagnostic", res.se.diagnostic)
        rep.put(pre + "orthogonality", res.orthogonality)
        rep.put(pre + "warnings", list(res.warnings) + list(_validity_warnings(sample, c)))
    text = rep.text(metadata(cfg, REPORT_TAG))
    out.write(text)
    _write(cfg.output, text)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out) -> int:
    if cfg.dgp_config:
        specs = [(ref, resolve_dgp(ref, cfg.mode)) for ref in cfg.dgp_config]
    else:
        specs = list(shipped_configs().items())
    rep = Report()
    any_warning = False
    for i, (ref, spec) in enumerate(specs):
        pre = f"config{i}."
        r = verify_assumptions(spec)
        ok = r.ok()
        any_warning |= not ok
        rep.put(pre + "ref", ref)
        rep.put(pre + "name", spec.name or "unnamed")
        rep.put(pre + "mode", spec.mode)
        for fam, v in r.families.items():
            rep.put(pre + "violation." + fam.replace(" ", "_"), v)
        rep.put(pre + "max_violation", r.max_violation)
        rep.put(pre + "endogeneity", r.endogeneity)
        rep.put(pre + "supplied_endogeneity", r.supplied_endogeneity)
        rep.put(pre + "z_invariant_error_means", r.assumption4)
        rep.put(pre + "status", "ok" if ok else "WARNING")
    rep.put("warning", any_warning)
    text = rep.text(metadata(cfg, REPORT_TAG))
    out.write(text)
    _write(cfg.output, text)
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, out) -> int:
    kind, data = _data_source(cfg)
    if kind == "population":
        if data.mode != "discrete":
            raise InputError("oracle needs a discrete-mode DGP config")
        law = population_law(data)
    else:
        cells = _cells(data, cfg)
        law = empirical_law(data, cells[0])
    support = np.unique(np.concatenate([c.values for c in law.cells.values()]))
    if len(support) > MAX_SUPPORT:
        raise InputError(f"oracle needs at most {MAX_SUPPORT} support points, got {len(support)}")
    inst = DiscreteInstance.from_law(law)
    sharp = sharp_set_grid(law, cfg.grid_step, cfg.mean_tol)
    g0, g1 = alpha_grid(sharp.rectangle, cfg.grid_step)
    cmp = compare_with_analytic(inst, g0, g1)
    rep = Report()
    rep.put("source", kind)
    rep.put("support_points", len(support))
    rep.put("grid_points", cmp.analytic.size)
    rep.put("analytic_feasible", int(cmp.analytic.sum()))
    rep.put("bruteforce_feasible", int(cmp.bruteforce.sum()))
    rep.put("checked_off_boundary", cmp.checked)
    rep.put("disagreements_off_boundary", cmp.disagreements)
    rep.put("disagreements_on_boundary", cmp.boundary_disagreements)
    if kind == "population":
        chk = mahajan_incompatibility_check(data.p_star[0], data.p_star[1], data.endogeneity[1][0])
        rep.put("incompat.determinant", float(chk.determinant))
        rep.put("incompat.rank", chk.rank)
        rep.put("incompat.residual", [float(x) for x in chk.residual])
        rep.put("incompat.consistent", chk.consistent)
        rep.put("incompat.branch", chk.branch)
    text = rep.text(metadata(cfg, REPORT_TAG))
    out.write(text)
    _write(cfg.output, text)
    if cmp.disagreements:
        raise InvariantBreach(f"oracle disagrees with analytic rule at {cmp.disagreements} "
                              "grid points away from the boundary")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
    "estimate": cmd_estimate,
    "gmm": cmd_gmm,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
}


def run(cfg: RunConfig, out=None) -> int:
    return COMMANDS[cfg.subcommand](cfg, out or sys.stdout)


# --- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input")
    common.add_argument("--output")
    common.add_argument("--grid-step", type=float, default=0.005)
    common.add_argument("--mean-tol", type=float)
    common.add_argument("--theta1-tol", type=float)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--n", type=int, default=10_000)
    common.add_argument("--dgp-config", action="append", default=[])
    common.add_argument("--cell", type=int)
    common.add_argument("--one-sided", choices=("a0", "a1"))
    common.add_argument("--mode", choices=("discrete", "continuous"))
    parser = argparse.ArgumentParser(prog="misclassiv", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"misclassiv {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _fail(exc: BaseException, code: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": code, "exit": status, "message": str(exc)},
                                sort_keys=True) + "\n")
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            subcommand=args.subcommand, input=args.input, output=args.output,
            grid_step=args.grid_step, mean_tol=args.mean_tol, theta1_tol=args.theta1_tol,
            seed=args.seed, n=args.n, dgp_config=tuple(args.dgp_config), cell=args.cell,
            one_sided=args.one_sided, mode=args.mode,
        )
        return run(cfg)
    except InvariantBreach as exc:
        return _fail(exc, exc.code, EXIT_BREACH)
    except IdentificationError as exc:
        return _fail(exc, exc.code, EXIT_IDENT)
    except (InputError, SpecError) as exc:
        return _fail(exc, exc.code, EXIT_INPUT)
    except MisclassError as exc:
        return _fail(exc, exc.code, EXIT_INPUT)
    except OSError as exc:
        return _fail(exc, "IO", EXIT_INPUT)
    except Exception as exc:  # anything unexpected is an internal fault
        return _fail(exc, "INTERNAL", EXIT_BREACH)


if __name__ == "__main__":
    sys.exit(main())
