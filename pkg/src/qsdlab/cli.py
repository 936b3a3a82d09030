"""Command-line front end: configuration parsing, orchestration, artifacts.

Commands
--------
eigen      solve the eigenproblem; writes eigen.json, eta.csv, alpha.csv
evolve     evolve an initial law; writes curves.csv
simulate   Monte Carlo run; writes survival.csv, positions.csv
rates      certified rate table (kappa, kappa~, gap); writes rates.json
report     full decay report; writes report.json and curves.csv

Configuration is flat ``section.key = value`` text; command-line flags mirror
the keys and win over the file.  Outputs are written atomically (temp file
plus rename) with floats at 17 significant digits, so identical configurations
and seeds produce byte-identical artifacts.  Exit codes: 0 success, 1
validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import analytics, doob, montecarlo, spectral
from .grid_measure import (
    GridMeasure,
    build_grid,
    load_measure_csv,
    regrid,
    tv_distance,
    w1_distance,
)
from .potential import (
    be_constant,
    cdfi_rate,
    evaluate,
    quadratic_potential,
    shifted_power_potential,
    tabulated_from_csv,
    zero_potential,
)
from .spectral import ConvergenceError

__all__ = ["RunConfig", "parse_config_file", "validate", "run", "main"]

COMMANDS = ("eigen", "evolve", "simulate", "rates", "report")

DEFAULTS = {
    "example": None,                 # brownian | ou
    "example.N": 1.0,
    "example.lambda": 1.0,
    "potential.family": None,        # zero | quadratic | shifted-power | tabulated
    "potential.lambda": 1.0,
    "potential.delta": 3.0,
    "potential.table_path": None,
    "grid.x_min": None,
    "grid.x_max": None,
    "grid.n": 2000,
    "flow.t_max": 2.0,
    "flow.dt": None,
    "flow.samples": 41,
    "mc.dt": 1e-3,
    "mc.horizon": 1.0,
    "mc.particles": 10000,
    "mc.seed": None,
    "mc.resample": False,
    "initial.family": "uniform",     # uniform | gaussian-truncated | qsd | custom
    "initial.lo": None,
    "initial.hi": None,
    "initial.center": None,
    "initial.width": None,
    "initial.path": None,
    "rates.lambda0_lower": None,
    "rates.use_drift_form": True,
    "output": ".",
    "seed": 0,
}

_BOOL_KEYS = {"mc.resample", "rates.use_drift_form"}
_INT_KEYS = {"grid.n", "flow.samples", "mc.particles", "mc.seed", "seed"}
_STR_KEYS = {"example", "potential.family", "potential.table_path",
             "initial.family", "initial.path", "output"}


class RunConfig(dict):
    """Flat configuration mapping with the DEFAULTS schema."""

    @property
    def command(self):
        return self.get("command")


class FlowFailure(RuntimeError):
    """Numerical failure surfaced by a command (exit code 2)."""


def _coerce(key: str, raw: str):
    if key in _STR_KEYS:
        return raw
    if key in _BOOL_KEYS:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    return float(raw)


def parse_config_file(path) -> dict:
    """Parse flat ``key = value`` configuration text ('#' starts a comment)."""
    if not os.path.exists(path):
        raise ValueError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in DEFAULTS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, raw)
    return out


def validate(config: RunConfig) -> list[str]:
    """Return one diagnostic per violated invariant (empty list when valid)."""
    bad = []
    if config.get("command") not in COMMANDS:
        bad.append(f"command must be one of {COMMANDS}")
    example = config.get("example")
    family = config.get("potential.family")
    if example is None and family is None:
        bad.append("either example or potential.family must be set")
    if example is not None and example not in ("brownian", "ou"):
        bad.append("example must be 'brownian' or 'ou'")
    if family is not None and family not in ("zero", "quadratic", "shifted-power", "tabulated"):
        bad.append("potential.family must be zero|quadratic|shifted-power|tabulated")
    if family == "shifted-power" and not config.get("potential.delta", 0.0) > 2.0:
        bad.append("potential.delta must satisfy delta > 2 for the shifted-power family")
    if family == "quadratic" and not config.get("potential.lambda", 0.0) > 0.0:
        bad.append("potential.lambda must be positive")
    if family == "tabulated":
        path = config.get("potential.table_path")
        if not path or not os.path.exists(path):
            bad.append("potential.table_path must point to an existing CSV")
    if example is not None and not config.get("example.N", 1.0) > 0.0:
        bad.append("example.N must be positive")
    if config.get("grid.n", 0) < 3:
        bad.append("grid.n must be >= 3")
    xmin, xmax = config.get("grid.x_min"), config.get("grid.x_max")
    if xmin is not None and xmax is not None and not xmin < xmax:
        bad.append("grid.x_min must be < grid.x_max")
    if not config.get("flow.t_max", 0.0) > 0.0:
        bad.append("flow.t_max must be positive")
    if config.get("flow.dt") is not None and not config.get("flow.dt") > 0.0:
        bad.append("flow.dt must be positive")
    if config.get("flow.samples", 0) < 2:
        bad.append("flow.samples must be >= 2")
    if not config.get("mc.dt", 0.0) > 0.0:
        bad.append("mc.dt must be positive")
    if config.get("mc.dt", 0.0) > config.get("mc.horizon", 0.0):
        bad.append("mc.dt must not exceed mc.horizon")
    if config.get("mc.particles", 0) < 100:
        bad.append("mc.particles must be >= 100")
    fam = config.get("initial.family")
    if fam not in ("uniform", "gaussian-truncated", "qsd", "custom"):
        bad.append("initial.family must be uniform|gaussian-truncated|qsd|custom")
    if fam == "custom":
        path = config.get("initial.path")
        if not path or not os.path.exists(path):
            bad.append("initial.path must point to an existing CSV")
    return bad


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2) + "\n")


def _write_csv(path: str, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _build_problem(config: RunConfig):
    """Resolve (spec, grid) from the example or potential block."""
    example = config.get("example")
    n = config["grid.n"]
    if example == "brownian":
        half = config["example.N"]
        return zero_potential(domain=(-half, half)), build_grid(-half, half, n)
    if example == "ou":
        lam = config["example.lambda"]
        x_max = config.get("grid.x_max") or 8.0 / math.sqrt(lam)
        return quadratic_potential(lam), build_grid(0.0, x_max, n)
    family = config["potential.family"]
    if family == "zero":
        xmin = config.get("grid.x_min")
        xmax = config.get("grid.x_max")
        if xmin is None or xmax is None:
            raise ValueError("zero potential needs grid.x_min and grid.x_max")
        return zero_potential(domain=(xmin, xmax)), build_grid(xmin, xmax, n)
    if family == "quadratic":
        lam = config["potential.lambda"]
        x_max = config.get("grid.x_max") or 8.0 / math.sqrt(lam)
        return quadratic_potential(lam), build_grid(config.get("grid.x_min") or 0.0, x_max, n)
    if family == "shifted-power":
        delta = config["potential.delta"]
        x_max = config.get("grid.x_max") or 2.5
        return shifted_power_potential(delta), build_grid(0.0, x_max, n)
    if family == "tabulated":
        spec = tabulated_from_csv(config["potential.table_path"])
        xmin = config.get("grid.x_min")
        xmax = config.get("grid.x_max")
        if xmin is None or xmax is None:
            xmin, xmax = spec.domain
        return spec, build_grid(xmin, xmax, n)
    raise ValueError(f"unresolved potential family {family!r}")


def _initial_measure(config: RunConfig, spec, grid, eigen=None) -> GridMeasure:
    family = config["initial.family"]
    if family == "uniform":
        lo = config.get("initial.lo")
        hi = config.get("initial.hi")
        lo = grid.x_min if lo is None else lo
        hi = grid.x_max if hi is None else hi
        dens = ((grid.nodes >= lo) & (grid.nodes <= hi)).astype(float)
        return GridMeasure(grid, dens)
    if family == "gaussian-truncated":
        center = config.get("initial.center")
        width = config.get("initial.width")
        if center is None:
            center = 0.5 * (grid.x_min + grid.x_max)
        if width is None:
            width = 0.125 * (grid.x_max - grid.x_min)
        dens = np.exp(-((grid.nodes - center) ** 2) / (2.0 * width**2))
        return GridMeasure(grid, dens)
    if family == "qsd":
        if eigen is None:
            op = spectral.assemble_generator(spec, grid)
            eigen = spectral.principal_eigenpair(op)
        return spectral.qsd_from_eigen(eigen, spec, grid)
    if family == "custom":
        measure = load_measure_csv(config["initial.path"])
        if measure.grid != grid:
            measure = regrid(measure, grid)
        return measure
    raise ValueError(f"unresolved initial family {family!r}")


def _cmd_eigen(config: RunConfig, outdir: str) -> None:
    spec, grid = _build_problem(config)
    op = spectral.assemble_generator(spec, grid)
    lam0, lam1 = spectral.spectral_gap(op)
    eigen = spectral.principal_eigenpair(op)
    eigen = spectral.EigenPair(lambda0=eigen.lambda0, eta=eigen.eta, lambda1=lam1)
    alpha = spectral.qsd_from_eigen(eigen, spec, grid)
    _write_json(os.path.join(outdir, "eigen.json"), {
        "lambda0": eigen.lambda0,
        "lambda1": eigen.lambda1,
        "gap": lam1 - lam0,
        "normalization": eigen.normalization,
    })
    _write_csv(os.path.join(outdir, "eta.csv"), "x,eta", zip(grid.nodes, eigen.eta))
    _write_csv(os.path.join(outdir, "alpha.csv"), "x,density", zip(grid.nodes, alpha.density))


def _cmd_evolve(config: RunConfig, outdir: str) -> None:
    spec, grid = _build_problem(config)
    op = spectral.assemble_generator(spec, grid)
    eigen = spectral.principal_eigenpair(op)
    alpha = spectral.qsd_from_eigen(eigen, spec, grid)
    mu = _initial_measure(config, spec, grid, eigen)
    times = np.linspace(0.0, config["flow.t_max"], config["flow.samples"])
    dt = config.get("flow.dt") or doob.default_dt(grid, eigen.lambda0)
    states = doob.flow_curve(op, mu, times, dt, eigen=eigen)
    rows = [
        (s.t, tv_distance(s.mu_t, alpha), w1_distance(s.mu_t, alpha),
         s.chi2_to_beta, s.survival_weight, s.log_survival)
        for s in states
    ]
    _write_csv(os.path.join(outdir, "curves.csv"),
               "t,tv,w1,chi2,survival_weight,log_survival", rows)


def _cmd_simulate(config: RunConfig, outdir: str) -> None:
    spec, grid = _build_problem(config)
    mu = _initial_measure(config, spec, grid)
    seed = config.get("mc.seed")
    if seed is None:
        seed = config["seed"]
    sim = montecarlo.SimConfig(
        spec=spec,
        domain=spec.domain,
        dt=config["mc.dt"],
        horizon=config["mc.horizon"],
        n_particles=config["mc.particles"],
        seed=seed,
        resample=bool(config["mc.resample"]),
    )
    ensemble = montecarlo.simulate(sim, mu)
    _write_csv(os.path.join(outdir, "survival.csv"),
               "t,alive_fraction,log_survival", ensemble.survival_curve)
    rows = [(float(i), *row) for i, row in enumerate(ensemble.positions)]
    header = "particle_id," + ",".join(f"x{j+1}" for j in range(ensemble.positions.shape[1] if ensemble.positions.size else 1))
    _write_csv(os.path.join(outdir, "positions.csv"), header, rows)
    if ensemble.status != "ok":
        raise FlowFailure(f"simulation ended with status {ensemble.status}")


def _cmd_rates(config: RunConfig, outdir: str) -> None:
    spec, grid = _build_problem(config)
    op = spectral.assemble_generator(spec, grid)
    lam0, lam1 = spectral.spectral_gap(op)
    eigen = spectral.principal_eigenpair(op)
    from .potential import effective_second_derivative

    _, _, vpp = evaluate(spec, grid.nodes)
    kappa_classical = be_constant(np.asarray(vpp))
    kappa_effective = be_constant(effective_second_derivative(spec, eigen, grid))
    lam_low = config.get("rates.lambda0_lower")
    table = {
        "lambda0": lam0,
        "lambda1": lam1,
        "gap": lam1 - lam0,
        "kappa_classical_inf_Vpp": kappa_classical,
        "kappa_effective_inf_Wpp": kappa_effective,
        "lambda0_lower_used": lam_low if lam_low is not None else lam0,
        "kappa_tilde_basic": None,
        "kappa_tilde_refined": None,
    }
    lam_used = lam_low if lam_low is not None else lam0
    table["kappa_tilde_basic"] = cdfi_rate(spec, lam_used, grid, use_drift_form=False)
    if bool(config.get("rates.use_drift_form", True)):
        try:
            table["kappa_tilde_refined"] = cdfi_rate(spec, lam_used, grid, use_drift_form=True)
        except ValueError:
            table["kappa_tilde_refined"] = None
    _write_json(os.path.join(outdir, "rates.json"), table)
    width = max(len(k) for k in table)
    for key, val in table.items():
        print(f"{key.ljust(width)}  {val if val is None else format(val, '.12g')}")


def _cmd_report(config: RunConfig, outdir: str) -> None:
    spec, grid = _build_problem(config)
    mu = _initial_measure(config, spec, grid)
    times = np.linspace(0.0, config["flow.t_max"], config["flow.samples"])
    family = config.get("potential.family")
    is_cdfi = family == "shifted-power"
    kappa = None
    if config.get("example") == "brownian":
        kappa = (math.pi / (2.0 * config["example.N"])) ** 2
    elif config.get("example") == "ou":
        kappa = 2.0 * config["example.lambda"]
    rc = analytics.ReportConfig(
        label=config.get("example") or family,
        spec=spec,
        grid=grid,
        initial=mu,
        times=times,
        dt=config.get("flow.dt"),
        cdfi=is_cdfi,
        lambda0_lower=config.get("rates.lambda0_lower"),
        use_drift_form=bool(config.get("rates.use_drift_form", True)),
        kappa=kappa,
    )
    report = analytics.decay_report(rc)
    _write_json(os.path.join(outdir, "report.json"), report.to_dict())
    rows = zip(report.times, report.tv, report.w1, report.chi2,
               report.survival_weight, report.log_survival)
    _write_csv(os.path.join(outdir, "curves.csv"),
               "t,tv,w1,chi2,survival_weight,log_survival", rows)


_FLAG_TO_KEY = {
    "example": "example",
    "N": "example.N",
    "lam": "example.lambda",
    "potential": "potential.family",
    "delta": "potential.delta",
    "table_path": "potential.table_path",
    "x_min": "grid.x_min",
    "x_max": "grid.x_max",
    "n": "grid.n",
    "t_max": "flow.t_max",
    "dt": "flow.dt",
    "samples": "flow.samples",
    "mc_dt": "mc.dt",
    "horizon": "mc.horizon",
    "particles": "mc.particles",
    "resample": "mc.resample",
    "initial": "initial.family",
    "initial_lo": "initial.lo",
    "initial_hi": "initial.hi",
    "initial_center": "initial.center",
    "initial_width": "initial.width",
    "initial_path": "initial.path",
    "lambda0_lower": "rates.lambda0_lower",
    "output": "output",
    "seed": "seed",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsdlab",
        description="quasi-stationary distribution laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--output", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--example", choices=("brownian", "ou"), default=None)
        p.add_argument("--N", type=float, default=None)
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--potential", default=None,
                       choices=("zero", "quadratic", "shifted-power", "tabulated"))
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--table-path", dest="table_path", default=None)
        p.add_argument("--x-min", dest="x_min", type=float, default=None)
        p.add_argument("--x-max", dest="x_max", type=float, default=None)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--t-max", dest="t_max", type=float, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--mc-dt", dest="mc_dt", type=float, default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--particles", type=int, default=None)
        p.add_argument("--resample", action="store_const", const=True, default=None)
        p.add_argument("--initial", default=None,
                       choices=("uniform", "gaussian-truncated", "qsd", "custom"))
        p.add_argument("--initial-lo", dest="initial_lo", type=float, default=None)
        p.add_argument("--initial-hi", dest="initial_hi", type=float, default=None)
        p.add_argument("--initial-center", dest="initial_center", type=float, default=None)
        p.add_argument("--initial-width", dest="initial_width", type=float, default=None)
        p.add_argument("--initial-path", dest="initial_path", default=None)
        p.add_argument("--lambda0-lower", dest="lambda0_lower", type=float, default=None)
    return parser


def _assemble_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig(DEFAULTS)
    config["command"] = args.command
    if args.config is not None:
        config.update(parse_config_file(args.config))
    for flag, key in _FLAG_TO_KEY.items():
        val = getattr(args, flag, None)
        if val is not None:
            config[key] = val
    # --lambda names the quadratic coefficient wherever it appears
    if args.lam is not None:
        config["potential.lambda"] = args.lam
    # --dt is the step of whatever the command evolves
    if args.command == "simulate" and args.dt is not None:
        config["mc.dt"] = args.dt
    return config


_COMMAND_IMPL = {
    "eigen": _cmd_eigen,
    "evolve": _cmd_evolve,
    "simulate": _cmd_simulate,
    "rates": _cmd_rates,
    "report": _cmd_report,
}


def run(argv=None) -> int:
    """Parse arguments, run one command, and map failures to exit codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        config = _assemble_config(args)
        diagnostics = validate(config)
        if diagnostics:
            for diag in diagnostics:
                print(f"qsdlab: {diag}", file=sys.stderr)
            return 1
        outdir = config["output"]
        os.makedirs(outdir, exist_ok=True)
        _COMMAND_IMPL[config["command"]](config, outdir)
        return 0
    except ValueError as exc:
        print(f"qsdlab: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, doob.FlowError, FlowFailure) as exc:
        print(f"qsdlab: numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
