"""Command line experiment runner.

Reads an INI configuration, runs one of ``simulate``, ``sweep``, ``certify``,
``spectrum`` or ``model-info`` and writes CSV artifacts (plus gnuplot scripts
and PNG figures with ``--emit-plots``).
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .certification import (
    GramianVariant,
    bstar_graph_bound,
    continuous_decay_rate,
    forced_bound_ratio,
    hautus_scan,
    observability_gramian,
    transfer_norm_scan,
)
from .diagnostics import InitialPolicy, fit_decay_rate, initial_state, ledger_residuals, sweep_uniformity
from .exceptions import (
    ConfigError,
    DegenerateFitError,
    ModelBuildError,
    SimulationAborted,
    SolverError,
    StepBudgetExceeded,
    ViscousMidpointError,
)
from .io import write_csv
from .models import bandwidths, build_model, parse_xi, smooth_initial_state
from .operator_core import validate_model
from .schemes import DEFAULT_STEP_BUDGET, SchemeId, num_steps_for, simulate
from .spectral import decompose

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MODEL = 4
EXIT_BUDGET = 5
EXIT_NUMERICAL = 6

EXIT_CODES_HELP = """exit codes:
  0  success
  1  unexpected internal error
  2  usage error (unknown command or bad flag)
  3  malformed or inconsistent configuration
  4  model build error (off-grid damper, even numerator, n too small, ...)
  5  step budget exceeded
  6  numerical failure (singular solve, non-finite state, degenerate fit)

On failure a single JSON line {"error": ..., "code": ..., "message": ...} is
written to stderr."""

COMMANDS = ("simulate", "sweep", "certify", "spectrum", "model-info")
Z0_POLICIES = ("smooth", "highest-mode", "random-seeded")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "wave"
    n: int = 100
    xi: str = "1/2"
    alpha: float = 1.0
    allow_even_p: bool = False
    scheme: SchemeId = SchemeId.VISCOUS_DAMPED
    dt: float | None = None
    dt_list: tuple = ()
    T: float = 10.0
    z0_policy: str = "smooth"
    seed: int = 0
    max_steps: int = DEFAULT_STEP_BUDGET
    hautus: bool = False
    hautus_omega_min: float | None = None
    hautus_omega_max: float | None = None
    hautus_points: int | None = None
    transfer: bool = False
    beta_list: tuple = (1.0,)
    transfer_omega_min: float = -100.0
    transfer_omega_max: float = 100.0
    transfer_points: int = 2001
    gramian_variants: tuple = ()
    gramian_dt_list: tuple = ()
    gramian_T: float = 4.0
    delta: float = 1.0
    forced: bool = False
    forced_dt_list: tuple = ()
    forced_T: float = 4.0
    forced_samples: int = 50
    directory: str = "out"
    emit_plots: bool = False
    threads: int = 1

    def model(self):
        return build_model(self.kind, self.n, self.xi, self.alpha, self.allow_even_p)


_KNOWN = {
    "model": {"kind", "n", "xi", "alpha", "allow_even_p"},
    "run": {"scheme", "dt", "dt_list", "t", "z0_policy", "seed", "max_steps"},
    "certify": {
        "hautus", "hautus_omega_min", "hautus_omega_max", "hautus_points",
        "transfer", "beta_list", "transfer_omega_min", "transfer_omega_max", "transfer_points",
        "gramian_variants", "gramian_dt_list", "gramian_t", "delta",
        "forced", "forced_dt_list", "forced_t", "forced_samples",
    },
    "output": {"directory", "emit_plots"},
}


def _floats(text, key):
    try:
        vals = tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} as a list of numbers") from exc
    if not vals:
        raise ConfigError(f"{key}: empty list")
    return vals


def _positive_distinct(vals, key):
    if any(not v > 0 for v in vals):
        raise ConfigError(f"{key}: entries must be positive")
    if len(set(vals)) != len(vals):
        raise ConfigError(f"{key}: entries must be distinct")
    return vals


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment configuration file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {' '.join(str(exc).split())}") from exc
    return config_from_parser(parser)


def config_from_parser(parser: configparser.ConfigParser) -> ExperimentConfig:
    if not parser.has_section("model"):
        raise ConfigError("missing [model] section")
    for sec in parser.sections():
        if sec not in _KNOWN:
            raise ConfigError(f"unknown section [{sec}]")
        unknown = set(parser[sec]) - _KNOWN[sec]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")

    def get(sec, key, conv, default):
        if not parser.has_option(sec, key):
            return default
        raw = parser.get(sec, key)
        try:
            if conv is bool:
                return parser.getboolean(sec, key)
            return conv(raw)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: invalid value {raw!r}") from exc

    kw = {}
    kind = get("model", "kind", str, None)
    if kind is None:
        raise ConfigError("[model] kind is required")
    if kind not in ("wave", "beam"):
        raise ConfigError(f"[model] kind must be wave or beam, got {kind!r}")
    kw["kind"] = kind
    kw["n"] = get("model", "n", int, 100)
    xi = get("model", "xi", str, "1/2")
    try:
        parse_xi(xi)
    except ModelBuildError as exc:
        raise ConfigError(f"[model] {exc}") from exc
    kw["xi"] = xi
    kw["alpha"] = get("model", "alpha", float, 1.0)
    kw["allow_even_p"] = get("model", "allow_even_p", bool, False)

    scheme = get("run", "scheme", str, SchemeId.VISCOUS_DAMPED.value)
    try:
        kw["scheme"] = SchemeId(scheme)
    except ValueError as exc:
        choices = ", ".join(s.value for s in SchemeId)
        raise ConfigError(f"[run] scheme must be one of {choices}, got {scheme!r}") from exc
    dt = get("run", "dt", float, None)
    if dt is not None and not dt > 0:
        raise ConfigError("[run] dt must be positive")
    kw["dt"] = dt
    if parser.has_option("run", "dt_list"):
        kw["dt_list"] = _positive_distinct(_floats(parser.get("run", "dt_list"), "[run] dt_list"),
                                           "[run] dt_list")
    kw["T"] = get("run", "t", float, 10.0)
    if not kw["T"] > 0:
        raise ConfigError("[run] T must be positive")
    policy = get("run", "z0_policy", str, "smooth")
    if policy not in Z0_POLICIES:
        raise ConfigError(f"[run] z0_policy must be one of {', '.join(Z0_POLICIES)}, got {policy!r}")
    kw["z0_policy"] = policy
    kw["seed"] = get("run", "seed", int, 0)
    kw["max_steps"] = get("run", "max_steps", int, DEFAULT_STEP_BUDGET)
    if kw["max_steps"] < 1:
        raise ConfigError("[run] max_steps must be at least 1")

    kw["hautus"] = get("certify", "hautus", bool, False)
    kw["hautus_omega_min"] = get("certify", "hautus_omega_min", float, None)
    kw["hautus_omega_max"] = get("certify", "hautus_omega_max", float, None)
    kw["hautus_points"] = get("certify", "hautus_points", int, None)
    kw["transfer"] = get("certify", "transfer", bool, False)
    if parser.has_option("certify", "beta_list"):
        kw["beta_list"] = _positive_distinct(
            _floats(parser.get("certify", "beta_list"), "[certify] beta_list"), "[certify] beta_list")
    kw["transfer_omega_min"] = get("certify", "transfer_omega_min", float, -100.0)
    kw["transfer_omega_max"] = get("certify", "transfer_omega_max", float, 100.0)
    kw["transfer_points"] = get("certify", "transfer_points", int, 2001)
    if kw["transfer_points"] < 2 or not kw["transfer_omega_max"] > kw["transfer_omega_min"]:
        raise ConfigError("[certify] transfer grid needs >= 2 points on a non-empty interval")
    if parser.has_option("certify", "gramian_variants"):
        names = parser.get("certify", "gramian_variants").replace(",", " ").split()
        try:
            kw["gramian_variants"] = tuple(GramianVariant(v) for v in names)
        except ValueError as exc:
            choices = ", ".join(v.value for v in GramianVariant)
            raise ConfigError(f"[certify] gramian_variants must be among {choices}") from exc
    if parser.has_option("certify", "gramian_dt_list"):
        kw["gramian_dt_list"] = _positive_distinct(
            _floats(parser.get("certify", "gramian_dt_list"), "[certify] gramian_dt_list"),
            "[certify] gramian_dt_list")
    if kw.get("gramian_variants") and not kw.get("gramian_dt_list"):
        raise ConfigError("[certify] gramian_variants needs gramian_dt_list")
    kw["gramian_T"] = get("certify", "gramian_t", float, 4.0)
    kw["delta"] = get("certify", "delta", float, 1.0)
    if not (kw["gramian_T"] > 0 and kw["delta"] > 0):
        raise ConfigError("[certify] gramian_T and delta must be positive")
    kw["forced"] = get("certify", "forced", bool, False)
    if parser.has_option("certify", "forced_dt_list"):
        kw["forced_dt_list"] = _positive_distinct(
            _floats(parser.get("certify", "forced_dt_list"), "[certify] forced_dt_list"),
            "[certify] forced_dt_list")
    if kw["forced"] and not kw.get("forced_dt_list"):
        raise ConfigError("[certify] forced = yes needs forced_dt_list")
    kw["forced_T"] = get("certify", "forced_t", float, 4.0)
    kw["forced_samples"] = get("certify", "forced_samples", int, 50)
    if kw["forced_samples"] < 1:
        raise ConfigError("[certify] forced_samples must be at least 1")

    kw["directory"] = get("output", "directory", str, "out")
    kw["emit_plots"] = get("output", "emit_plots", bool, False)
    return ExperimentConfig(**kw)


# --------------------------------------------------------------------------- commands


def _initial(cfg, model):
    if cfg.z0_policy == "smooth":
        return InitialPolicy.FIXED, smooth_initial_state(model)
    return InitialPolicy(cfg.z0_policy), None


def run_simulate(cfg: ExperimentConfig, out: Path) -> list[Path]:
    if cfg.dt is None:
        raise ConfigError("simulate needs [run] dt")
    model = cfg.model()
    policy, z0 = _initial(cfg, model)
    z0 = initial_state(model, policy, z0=z0, seed=cfg.seed)
    traj = simulate(model, cfg.scheme, cfg.dt, num_steps_for(cfg.T, cfg.dt), z0, max_steps=cfg.max_steps)
    led = traj.ledger
    res = led.stage_residuals()
    rows = zip(range(len(led)), traj.times, led.E, led.E_tilde, led.damp, led.visc3, led.visc6, res)
    files = [write_csv(out / "trajectory.csv",
                       ["k", "t", "E", "E_tilde", "damp", "visc3", "visc6", "stage_residual"], rows)]
    stage, tele = ledger_residuals(traj)
    summary = [("steps", traj.num_steps), ("stage_residual_max", stage), ("telescoped_residual", tele)]
    if led.E[0] > 0:
        try:
            fit = fit_decay_rate(led.E, traj.dt)
            summary += [("nu_hat", fit.nu0), ("mu_hat", fit.mu0), ("r2", fit.r_squared)]
        except DegenerateFitError:
            pass
    files.append(write_csv(out / "summary.csv", ["quantity", "value"], summary))
    if cfg.emit_plots:
        from .plotting import energy_plot

        files += energy_plot(out, traj)
    return files


def run_sweep(cfg: ExperimentConfig, out: Path) -> list[Path]:
    if len(cfg.dt_list) < 3:
        raise ConfigError("sweep needs [run] dt_list with at least 3 values")
    model = cfg.model()
    policy, z0 = _initial(cfg, model)
    report = sweep_uniformity(model, cfg.scheme, cfg.dt_list, cfg.T, policy, z0=z0, seed=cfg.seed,
                              threads=cfg.threads, max_steps=cfg.max_steps)
    running = report.running_rho()
    rows = [(m.dt, m.fit.nu0, m.fit.mu0, m.fit.r_squared, r) for m, r in zip(report.members, running)]
    files = [write_csv(out / "sweep.csv", ["dt", "nu_hat", "mu_hat", "r2", "rho_running"], rows)]
    if cfg.emit_plots:
        from .plotting import decay_plot

        long_rows = [(m.dt, k * m.dt, k, e) for m in report.members for k, e in enumerate(m.energies)]
        files.append(write_csv(out / "sweep_energies.csv", ["dt", "t", "k", "E"], long_rows))
        files += decay_plot(out, report)
    return files


def run_certify(cfg: ExperimentConfig, out: Path) -> list[Path]:
    model = cfg.model()
    files = []
    summary = [("bstar_graph_bound", bstar_graph_bound(model)),
               ("continuous_decay_rate", continuous_decay_rate(model))]
    if cfg.hautus:
        rep = hautus_scan(model, cfg.hautus_omega_min, cfg.hautus_omega_max, cfg.hautus_points)
        files.append(write_csv(out / "hautus.csv", ["omega", "kappa"], zip(rep.omega_grid, rep.kappa)))
        summary += [("kappa_min", rep.kappa_min), ("kappa_argmin", rep.argmin)]
        if cfg.emit_plots:
            from .plotting import hautus_plot

            files += hautus_plot(out, rep)
    if cfg.transfer:
        grid = np.linspace(cfg.transfer_omega_min, cfg.transfer_omega_max, cfg.transfer_points)
        reps = [transfer_norm_scan(model, b, grid) for b in cfg.beta_list]
        rows = [(r.beta, w, h) for r in reps for w, h in zip(r.omega_grid, r.norms)]
        files.append(write_csv(out / "transfer.csv", ["beta", "omega", "hnorm"], rows))
        summary += [(f"transfer_sup_beta={r.beta!r}", r.sup) for r in reps]
        if cfg.emit_plots:
            from .plotting import transfer_plot

            files += transfer_plot(out, reps)
    if cfg.gramian_variants:
        jobs = [(v, dt) for v in cfg.gramian_variants for dt in cfg.gramian_dt_list]

        def gram(job):
            v, dt = job
            return observability_gramian(model, v, dt, cfg.gramian_T, cfg.delta, max_steps=cfg.max_steps)

        with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
            reps = list(pool.map(gram, jobs))
        rows = [(r.variant.value, r.dt, r.T, r.lambda_min, r.lambda_max, r.term_b, r.term_a1, r.term_a2)
                for r in reps]
        files.append(write_csv(out / "gramian.csv", ["variant", "dt", "T", "lambda_min", "lambda_max",
                                                     "term_b", "term_a1", "term_a2"], rows))
    if cfg.forced:
        reps = [forced_bound_ratio(model, dt, cfg.forced_T, cfg.forced_samples, seed=cfg.seed)
                for dt in cfg.forced_dt_list]
        files.append(write_csv(out / "forced.csv", ["dt", "T", "samples", "worst_ratio"],
                               [(r.dt, r.T, r.samples, r.worst_ratio) for r in reps]))
    files.append(write_csv(out / "summary.csv", ["quantity", "value"], summary))
    return files


def run_spectrum(cfg: ExperimentConfig, out: Path) -> list[Path]:
    model = cfg.model()
    dec = decompose(model)
    rows = zip(range(dec.frequencies.size), dec.frequencies, dec.residuals)
    files = [write_csv(out / "spectrum.csv", ["index", "mu", "residual"], rows)]
    if cfg.emit_plots:
        from .plotting import spectrum_plot

        files += spectrum_plot(out, dec)
    return files


def model_info(cfg: ExperimentConfig) -> dict:
    model = cfg.model()
    rep = validate_model(model)
    lower, upper = bandwidths(model.generator)
    g_lower, g_upper = bandwidths(model.gram)
    meta = model.meta
    return {
        "label": model.label,
        "kind": meta["kind"],
        "n": meta["n"],
        "dim_state": model.dim_state,
        "num_channels": model.num_channels,
        "generator_bandwidth": [lower, upper],
        "gram_bandwidth": [g_lower, g_upper],
        "damping_node": meta["damping_node"],
        "damping_x": meta["damping_x"],
        "closure": meta["closure"],
        "validation": {
            "skew_residual": rep.skew_residual,
            "skew_scale": rep.skew_scale,
            "skew_ok": rep.skew_ok,
            "gram_spd": rep.gram_spd,
            "gram_condition": rep.gram_condition,
            "passed": rep.passed,
        },
    }


RUNNERS = {"simulate": run_simulate, "sweep": run_sweep, "certify": run_certify, "spectrum": run_spectrum}


def execute(command: str, cfg: ExperimentConfig, out: Path | None = None) -> list[Path]:
    """Run one command; returns the written files (empty for model-info)."""
    if command == "model-info":
        print(json.dumps(model_info(cfg), sort_keys=True))
        return []
    if command not in RUNNERS:
        raise UsageError(f"unknown command {command!r}")
    out = Path(out if out is not None else cfg.directory)
    return RUNNERS[command](cfg, out)


# --------------------------------------------------------------------------- entry point


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="experiment config (INI)")
    common.add_argument("--config", dest="config_opt", metavar="PATH", help="experiment config (INI)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] directory)")
    common.add_argument("--seed", type=int, help="seed for random initial data and forcing samples")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps and Gramians")
    common.add_argument("--emit-plots", action="store_true", help="also write gnuplot scripts and PNGs")
    common.add_argument("--max-steps", type=int, help="step budget per run")

    parser = _Parser(
        prog="viscous-midpoint",
        description="Simulate and certify viscous implicit-midpoint schemes.",
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    helps = {
        "simulate": "run one trajectory and write trajectory.csv",
        "sweep": "fit decay rates over [run] dt_list and write sweep.csv",
        "certify": "Hautus, transfer, Gramian and forced-bound certificates",
        "spectrum": "frequencies of the generator to spectrum.csv",
        "model-info": "print dimensions, bandwidths, damper and validation as JSON",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], epilog=EXIT_CODES_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def _fail(exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(json.dumps({"error": type(exc).__name__, "code": code, "message": msg}), file=sys.stderr)
    return code


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, ModelBuildError):
        return EXIT_MODEL
    if isinstance(exc, StepBudgetExceeded):
        return EXIT_BUDGET
    if isinstance(exc, (SolverError, SimulationAborted, DegenerateFitError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ViscousMidpointError, ValueError)):
        return EXIT_CONFIG
    return EXIT_INTERNAL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(f"missing command (one of {', '.join(COMMANDS)})")
        if args.config and args.config_opt and args.config != args.config_opt:
            raise UsageError("config given both positionally and with --config")
        path = args.config_opt or args.config
        if path is None:
            raise UsageError("no config file given")
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        cfg = load_config(path)
        overrides = {"threads": args.threads}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.emit_plots:
            overrides["emit_plots"] = True
        if args.max_steps is not None:
            overrides["max_steps"] = args.max_steps
        cfg = replace(cfg, **overrides)
        execute(args.command, cfg, args.out)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one JSON line
        return _fail(exc, exit_code_for(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
