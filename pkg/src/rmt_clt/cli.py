"""Command-line front end.

Each subcommand writes one JSON report (stdout or ``--out``) that embeds the
resolved configuration and the tool version. Failures print an error object
on stderr and exit with 1 (configuration), 2 (numerical) or 3 (I/O).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__, bias, detequiv, fluctuation, limiting, montecarlo
from .errors import ConfigError, NumericalError, RmtCltError, ValidationError
from .fluctuation import EntryDistribution
from .functions import parse_sigma2
from .jsonio import dumps, fmt_float
from .profile import profile_from_descriptor

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("solve", "variance", "bias", "limit", "simulate", "report")
TRIALS_MAGIC = "# rmt_clt per-trial statistics"

_QUAD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "omega_max": {"type": "number", "exclusiveMinimum": 0},
        "order": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "initial_panels": {"type": "integer", "minimum": 1},
        "max_panels": {"type": "integer", "minimum": 1},
    },
}

SIMULATE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["profile", "rho", "distribution", "trials", "seed"],
    "properties": {
        "profile": {"type": "object"},
        "rho": {"type": "number", "exclusiveMinimum": 0},
        "distribution": {"enum": ["gaussian", "qpsk", "uniform-disk"]},
        "trials": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "quadrature": _QUAD_SCHEMA,
        "threads": {"type": "integer", "minimum": 1},
        "trials_csv": {"type": "string"},
        "output": {"type": "string"},
    },
}


@dataclass
class RunConfig:
    command: str
    profile: dict | None = None
    rho: float | None = None
    kappa: float | None = None
    distribution: str | None = None
    quadrature: dict = field(default_factory=dict)
    sigma2: str | None = None
    c: float | None = None
    grid_m: int | None = None
    trials: int | None = None
    seed: int | None = None
    trials_file: str | None = None
    threads: int | None = None
    output: str | None = None
    trials_csv: str | None = None
    nodes_csv: str | None = None

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")

    def resolved(self) -> dict:
        """The configuration as embedded in reports (output locations left out)."""
        skip = {"output", "trials_csv", "nodes_csv", "threads"}
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None and v != {} and k not in skip}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _profile_arg(text: str) -> dict:
    """Turn --profile into a descriptor: inline JSON, a .json descriptor file, or a CSV path."""
    if text.lstrip().startswith("{"):
        try:
            desc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad inline profile descriptor: {exc}") from None
        base = Path.cwd()
    elif text.endswith(".json"):
        path = Path(text)
        try:
            desc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: bad profile descriptor: {exc}") from None
        base = path.resolve().parent
    else:
        desc = {"kind": "file", "path": text}
        base = Path.cwd()
    return _absolutize(desc, base)


def _absolutize(desc, base: Path):
    if isinstance(desc, dict) and desc.get("kind") == "file" and isinstance(desc.get("path"), str):
        p = Path(desc["path"])
        desc = dict(desc, path=str(p if p.is_absolute() else (base / p).resolve()))
    return desc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rmt-clt",
        description="Deterministic equivalent, CLT variance and bias of (1/N) log det(YY* + rho I) "
        "for random matrices with a variance profile.",
        epilog="Exit codes: 1 configuration error, 2 numerical failure, 3 I/O error.",
    )
    parser.add_argument("--version", action="version", version=f"rmt-clt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, profile=True):
        if profile:
            p.add_argument("--profile", required=True, help="CSV file, JSON descriptor file or inline JSON")
            p.add_argument("--rho", type=float, required=True)
        p.add_argument("--out", dest="output", help="write the JSON report here instead of stdout")

    p = sub.add_parser("solve", help="deterministic equivalent and V_n")
    common(p)

    p = sub.add_parser("variance", help="CLT variance Theta^2_n")
    common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--kappa", type=float)
    g.add_argument("--dist", dest="distribution", choices=["gaussian", "qpsk", "uniform-disk"])

    p = sub.add_parser("bias", help="bias B_n(rho)")
    common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--kappa", type=float)
    g.add_argument("--dist", dest="distribution", choices=["gaussian", "qpsk", "uniform-disk"])
    p.add_argument("--omega-max", type=float)
    p.add_argument("--order", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-panels", type=int, help="give up once adaptive refinement exceeds this many panels")
    p.add_argument("--nodes-csv", help="also write (omega, beta) pairs as CSV")

    p = sub.add_parser("limit", help="limiting variance for a continuous profile")
    p.add_argument("--sigma2", required=True, help="e.g. constant:1, separable:1;1,1, product, exp-decay")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--grid", dest="grid_m", type=int, default=limiting.DEFAULT_GRID)
    p.add_argument("--kappa", type=float, default=0.0)
    common(p, profile=False)

    p = sub.add_parser("simulate", help="Monte Carlo CLT experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--trials-csv", help="write per-trial I_n values here")
    p.add_argument("--threads", type=int)
    common(p, profile=False)

    p = sub.add_parser("report", help="rebuild simulate diagnostics from a per-trial CSV")
    p.add_argument("--trials", dest="trials_file", required=True)
    common(p, profile=False)
    return parser


def config_from_args(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    if command == "simulate":
        return _simulate_config(ns.pop("config"), ns)
    quad = {k: ns.pop(k) for k in ("omega_max", "order", "tol", "max_panels") if k in ns}
    quad = {k: v for k, v in quad.items() if v is not None}
    if "profile" in ns:
        ns["profile"] = _profile_arg(ns["profile"])
    cfg = RunConfig(command=command, quadrature=quad, **{k: v for k, v in ns.items() if v is not None})
    if command in ("variance", "bias") and cfg.kappa is None and cfg.distribution is None:
        cfg.kappa = 0.0
    return cfg


def _simulate_config(path: str, ns: dict) -> RunConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    try:
        jsonschema.validate(raw, SIMULATE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{p}: {exc.message}") from None
    base = p.resolve().parent
    cfg = RunConfig(
        command="simulate",
        profile=_absolutize(raw["profile"], base),
        rho=float(raw["rho"]),
        distribution=raw["distribution"],
        trials=raw["trials"],
        seed=raw["seed"],
        quadrature=raw.get("quadrature", {}),
        threads=ns.get("threads") or raw.get("threads"),
        output=ns.get("output") or raw.get("output"),
        trials_csv=ns.get("trials_csv") or raw.get("trials_csv"),
    )
    return cfg


def _kappa(cfg: RunConfig) -> float:
    if cfg.distribution is not None:
        return fluctuation.kappa_of(EntryDistribution.from_name(cfg.distribution))
    return float(cfg.kappa)


def _quad(cfg: RunConfig) -> bias.QuadratureConfig:
    return bias.QuadratureConfig(**cfg.quadrature, threads=cfg.threads)


def _cmd_solve(cfg: RunConfig) -> dict:
    prof = profile_from_descriptor(cfg.profile)
    de = detequiv.solve(prof, cfg.rho)
    return {
        "profile": prof.describe(),
        "v_n": detequiv.v_n(de, prof),
        "m_n": detequiv.m_n(de),
        "residual": de.residual,
        "coupled_residual": detequiv.coupled_residual(de, prof),
        "iterations": de.iterations,
        "trace_identity_gap": detequiv.trace_identity_gap(de),
        "t": de.t,
        "t_tilde": de.t_tilde,
    }


def _cmd_variance(cfg: RunConfig) -> dict:
    prof = profile_from_descriptor(cfg.profile)
    de = detequiv.solve(prof, cfg.rho)
    return fluctuation.fluctuation_report(de, prof, _kappa(cfg)).to_dict()


def _cmd_bias(cfg: RunConfig) -> dict:
    prof = profile_from_descriptor(cfg.profile)
    res = bias.bias_integral(prof, cfg.rho, _kappa(cfg), _quad(cfg))
    if cfg.nodes_csv:
        lines = ["omega,beta"] + [f"{fmt_float(w)},{fmt_float(b)}" for w, b in zip(res.nodes, res.beta)]
        Path(cfg.nodes_csv).write_text("\n".join(lines) + "\n")
    return res.to_dict()


def _cmd_limit(cfg: RunConfig) -> dict:
    fn = parse_sigma2(cfg.sigma2)
    lp = limiting.solve_tau(fn, cfg.c, cfg.rho, cfg.grid_m)
    kd = limiting.kernel_matrix(lp)
    out = {
        "theta_sq": limiting.theta_sq_limit(kd, cfg.kappa),
        "trace": kd.trace,
        "fredholm_det": kd.fredholm_det,
        "sup_bound": kd.sup_bound,
        "stieltjes": float(np.mean(lp.tau)),
        "residual": lp.residual,
    }
    if fn.is_separable:
        out["theta_sq_separable"] = limiting.theta_sq_separable(fn.d, fn.d_tilde, cfg.c, cfg.rho, cfg.kappa, cfg.grid_m)
    out["tau"] = lp.tau
    out["tau_tilde"] = lp.tau_tilde
    return out


def _simulate_report(resolved: dict, refs: dict, diag: montecarlo.CltDiagnostics) -> dict:
    return {"version": __version__, "config": resolved, "references": refs, "diagnostics": diag.to_dict()}


def _cmd_simulate(cfg: RunConfig) -> dict:
    prof = profile_from_descriptor(cfg.profile)
    dist = EntryDistribution.from_name(cfg.distribution)
    exp = montecarlo.ExperimentConfig(prof, cfg.rho, dist, cfg.trials, cfg.seed)
    refs = montecarlo.reference_values(prof, cfg.rho, fluctuation.kappa_of(dist), _quad(cfg))
    values = montecarlo.trial_statistics(exp, threads=cfg.threads)
    diag = montecarlo.diagnostics_from_samples(values, prof.n_rows, refs)
    resolved = cfg.resolved()
    if cfg.trials_csv:
        meta = {"version": __version__, "config": resolved, "references": refs, "n_rows": prof.n_rows}
        lines = [TRIALS_MAGIC, "# " + json.dumps(meta), "trial_index,I_n"]
        lines += [f"{k},{fmt_float(v)}" for k, v in enumerate(values)]
        Path(cfg.trials_csv).write_text("\n".join(lines) + "\n")
    return _simulate_report(resolved, refs, diag)


def _cmd_report(cfg: RunConfig) -> dict:
    lines = Path(cfg.trials_file).read_text().splitlines()
    if len(lines) < 3 or lines[0] != TRIALS_MAGIC or not lines[1].startswith("# "):
        raise ConfigError(f"{cfg.trials_file}: not a per-trial file written by 'simulate'")
    try:
        meta = json.loads(lines[1][2:])
        rows = [ln.split(",") for ln in lines[3:] if ln.strip()]
        idx = [int(r[0]) for r in rows]
        values = np.array([float(r[1]) for r in rows])
    except (ValueError, IndexError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{cfg.trials_file}: malformed per-trial file: {exc}") from None
    if idx != list(range(len(idx))):
        raise ConfigError(f"{cfg.trials_file}: trial indices must be 0..{len(idx) - 1} in order")
    diag = montecarlo.diagnostics_from_samples(values, meta["n_rows"], meta["references"])
    return _simulate_report(meta["config"], meta["references"], diag)


_DISPATCH = {
    "solve": _cmd_solve,
    "variance": _cmd_variance,
    "bias": _cmd_bias,
    "limit": _cmd_limit,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
}


def run(config: RunConfig) -> dict:
    """Execute one command and return its report (without writing it)."""
    result = _DISPATCH[config.command](config)
    if config.command in ("simulate", "report"):
        return result
    return {"version": __version__, "config": config.resolved(), "result": result}


def _error(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(dumps({"error": kind, "message": str(exc), "exit_code": code}))
    return code


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        text = dumps(run(cfg))
        if cfg.output:
            Path(cfg.output).write_text(text)
        else:
            sys.stdout.write(text)
    except ValidationError as exc:
        return _error("config", exc, EXIT_CONFIG)
    except NumericalError as exc:
        return _error("numeric", exc, EXIT_NUMERIC)
    except OSError as exc:
        return _error("io", exc, EXIT_IO)
    except RmtCltError as exc:
        return _error("error", exc, EXIT_NUMERIC)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
