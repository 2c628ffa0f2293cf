"""
Command-line surface: parse a Hamiltonian, run the checker, construct and
evaluate the invariant, simulate the flow, and emit a deterministic report.

    python -m integrability check --H "x1*p2 + x2*p1"
    python -m integrability invariant --H-file h.txt --points "1,2,0,1;0.5,0,0,0.5"
"""
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from . import configure_logging, resolve_config
from .errors import IntegrabilityError, NonExactError, SeparationError, UsageError
from .expr import PhasePoint, parse, unparse
from .invariant import QuadratureSetting, construct_invariant, path_independence_residual
from .kkcheck import SampleDomain, check_conditions, check_separable_harmonic, split_separable
from .verify import (
    INDEPENDENT,
    METHODS,
    bracket_residual,
    complex_flow_residual,
    independence_check,
    integrate_flow,
)

logger = logging.getLogger(__name__)

COMMANDS = ("check", "invariant", "simulate", "verify")
FORMATS = ("json", "text")

SATISFIED = "satisfied"
SUCCEEDED = "succeeded"
VIOLATED = "violated"
USAGE_ERROR = "usage-error"
DOMAIN_ERROR = "domain-error"

EXIT_CODES = {SATISFIED: 0, SUCCEEDED: 0, VIOLATED: 1, USAGE_ERROR: 2, DOMAIN_ERROR: 3}
HTTP_STATUSES = {SATISFIED: 200, SUCCEEDED: 200, VIOLATED: 200, USAGE_ERROR: 400, DOMAIN_ERROR: 422}

# verify thresholds
BRACKET_TOL = 1e-6
COMPLEX_FLOW_TOL = 1e-7
VERIFY_SAMPLES = 50


def _setting(cfg, key):
    if isinstance(cfg, dict) or hasattr(cfg, "keys"):
        return cfg[key]
    return getattr(cfg, key)


def parse_points(text):
    """Parse "a,b,c,d;a,b,c,d;..." into phase points; blank entries are skipped."""
    if text is None:
        return ()
    return tuple(PhasePoint.parse(chunk) for chunk in text.split(";") if chunk.strip())


def _coerce_points(points):
    """Points as a tuple of 4-tuples, from "a,b,c,d;..." text or a list of 4-lists."""
    if points is None:
        return ()
    if isinstance(points, str):
        return tuple(tuple(pt) for pt in parse_points(points))
    coerced = []
    for pt in points:
        if isinstance(pt, str) or len(pt) != 4:
            raise UsageError(f"Evaluation point {pt!r} must have 4 entries (x1, p1, x2, p2)")
        try:
            coerced.append(tuple(PhasePoint(*(float(v) for v in pt))))
        except (TypeError, ValueError):
            raise UsageError(f"Evaluation point {pt!r} must be numeric") from None
    return tuple(coerced)


def _check_limits(cfg, hamiltonian, values):
    """Size caps from the configuration (KK_MAX_*); UsageError when a run would be too large."""
    longest = int(_setting(cfg, "KK_MAX_EXPRESSION_LENGTH"))
    if isinstance(hamiltonian, str) and len(hamiltonian) > longest:
        raise UsageError(f"Hamiltonian is {len(hamiltonian)} characters long; at most {longest} are accepted")
    caps = (
        ("samples", values["samples"], int(_setting(cfg, "KK_MAX_SAMPLES"))),
        ("segments", values["segments"], int(_setting(cfg, "KK_MAX_SEGMENTS"))),
        ("points", len(values["points"]), int(_setting(cfg, "KK_MAX_POINTS"))),
    )
    for name, value, cap in caps:
        if value > cap:
            raise UsageError(f"{name} is {value}; at most {cap} are accepted")
    T, h = values["T"], values["h"]
    max_steps = int(_setting(cfg, "KK_MAX_STEPS"))
    if T > 0 and h > 0 and round(T / h) > max_steps:
        raise UsageError(f"T / h gives {round(T / h)} steps; at most {max_steps} are accepted")


@dataclass(frozen=True)
class RunConfig:
    """One invocation. Every default is explicit so the report echo is complete."""
    command: str
    hamiltonian: str
    domain: str = "-1:1,-1:1,-1:1,-1:1"
    samples: int = 200
    seed: int = 0
    tol: float = 1e-9
    mode: str = "absolute"
    base: str = "0,0,0,0"
    points: tuple = ()
    start: str = "1,0,0,1"
    T: float = 10.0
    h: float = 1e-3
    method: str = "rk4"
    segments: int = 16
    order: int = 8
    quad_tol: float = 1e-10
    fd_step: float = 1e-5
    independence_tol: float = 1e-8
    format: str = "json"
    out: str = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"Unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.method not in METHODS:
            raise UsageError(f"Unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.format not in FORMATS:
            raise UsageError(f"Unknown format {self.format!r}; expected one of {', '.join(FORMATS)}")
        if not isinstance(self.hamiltonian, str) or not self.hamiltonian.strip():
            raise UsageError("A Hamiltonian expression is required")
        if not self.fd_step > 0:
            raise UsageError(f"Finite-difference step must be positive, got {self.fd_step!r}")
        if not self.independence_tol > 0:
            raise UsageError(f"Independence tolerance must be positive, got {self.independence_tol!r}")

    @classmethod
    def from_config(cls, cfg, command, hamiltonian, **overrides):
        """Defaults from a Config class (or app.config mapping); None overrides are ignored."""
        values = dict(
            domain=_setting(cfg, "KK_DOMAIN"),
            samples=int(_setting(cfg, "KK_SAMPLES")),
            seed=int(_setting(cfg, "KK_SEED")),
            tol=float(_setting(cfg, "KK_TOLERANCE")),
            mode=_setting(cfg, "KK_TOLERANCE_MODE"),
            base=_setting(cfg, "KK_BASE"),
            start=_setting(cfg, "KK_START"),
            T=float(_setting(cfg, "KK_T")),
            h=float(_setting(cfg, "KK_H")),
            method=_setting(cfg, "KK_METHOD"),
            segments=int(_setting(cfg, "KK_SEGMENTS")),
            order=int(_setting(cfg, "KK_GAUSS_ORDER")),
            quad_tol=float(_setting(cfg, "KK_QUAD_TOL")),
            fd_step=float(_setting(cfg, "KK_FD_STEP")),
            independence_tol=float(_setting(cfg, "KK_INDEPENDENCE_TOL")),
        )
        values.update({key: value for key, value in overrides.items() if value is not None})
        values["points"] = _coerce_points(values.get("points"))
        _check_limits(cfg, hamiltonian, values)
        return cls(command=command, hamiltonian=hamiltonian, **values)

    # typed views; these raise UsageError on malformed text

    def sample_domain(self):
        return SampleDomain.parse(self.domain, self.samples, self.seed)

    def quadrature(self):
        return QuadratureSetting(self.segments, self.order, self.quad_tol)

    def base_point(self):
        return PhasePoint.parse(self.base)

    def start_point(self):
        return PhasePoint.parse(self.start)

    def eval_points(self):
        return tuple(PhasePoint(*pt) for pt in self.points)

    def echo(self):
        data = asdict(self)
        data["points"] = [list(pt) for pt in self.points]
        return data


@dataclass
class Report:
    config: dict
    verdict: str = None
    residuals: list = None
    separable: dict = None
    invariant: dict = None
    trajectory: dict = None
    independence: dict = None
    bracket: dict = None
    path_independence: dict = None
    complex_flow_residual: float = None
    note: str = None
    error: dict = field(default=None)

    @property
    def exit_status(self):
        return EXIT_CODES[self.verdict]

    @property
    def http_status(self):
        return HTTP_STATUSES[self.verdict]

    def fail(self, err):
        if err.exit_code == 1:
            self.verdict = VIOLATED
        elif err.exit_code == 2:
            self.verdict = USAGE_ERROR
        else:
            self.verdict = DOMAIN_ERROR
        self.error = err.to_dict()
        self.error["diagnostic"] = str(err)

    def to_dict(self):
        return {
            "config": self.config,
            "verdict": self.verdict,
            "exit_status": self.exit_status,
            "residuals": self.residuals,
            "separable": self.separable,
            "invariant": self.invariant,
            "trajectory": self.trajectory,
            "independence": self.independence,
            "bracket": self.bracket,
            "path_independence": self.path_independence,
            "complex_flow_residual": self.complex_flow_residual,
            "note": self.note,
            "error": self.error,
        }


# --- Commands ---

def _check(H, config, report):
    dom = config.sample_domain()
    conditions = check_conditions(H, dom, config.tol, config.mode)
    report.residuals = conditions.residual_rows()
    report.note = conditions.note
    report.verdict = conditions.verdict
    try:
        parts = split_separable(H)
    except SeparationError as err:
        logger.debug("not separable: %s", err.message)
    else:
        harmonic = check_separable_harmonic(parts, dom, config.tol, config.mode)
        report.separable = {"T": unparse(parts.T), "V": unparse(parts.V), "verdict": harmonic.verdict}
    return conditions


def _invariant(H, config, report):
    conditions = _check(H, config, report)
    if not conditions.satisfied:
        raise NonExactError("Conditions violated: the one-form is not certified exact, no invariant constructed")
    invariant = construct_invariant(H, config.base_point(), config.quadrature())
    points = config.eval_points()
    values = invariant.evaluate_many([pt.as_array() for pt in points]) if points else []
    report.invariant = {
        "base": list(invariant.base),
        "backend": invariant.backend,
        "closed_form": unparse(invariant.closed_form) if invariant.closed_form is not None else None,
        "values": [{"point": list(pt), "value": float(v)} for pt, v in zip(points, values)],
    }
    return invariant


def _trajectory(H, config, report, invariant):
    trajectory = integrate_flow(H, config.start_point(), config.T, config.h, config.method, invariant)
    report.trajectory = trajectory.summary()
    report.trajectory["start"] = list(config.start_point())
    return trajectory


def _simulate(H, config, report):
    conditions = _check(H, config, report)
    invariant = None
    if conditions.satisfied:
        invariant = construct_invariant(H, config.base_point(), config.quadrature())
    else:
        logger.info("conditions violated; simulating without an invariant")
    trajectory = _trajectory(H, config, report, invariant)
    if trajectory.truncated:
        report.verdict = DOMAIN_ERROR
        report.error = {"kind": "domain", "message": "Trajectory left the domain of H before T"}
    else:
        report.verdict = SUCCEEDED


def _verify(H, config, report):
    invariant = _invariant(H, config, report)
    dom = config.sample_domain()
    pts = [PhasePoint.from_array(row) for row in dom.points()[:VERIFY_SAMPLES]]

    brackets = [bracket_residual(H, invariant, pt, config.fd_step) for pt in pts]
    report.bracket = {"max_abs": float(max(brackets)), "samples": len(pts), "tolerance": BRACKET_TOL}

    independence = independence_check(H, pts, config.independence_tol)
    report.independence = independence.to_dict()

    a = invariant.base
    b = PhasePoint.from_array(a.as_array() + 1.0)
    waypoint = a.shifted("x1", 1.0)
    path = path_independence_residual(H, a, b, waypoint, invariant.quadrature)
    report.path_independence = {
        "a": list(a), "b": list(b), "waypoint": list(waypoint),
        "residual": path, "tolerance": config.tol,
    }

    trajectory = _trajectory(H, config, report, invariant)
    if trajectory.truncated:
        report.verdict = DOMAIN_ERROR
        report.error = {"kind": "domain", "message": "Trajectory left the domain of H before T"}
        return
    report.complex_flow_residual = complex_flow_residual(H, config.start_point(), config.T, config.h)

    passed = (
        report.bracket["max_abs"] <= BRACKET_TOL
        and independence.verdict == INDEPENDENT
        and path <= config.tol
        and report.complex_flow_residual <= COMPLEX_FLOW_TOL
    )
    report.verdict = SATISFIED if passed else VIOLATED


def _invariant_command(H, config, report):
    _invariant(H, config, report)


_DISPATCH = {
    "check": _check,
    "invariant": _invariant_command,
    "simulate": _simulate,
    "verify": _verify,
}


def run(config):
    """Run one command; returns (report, exit code). Errors are folded into the report."""
    report = Report(config=config.echo())
    try:
        H = parse(config.hamiltonian)
        _DISPATCH[config.command](H, config, report)
    except IntegrabilityError as err:
        logger.warning("%s failed: %s", config.command, err)
        report.fail(err)
    except RecursionError:
        # derivatives of a deep tree can nest further than the parsed tree
        logger.warning("%s failed: expression too deeply nested", config.command)
        report.fail(UsageError("Expression is nested too deeply to analyse"))
    return report, report.exit_status


# --- Report rendering ---

def _format_float(value):
    if not math.isfinite(value):
        return "null"
    text = format(value, ".17g")
    if not any(c in text for c in ".e"):
        text += ".0"
    return text


def to_json(value):
    """Deterministic JSON: sorted keys, floats at 17 significant digits, non-finite as null."""
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _format_float(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        items = sorted(value.items())
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json(v)}" for k, v in items) + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(to_json(v) for v in value) + "]"
    raise TypeError(f"Cannot serialize {type(value).__name__} in a report")


def _num(value):
    if value is None:
        return "-"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _point_text(pt):
    return "(" + ", ".join(_num(v) for v in pt) + ")" if pt is not None else "-"


def _render_text(report):
    buffer = io.StringIO()
    console = Console(file=buffer, width=110, color_system=None, force_terminal=False, highlight=False)
    data = report.to_dict()
    console.print(f"command:     {data['config']['command']}")
    console.print(f"hamiltonian: {data['config']['hamiltonian']}")
    console.print(f"verdict:     {data['verdict']} (exit {data['exit_status']})")

    if report.residuals:
        table = Table(title="Condition residuals")
        for column in ("condition", "max_abs", "max_scaled", "worst_point"):
            table.add_column(column)
        for row in report.residuals:
            table.add_row(row["condition"], _num(row["max_abs"]), _num(row["max_scaled"]), _point_text(row["worst_point"]))
        console.print(table)
    if report.note:
        console.print(f"note: {report.note}")
    if report.separable:
        s = report.separable
        console.print(f"separable: T = {s['T']}, V = {s['V']} -> {s['verdict']}")

    if report.invariant:
        inv = report.invariant
        console.print(f"invariant: {inv['backend']} from base {_point_text(inv['base'])}")
        if inv["closed_form"]:
            console.print(f"closed form: {inv['closed_form']}")
        if inv["values"]:
            table = Table(title="Invariant values")
            table.add_column("point")
            table.add_column("I")
            for entry in inv["values"]:
                table.add_row(_point_text(entry["point"]), _num(entry["value"]))
            console.print(table)

    if report.trajectory:
        t = report.trajectory
        console.print(
            f"trajectory: {t['method']} T={_num(t['T'])} h={_num(t['h'])} steps={t['steps']} "
            f"max_dH={_num(t['max_dH'])} max_dI={_num(t['max_dI'])} truncated={t['truncated']}"
        )
    if report.bracket:
        console.print(f"bracket: max |{{H, I}}| = {_num(report.bracket['max_abs'])} over {report.bracket['samples']} samples")
    if report.independence:
        ind = report.independence
        console.print(
            f"independence: {ind['verdict']} witness={_point_text(ind['witness_point'])} "
            f"minor={_num(ind['minor'])} columns={ind['columns']}"
        )
    if report.path_independence:
        console.print(f"path independence residual: {_num(report.path_independence['residual'])}")
    if report.complex_flow_residual is not None:
        console.print(f"complex flow residual: {_num(report.complex_flow_residual)}")
    if report.error:
        console.print(f"error: {report.error.get('diagnostic', report.error['message'])}")
    return buffer.getvalue()


def emit_report(report, fmt="json"):
    """Serialize a report to bytes; identical reports give identical bytes."""
    if fmt == "json":
        return (to_json(report.to_dict()) + "\n").encode("utf-8")
    if fmt == "text":
        return _render_text(report).encode("utf-8")
    raise UsageError(f"Unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")


# --- click surface ---

def _run_options(fn):
    options = [
        click.option("--H", "hamiltonian", help="Hamiltonian expression in x1, p1, x2, p2."),
        click.option("--H-file", "hamiltonian_file", type=click.Path(exists=True, dir_okay=False), help="Read the Hamiltonian from a file."),
        click.option("--domain", help='Sample box "lo:hi,lo:hi,lo:hi,lo:hi" in the order x1, p1, x2, p2.'),
        click.option("--samples", type=int, help="Number of seeded sample points."),
        click.option("--seed", type=int, help="Random seed for the samples."),
        click.option("--tol", type=float, help="Residual tolerance."),
        click.option("--mode", type=click.Choice(["absolute", "relative"]), help="Judge absolute or Hessian-scaled residuals."),
        click.option("--base", help='Base point "a,b,c,d" where I = 0.'),
        click.option("--points", help='Evaluation points "a,b,c,d;a,b,c,d".'),
        click.option("--start", help='Initial point "a,b,c,d" for the flow.'),
        click.option("--T", "duration", type=float, help="Integration time."),
        click.option("--h", "step", type=float, help="Integration step."),
        click.option("--method", type=click.Choice(METHODS), help="Integrator."),
        click.option("--segments", type=int, help="Quadrature segments."),
        click.option("--format", "fmt", type=click.Choice(FORMATS), default="json", show_default=True),
        click.option("--out", type=click.Path(dir_okay=False), help="Write the report here instead of stdout."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _hamiltonian_text(hamiltonian, hamiltonian_file):
    if (hamiltonian is None) == (hamiltonian_file is None):
        raise click.UsageError("Give exactly one of --H or --H-file")
    if hamiltonian_file is not None:
        return Path(hamiltonian_file).read_text(encoding="utf-8").strip()
    return hamiltonian


def _invoke(ctx, command, hamiltonian, hamiltonian_file, duration, step, fmt, **options):
    text = _hamiltonian_text(hamiltonian, hamiltonian_file)
    try:
        config = RunConfig.from_config(
            ctx.obj, command, text, T=duration, h=step, format=fmt, **options
        )
    except IntegrabilityError as err:
        click.echo(f"error: {err}", err=True)
        ctx.exit(err.exit_code)
    report, code = run(config)
    if report.error:
        click.echo(f"error: {report.error.get('diagnostic', report.error['message'])}", err=True)
    payload = emit_report(report, config.format)
    if config.out:
        Path(config.out).write_bytes(payload)
    else:
        click.echo(payload.decode("utf-8"), nl=False)
    ctx.exit(code)


@click.group()
@click.option("--config", "config_name", type=click.Choice(["dev", "prod", "test"]),
              default=lambda: os.getenv("FLASK_CONFIG", "dev"), help="Configuration defaults to use.")
@click.option("--verbose", is_flag=True, help="Debug logging on stderr.")
@click.pass_context
def cli(ctx, config_name, verbose):
    """Check and exploit complete integrability of two-degree-of-freedom Hamiltonians."""
    cfg = resolve_config(config_name)
    configure_logging("DEBUG" if verbose else getattr(cfg, "LOG_LEVEL", "INFO"))
    ctx.obj = cfg


@cli.command()
@_run_options
@click.pass_context
def check(ctx, **options):
    """Sample the four second-order conditions on H."""
    _invoke(ctx, "check", **options)


@cli.command()
@_run_options
@click.pass_context
def invariant(ctx, **options):
    """Construct the second integral and evaluate it at --points."""
    _invoke(ctx, "invariant", **options)


@cli.command()
@_run_options
@click.pass_context
def simulate(ctx, **options):
    """Integrate Hamilton's equations and report the drift of H and I."""
    _invoke(ctx, "simulate", **options)


@cli.command()
@_run_options
@click.pass_context
def verify(ctx, **options):
    """Run every dynamical check on the constructed invariant."""
    _invoke(ctx, "verify", **options)


def main():
    cli()
