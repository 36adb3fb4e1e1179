"""Batch command-line driver.

Commands::

    bzpiii piii solve      tau,u,du,residual
    bzpiii bianchi evolve  t,a,b,f  (+ optional grid t,z,g11,g12,g22,f, summary JSON)
    bzpiii lax check       JSON report
    bzpiii lax holonomy    t,re_trace,im_trace,richardson_err (+ summary JSON)
    bzpiii ham flow        tau,q,p,H,energy_law_residual (+ summary JSON)

Exit codes: 0 success, 1 numerical failure, 2 flagged singular termination
(movable singularity / positivity loss), 64 configuration error.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import bianchi as bz
from . import hamiltonian as ham
from . import laxpair as lax
from . import piii
from .errors import BZError, ConfigError
from .io import dumps, emit, read_config, write_table
from .ode import StepControl

log = logging.getLogger("bzpiii")

EXIT_OK, EXIT_NUMERIC, EXIT_SINGULAR, EXIT_CONFIG = 0, 1, 2, 64


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: Optional[str] = None
    c: Optional[float] = None
    d: Optional[float] = None
    k: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    a0: Optional[float] = None
    da0: Optional[float] = None
    u0: Optional[float] = None
    du0: Optional[float] = None
    q0: Optional[float] = None
    dq0: Optional[float] = None
    p0: Optional[float] = None
    tau: Optional[str] = None
    t: Optional[str] = None
    z: str = "0:6.283185307179586"
    rtol: float = 1e-12
    atol: float = 1e-14
    h_max: float = math.inf
    samples: Optional[int] = None
    grid_t: int = 0
    grid_z: int = 0
    grid_out: Optional[str] = None
    out: str = "-"
    summary: Optional[str] = None
    format: str = "csv"
    perturb: float = 0.0
    seed: Optional[int] = None
    lam0: str = "1+1j"
    lam1: str = "2+1j"
    radius: float = 1.0
    hamiltonian: str = "tdh"
    u_floor: float = piii.U_FLOOR
    u_ceiling: float = piii.U_CEILING

    @property
    def control(self) -> StepControl:
        return StepControl(rtol=self.rtol, atol=self.atol, h_max=self.h_max)

    def summary_path(self) -> Optional[str]:
        if self.summary:
            return self.summary
        if self.out and self.out != "-":
            p = Path(self.out)
            return str(p.with_name(p.stem + ".summary.json"))
        return None


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CONVERTERS = {"float": float, "int": int, "str": str}


def _convert(key, value):
    if value is None:
        return None
    typ = _FIELD_TYPES[key]
    base = "str"
    for name in ("float", "int"):
        if name in str(typ):
            base = name
    try:
        return _CONVERTERS[base](value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def parse_span(text: str, name: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(":"))
    except (ValueError, AttributeError) as exc:
        raise ConfigError(f"--{name} expects START:END, got {text!r}") from exc
    if a == b:
        raise ConfigError(f"--{name} span is empty")
    return a, b


def _complex(text: str, name: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"--{name} expects a complex number, got {text!r}") from exc


# --- model and initial-data resolution --------------------------------------


def resolve_symmetric_c(cfg: RunConfig) -> bz.SymmetricC:
    if cfg.model is not None:
        if any(v is not None for v in (cfg.c, cfg.d, cfg.k, cfg.alpha, cfg.beta)):
            raise ConfigError("give either --model or explicit couplings, not both")
        try:
            return bz.c_matrix(bz.ModelClass.parse(cfg.model))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return bz.SymmetricC(*resolve_ck_values(cfg, allow_d=True))


def resolve_model(cfg: RunConfig) -> bz.ModelClass:
    if cfg.model is not None:
        resolve_symmetric_c(cfg)
        return bz.ModelClass.parse(cfg.model)
    C = resolve_symmetric_c(cfg)
    for m in bz.STANDARD_MODELS:
        if bz.c_matrix(m) == C:
            return m
    return bz.ModelClass("Custom", C)


def resolve_ck_values(cfg: RunConfig, allow_d: bool = False):
    has_ck = cfg.c is not None or cfg.k is not None
    has_ab = cfg.alpha is not None or cfg.beta is not None
    if has_ck and has_ab:
        raise ConfigError("give either (c, k) or (alpha, beta), not both")
    if cfg.d not in (None, 0.0) and not allow_d:
        raise ConfigError("--d is only meaningful for Bianchi commands")
    if has_ab:
        try:
            ck = piii.PiiiParams(cfg.alpha or 0.0, cfg.beta or 0.0).to_ck()
        except BZError as exc:
            raise ConfigError(str(exc)) from exc
        c, k = ck.c, ck.k
    else:
        c, k = cfg.c or 0.0, cfg.k or 0.0
    return (c, cfg.d or 0.0, k) if allow_d else (c, k)


def _one_style(cfg: RunConfig, styles: dict[str, tuple[str, ...]]) -> str:
    given = [name for name, keys in styles.items() if any(getattr(cfg, k) is not None for k in keys)]
    if len(given) != 1:
        names = " | ".join("(" + ", ".join(keys) + ")" for keys in styles.values())
        raise ConfigError(f"exactly one initial-data style is required: {names}")
    style = given[0]
    missing = [k for k in styles[style] if getattr(cfg, k) is None]
    if missing:
        raise ConfigError(f"missing initial data: {', '.join(missing)}")
    return style


def resolve_gamma_seed(cfg: RunConfig, t0: float) -> tuple[float, float]:
    style = _one_style(cfg, {"a": ("a0", "da0"), "u": ("u0", "du0")})
    if style == "a":
        return cfg.a0, cfg.da0
    if t0 <= 0 or cfg.u0 <= 0:
        raise ConfigError("u-style seeds need t0 > 0 and u0 > 0")
    _, a, da = piii.transform_u_to_a(piii.PiiiState(t0 * t0 / 4, cfg.u0, cfg.du0))
    return a, da


def _gamma_for(cfg: RunConfig, span, t_eval=None):
    C = resolve_symmetric_c(cfg)
    a0, da0 = resolve_gamma_seed(cfg, span[0])
    gt = bz.evolve_gamma(C, a0, da0, span, cfg.control, t_eval=t_eval)
    if cfg.perturb:
        gt = bz.PerturbedGamma(gt, cfg.perturb, cfg.seed)
    return C, gt


def _interior_points(values: np.ndarray, lo: float, hi: float, reach: float) -> np.ndarray:
    return np.clip(values, lo + reach * np.abs(values), hi - reach * np.abs(values))


# --- commands ----------------------------------------------------------------


def cmd_piii_solve(cfg: RunConfig) -> int:
    c, k = resolve_ck_values(cfg)
    params = piii.params_from_ck(piii.CkParams(c, k))
    tau0, tau1 = parse_span(cfg.tau or "", "tau")
    style = _one_style(cfg, {"u": ("u0", "du0"), "q": ("q0", "dq0")})
    if style == "u":
        init = piii.PiiiState(tau0, cfg.u0, cfg.du0)
    else:
        init = piii.transform_q_to_u(piii.SinhState(tau0, cfg.q0, cfg.dq0))
    grid = np.linspace(tau0, tau1, cfg.samples or 201)
    traj = piii.solve_piii(params, init, tau1, cfg.control, cfg.u_floor, cfg.u_ceiling, t_eval=grid)
    lo, hi = traj.span
    rows_tau = grid[(grid >= lo) & (grid <= hi)]
    if traj.event:
        rows_tau = np.append(rows_tau[rows_tau != traj.t_last], traj.t_last)
    states = traj(rows_tau)
    res_at = _interior_points(rows_tau, lo, hi, 3e-4)
    residual = [piii.residual_piii(traj, params, float(x)) for x in res_at]
    write_table(cfg.out, ["tau", "u", "du", "residual"], zip(rows_tau, states[:, 0], states[:, 1], residual), cfg.format)
    summary = dict(
        command="piii solve",
        alpha=params.alpha,
        beta=params.beta,
        event=traj.event,
        tau_end=traj.t_last,
        residual_max=max(residual),
        steps=traj.meta.get("steps"),
    )
    _emit_summary(cfg, summary)
    if traj.event == piii.MOVABLE_SINGULARITY:
        log.warning("movable singularity: u left [%g, %g] at tau=%.17g", cfg.u_floor, cfg.u_ceiling, traj.t_last)
        return EXIT_SINGULAR
    return EXIT_OK


def cmd_bianchi_evolve(cfg: RunConfig) -> int:
    span = parse_span(cfg.t or "", "t")
    if span[0] <= 0 or span[1] <= 0:
        raise ConfigError("--t span must be positive")
    model = resolve_model(cfg)
    if cfg.grid_t or cfg.grid_z:
        if cfg.grid_t < 5 or cfg.grid_z < 5:
            raise ConfigError("--grid-t and --grid-z must both be at least 5")
        z0, z1 = parse_span(cfg.z, "z")
    samples = np.linspace(span[0], span[1], cfg.samples or 101)
    C, gt = _gamma_for(cfg, span, t_eval=samples)
    event = getattr(gt, "event", None)
    lo, hi = gt.span
    t_rows = samples[(samples >= lo) & (samples <= hi)]
    R = bz.r_from_c(C)
    zcb_pts = _interior_points(t_rows, lo, hi, 3e-5)
    zcb = [bz.zcb_residual(gt, R, float(t)) for t in zcb_pts]

    f_field = bz.integrate_f(bz.assemble_metric(model, gt, t_rows, np.array([0.0, 0.5, 1.0])), control=cfg.control)
    a = gt.a_da(t_rows)[0]
    write_table(cfg.out, ["t", "a", "b", "f"], zip(t_rows, a, t_rows**2 / a, f_field.f), cfg.format)

    summary = dict(
        command="bianchi evolve",
        model=model.name,
        c=C.c,
        d=C.d,
        k=C.k,
        event=event,
        zcb_residual_max=max(zcb),
        f_z_spread=f_field.diagnostics["f_z_spread"],
        f_ab_mismatch=f_field.diagnostics["f_ab_mismatch"],
        ernst_residual_max=None,
        convergence_order=None,
    )
    if cfg.grid_t or cfg.grid_z:
        field_ = bz.assemble_metric(model, gt, np.linspace(lo, hi, cfg.grid_t), np.linspace(z0, z1, cfg.grid_z))
        field_ = bz.integrate_f(field_, control=cfg.control)
        err, order = bz.ernst_residual(field_)
        summary.update(ernst_residual_max=err, convergence_order=order)
        if cfg.grid_out:
            rows = []
            for i, t in enumerate(field_.t):
                for j, z in enumerate(field_.z):
                    g = field_.g[i, j]
                    rows.append((t, z, g[0, 0], g[0, 1], g[1, 1], field_.f[i]))
            write_table(cfg.grid_out, ["t", "z", "g11", "g12", "g22", "f"], rows, cfg.format)
    _emit_summary(cfg, summary)
    if event == bz.POSITIVITY_LOSS:
        return EXIT_SINGULAR
    if not np.all(np.isfinite(f_field.f)):
        sys.stderr.write("bzpiii: numerical failure: conformal factor overflowed\n")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_lax_check(cfg: RunConfig) -> int:
    span = parse_span(cfg.t or "1:2", "t")
    C, gt = _gamma_for(cfg, span)
    R = bz.r_from_c(C)
    lo, hi = gt.span
    lam0, lam1 = _complex(cfg.lam0, "lam0"), _complex(cfg.lam1, "lam1")
    ts = np.linspace(lo, hi, 41)
    zcb = max(bz.zcb_residual(gt, R, float(t)) for t in _interior_points(ts, lo, hi, 3e-5))
    conn = lax.LshConnection(gt, R)
    rect = lax.rectangle_transport_residual(conn, lo, hi, lam0, lam1, control=cfg.control)
    report = dict(
        command="lax check",
        c=C.c,
        d=C.d,
        k=C.k,
        t_span=[lo, hi],
        lam0=lam0,
        lam1=lam1,
        perturb=cfg.perturb,
        seed=cfg.seed,
        zcb_residual_max=zcb,
        rectangle_residual=rect,
        vec4_vs_zcn_discrepancies=lax.zcn_comparison(R),
    )
    emit(cfg.out, dumps(report))
    return EXIT_OK


def cmd_lax_holonomy(cfg: RunConfig) -> int:
    span = parse_span(cfg.t or "1:3", "t")
    ts = np.linspace(span[0], span[1], cfg.samples or 9)
    C, gt = _gamma_for(cfg, span, t_eval=ts)
    conn = lax.LshConnection(gt, bz.r_from_c(C))
    drift = lax.holonomy_trace_drift(conn, ts, radius=cfg.radius)
    for t, e in zip(drift.t, drift.error):
        if e > lax.HOLONOMY_TOL:
            # growth around the double pole at small radius can exhaust double precision
            log.warning("holonomy at t=%.17g not converged (estimate %.3g)", t, e)
    write_table(
        cfg.out,
        ["t", "re_trace", "im_trace", "richardson_err"],
        zip(drift.t, drift.trace.real, drift.trace.imag, drift.error),
        cfg.format,
    )
    _emit_summary(
        cfg,
        dict(
            command="lax holonomy",
            c=C.c,
            d=C.d,
            k=C.k,
            radius=cfg.radius,
            perturb=cfg.perturb,
            seed=cfg.seed,
            max_relative_drift=drift.max_relative_drift,
            max_richardson_err=float(np.max(drift.error)),
        ),
    )
    return EXIT_OK


def cmd_ham_flow(cfg: RunConfig) -> int:
    c, k = resolve_ck_values(cfg)
    ck = piii.CkParams(c, k)
    tau0, tau1 = parse_span(cfg.tau or "", "tau")
    if tau0 <= 0 or tau1 <= 0:
        raise ConfigError("--tau span must be positive")
    _one_style(cfg, {"qp": ("q0", "p0")})
    choice = ham.HamiltonianChoice(cfg.hamiltonian)
    taus = np.linspace(tau0, tau1, cfg.samples or 201)
    start = ham.PhasePoint(cfg.q0, cfg.p0, tau0)
    if choice is ham.HamiltonianChoice.TDH:
        traj = ham.flow(choice, start, tau1, ck, cfg.control, t_eval=taus)
        times = taus
        lo, hi = traj.span
        y = traj(times)
        H = ham.h_array(y[:, 0], y[:, 1], taus, ck)
        res = [ham.energy_law_residual(traj, ck, float(x)) for x in _interior_points(times, lo, hi, 3e-4)]
    else:
        times = np.log(taus)
        traj = ham.flow(choice, start, float(times[-1]), ck, cfg.control, t_eval=times)
        lo, hi = traj.span
        y = traj(times)
        H = ham.h_tilde_value(y[:, 0], y[:, 1], times, ck)
        inner = np.clip(times, lo + 3e-4 * max(1.0, abs(lo)), hi - 3e-4 * max(1.0, abs(hi)))
        res = [ham.energy_law_residual_tilde(traj, ck, float(x)) for x in inner]
    write_table(cfg.out, ["tau", "q", "p", "H", "energy_law_residual"], zip(taus, y[:, 0], y[:, 1], H, res), cfg.format)

    q_ref = piii.solve_symp(ck, piii.SinhState(tau0, cfg.q0, cfg.p0 / tau0), tau1, cfg.control, t_eval=taus)(taus)[:, 0]
    _emit_summary(
        cfg,
        dict(
            command="ham flow",
            hamiltonian=choice.value,
            c=c,
            k=k,
            max_abs_q_vs_piii=float(np.max(np.abs(y[:, 0] - q_ref))),
            energy_law_residual_max=max(res),
        ),
    )
    return EXIT_OK


COMMANDS = {
    ("piii", "solve"): cmd_piii_solve,
    ("bianchi", "evolve"): cmd_bianchi_evolve,
    ("lax", "check"): cmd_lax_check,
    ("lax", "holonomy"): cmd_lax_holonomy,
    ("ham", "flow"): cmd_ham_flow,
}


def _emit_summary(cfg: RunConfig, summary: dict) -> None:
    path = cfg.summary_path()
    if path is not None:
        emit(path, dumps(summary))
    log.info("summary: %s", dumps(summary).strip())


# --- argument parsing ---------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_CONFIG)


_FLAG_HELP = {
    "model": "Bianchi class: I, II, VI0, VII0",
    "tau": "tau span START:END",
    "t": "t span START:END",
    "z": "z span START:END for the metric grid",
    "samples": "number of output rows",
    "grid_t": "metric grid nodes in t (>= 5 enables the Ernst check)",
    "grid_z": "metric grid nodes in z",
    "out": "output path, - for stdout",
    "summary": "summary JSON path (default: <out>.summary.json)",
    "format": "csv or json",
    "perturb": "relative perturbation of a(t) for sensitivity probes",
    "seed": "seed of the perturbation profile",
    "hamiltonian": "tdh (time tau) or tdhn (time ln tau)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bzpiii", description="Painleve III / Bianchi zero-curvature toolkit")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)
    subs = {}
    for group, action in COMMANDS:
        if group not in subs:
            subs[group] = groups.add_parser(group).add_subparsers(dest="action", required=True, parser_class=_Parser)
        p = subs[group].add_parser(action)
        for f in fields(RunConfig):
            if f.name == "command":
                continue
            flag = "--" + f.name.replace("_", "-")
            p.add_argument(flag, dest=f.name, default=None, help=_FLAG_HELP.get(f.name))
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for --sweep runs")
        p.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2", help="run once per value")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    command = f"{ns.group} {ns.action}"
    values = {}
    if ns.config:
        for key, value in read_config(ns.config).items():
            if key in ("jobs", "sweep", "config"):
                continue
            if key not in _FIELD_TYPES or key == "command":
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    converted = {k: _convert(k, v) for k, v in values.items()}
    cfg = RunConfig(command=command, **converted)
    if cfg.format not in ("csv", "json"):
        raise ConfigError("--format must be csv or json")
    if cfg.rtol <= 0 or cfg.atol <= 0:
        raise ConfigError("tolerances must be positive")
    if cfg.hamiltonian not in ("tdh", "tdhn"):
        raise ConfigError("--hamiltonian must be tdh or tdhn")
    return cfg


def expand_sweeps(cfg: RunConfig, sweeps: list[str]) -> list[RunConfig]:
    if not sweeps:
        return [cfg]
    axes = []
    for item in sweeps:
        if "=" not in item:
            raise ConfigError(f"--sweep expects KEY=V1,V2, got {item!r}")
        key, vals = item.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in _FIELD_TYPES or key == "command":
            raise ConfigError(f"unknown sweep key {key!r}")
        axes.append([(key, _convert(key, v.strip())) for v in vals.split(",") if v.strip()])
    runs = []
    for i, combo in enumerate(itertools.product(*axes)):
        run = replace(cfg, **dict(combo))
        suffix = f".run{i}"
        changes = {}
        for name in ("out", "summary", "grid_out"):
            path = getattr(run, name)
            if path and path != "-":
                p = Path(path)
                changes[name] = str(p.with_name(p.stem + suffix + p.suffix))
        if not run.summary and run.out and run.out != "-":
            p = Path(run.out)
            changes["summary"] = str(p.with_name(p.stem + suffix + ".summary.json"))
        runs.append(replace(run, **changes))
    return runs


def execute(cfg: RunConfig) -> int:
    group, action = cfg.command.split()
    try:
        return COMMANDS[(group, action)](cfg)
    except ConfigError as exc:
        sys.stderr.write(f"bzpiii: config error: {exc}\n")
        return EXIT_CONFIG
    except (BZError, ArithmeticError, FloatingPointError) as exc:
        sys.stderr.write(f"bzpiii: numerical failure: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERIC


def _setup_logging():
    level = os.environ.get("BZPIII_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        runs = expand_sweeps(cfg, ns.sweep)
    except ConfigError as exc:
        sys.stderr.write(f"bzpiii: config error: {exc}\n")
        return EXIT_CONFIG
    if ns.jobs > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            codes = list(pool.map(execute, runs))
    else:
        codes = [execute(r) for r in runs]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
