"""Painleve III with gamma = delta = 0 in three coordinate systems.

* ``(t, a)``: the diagonal entry ``a`` of ``diag(a, t**2 / a)``, governed by
  ``t^-1 d/dt(t a'/a) = k^2 t^2/a^2 - c^2 a^2/t^2``;
* ``(tau, u)``: standard form with ``u = a^2/t^2``, ``tau = t^2/4`` and
  ``alpha = -2 c^2``, ``beta = 2 k^2``;
* ``(tau, q)``: ``u = exp(q)``, giving ``d/dtau(tau dq/dtau) = 2(k^2 e^-q - c^2 e^q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OutOfSpan
from .ode import Event, OdeProblem, StepControl, Trajectory, evaluate, integrate

U_FLOOR = 1e-8
U_CEILING = 1e8
MOVABLE_SINGULARITY = "MovableSingularity"


@dataclass(frozen=True)
class CkParams:
    c: float
    k: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and math.isfinite(self.k)):
            raise ValueError("c and k must be finite")


@dataclass(frozen=True)
class PiiiParams:
    alpha: float
    beta: float
    gamma: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.alpha > 0 or self.beta < 0:
            raise DomainError("need alpha <= 0 and beta >= 0")
        if self.gamma != 0 or self.delta != 0:
            raise DomainError("only gamma = delta = 0 is supported")

    def to_ck(self) -> CkParams:
        """The representative with ``c, k >= 0``."""
        return CkParams(math.sqrt(-self.alpha / 2), math.sqrt(self.beta / 2))


@dataclass(frozen=True)
class PiiiState:
    tau: float
    u: float
    du: float

    def __post_init__(self):
        if not self.u > 0:
            raise DomainError("u must be positive")


@dataclass(frozen=True)
class SinhState:
    tau: float
    q: float
    dq: float


def params_from_ck(p: CkParams) -> PiiiParams:
    return PiiiParams(-2.0 * p.c**2, 2.0 * p.k**2, 0.0, 0.0)


def rhs_spiii(tau, u, du, params: PiiiParams):
    """Second derivative d^2u/dtau^2 of the standard Painleve III form."""
    if np.any(np.asarray(tau) == 0) or np.any(np.asarray(u) == 0):
        raise DomainError("tau and u must be nonzero")
    return (
        du**2 / u
        - du / tau
        + (params.alpha * u**2 + params.beta) / tau
        + params.gamma * u**3
        + params.delta / u
    )


def rhs_pgen(t, a, da, p: CkParams):
    """d^2a/dt^2, i.e. ``a'^2/a - a'/t + a (k^2 t^2/a^2 - c^2 a^2/t^2)``."""
    if np.any(np.asarray(t) <= 0) or np.any(np.asarray(a) == 0):
        raise DomainError("need t > 0 and a != 0")
    return da**2 / a - da / t + a * (p.k**2 * t**2 / a**2 - p.c**2 * a**2 / t**2)


def pgen_residual(t, a, da, dda, p: CkParams):
    """Residual of the (t, a) equation written in its divergence form."""
    lhs = (dda / a - da**2 / a**2) + da / (a * t)
    return lhs - (p.k**2 * t**2 / a**2 - p.c**2 * a**2 / t**2)


def transform_a_to_u(t, a, da) -> PiiiState:
    if t <= 0:
        raise DomainError("t must be positive")
    if a == 0:
        raise DomainError("a must be nonzero")
    return PiiiState(t * t / 4.0, a * a / (t * t), 4.0 * a * da / t**3 - 4.0 * a * a / t**4)


def transform_u_to_a(s: PiiiState) -> tuple[float, float, float]:
    """Inverse of :func:`transform_a_to_u` on the branch ``a > 0``; returns ``(t, a, da)``."""
    if s.tau <= 0:
        raise DomainError("tau must be positive")
    t = 2.0 * math.sqrt(s.tau)
    a = t * math.sqrt(s.u)
    # du/dtau = 4 a a'/t^3 - 4 a^2/t^4
    da = (s.du + 4.0 * a * a / t**4) * t**3 / (4.0 * a)
    return t, a, da


def transform_u_to_q(s: PiiiState) -> SinhState:
    if s.u <= 0:
        raise DomainError("u must be positive")
    return SinhState(s.tau, math.log(s.u), s.du / s.u)


def transform_q_to_u(s: SinhState) -> PiiiState:
    u = math.exp(s.q)
    return PiiiState(s.tau, u, s.dq * u)


def rhs_symp(tau, q, dq, p: CkParams):
    """d^2q/dtau^2 from ``d/dtau(tau q') = 2(k^2 e^-q - c^2 e^q)``."""
    if np.any(np.asarray(tau) <= 0):
        raise DomainError("tau must be positive")
    return (2.0 * (p.k**2 * np.exp(-q) - p.c**2 * np.exp(q)) - dq) / tau


def _u_bounds_event(u_floor: float, u_ceiling: float) -> Event:
    log_lo, log_hi = math.log(u_floor), math.log(u_ceiling)

    def func(tau, y):
        u = y[0]
        if u <= 0:
            return -1.0
        lu = math.log(u)
        return min(lu - log_lo, log_hi - lu)

    return Event(func, name=MOVABLE_SINGULARITY)


def solve_piii(
    params: PiiiParams,
    initial: PiiiState,
    tau_end: float,
    control: StepControl = StepControl(),
    u_floor: float = U_FLOOR,
    u_ceiling: float = U_CEILING,
    t_eval=None,
) -> Trajectory:
    """Integrate the standard form in ``tau``; the state vector is ``(u, du/dtau)``.

    Leaving ``[u_floor, u_ceiling]`` ends the run with
    ``Trajectory.event == "MovableSingularity"``.
    """
    if initial.tau <= 0 or tau_end <= 0:
        raise DomainError("the tau span must lie in tau > 0")

    def rhs(tau, y):
        return np.array([y[1], rhs_spiii(tau, y[0], y[1], params)])

    prob = OdeProblem(rhs, initial.tau, np.array([initial.u, initial.du]), tau_end)
    traj = integrate(prob, control, events=_u_bounds_event(u_floor, u_ceiling), t_eval=t_eval)
    traj.meta["params"] = params
    return traj


def solve_symp(p: CkParams, initial: SinhState, tau_end: float, control: StepControl = StepControl(), t_eval=None) -> Trajectory:
    """Integrate the log form in ``tau``; the state vector is ``(q, dq/dtau)``."""
    if initial.tau <= 0 or tau_end <= 0:
        raise DomainError("the tau span must lie in tau > 0")

    def rhs(tau, y):
        return np.array([y[1], rhs_symp(tau, y[0], y[1], p)])

    return integrate(OdeProblem(rhs, initial.tau, np.array([initial.q, initial.dq]), tau_end), control, t_eval=t_eval)


def _check_interior(traj: Trajectory, tau: float, reach: float):
    lo, hi = traj.span
    if tau - reach < lo or tau + reach > hi:
        raise OutOfSpan(f"tau={tau} too close to the trajectory ends [{lo}, {hi}]")


def second_derivative(traj: Trajectory, tau: float, rel_step: float = 1e-4, component: int = 1) -> float:
    """Central difference of a dense-output derivative component, with one Richardson step."""
    h = rel_step * abs(tau)
    _check_interior(traj, tau, h)
    y = evaluate(traj, np.array([tau - h, tau + h, tau - h / 2, tau + h / 2]))[:, component]
    d_h = (y[1] - y[0]) / (2 * h)
    d_h2 = (y[3] - y[2]) / h
    return (4 * d_h2 - d_h) / 3


def residual_piii(traj: Trajectory, params: PiiiParams, tau: float) -> float:
    """|u'' - rhs| at ``tau``; ``u''`` is differenced from the dense ``du`` at step ``1e-4 tau``."""
    u, du = evaluate(traj, tau)
    d2u = second_derivative(traj, tau)
    return abs(d2u - rhs_spiii(tau, u, du, params))


def residual_symp(traj: Trajectory, p: CkParams, tau: float) -> float:
    q, dq = evaluate(traj, tau)
    return abs(second_derivative(traj, tau) - rhs_symp(tau, q, dq, p))


def q_trajectory(traj: Trajectory) -> Trajectory:
    """Map a ``(u, du)`` trajectory to ``(q, dq)`` sample by sample."""
    u, du = traj.states[:, 0], traj.states[:, 1]
    d2u = traj.derivs[:, 1]
    q, dq = np.log(u), du / u
    ddq = d2u / u - (du / u) ** 2
    return Trajectory(traj.times.copy(), np.column_stack([q, dq]), np.column_stack([dq, ddq]), traj.event)


@dataclass(frozen=True)
class AsymptoticFit:
    exponent: float
    amplitude: float
    residual: float


def asymptotic_probe(traj: Trajectory, window: tuple[float, float], samples: int = 200) -> AsymptoticFit:
    """Least-squares fit ``ln u = exponent * ln tau + ln amplitude`` over ``window``."""
    lo, hi = traj.span
    w0, w1 = window
    if w0 < lo or w1 > hi or w0 >= w1:
        raise OutOfSpan(f"window {window} not inside [{lo}, {hi}]")
    tau = np.geomspace(w0, w1, samples) if w0 > 0 else np.linspace(w0, w1, samples)
    u = evaluate(traj, tau)[:, 0]
    if np.any(u <= 0):
        raise DomainError("u must stay positive over the fit window")
    x, y = np.log(tau), np.log(u)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    return AsymptoticFit(float(coef[0]), float(math.exp(coef[1])), resid)
