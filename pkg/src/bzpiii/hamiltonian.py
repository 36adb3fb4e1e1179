"""Time-dependent Hamiltonians for the log form of the dynamics.

``H(q, p, tau) = p^2/(2 tau) + 2 (k^2 e^-q + c^2 e^q)`` and the equivalent
``Ht(q, pt, tt) = pt^2/2 + 2 e^tt (k^2 e^-q + c^2 e^q)`` with ``tau = e^tt``
and ``pt = p``.  Canonical equations use ``q' = dH/dp``, ``p' = -dH/dq``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, OutOfSpan
from .ode import OdeProblem, StepControl, Trajectory, evaluate, integrate
from .piii import CkParams


class HamiltonianChoice(str, Enum):
    TDH = "tdh"
    TDHN = "tdhn"


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError("tau must be positive")
        if not all(math.isfinite(v) for v in (self.q, self.p, self.tau)):
            raise DomainError("phase point must be finite")

    @property
    def ttilde(self) -> float:
        return math.log(self.tau)


def potential(q, ck: CkParams):
    return 2.0 * (ck.k**2 * np.exp(-q) + ck.c**2 * np.exp(q))


def force(q, ck: CkParams):
    """``-dV/dq`` for the potential above."""
    return 2.0 * (ck.k**2 * np.exp(-q) - ck.c**2 * np.exp(q))


def h_value(pt: PhasePoint, ck: CkParams) -> float:
    return pt.p**2 / (2.0 * pt.tau) + potential(pt.q, ck)


def h_array(q, p, tau, ck: CkParams):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("tau must be positive")
    return p**2 / (2.0 * tau) + potential(q, ck)


def h_tilde_value(q, ptilde, ttilde, ck: CkParams):
    return 0.5 * ptilde**2 + np.exp(ttilde) * potential(q, ck)


def flow(
    choice: HamiltonianChoice | str,
    initial: PhasePoint,
    time_end: float,
    ck: CkParams,
    control: StepControl = StepControl(),
    t_eval=None,
) -> Trajectory:
    """Integrate the canonical equations; states are ``(q, p)``.

    For ``tdh`` time is ``tau`` and ``time_end`` is a ``tau`` value; for
    ``tdhn`` time is ``ttilde = ln tau`` and ``time_end`` is a ``ttilde``
    value, starting from ``(q, pt = p, ttilde = ln tau0)``.
    """
    choice = HamiltonianChoice(choice)
    if choice is HamiltonianChoice.TDH:
        if time_end <= 0:
            raise DomainError("tau span must stay positive")

        def rhs(tau, y):
            return np.array([y[1] / tau, force(y[0], ck)])

        t0 = initial.tau
    else:

        def rhs(tt, y):
            return np.array([y[1], math.exp(tt) * force(y[0], ck)])

        t0 = initial.ttilde
    traj = integrate(OdeProblem(rhs, t0, np.array([initial.q, initial.p]), time_end), control, t_eval=t_eval)
    traj.meta["hamiltonian"] = choice.value
    return traj


def _interior(traj: Trajectory, t: float, h: float):
    lo, hi = traj.span
    if t - h < lo or t + h > hi:
        raise OutOfSpan(f"{t} too close to the trajectory ends [{lo}, {hi}]")


def energy_law_residual(traj: Trajectory, ck: CkParams, tau: float, rel_step: float = 1e-4) -> float:
    """``|dH/dtau + p^2/(2 tau^2)|`` along a ``tdh`` trajectory.

    ``dH/dtau`` is a Richardson-refined central difference of ``H`` evaluated
    on the dense output.
    """
    h = rel_step * tau
    _interior(traj, tau, h)
    ts = np.array([tau - h, tau + h, tau - h / 2, tau + h / 2])
    y = evaluate(traj, ts)
    H = h_array(y[:, 0], y[:, 1], ts, ck)
    d1 = (H[1] - H[0]) / (2 * h)
    d2 = (H[3] - H[2]) / h
    dH = (4 * d2 - d1) / 3
    p = evaluate(traj, tau)[1]
    return abs(dH + p**2 / (2 * tau**2))


def energy_law_residual_tilde(traj: Trajectory, ck: CkParams, ttilde: float, step: float = 1e-4) -> float:
    """``|dHt/dtt - 2 e^tt (k^2 e^-q + c^2 e^q)|`` along a ``tdhn`` trajectory."""
    h = step * max(1.0, abs(ttilde))
    _interior(traj, ttilde, h)
    ts = np.array([ttilde - h, ttilde + h, ttilde - h / 2, ttilde + h / 2])
    y = evaluate(traj, ts)
    H = h_tilde_value(y[:, 0], y[:, 1], ts, ck)
    d1 = (H[1] - H[0]) / (2 * h)
    d2 = (H[3] - H[2]) / h
    q = evaluate(traj, ttilde)[0]
    return abs((4 * d2 - d1) / 3 - math.exp(ttilde) * potential(q, ck))
