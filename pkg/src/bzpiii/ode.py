"""Explicit adaptive Runge-Kutta integration with dense output and events.

The stepper is the Dormand-Prince 5(4) pair with a proportional-integral
step-size controller.  Accepted steps are stored together with the right-hand
side at each sample so that :func:`evaluate` can interpolate with cubic
Hermite polynomials.  Each step also contributes ``dense_substeps - 1``
interior samples taken from the pair's continuous extension, which shortens
the Hermite intervals and so tightens derivatives of the dense output.  States may be real or complex vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BZError, OutOfSpan

__all__ = [
    "OdeProblem",
    "StepControl",
    "Event",
    "Trajectory",
    "integrate",
    "evaluate",
    "blowup_event",
    "IntegrationError",
    "StepSizeUnderflow",
    "MaxStepsExceeded",
    "NonFiniteState",
]


class IntegrationError(BZError, ArithmeticError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class MaxStepsExceeded(IntegrationError):
    pass


class NonFiniteState(IntegrationError):
    pass


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4
# continuous extension: y(t + th h) = y + h * sum_j k_j * (_P[j] . [th, th^2, th^3, th^4])
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

SAFETY = 0.9
K_I = 0.7 / 5
K_P = 0.4 / 5
FAC_MIN, FAC_MAX = 0.2, 5.0
EVENT_RTOL = 1e-12


@dataclass(frozen=True)
class OdeProblem:
    rhs: Callable[[float, np.ndarray], np.ndarray]
    t0: float
    y0: np.ndarray
    t_end: float

    def __post_init__(self):
        y0 = np.atleast_1d(np.asarray(self.y0))
        if y0.dtype.kind not in "fc":
            y0 = y0.astype(float)
        object.__setattr__(self, "y0", y0)
        if self.t0 == self.t_end:
            raise ValueError("t0 and t_end must differ")
        if not np.all(np.isfinite(y0)):
            raise ValueError("initial state must be finite")


@dataclass(frozen=True)
class StepControl:
    rtol: float = 1e-10
    atol: float = 1e-12
    h_init: Optional[float] = None
    h_max: float = np.inf
    max_steps: int = 200_000
    dense_substeps: int = 4

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.dense_substeps < 1:
            raise ValueError("dense_substeps must be at least 1")
        if self.h_max <= 0:
            raise ValueError("h_max must be positive")

    def scaled(self, factor: float) -> "StepControl":
        return replace(self, rtol=self.rtol * factor, atol=self.atol * factor)


@dataclass(frozen=True)
class Event:
    """Zero crossing of ``func(t, y)``; terminal events stop the integration."""

    func: Callable[[float, np.ndarray], float]
    name: str = "event"
    terminal: bool = True


def blowup_event(threshold: float, components: Optional[Sequence[int]] = None, name: str = "blow-up") -> Event:
    """Event that fires once the max-norm of selected components reaches ``threshold``."""
    idx = None if components is None else np.asarray(components)

    def func(t, y):
        yy = y if idx is None else y[idx]
        return threshold - float(np.max(np.abs(yy)))

    return Event(func, name=name)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    event: Optional[str] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states)
        self.derivs = np.asarray(self.derivs)
        n = len(self.times)
        if not (len(self.states) == n == len(self.derivs)):
            raise ValueError("times, states and derivs must have equal length")
        if n > 1:
            dt = np.diff(self.times)
            if not (np.all(dt > 0) or np.all(dt < 0)):
                raise ValueError("sample times must be strictly monotone")

    @property
    def t_first(self) -> float:
        return float(self.times[0])

    @property
    def t_last(self) -> float:
        return float(self.times[-1])

    @property
    def span(self) -> tuple[float, float]:
        return float(np.min(self.times[[0, -1]])), float(np.max(self.times[[0, -1]]))

    @property
    def y_last(self) -> np.ndarray:
        return self.states[-1]

    def __call__(self, t):
        return evaluate(self, t)


def evaluate(traj: Trajectory, t):
    """Cubic Hermite dense output.

    A scalar ``t`` gives a state vector, an array of times gives an array of
    states.  Stored sample times return the stored state unchanged.
    """
    shape = np.shape(t)
    ts = np.asarray(t, dtype=float).ravel()
    lo, hi = traj.span
    slack = 8 * np.finfo(float).eps * max(abs(lo), abs(hi), 1.0)
    if np.any(ts < lo - slack) or np.any(ts > hi + slack):
        raise OutOfSpan(f"t outside trajectory span [{lo}, {hi}]")
    times = traj.times
    forward = len(times) < 2 or times[-1] > times[0]
    if not forward:
        times = times[::-1]
        states = traj.states[::-1]
        derivs = traj.derivs[::-1]
    else:
        states, derivs = traj.states, traj.derivs
    if len(times) == 1:
        out = np.repeat(states[:1], len(ts), axis=0)
        return out.reshape(shape + states.shape[1:])
    ts = np.clip(ts, times[0], times[-1])
    i = np.clip(np.searchsorted(times, ts, side="right") - 1, 0, len(times) - 2)
    t0, t1 = times[i], times[i + 1]
    h = t1 - t0
    th = ((ts - t0) / h)[:, None]
    h = h[:, None]
    h00 = (1 + 2 * th) * (1 - th) ** 2
    h10 = th * (1 - th) ** 2
    h01 = th**2 * (3 - 2 * th)
    h11 = th**2 * (th - 1)
    out = h00 * states[i] + h10 * h * derivs[i] + h01 * states[i + 1] + h11 * h * derivs[i + 1]
    exact = ts == t0
    if np.any(exact):
        out[exact] = states[i[exact]]
    exact = ts == t1
    if np.any(exact):
        out[exact] = states[i[exact] + 1]
    return out.reshape(shape + states.shape[1:])


def _initial_step(rhs, t0, y0, f0, direction, order, rtol, atol, max_h):
    # Hairer, Norsett & Wanner starting-step heuristic
    scale = atol + np.abs(y0) * rtol
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_h)
    y1 = y0 + direction * h0 * f0
    f1 = np.asarray(rhs(t0 + direction * h0, y1))
    if not np.all(np.isfinite(f1)):
        return h0
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1)


def integrate(
    problem: OdeProblem,
    control: StepControl = StepControl(),
    events: Optional[Sequence[Event] | Event] = None,
    t_eval: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Integrate ``problem`` from ``t0`` to ``t_end``.

    ``t_eval`` lists times the stepper must land on exactly; they appear as
    samples of the returned trajectory.  A terminal event ends the run at the
    crossing time, located by bisection on the step's continuous extension, and sets
    ``Trajectory.event`` to the event's name.
    """
    rhs = problem.rhs
    t = float(problem.t0)
    t_end = float(problem.t_end)
    direction = 1.0 if t_end > t else -1.0
    y = problem.y0.copy()
    f = np.asarray(rhs(t, y))
    if not np.all(np.isfinite(f)):
        raise NonFiniteState(f"rhs not finite at t={t}")
    dtype = np.result_type(y, f)
    y = y.astype(dtype)
    f = f.astype(dtype)

    if events is None:
        events = []
    elif isinstance(events, Event):
        events = [events]
    g_prev = [ev.func(t, y) for ev in events]

    stops = []
    if t_eval is not None:
        stops = sorted(
            (float(s) for s in t_eval if direction * (s - t) > 0 and direction * (t_end - s) >= 0),
            key=lambda s: direction * s,
        )
    if not stops or stops[-1] != t_end:
        stops.append(t_end)
    stop_i = 0

    h_max = control.h_max
    if control.h_init is not None:
        h = abs(control.h_init)
    else:
        h = _initial_step(rhs, t, y, f, direction, 5, control.rtol, control.atol, min(h_max, abs(t_end - t)))
    h = min(h, h_max, abs(t_end - t))

    times = [t]
    states = [y]
    derivs = [f]
    err_prev = 1e-4
    n_steps = 0
    nonfinite_retries = 0
    rejected = False
    eps = np.finfo(float).eps
    fired = None

    while True:
        target = stops[stop_i]
        if n_steps >= control.max_steps:
            raise MaxStepsExceeded(f"exceeded {control.max_steps} steps at t={t}")
        if h < 1e2 * eps * abs(t) or h == 0.0:
            raise StepSizeUnderflow(f"step size {h:.3e} underflow at t={t}")
        remaining = abs(target - t)
        landing = h >= remaining * (1 - 4 * eps)
        hs = direction * (remaining if landing else h)

        k = [f]
        for s in range(1, 7):
            ys = y + hs * sum(a * k[j] for j, a in enumerate(_A[s]) if a != 0.0)
            k.append(np.asarray(rhs(t + _C[s] * hs, ys), dtype=dtype))
        y_new = y + hs * sum(b * k[j] for j, b in enumerate(_B5) if b != 0.0)
        f_new = k[6]
        n_steps += 1

        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            nonfinite_retries += 1
            h = abs(hs) * 0.25
            if nonfinite_retries > 30 or h < 1e2 * eps * abs(t):
                raise NonFiniteState(f"rhs produced non-finite values near t={t}")
            rejected = True
            continue

        err_vec = hs * sum(e * k[j] for j, e in enumerate(_E) if e != 0.0)
        scale = control.atol + control.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))

        if err <= 1.0:
            nonfinite_retries = 0
            t_new = target if landing else t + hs
            err = max(err, 1e-10)
            fac = SAFETY * err ** (-K_I) * err_prev ** K_P
            fac = min(FAC_MAX, max(FAC_MIN, fac))
            if rejected:
                fac = min(fac, 1.0)
            h_next = min(h_max, h * fac) if landing else min(h_max, abs(hs) * fac)
            err_prev = err
            rejected = False

            q = np.tensordot(_P.T, np.array(k), axes=(1, 0))

            def extension(tm, t=t, y=y, hs=hs, q=q):
                th = (tm - t) / hs
                return y + hs * (th * q[0] + th**2 * q[1] + th**3 * q[2] + th**4 * q[3])

            hit = None
            for ie, ev in enumerate(events):
                g_new = ev.func(t_new, y_new)
                if ev.terminal and (g_new == 0.0 or np.sign(g_new) != np.sign(g_prev[ie])) and g_prev[ie] != 0.0:
                    hit = ie
                    break
                g_prev[ie] = g_new
            t_stop = t_new
            if hit is not None:
                ev = events[hit]
                ta, tb = t, t_new
                ga = ev.func(t, y)
                while abs(tb - ta) > EVENT_RTOL * max(abs(tb), 1.0):
                    tm = 0.5 * (ta + tb)
                    gm = ev.func(tm, extension(tm))
                    if np.sign(gm) == np.sign(ga) and gm != 0.0:
                        ta, ga = tm, gm
                    else:
                        tb = tm
                t_stop = tb

            for j in range(1, control.dense_substeps):
                t_mid = t + (j / control.dense_substeps) * hs
                if direction * (t_stop - t_mid) <= 0:
                    break
                y_mid = extension(t_mid)
                f_mid = np.asarray(rhs(t_mid, y_mid), dtype=dtype)
                if np.all(np.isfinite(f_mid)):
                    times.append(t_mid)
                    states.append(y_mid)
                    derivs.append(f_mid)

            if hit is not None:
                y_ev = extension(t_stop)
                f_ev = np.asarray(rhs(t_stop, y_ev), dtype=dtype)
                if t_stop != t:
                    times.append(t_stop)
                    states.append(y_ev)
                    derivs.append(f_ev)
                fired = events[hit].name
                break

            t, y, f = t_new, y_new, f_new
            times.append(t)
            states.append(y)
            derivs.append(f)
            if landing:
                stop_i += 1
                if stop_i == len(stops):
                    break
            h = h_next
        else:
            fac = max(FAC_MIN, SAFETY * err ** (-1.0 / 5))
            h = abs(hs) * fac
            rejected = True

    return Trajectory(
        np.array(times),
        np.array(states),
        np.array(derivs),
        event=fired,
        meta={"steps": n_steps},
    )
