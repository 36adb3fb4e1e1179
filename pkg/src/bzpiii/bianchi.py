"""Bianchi I, II, VI0, VII0 models in the two-Killing-vector form.

The spatial block of the metric is ``g(t, z) = l(z)^T gamma(t) l(z)`` with
``gamma = diag(a, t^2/a)`` and ``dl/dz = C^T eps l``.  The areal function is
``sigma = t`` and the null coordinates are ``xi = (z + t)/2``,
``eta = (z - t)/2``, so ``d/dxi = d/dt + d/dz`` and ``d/deta = d/dz - d/dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import linalg as la
from .errors import (
    BoundaryNode,
    DomainError,
    GridTooSmall,
    InconsistentF,
    OutOfSpan,
    UnsupportedClass,
)
from .ode import Event, OdeProblem, StepControl, Trajectory, evaluate, integrate
from .piii import CkParams, rhs_pgen

POSITIVITY_LOSS = "PositivityLoss"
A_FLOOR = 1e-8
F_CONSISTENCY_RTOL = 1e-6


@dataclass(frozen=True)
class SymmetricC:
    c: float
    d: float = 0.0
    k: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.c, self.d], [self.d, self.k]], dtype=float)

    @property
    def ck(self) -> CkParams:
        return CkParams(self.c, self.k)


@dataclass(frozen=True)
class ModelClass:
    name: str
    custom: Optional[SymmetricC] = None

    def __post_init__(self):
        if self.name == "Custom":
            if self.custom is None:
                raise ValueError("Custom model needs a SymmetricC payload")
        elif self.name not in _STANDARD_C:
            raise ValueError(f"unknown Bianchi class {self.name!r}")

    @classmethod
    def parse(cls, text: str) -> "ModelClass":
        key = text.strip().upper().replace("_", "").replace("BIANCHI", "")
        aliases = {"I": "I", "II": "II", "VI0": "VI0", "VI": "VI0", "VII0": "VII0", "VII": "VII0"}
        if key not in aliases:
            raise ValueError(f"unknown Bianchi class {text!r}")
        return cls(aliases[key])

    @classmethod
    def from_c(cls, c: float, d: float = 0.0, k: float = 0.0) -> "ModelClass":
        return cls("Custom", SymmetricC(c, d, k))

    @property
    def is_standard(self) -> bool:
        return self.name != "Custom"


_STANDARD_C = {
    "I": SymmetricC(0.0, 0.0, 0.0),
    "II": SymmetricC(1.0, 0.0, 0.0),
    "VI0": SymmetricC(1.0, 0.0, -1.0),
    "VII0": SymmetricC(1.0, 0.0, 1.0),
}

BIANCHI_I = ModelClass("I")
BIANCHI_II = ModelClass("II")
BIANCHI_VI0 = ModelClass("VI0")
BIANCHI_VII0 = ModelClass("VII0")
STANDARD_MODELS = (BIANCHI_I, BIANCHI_II, BIANCHI_VI0, BIANCHI_VII0)


def c_matrix(m: ModelClass) -> SymmetricC:
    return m.custom if m.name == "Custom" else _STANDARD_C[m.name]


def r_from_c(C: SymmetricC) -> np.ndarray:
    """``R = eps C`` with ``eps = [[0, 1], [-1, 0]]``."""
    return la.EPS @ C.matrix


def l_generator(C: SymmetricC) -> np.ndarray:
    return C.matrix.T @ la.EPS


def l_of_z(m: ModelClass, z):
    """Closed-form ``l(z)``; ``z`` may be an array, giving shape ``z.shape + (2, 2)``."""
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape + (2, 2))
    if m.name == "VII0":
        c, s = np.cos(z), np.sin(z)
        out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = c, s, -s, c
    elif m.name == "VI0":
        c, s = np.cosh(z), np.sinh(z)
        out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = c, s, s, c
    elif m.name == "II":
        out[..., 0, 0], out[..., 0, 1], out[..., 1, 1] = 1.0, z, 1.0
    elif m.name == "I":
        out[..., 0, 0] = out[..., 1, 1] = 1.0
    else:
        raise UnsupportedClass("no closed form for a custom C; use solve_l_ode")
    return out


def l_and_derivative(m: ModelClass, z):
    """``l(z)`` and ``dl/dz``; custom models use ``l = exp(z C^T eps)``."""
    K = l_generator(c_matrix(m))
    z = np.asarray(z, dtype=float)
    if m.is_standard:
        l = l_of_z(m, z)
    else:
        l = np.stack([la.matexp(zz * K) for zz in z.ravel()]).reshape(z.shape + (2, 2))
    return l, K @ l


def solve_l_ode(C: SymmetricC, z_end: float, control: StepControl = StepControl(), t_eval=None) -> Trajectory:
    """Integrate ``dl/dz = C^T eps l`` from ``l(0) = I``; states are row-major flattened 2x2."""
    K = l_generator(C)

    def rhs(z, y):
        return (K @ y.reshape(2, 2)).ravel()

    return integrate(OdeProblem(rhs, 0.0, np.eye(2).ravel(), z_end), control, t_eval=t_eval)


def l_from_trajectory(traj: Trajectory, z):
    y = evaluate(traj, z)
    return np.asarray(y).reshape(np.shape(z) + (2, 2))


# --- gamma dynamics -------------------------------------------------------


class GammaSource:
    """Anything providing ``a(t)`` and ``da/dt`` on a span; ``gamma = diag(a, t^2/a)``."""

    span: tuple[float, float]

    def a_da(self, t):
        raise NotImplementedError

    def _check(self, t):
        lo, hi = self.span
        tt = np.asarray(t, dtype=float)
        slack = 1e-14 * max(abs(hi), 1.0)
        if np.any(tt < lo - slack) or np.any(tt > hi + slack):
            raise OutOfSpan(f"t outside gamma span [{lo}, {hi}]")

    def gamma(self, t):
        a, _ = self.a_da(t)
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.shape(t) + (2, 2))
        out[..., 0, 0] = a
        out[..., 1, 1] = t * t / a
        return out

    def gammadot(self, t):
        a, da = self.a_da(t)
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.shape(t) + (2, 2))
        out[..., 0, 0] = da
        out[..., 1, 1] = 2 * t / a - t * t * da / (a * a)
        return out

    def b(self, t):
        a, _ = self.a_da(t)
        return np.asarray(t, dtype=float) ** 2 / a


@dataclass
class GammaTrajectory(GammaSource):
    """Numerical solution of the ``(t, a)`` equation; states are ``(a, da/dt)``."""

    traj: Trajectory
    ck: CkParams

    @property
    def span(self):
        return self.traj.span

    @property
    def event(self):
        return self.traj.event

    def a_da(self, t):
        self._check(t)
        y = evaluate(self.traj, t)
        return y[..., 0], y[..., 1]


@dataclass
class ExactGamma(GammaSource):
    """Closed-form ``a(t)`` supplied as callables."""

    a_fn: Callable
    da_fn: Callable
    span: tuple[float, float]
    ck: Optional[CkParams] = None

    def a_da(self, t):
        self._check(t)
        t = np.asarray(t, dtype=float)
        return np.asarray(self.a_fn(t), dtype=float), np.asarray(self.da_fn(t), dtype=float)


def kasner_gamma(s: float, span=(0.5, 10.0), a1: float = 1.0) -> ExactGamma:
    """Bianchi I power law ``a = a1 t^s`` (so ``b = t^(2-s)/a1``)."""
    return ExactGamma(lambda t: a1 * t**s, lambda t: a1 * s * t ** (s - 1), tuple(span), CkParams(0.0, 0.0))


@dataclass
class PerturbedGamma(GammaSource):
    """``a -> a (1 + eps w(t))``, with ``w = 1`` or a seeded smooth profile.

    With a seed, ``w(t) = 1 + 0.5 sin(omega t + phase)`` where ``omega`` and
    ``phase`` are drawn from ``numpy.random.default_rng(seed)``.
    """

    base: GammaSource
    eps: float
    seed: Optional[int] = None

    def __post_init__(self):
        if self.seed is None:
            self._omega, self._phase, self._amp = 0.0, 0.0, 0.0
        else:
            rng = np.random.default_rng(self.seed)
            self._omega = float(rng.uniform(1.0, 3.0))
            self._phase = float(rng.uniform(0.0, 2 * np.pi))
            self._amp = 0.5

    @property
    def span(self):
        return self.base.span

    @property
    def ck(self):
        return getattr(self.base, "ck", None)

    def a_da(self, t):
        a, da = self.base.a_da(t)
        t = np.asarray(t, dtype=float)
        w = 1.0 + self._amp * np.sin(self._omega * t + self._phase)
        dw = self._amp * self._omega * np.cos(self._omega * t + self._phase)
        fac = 1.0 + self.eps * w
        return a * fac, da * fac + a * self.eps * dw


def special_branch_a(C: SymmetricC, t):
    """Linear solution ``a = sqrt(-k/c) t`` available when ``d != 0`` forces ``a^2 = -(k/c) t^2``."""
    if C.c == 0 or C.k * C.c >= 0:
        raise DomainError("real linear branch requires k c < 0")
    return math.sqrt(-C.k / C.c) * np.asarray(t, dtype=float)


def zcc_residual(C: SymmetricC, t, a, da, dda):
    """Both component residuals of the diagonal zero-curvature system."""
    b = t * t / a
    first = (dda / a - da**2 / a**2 + da / (a * t)) - (C.k**2 * b / a - C.c**2 * a / b)
    second = C.d * (C.k + C.c * a / b)
    return first, second


def evolve_gamma(
    C,
    a0: float,
    da0: float,
    t_span: tuple[float, float],
    control: StepControl = StepControl(),
    t_eval=None,
    closed_form: bool = True,
):
    """Evolve ``gamma = diag(a, t^2/a)`` under the zero-curvature equation.

    ``C`` is a SymmetricC, a CkParams, or a ModelClass.  For ``d != 0`` only
    the linear branch is consistent: matching initial data returns it as an
    :class:`ExactGamma`, anything else raises DomainError.  With ``c = k = 0``
    every solution is ``a = A t^s`` and, unless ``closed_form`` is off, that
    power law is returned instead of a numerical trajectory.  A run where
    ``a`` drops below ``1e-8 t`` ends with ``event == "PositivityLoss"``.
    """
    if isinstance(C, ModelClass):
        C = c_matrix(C)
    if isinstance(C, CkParams):
        C = SymmetricC(C.c, 0.0, C.k)
    t0, t1 = map(float, t_span)
    if t0 <= 0 or t1 <= 0:
        raise DomainError("t span must lie in t > 0")
    if a0 <= 0:
        raise DomainError("a0 must be positive")
    if C.d != 0:
        slope = float(special_branch_a(C, 1.0))
        if not (math.isclose(a0, slope * t0, rel_tol=1e-12) and math.isclose(da0, slope, rel_tol=1e-12)):
            raise DomainError("with d != 0 the only consistent motion is a = sqrt(-k/c) t")
        return ExactGamma(lambda t: slope * t, lambda t: slope + 0 * t, (min(t0, t1), max(t0, t1)), C.ck)

    ck = C.ck
    if closed_form and C.c == 0 and C.k == 0:
        s = t0 * da0 / a0
        amp = a0 / t0**s
        return ExactGamma(lambda t: amp * t**s, lambda t: amp * s * t ** (s - 1), (min(t0, t1), max(t0, t1)), ck)

    def rhs(t, y):
        return np.array([y[1], rhs_pgen(t, y[0], y[1], ck)])

    floor = Event(lambda t, y: y[0] - A_FLOOR * t, name=POSITIVITY_LOSS)
    traj = integrate(OdeProblem(rhs, t0, np.array([a0, da0]), t1), control, events=floor, t_eval=t_eval)
    return GammaTrajectory(traj, ck)


def _richardson_derivative(fn, t, rel_step):
    h = rel_step * abs(t)
    d1 = (fn(t + h) - fn(t - h)) / (2 * h)
    d2 = (fn(t + h / 2) - fn(t - h / 2)) / h
    return (4 * d2 - d1) / 3


def zcb_lhs_rhs(gt, R, t, rel_step: float = 1e-5):
    """Both sides of ``(1/t) d/dt(t gamma' gamma^-1) = R gamma R^T gamma^-1 - gamma R^T gamma^-1 R``.

    ``gt`` only needs ``gamma(t)``, ``gammadot(t)`` and ``span``, so general
    symmetric gamma histories are accepted too.
    """
    lo, hi = gt.span
    h = rel_step * abs(t)
    if t - 2 * h < lo or t + 2 * h > hi:
        raise OutOfSpan(f"t={t} too close to the ends of [{lo}, {hi}]")

    def tn(s):
        return s * gt.gammadot(s) @ la.inv2(gt.gamma(s))

    lhs = _richardson_derivative(tn, t, rel_step) / t
    g = gt.gamma(t)
    gi = la.inv2(g)
    rhs = R @ g @ R.T @ gi - g @ R.T @ gi @ R
    return lhs, rhs


def zcb_residual(gt, R, t, rel_step: float = 1e-5) -> float:
    lhs, rhs = zcb_lhs_rhs(gt, R, t, rel_step)
    return la.frobenius_norm(lhs - rhs)


# --- metric field ----------------------------------------------------------


@dataclass(frozen=True)
class MetricField:
    """Sampled ``g(t, z)`` on a rectangular grid plus the data that produced it.

    ``transform`` (optional) post-processes ``g`` as ``transform(t, z, g)``;
    it is how deliberately broken fields are built for sensitivity probes.
    """

    t: np.ndarray
    z: np.ndarray
    g: np.ndarray
    sigma: np.ndarray
    model: ModelClass
    gamma: GammaSource
    f: Optional[np.ndarray] = None
    transform: Optional[Callable] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def shape(self):
        return len(self.t), len(self.z)

    def g_at(self, t, z):
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        t, z = np.broadcast_arrays(t, z)
        l, _ = l_and_derivative(self.model, z)
        g = np.swapaxes(l, -1, -2) @ self.gamma.gamma(t) @ l
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        if self.transform is not None:
            g = self.transform(t, z, g)
        return g

    def g_derivatives(self, t, z):
        """``(g, dg/dt, dg/dz)`` at arbitrary points, exact up to the gamma data."""
        if self.transform is not None:
            h = 1e-5
            g = self.g_at(t, z)
            gt = (self.g_at(t + h, z) - self.g_at(t - h, z)) / (2 * h)
            gz = (self.g_at(t, z + h) - self.g_at(t, z - h)) / (2 * h)
            return g, gt, gz
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        t, z = np.broadcast_arrays(t, z)
        l, dl = l_and_derivative(self.model, z)
        lT, dlT = np.swapaxes(l, -1, -2), np.swapaxes(dl, -1, -2)
        gam = self.gamma.gamma(t)
        g = lT @ gam @ l
        gt = lT @ self.gamma.gammadot(t) @ l
        gz = dlT @ gam @ l + lT @ gam @ dl
        return g, gt, gz

    def exact_AB(self, t, z):
        """``A = -sigma g_xi g^-1`` and ``B = sigma g_eta g^-1`` with ``sigma = t``."""
        g, gt, gz = self.g_derivatives(t, z)
        gi = la.inv2(g)
        s = np.asarray(t, dtype=float)[..., None, None]
        return -s * (gt + gz) @ gi, s * (gz - gt) @ gi

    def reassembled(self, nt: int, nz: int) -> "MetricField":
        t = np.linspace(self.t[0], self.t[-1], nt)
        z = np.linspace(self.z[0], self.z[-1], nz)
        T, Z = np.meshgrid(t, z, indexing="ij")
        return replace(self, t=t, z=z, g=self.g_at(T, Z), sigma=t.copy(), f=None, diagnostics={})

    def perturbed(self, transform: Callable) -> "MetricField":
        T, Z = np.meshgrid(self.t, self.z, indexing="ij")
        out = replace(self, transform=transform, f=None, diagnostics={})
        return replace(out, g=out.g_at(T, Z))


def assemble_metric(m: ModelClass, gt: GammaSource, t_grid, z_grid) -> MetricField:
    t = np.asarray(t_grid, dtype=float)
    z = np.asarray(z_grid, dtype=float)
    gt._check(t)
    field_ = MetricField(t, z, np.zeros((len(t), len(z), 2, 2)), t.copy(), m, gt)
    T, Z = np.meshgrid(t, z, indexing="ij")
    return replace(field_, g=field_.g_at(T, Z))


def _grid_derivatives(field_: MetricField):
    """Central differences of g on the interior nodes ``[1:-1, 1:-1]``."""
    g = field_.g
    ht = np.diff(field_.t)
    hz = np.diff(field_.z)
    dt = (ht[:-1] + ht[1:])[:, None, None, None]
    dz = (hz[:-1] + hz[1:])[None, :, None, None]
    g_t = (g[2:, 1:-1] - g[:-2, 1:-1]) / dt
    g_z = (g[1:-1, 2:] - g[1:-1, :-2]) / dz
    return g_t, g_z


def compute_AB(field_: MetricField, node: tuple[int, int]):
    """``(A, B)`` at a grid node from central differences of the sampled ``g``."""
    i, j = node
    nt, nz = field_.shape
    if not (0 < i < nt - 1 and 0 < j < nz - 1):
        raise BoundaryNode(f"node {node} is on the grid boundary")
    g = field_.g
    g_t = (g[i + 1, j] - g[i - 1, j]) / (field_.t[i + 1] - field_.t[i - 1])
    g_z = (g[i, j + 1] - g[i, j - 1]) / (field_.z[j + 1] - field_.z[j - 1])
    gi = la.inv2(g[i, j])
    sigma = field_.sigma[i]
    return -sigma * (g_t + g_z) @ gi, sigma * (g_z - g_t) @ gi


def _trace_sq(m):
    return np.real(la.trace(m @ m))


def integrate_f(
    field_: MetricField,
    t0: Optional[float] = None,
    f0: float = 1.0,
    control: StepControl = StepControl(rtol=1e-12, atol=1e-14),
) -> MetricField:
    """Conformal factor by quadrature along every grid column.

    With ``sigma = t`` both first-order equations reduce to
    ``d ln f/dt = -1/t + tr(X^2)/(4t)`` with ``X = A`` or ``X = B``.  Both
    routes are integrated for every ``z`` of the grid (as one vector ODE);
    the spread across ``z`` and the A-vs-B mismatch are stored in
    ``diagnostics`` and must stay below ``1e-6`` relative.
    """
    if f0 <= 0:
        raise DomainError("f0 must be positive")
    t = field_.t
    z = field_.z
    nz = len(z)
    t0 = float(t[0]) if t0 is None else float(t0)
    if not (t[0] <= t0 <= t[-1]):
        raise OutOfSpan("t0 must lie on the grid span")

    def rhs(tt, y):
        A, B = field_.exact_AB(np.full(nz, tt), z)
        return np.concatenate([-1.0 / tt + _trace_sq(A) / (4 * tt), -1.0 / tt + _trace_sq(B) / (4 * tt)])

    y0 = np.full(2 * nz, math.log(f0))
    pieces = []
    for t_end in (float(t[0]), float(t[-1])):
        if t_end == t0:
            continue
        tr = integrate(OdeProblem(rhs, t0, y0, t_end), control, t_eval=t)
        pieces.append(tr)
    ln_f = np.empty((len(t), 2 * nz))
    for i, tt in enumerate(t):
        if tt == t0:
            ln_f[i] = y0
            continue
        tr = pieces[0] if (len(pieces) == 1 or tt < t0) else pieces[-1]
        ln_f[i] = evaluate(tr, tt)
    ln_fa, ln_fb = ln_f[:, :nz], ln_f[:, nz:]
    scale = max(1.0, float(np.max(np.abs(ln_fa))))
    spread = float(np.max(np.ptp(ln_fa, axis=1))) / scale
    diff = ln_fa - ln_fb
    mismatch = float(np.max(np.abs(diff - np.mean(diff)))) / scale
    if spread > F_CONSISTENCY_RTOL or mismatch > F_CONSISTENCY_RTOL:
        raise InconsistentF(f"conformal factor inconsistent: z-spread {spread:.3e}, A/B mismatch {mismatch:.3e}")
    diagnostics = dict(field_.diagnostics)
    diagnostics.update(f_z_spread=spread, f_ab_mismatch=mismatch, ln_f_a=ln_fa[:, 0].copy(), ln_f_b=ln_fb[:, 0].copy())
    with np.errstate(over="ignore"):
        f = np.exp(ln_fa[:, 0])
    return replace(field_, f=f, diagnostics=diagnostics)


def ernst_operator(field_: MetricField) -> np.ndarray:
    """``d_eta(sigma g_xi g^-1) + d_xi(sigma g_eta g^-1)`` on nodes ``[2:-2, 2:-2]``."""
    g_t, g_z = _grid_derivatives(field_)
    gi = la.inv2(field_.g[1:-1, 1:-1])
    s = field_.sigma[1:-1, None, None, None]
    j_xi = s * (g_t + g_z) @ gi
    j_eta = s * (g_z - g_t) @ gi
    ht = np.diff(field_.t[1:-1])
    hz = np.diff(field_.z[1:-1])
    dt = (ht[:-1] + ht[1:])[:, None, None, None]
    dz = (hz[:-1] + hz[1:])[None, :, None, None]

    def d_t(x):
        return (x[2:, 1:-1] - x[:-2, 1:-1]) / dt

    def d_z(x):
        return (x[1:-1, 2:] - x[1:-1, :-2]) / dz

    return (d_z(j_xi) - d_t(j_xi)) + (d_z(j_eta) + d_t(j_eta))


def _ernst_max(field_: MetricField) -> float:
    e = ernst_operator(field_)
    return float(np.max(np.sqrt(np.sum(np.abs(e) ** 2, axis=(-1, -2)))))


def ernst_residual(field_: MetricField) -> tuple[float, float]:
    """Max Frobenius norm of the discrete Ernst operator and its observed order.

    The order comes from reassembling on a grid with twice the nodes per
    direction and comparing against the ratio of grid spacings.
    """
    nt, nz = field_.shape
    if nt < 5 or nz < 5:
        raise GridTooSmall("need at least a 5x5 grid")
    r1 = _ernst_max(field_)
    fine = field_.reassembled(2 * nt, 2 * nz)
    r2 = _ernst_max(fine)
    h1 = max(np.max(np.diff(field_.t)), np.max(np.diff(field_.z)))
    h2 = max(np.max(np.diff(fine.t)), np.max(np.diff(fine.z)))
    if r1 == 0.0 or r2 == 0.0:
        order = math.inf if r2 < r1 else 0.0
    else:
        order = math.log(r1 / r2) / math.log(h1 / h2)
    return r1, order
