"""Plant and disturbance-source models.

Uncertain/nominal LTI pairs, linear exosystems used as disturbance signal
generators, the current-driven servo with filtered velocity measurement,
generic nonlinear plants, and a planar two-link arm with closed-form
inertia / Coriolis / gravity terms.

All model values are immutable descriptions; the evaluation functions are
pure, so concurrent scenario sweeps are safe.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import DivergenceError


def _vec(x, name, n=None):
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if n is not None and v.size != n:
        raise ValueError(f"{name} must have length {n}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def _mat(x, name, shape=None):
    m = np.asarray(x, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    if shape is not None and m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


@dataclass(frozen=True)
class LtiPlant:
    """Single-input LTI plant with an uncertain/nominal matrix pair.

    Actual dynamics: xdot = A x + b u - tau_d.  The lumped disturbance seen
    by a nominal-model observer is
    tau_dis = (A_n - A) x + (b_n - b) u + tau_d.
    """

    a: np.ndarray
    b: np.ndarray
    a_n: np.ndarray
    b_n: np.ndarray

    def __post_init__(self):
        a = _mat(self.a, "a")
        n = a.shape[0]
        if a.shape[1] != n:
            raise ValueError("a must be square")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "a_n", _mat(self.a_n, "a_n", (n, n)))
        object.__setattr__(self, "b", _vec(self.b, "b", n))
        b_n = _vec(self.b_n, "b_n", n)
        if not np.any(b_n):
            raise ValueError("b_n must not be the zero vector")
        object.__setattr__(self, "b_n", b_n)

    @property
    def n(self):
        return self.a.shape[0]

    def derivative(self, x, u, tau_d):
        return self.a @ x + self.b * u - tau_d

    def tau_dis(self, x, u, tau_d):
        return (self.a_n - self.a) @ x + (self.b_n - self.b) * u + tau_d


@dataclass(frozen=True)
class DisturbanceModel:
    """Autonomous linear exosystem generating disturbance signals.

    xdot_tau = A_tau x_tau, tau_d = C_tau x_tau.  Construction detects the
    closed-form families (constant, nilpotent Jordan block for polynomials,
    block-diagonal 2x2 skew blocks for sinusoids); anything else falls back
    to a numeric matrix exponential with a warning.
    """

    a_tau: np.ndarray
    c_tau: np.ndarray
    x_tau0: np.ndarray
    family: str = field(init=False)

    def __post_init__(self):
        a = _mat(self.a_tau, "a_tau")
        m = a.shape[0]
        if a.shape[1] != m:
            raise ValueError("a_tau must be square")
        c = _mat(self.c_tau, "c_tau")
        if c.shape[1] != m:
            raise ValueError(f"c_tau must have {m} columns, got {c.shape[1]}")
        object.__setattr__(self, "a_tau", a)
        object.__setattr__(self, "c_tau", c)
        object.__setattr__(self, "x_tau0", _vec(self.x_tau0, "x_tau0", m))
        object.__setattr__(self, "family", _detect_family(a))
        if self.family == "generic":
            warnings.warn("unsupported exosystem structure; falling back to "
                          "a numeric matrix exponential", stacklevel=2)

    @property
    def dim(self):
        return self.c_tau.shape[0]

    def state_at(self, t):
        """Exosystem state e^(A_tau t) x_tau0 via the family closed form."""
        a, x0 = self.a_tau, self.x_tau0
        m = a.shape[0]
        if self.family == "constant":
            return x0.copy()
        if self.family == "polynomial":
            out = np.zeros(m)
            for k in range(m):
                acc = 0.0
                for j in range(k, m):
                    acc += t ** (j - k) / math.factorial(j - k) * x0[j]
                out[k] = acc
            return out
        if self.family == "sinusoid":
            out = np.empty(m)
            for i in range(0, m, 2):
                w = a[i, i + 1]
                cwt, swt = math.cos(w * t), math.sin(w * t)
                out[i] = cwt * x0[i] + swt * x0[i + 1]
                out[i + 1] = -swt * x0[i] + cwt * x0[i + 1]
            return out
        from scipy.linalg import expm
        return expm(a * t) @ x0


def _detect_family(a):
    m = a.shape[0]
    if not np.any(a):
        return "constant"
    jordan = np.zeros((m, m))
    jordan[np.arange(m - 1), np.arange(1, m)] = 1.0
    if np.array_equal(a, jordan):
        return "polynomial"
    if m % 2 == 0:
        ok = True
        for i in range(0, m, 2):
            block = a[i:i + 2, i:i + 2]
            w = block[0, 1]
            if w == 0.0 or not np.array_equal(block, [[0.0, w], [-w, 0.0]]):
                ok = False
                break
        if ok:
            mask = np.ones((m, m), dtype=bool)
            for i in range(0, m, 2):
                mask[i:i + 2, i:i + 2] = False
            if not np.any(a[mask]):
                return "sinusoid"
    return "generic"


def disturbance_signal(model, t):
    """Exosystem output tau_d(t) = C_tau e^(A_tau t) x_tau0 for t >= 0."""
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    return model.c_tau @ model.state_at(t)


def constant_disturbance(value):
    """Exosystem emitting the constant vector ``value``."""
    v = _vec(value, "value")
    return DisturbanceModel(np.zeros((1, 1)), v.reshape(-1, 1), np.ones(1))


def polynomial_disturbance(coeffs):
    """Exosystem emitting sum_j coeffs[j] * t^j (coeffs[j] scalar or vector)."""
    rows = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if rows.shape[0] == 1 and rows.shape[1] > 1 and np.ndim(coeffs) == 1:
        rows = rows.T  # scalar coefficient list: one output channel
    d = rows.shape[0]  # polynomial degree + 1
    nch = rows.shape[1]
    a = np.zeros((d, d))
    a[np.arange(d - 1), np.arange(1, d)] = 1.0
    c = np.zeros((nch, d))
    for k in range(d):
        power = d - 1 - k
        c[:, k] = rows[power] * math.factorial(power)
    x0 = np.zeros(d)
    x0[-1] = 1.0
    return DisturbanceModel(a, c, x0)


def sinusoid_disturbance(amplitude, omega, phase=0.0):
    """Exosystem emitting amplitude * sin(omega t + phase) per channel."""
    if omega <= 0.0:
        raise ValueError("omega must be positive")
    amp = _vec(amplitude, "amplitude")
    a = np.array([[0.0, omega], [-omega, 0.0]])
    c = np.column_stack([amp, np.zeros_like(amp)])
    x0 = np.array([math.sin(phase), math.cos(phase)])
    return DisturbanceModel(a, c, x0)


@dataclass(frozen=True)
class ServoPlant:
    """Current-driven servo with first-order velocity measurement filter.

    Actual inertia/thrust (J_m, K_tau) drive the plant; the nominal pair
    (J_mn, K_taun) is what observer and controller assume.  State is
    [q, qdot, v_f] with v_f the filtered velocity measurement.
    """

    j_m: float
    k_tau: float
    j_mn: float
    k_taun: float
    g_v: float

    def __post_init__(self):
        for name in ("j_m", "k_tau", "j_mn", "k_taun", "g_v"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


def servo_alpha(plant):
    """Inertia/thrust mismatch ratio alpha = (J_mn K_tau) / (J_m K_taun).

    Equals 1 when nominal matches actual; grows when the nominal inertia is
    raised or the nominal thrust coefficient is lowered.
    """
    return (plant.j_mn * plant.k_tau) / (plant.j_m * plant.k_taun)


def servo_dynamics(plant, state, current, tau_d):
    """Derivative of [q, qdot, v_f] under motor current and load torque."""
    q, qdot, v_f = state
    qddot = (plant.k_tau * current - tau_d) / plant.j_m
    return np.array([qdot, qddot, plant.g_v * (qdot - v_f)])


@dataclass(frozen=True)
class NonlinearPlant:
    """Nonlinear single-input plant xdot = f(x) + g(x) u - tau_d.

    ``f_n``/``g_n`` are the nominal vector fields used by observers; the
    lumped disturbance is tau_d + f_n - f + (g_n - g) u.
    """

    f: object
    g: object
    f_n: object
    g_n: object
    n: int

    def derivative(self, x, u, tau_d):
        dx = np.asarray(self.f(x), dtype=float) + np.asarray(self.g(x), dtype=float) * u - tau_d
        if not np.all(np.isfinite(dx)):
            raise DivergenceError("nonlinear plant derivative is non-finite", time=None)
        return dx

    def tau_dis(self, x, u, tau_d):
        fn = np.asarray(self.f_n(x), dtype=float)
        f = np.asarray(self.f(x), dtype=float)
        gn = np.asarray(self.g_n(x), dtype=float)
        g = np.asarray(self.g(x), dtype=float)
        return tau_d + fn - f + (gn - g) * u


def pendulum_plant():
    """Normalized pendulum, f(x) = [x2, -sin x1], input on the second channel."""
    f = lambda x: np.array([x[1], -math.sin(x[0])])
    g = lambda x: np.array([0.0, 1.0])
    return NonlinearPlant(f=f, g=g, f_n=f, g_n=g, n=2)


_ARM_PARAMS = ("m1", "m2", "l1", "l2", "lc1", "lc2", "i1", "i2")


@dataclass(frozen=True)
class TwoLinkArm:
    """Planar revolute-revolute arm with actual and nominal parameter sets.

    Masses in kg, lengths/centroid offsets in m, rotor+link inertias in
    kg m^2, gravity in m/s^2.  Nominal values default to the actual ones.
    The inertia matrix is positive definite for all joint angles, and
    Mdot - 2C is skew-symmetric along trajectories.
    """

    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    lc1: float = 0.5
    lc2: float = 0.5
    i1: float = 1.0 / 12.0
    i2: float = 1.0 / 12.0
    gravity: float = 9.81
    m1_n: float = None
    m2_n: float = None
    l1_n: float = None
    l2_n: float = None
    lc1_n: float = None
    lc2_n: float = None
    i1_n: float = None
    i2_n: float = None

    def __post_init__(self):
        for name in _ARM_PARAMS:
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
            if getattr(self, name + "_n") is None:
                object.__setattr__(self, name + "_n", getattr(self, name))
            elif getattr(self, name + "_n") <= 0.0:
                raise ValueError(f"{name}_n must be strictly positive")
        if self.gravity < 0.0:
            raise ValueError("gravity must be nonnegative")

    def _params(self, nominal):
        if nominal:
            return (self.m1_n, self.m2_n, self.l1_n, self.l2_n,
                    self.lc1_n, self.lc2_n, self.i1_n, self.i2_n)
        return (self.m1, self.m2, self.l1, self.l2,
                self.lc1, self.lc2, self.i1, self.i2)

    def inertia(self, q, nominal=False):
        m1, m2, l1, l2, lc1, lc2, i1, i2 = self._params(nominal)
        c2 = math.cos(q[1])
        m11 = i1 + i2 + m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2.0 * l1 * lc2 * c2)
        m12 = i2 + m2 * (lc2 ** 2 + l1 * lc2 * c2)
        m22 = i2 + m2 * lc2 ** 2
        return np.array([[m11, m12], [m12, m22]])

    def coriolis(self, q, qd, nominal=False):
        m1, m2, l1, l2, lc1, lc2, i1, i2 = self._params(nominal)
        h = -m2 * l1 * lc2 * math.sin(q[1])
        return np.array([[h * qd[1], h * (qd[0] + qd[1])],
                         [-h * qd[0], 0.0]])

    def gravity_torque(self, q, nominal=False):
        m1, m2, l1, l2, lc1, lc2, i1, i2 = self._params(nominal)
        g = self.gravity
        g1 = (m1 * lc1 + m2 * l1) * g * math.cos(q[0]) \
            + m2 * lc2 * g * math.cos(q[0] + q[1])
        g2 = m2 * lc2 * g * math.cos(q[0] + q[1])
        return np.array([g1, g2])

    def energy(self, q, qd):
        """Kinetic plus gravitational potential energy (actual parameters)."""
        m1, m2, l1, l2, lc1, lc2, i1, i2 = self._params(False)
        kinetic = 0.5 * qd @ self.inertia(q) @ qd
        potential = self.gravity * ((m1 * lc1 + m2 * l1) * math.sin(q[0])
                                    + m2 * lc2 * math.sin(q[0] + q[1]))
        return kinetic + potential


def manipulator_dynamics(arm, q, qd, tau, tau_dis):
    """Joint accelerations M(q)^-1 (tau - tau_dis - C(q,qd) qd - g(q)).

    Evaluated with the actual parameter set; observers consume the nominal
    matrices separately.  Positive definiteness of M(q) makes the closed-form
    2x2 solve safe.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    m = arm.inertia(q)
    rhs = np.asarray(tau, dtype=float) - np.asarray(tau_dis, dtype=float) \
        - arm.coriolis(q, qd) @ qd - arm.gravity_torque(q)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    qdd = np.array([(m[1, 1] * rhs[0] - m[0, 1] * rhs[1]) / det,
                    (m[0, 0] * rhs[1] - m[1, 0] * rhs[0]) / det])
    if not np.all(np.isfinite(qdd)):
        raise DivergenceError("manipulator state or torque is non-finite",
                              time=None)
    return qdd
