"""Disturbance observers built on the auxiliary-variable construction.

Four families: the first-order observer with scalar gain, the k-th order
chain that also estimates disturbance derivatives, the nonlinear-gain
observer, and the manipulator observer whose gain matrix is L * Mn(q)^-1.
Estimates are always derived from the auxiliary variable and the measured
states (tau_hat = z - L x and its variants); only the auxiliary variables
are integrated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def dob1_estimate(z, x, gain):
    """First-order estimate tau_hat = z - L x."""
    return np.asarray(z, dtype=float) - gain * np.asarray(x, dtype=float)


def dob1_zdot(z, x, u, plant_nominal, gain):
    """Auxiliary-variable derivative zdot = L (A_n x + b_n u - tau_hat).

    Composed with the true plant this yields the estimation-error dynamics
    edot = -L e - taudot_dis, asymptotically stable for constant
    disturbances whenever L > 0.
    """
    a_n, b_n = plant_nominal
    x = np.asarray(x, dtype=float)
    tau_hat = dob1_estimate(z, x, gain)
    return gain * (np.asarray(a_n) @ x + np.asarray(b_n) * u - tau_hat)


@dataclass
class FirstOrderDob:
    """Scalar-gain observer state: gain L > 0 and auxiliary vector z."""

    gain: float
    z: np.ndarray

    def __post_init__(self):
        if self.gain <= 0.0:
            raise ValueError("observer gain must be strictly positive")
        self.z = np.atleast_1d(np.asarray(self.z, dtype=float))

    def estimate(self, x):
        return dob1_estimate(self.z, x, self.gain)


@dataclass(frozen=True)
class BoundPrediction:
    """Inputs of the ultimate-bound envelope for the estimation error.

    ``lam`` is the overshoot constant (exactly 1 for the scalar/diagonal
    error dynamics produced here; non-diagonal gain Jacobians need a
    caller-supplied value), ``delta_dot`` bounds ||taudot_dis|| and ``e0``
    is the initial error norm.
    """

    lam: float
    gain: float
    delta_dot: float
    e0: float

    def __post_init__(self):
        if self.gain <= 0.0:
            raise ValueError("gain must be strictly positive")
        if min(self.lam, self.delta_dot, self.e0) < 0.0:
            raise ValueError("lam, delta_dot and e0 must be nonnegative")


def ultimate_bound(bp, t, t0=0.0):
    """Error-norm envelope lam e^(-L (t-t0)) e0 + (lam / L) delta_dot.

    The asymptotic term uses the bound on the disturbance derivative, which
    is what the error dynamics edot = -L e - taudot_dis force.
    """
    if t < t0:
        raise ValueError("t must not precede t0")
    return (bp.lam * math.exp(-bp.gain * (t - t0)) * bp.e0
            + bp.lam / bp.gain * bp.delta_dot)


def hdob_gains_from_bandwidth(k, g_dob):
    """Gains [L_1 .. L_k] placing the error chain at bandwidth ``g_dob``.

    Matching (lam + g)^k = lam^k + lam^(k-1) L_1 + ... + L_k coefficient by
    coefficient gives the binomial values L_j = C(k, j) g^j.
    """
    if int(k) != k or k < 1:
        raise ValueError("order k must be an integer >= 1")
    if g_dob <= 0.0:
        raise ValueError("bandwidth must be positive")
    return [math.comb(int(k), j) * g_dob ** j for j in range(1, int(k) + 1)]


@dataclass
class HighOrderDob:
    """Order-k observer estimating the disturbance and k-1 derivatives.

    ``z_list`` holds one auxiliary vector per stage; estimate j is
    z_{j+1} - L_{j+1} x.  Gains default to the single-bandwidth binomial
    mapping but may be overridden per stage.
    """

    gains: list
    z_list: list

    def __post_init__(self):
        self.gains = [float(g) for g in self.gains]
        if len(self.gains) < 1:
            raise ValueError("need at least one gain")
        if any(g <= 0.0 for g in self.gains):
            raise ValueError("all gains must be strictly positive")
        if len(self.z_list) != len(self.gains):
            raise ValueError("z_list and gains must have equal length")
        self.z_list = [np.atleast_1d(np.asarray(z, dtype=float)) for z in self.z_list]

    @classmethod
    def from_bandwidth(cls, k, g_dob, n):
        gains = hdob_gains_from_bandwidth(k, g_dob)
        return cls(gains, [np.zeros(n) for _ in range(int(k))])

    @property
    def k(self):
        return len(self.gains)

    def estimates(self, x):
        """[tau_hat, tau_hat', ..., tau_hat^(k-1)] derived from z and x."""
        x = np.asarray(x, dtype=float)
        return [z - gain * x for z, gain in zip(self.z_list, self.gains)]


def hdob_zdots(dob, x, u, plant_nominal):
    """Stage derivatives of the order-k chain.

    Each stage shares the model residual (A_n x + b_n u - tau_hat) scaled by
    its own gain; stages below the top also feed in the next derivative
    estimate, the top stage does not.
    """
    a_n, b_n = plant_nominal
    x = np.asarray(x, dtype=float)
    est = dob.estimates(x)
    residual = np.asarray(a_n) @ x + np.asarray(b_n) * u - est[0]
    zdots = []
    for j, gain in enumerate(dob.gains):
        zd = gain * residual
        if j + 1 < dob.k:
            zd = zd + est[j + 1]
        zdots.append(zd)
    return zdots


def ndob_estimate(z, x, gain_fun):
    """Nonlinear-gain estimate tau_hat = z - L(x)."""
    return np.asarray(z, dtype=float) - np.asarray(gain_fun(np.asarray(x, dtype=float)), dtype=float)


def ndob_zdot(z, x, u, plant, gain_fun, jac_fun):
    """Auxiliary derivative dL/dx (f_n(x) + g_n(x) u - tau_hat).

    ``tau_hat`` is rebuilt internally as z - L(x).  The composed
    estimation-error dynamics are edot = -dL/dx e - taudot_dis, stable
    wherever the gain Jacobian is positive definite.
    """
    x = np.asarray(x, dtype=float)
    jac = np.asarray(jac_fun(x), dtype=float)
    if not np.all(np.isfinite(jac)):
        raise ValueError("gain Jacobian is non-finite")
    tau_hat = ndob_estimate(z, x, gain_fun)
    return jac @ (np.asarray(plant.f_n(x), dtype=float)
                  + np.asarray(plant.g_n(x), dtype=float) * u - tau_hat)


@dataclass
class NonlinearDob:
    """Nonlinear observer with gain function L(x) and its Jacobian.

    Construction cross-checks the Jacobian against a central finite
    difference of the gain function (tolerance ``FD_CHECK_TOL``) and records
    the most indefinite symmetric-part eigenvalue seen at runtime in
    ``min_sym_eig_seen`` for positive-definiteness spot checks.
    """

    gain_fun: object
    jac_fun: object
    z: np.ndarray
    check_points: list = None
    min_sym_eig_seen: float = field(default=math.inf, init=False)

    FD_CHECK_TOL = 1e-5

    def __post_init__(self):
        self.z = np.atleast_1d(np.asarray(self.z, dtype=float))
        n = self.z.size
        points = self.check_points
        if points is None:
            points = [np.zeros(n), 0.1 * np.ones(n), np.linspace(-0.5, 0.5, n)]
        for p in points:
            self._check_jacobian(np.asarray(p, dtype=float))

    def _check_jacobian(self, x, h=1e-6):
        n = x.size
        fd = np.empty((n, n))
        for j in range(n):
            step = np.zeros(n)
            step[j] = h
            fd[:, j] = (np.asarray(self.gain_fun(x + step), dtype=float)
                        - np.asarray(self.gain_fun(x - step), dtype=float)) / (2.0 * h)
        jac = np.asarray(self.jac_fun(x), dtype=float)
        err = np.max(np.abs(fd - jac))
        if err > self.FD_CHECK_TOL * max(1.0, np.max(np.abs(jac))):
            raise ValueError(
                f"jac_fun disagrees with a finite difference of gain_fun "
                f"(max deviation {err:.3e})")

    def estimate(self, x):
        return np.asarray(self.z, dtype=float) - np.asarray(
            self.gain_fun(np.asarray(x, dtype=float)), dtype=float)

    def observe_jacobian(self, x):
        """Jacobian at ``x``, updating the positive-definiteness record."""
        jac = np.asarray(self.jac_fun(np.asarray(x, dtype=float)), dtype=float)
        sym_min = float(np.min(np.linalg.eigvalsh(0.5 * (jac + jac.T))))
        if sym_min < self.min_sym_eig_seen:
            self.min_sym_eig_seen = sym_min
        return jac

    def zdot(self, x, u, plant):
        x = np.asarray(x, dtype=float)
        jac = self.observe_jacobian(x)
        return jac @ (np.asarray(plant.f_n(x), dtype=float)
                      + np.asarray(plant.g_n(x), dtype=float) * u
                      - self.estimate(x))


def manip_dob_estimate(z, qd, gain):
    """Manipulator estimate tau_hat = z - L qdot."""
    return np.asarray(z, dtype=float) - gain * np.asarray(qd, dtype=float)


def manip_dob_zdot(z, q, qd, tau, arm_nominal, gain):
    """Manipulator auxiliary derivative using the nominal arm model.

    zdot = L Mn(q)^-1 (tau - Cn(q, qd) qd - gn(q) - tau_hat), giving error
    dynamics edot = -L Mn(q)^-1 e - taudot_dis.  The nominal inertia matrix
    is positive definite for every q, so any L > 0 stabilizes the error.
    """
    if gain <= 0.0:
        raise ValueError("observer gain must be strictly positive")
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    tau_hat = manip_dob_estimate(z, qd, gain)
    m_n = arm_nominal.inertia(q, nominal=True)
    det = m_n[0, 0] * m_n[1, 1] - m_n[0, 1] * m_n[1, 0]
    if det <= 1e-12 * max(m_n[0, 0], m_n[1, 1]) ** 2:
        raise np.linalg.LinAlgError("nominal inertia matrix is near-singular")
    rhs = (np.asarray(tau, dtype=float)
           - arm_nominal.coriolis(q, qd, nominal=True) @ qd
           - arm_nominal.gravity_torque(q, nominal=True)
           - tau_hat)
    return (gain / det) * np.array([m_n[1, 1] * rhs[0] - m_n[0, 1] * rhs[1],
                                    m_n[0, 0] * rhs[1] - m_n[1, 0] * rhs[0]])
