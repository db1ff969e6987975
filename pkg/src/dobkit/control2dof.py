"""Outer-loop performance controllers and state-space robustness certificates.

Acceleration-based PD control for the robustified inner loop, state
feedback with matched-disturbance cancellation, and the quadratic Lyapunov
certificate with its ultimate-boundedness set.

Sign convention for the matched case: the plant is
xdot = A_n x + b_n u - b_n tau, so cancellation is u = -K x + tau_hat and
the closed loop becomes xdot = (A_n - b_n K) x + b_n (tau_hat - tau).
The matched scalar is the projection of a vector disturbance onto the b_n
channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import solve_lyapunov


@dataclass(frozen=True)
class AbcGains:
    """Position/velocity gains of the outer PD law (units 1/s^2 and 1/s)."""

    kp: float
    kd: float

    def __post_init__(self):
        if self.kp <= 0.0 or self.kd <= 0.0:
            raise ValueError("kp and kd must be strictly positive")


def abc_desired_accel(ref, meas, gains):
    """Desired acceleration qddot_ref + Kd (qdot_ref - qdot) + Kp (q_ref - q).

    ``ref`` is (q_ref, qdot_ref, qddot_ref) and ``meas`` is (q, qdot).  With
    a perfect inner loop the nominal tracking-error dynamics are
    eddot + Kd edot + Kp e = 0.
    """
    q_ref, qd_ref, qdd_ref = ref
    q, qd = meas
    return qdd_ref + gains.kd * (qd_ref - qd) + gains.kp * (q_ref - q)


def sfb_with_cancellation(x, tau_hat, k_row):
    """State-feedback input u = -K x + tau_hat for a matched-disturbance plant.

    Only valid when the disturbance enters through the control channel; the
    scenario layer rejects mismatched configurations before this is called.
    """
    return float(-np.asarray(k_row, dtype=float) @ np.asarray(x, dtype=float)
                 + tau_hat)


@dataclass
class LyapunovCertificate:
    """Quadratic certificate for the state-feedback closed loop.

    Holds the Lyapunov matrix P solving (A_n - b_n K)' P + P (A_n - b_n K)
    = -Q, the decay-vs-forcing split constant ``ell`` and the achieved
    residual.  The decay bound is usable only when min(eig(Q)) > 1;
    otherwise the certificate is flagged ``bound_vacuous`` (ell is NaN).
    """

    k_row: np.ndarray
    p: np.ndarray
    q: np.ndarray
    ell: float
    residual: float
    min_eig_q: float
    bound_vacuous: bool

    def v(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.p @ x)


def make_certificate(a_n, b_n, k_row, q, ell=None):
    """Build the Lyapunov certificate for A_cl = A_n - b_n K.

    ``ell`` defaults to the midpoint 0.5 (min(eig(Q)) - 1) of its valid
    interval.  A_cl must be Hurwitz and Q symmetric positive definite.
    """
    a_n = np.asarray(a_n, dtype=float)
    b_n = np.asarray(b_n, dtype=float).reshape(-1)
    k_row = np.asarray(k_row, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float)
    a_cl = a_n - np.outer(b_n, k_row)
    p = solve_lyapunov(a_cl, q)
    residual = float(np.max(np.abs(a_cl.T @ p + p @ a_cl + q)))
    min_eig_q = float(np.min(np.linalg.eigvalsh(0.5 * (q + q.T))))
    vacuous = min_eig_q <= 1.0
    if vacuous:
        ell_val = math.nan
    elif ell is None:
        ell_val = 0.5 * (min_eig_q - 1.0)
    else:
        ell_val = float(ell)
        if not 0.0 < ell_val < min_eig_q - 1.0:
            raise ValueError("ell must lie in (0, min(eig(Q)) - 1)")
    return LyapunovCertificate(k_row=k_row, p=p, q=0.5 * (q + q.T),
                               ell=ell_val, residual=residual,
                               min_eig_q=min_eig_q, bound_vacuous=vacuous)


def omega_radius(cert, b_n, est_error):
    """Radius on ||x|| of the ultimate-boundedness set.

    The state derivative of the certificate is negative outside
    ||x||^2 <= (1/ell) ||P b_n (tau_hat - tau)||^2, so the radius is
    sqrt(1/ell) ||P b_n|| |est_error|.
    """
    if cert.bound_vacuous:
        raise ValueError("certificate is bound-vacuous (min(eig(Q)) <= 1)")
    if not 0.0 < cert.ell < cert.min_eig_q - 1.0:
        raise ValueError("ell must lie in (0, min(eig(Q)) - 1)")
    b_n = np.asarray(b_n, dtype=float).reshape(-1)
    return math.sqrt(1.0 / cert.ell) * float(np.linalg.norm(cert.p @ b_n)) \
        * abs(float(est_error))


@dataclass
class VdotReport:
    """Per-sample check of the certificate decay inequality.

    ``status`` is "checked" or "indeterminate" (bound-vacuous certificate).
    ``margin`` is rhs + slack - Vdot, nonnegative where the inequality holds
    up to the documented discretization slack 3 h^2 max|V'''| (central
    differences of V carry an h^2/6 V''' truncation error).
    """

    t: np.ndarray
    v: np.ndarray
    vdot: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    passed: np.ndarray
    slack: float
    status: str

    @property
    def all_passed(self):
        return self.status == "checked" and bool(np.all(self.passed))

    def write_csv(self, stream):
        stream.write("t,V,Vdot,rhs_eq27,margin,pass\n")
        for i in range(self.t.size):
            stream.write(f"{float(self.t[i])!r},{float(self.v[i])!r},"
                         f"{float(self.vdot[i])!r},{float(self.rhs[i])!r},"
                         f"{float(self.margin[i])!r},{int(self.passed[i])}\n")


def vdot_check(traj, cert, b_n):
    """Verify Vdot <= -(min(eig(Q)) - 1) ||x||^2 + ||P b_n (tau_hat - tau)||^2.

    ``traj`` must provide uniformly sampled ``t``, ``states``, ``tau_hat``
    and ``tau_dis``.  Vdot is estimated by central differences of
    V = x' P x (endpoints use one-sided differences and are excluded from
    the verdict).  Checked verbatim, with no cross-term reweighting.
    """
    t = np.asarray(traj.t, dtype=float)
    if t.size < 3:
        raise ValueError("need at least 3 samples to difference V")
    h = t[1] - t[0]
    if np.max(np.abs(np.diff(t) - h)) > 1e-9 * h:
        raise ValueError("trajectory must be uniformly sampled")
    x = np.asarray(traj.states, dtype=float)
    b_n = np.asarray(b_n, dtype=float).reshape(-1)

    v = np.einsum("ij,jk,ik->i", x, cert.p, x)
    vdot = np.gradient(v, h)
    est_err = np.asarray(traj.tau_hat, dtype=float) - np.asarray(traj.tau_dis, dtype=float)
    if est_err.ndim == 1:
        forcing = np.linalg.norm(cert.p @ b_n) * np.abs(est_err)
    else:
        # Vector disturbance: project onto the control channel first.
        scal = est_err @ b_n / float(b_n @ b_n)
        forcing = np.linalg.norm(cert.p @ b_n) * np.abs(scal)
    rhs = -(cert.min_eig_q - 1.0) * np.einsum("ij,ij->i", x, x) + forcing ** 2

    # Discretization slack from the third derivative of V, itself estimated
    # by third differences of the logged V.
    v3 = np.diff(v, 3) / h ** 3
    max_v3 = float(np.max(np.abs(v3))) if v3.size else 0.0
    slack = 3.0 * h ** 2 * max_v3

    if cert.bound_vacuous:
        margin = np.full_like(v, np.nan)
        passed = np.zeros(t.size, dtype=bool)
        return VdotReport(t, v, vdot, rhs, margin, passed, slack, "indeterminate")

    margin = rhs + slack - vdot
    passed = margin >= 0.0
    passed[0] = passed[-1] = True  # one-sided ends are excluded
    return VdotReport(t, v, vdot, rhs, margin, passed, slack, "checked")
