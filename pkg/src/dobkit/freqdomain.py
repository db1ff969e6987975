"""Rational transfer functions and frequency-domain analysis.

Covers the disturbance-observer loop algebra: Q-filter construction,
sensitivity / complementary sensitivity, the servo-loop sensitivity, the
closed-loop reference transfer, the inner-loop lead-lag, Bode data,
stability margins, the outer-gain root locus and the sensitivity integral.

Compositions are done at the polynomial level with structurally common
denominator factors removed symbolically, so no numerical pole/zero
cancellation is needed for the identities (e.g. S + T = 1) to hold exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import Polynomial, poly_roots

# Root matching tighter than this (scaled by root size) counts as a common
# factor during simplification.
CANCEL_TOL = 1e-9
# Grid density for crossover searches; documented default.
MARGIN_POINTS_PER_DECADE = 400


class DegenerateModelError(ValueError):
    """The composed transfer has an identically zero denominator."""


class PoleOnGridError(ValueError):
    """A frequency-grid point sits on a pole of the transfer function."""


class RationalTransfer:
    """Ratio of two real polynomials in the Laplace variable.

    The representation is normalized so the denominator is monic.  Arithmetic
    keeps raw polynomial products; use :meth:`simplified` to cancel common
    factors found by root matching.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.is_zero:
            raise DegenerateModelError("denominator is identically zero")
        lead = den.coeffs[0]
        self.num = Polynomial(num.coeffs / lead)
        self.den = Polynomial(den.coeffs / lead)

    @classmethod
    def constant(cls, value):
        return cls([float(value)], [1.0])

    @classmethod
    def zero(cls):
        return cls.constant(0.0)

    @classmethod
    def one(cls):
        return cls.constant(1.0)

    @property
    def is_proper(self):
        return self.num.degree <= self.den.degree or self.num.is_zero

    @property
    def is_zero(self):
        return self.num.is_zero

    def __call__(self, s):
        return self.num(s) / self.den(s)

    def __add__(self, other):
        other = _coerce(other)
        return RationalTransfer(self.num * other.den + other.num * self.den,
                                self.den * other.den)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) + (-self)

    def __neg__(self):
        return RationalTransfer(-self.num, self.den)

    def __mul__(self, other):
        other = _coerce(other)
        return RationalTransfer(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        if other.num.is_zero:
            raise ZeroDivisionError("division by the zero transfer")
        return RationalTransfer(self.num * other.den, self.den * other.num)

    def __rtruediv__(self, other):
        return _coerce(other) / self

    def poles(self):
        if self.den.degree < 1:
            return np.array([], dtype=complex)
        return poly_roots(self.den)

    def zeros(self):
        if self.num.degree < 1 or self.num.is_zero:
            return np.array([], dtype=complex)
        return poly_roots(self.num)

    def is_stable(self):
        poles = self.poles()
        return poles.size == 0 or np.max(poles.real) < 0.0

    def dc_gain(self):
        return self(0.0)

    def simplified(self, tol=CANCEL_TOL):
        """Cancel numerator/denominator root pairs closer than ``tol``.

        Matching is scaled by the root magnitude.  If reconstruction from the
        surviving roots would not give real coefficients (a conjugate pair
        split by the matching), the transfer is returned unchanged.
        """
        if self.num.is_zero or self.num.degree < 1 or self.den.degree < 1:
            return self
        zeros = list(self.zeros())
        poles = list(self.poles())
        kept_zeros = []
        for z in zeros:
            hit = None
            for i, p in enumerate(poles):
                if abs(z - p) <= tol * max(1.0, abs(p)):
                    hit = i
                    break
            if hit is None:
                kept_zeros.append(z)
            else:
                poles.pop(hit)
        if len(kept_zeros) == len(zeros):
            return self
        try:
            num = Polynomial.from_roots(kept_zeros, leading=self.num.coeffs[0])
            den = Polynomial.from_roots(poles)
        except ValueError:
            return self
        return RationalTransfer(num, den)

    def __repr__(self):
        return (f"RationalTransfer(num={self.num.coeffs.tolist()}, "
                f"den={self.den.coeffs.tolist()})")


def _coerce(value):
    if isinstance(value, RationalTransfer):
        return value
    return RationalTransfer.constant(value)


@dataclass
class FrequencyResponse:
    """Log-spaced frequency response with unwrapped phase."""

    omega: np.ndarray
    magnitude_db: np.ndarray
    phase_deg: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.magnitude_db = np.asarray(self.magnitude_db, dtype=float)
        self.phase_deg = np.asarray(self.phase_deg, dtype=float)
        if not (self.omega.size == self.magnitude_db.size == self.phase_deg.size):
            raise ValueError("omega, magnitude and phase must have equal lengths")
        if self.omega.size and (np.any(self.omega <= 0.0)
                                or np.any(np.diff(self.omega) <= 0.0)):
            raise ValueError("omega must be positive and strictly increasing")

    def write_csv(self, stream):
        stream.write("omega_rad_s,mag_db,phase_deg\n")
        for w, m, p in zip(self.omega, self.magnitude_db, self.phase_deg):
            stream.write(f"{float(w)!r},{float(m)!r},{float(p)!r}\n")


def make_qfilter(k, g_dob):
    """Unity-DC low-pass Q(s) = g^k / (s + g)^k of order ``k``."""
    if int(k) != k or k < 1:
        raise ValueError("filter order k must be an integer >= 1")
    if g_dob <= 0.0:
        raise ValueError("bandwidth g_dob must be positive")
    den = Polynomial.from_roots([-g_dob] * int(k))
    return RationalTransfer(Polynomial([g_dob ** int(k)]), den)


def _split(tf):
    return tf.num, tf.den


def sensitivity_dob(q, delta_w):
    """Sensitivity S = (1 - Q) / (1 - Q + (1 + dW) Q) of the DOb loop.

    Pass the zero transfer for ``delta_w`` in the nominal case, where the
    result reduces exactly to 1 - Q.
    """
    _require_proper(q, "q")
    _require_proper(delta_w, "delta_w")
    qn, qd = _split(q)
    wn, wd = _split(delta_w)
    # Common factor qd*wd of numerator and denominator removed symbolically.
    num = (qd - qn) * wd
    den = (qd - qn) * wd + (wd + wn) * qn
    if den.is_zero:
        raise DegenerateModelError("sensitivity denominator vanished")
    return RationalTransfer(num, den)


def complementary_dob(q, delta_w):
    """Complementary sensitivity T = (1 + dW) Q / (1 - Q + (1 + dW) Q).

    Shares its denominator with :func:`sensitivity_dob`, so S + T = 1 holds
    pointwise by construction.
    """
    _require_proper(q, "q")
    _require_proper(delta_w, "delta_w")
    qn, qd = _split(q)
    wn, wd = _split(delta_w)
    num = (wd + wn) * qn
    den = (qd - qn) * wd + (wd + wn) * qn
    if den.is_zero:
        raise DegenerateModelError("sensitivity denominator vanished")
    return RationalTransfer(num, den)


def _require_proper(tf, name):
    if not isinstance(tf, RationalTransfer):
        raise TypeError(f"{name} must be a RationalTransfer")
    if not tf.is_proper:
        raise ValueError(f"{name} must be proper")


def servo_sensitivity(g_v, g_dob, alpha):
    """Servo-loop sensitivity s(s + g_v) / (s^2 + g_v s + alpha g_v g_dob)."""
    if g_v <= 0.0 or g_dob <= 0.0 or alpha <= 0.0:
        raise ValueError("g_v, g_dob and alpha must all be positive")
    num = Polynomial([1.0, g_v, 0.0])
    den = Polynomial([1.0, g_v, alpha * g_v * g_dob])
    return RationalTransfer(num, den)


def closed_loop_ref_tf(c, g_n, q, delta_w):
    """Reference-to-output transfer C Gn (1+dW) / (1 + dW Q + C Gn (1+dW)).

    ``q`` and ``delta_w`` must be proper; the controller may be improper
    (e.g. a PD law).  When ``delta_w`` is the zero transfer the result is
    built without the Q-filter at all, since it drops out algebraically.
    """
    _require_proper(q, "q")
    _require_proper(delta_w, "delta_w")
    cn, cd = _split(c)
    gn, gd = _split(g_n)
    wn, wd = _split(delta_w)
    if delta_w.is_zero:
        num = cn * gn
        den = cd * gd + cn * gn
    else:
        qn, qd = _split(q)
        num = cn * gn * (wd + wn) * qd
        den = cd * gd * wd * qd + wn * qn * cd * gd + cn * gn * (wd + wn) * qd
    if den.is_zero:
        raise DegenerateModelError("closed-loop denominator vanished")
    return RationalTransfer(num, den)


def inner_loop_tf(alpha, g_dob):
    """Inner-loop acceleration transfer alpha (s + g) / (s + alpha g).

    Unity DC gain; high-frequency gain alpha; for alpha > 1 it is a lead
    element with peak phase asin((alpha-1)/(alpha+1)) at omega = g*sqrt(alpha).
    """
    if alpha <= 0.0 or g_dob <= 0.0:
        raise ValueError("alpha and g_dob must be positive")
    return RationalTransfer(Polynomial([alpha, alpha * g_dob]),
                            Polynomial([1.0, alpha * g_dob]))


def bode(tf, omega_min, omega_max, points):
    """Frequency response of ``tf`` on a log-spaced grid.

    Magnitude in dB, phase unwrapped in degrees (jumps above 180 deg between
    adjacent grid points are unwrapped, so the grid must be dense enough to
    track the fastest phase variation).
    """
    if not (0.0 < omega_min < omega_max):
        raise ValueError("need 0 < omega_min < omega_max")
    if points < 2:
        raise ValueError("points must be at least 2")
    omega = np.logspace(math.log10(omega_min), math.log10(omega_max), int(points))
    h = tf(1j * omega)
    mag = np.abs(h)
    bad = ~np.isfinite(h)
    if np.any(bad):
        raise PoleOnGridError(
            f"pole on the imaginary axis at omega = {omega[bad][0]!r} rad/s")
    with np.errstate(divide="ignore"):
        mag_db = 20.0 * np.log10(mag)
    phase = np.degrees(np.unwrap(np.angle(h)))
    return FrequencyResponse(omega, mag_db, phase)


@dataclass
class StabilityMargins:
    """Gain/phase margins with their crossover frequencies.

    A missing crossover is reported as an infinite margin with the
    corresponding ``has_*`` flag cleared (NaN crossover frequency), never as
    an error.  Phase at the gain crossover is taken in (-360, 0] deg, so a
    double integrator reports a 0 deg phase margin.
    """

    gain_margin_db: float
    phase_margin_deg: float
    gain_crossover_rad_s: float
    phase_crossover_rad_s: float
    has_gain_crossover: bool
    has_phase_crossover: bool


def _margin_grid(loop_tf):
    features = []
    for r in np.concatenate([loop_tf.poles(), loop_tf.zeros()]):
        m = abs(r)
        if m > 0.0:
            features.append(m)
    lo = min(features) / 1e3 if features else 1e-3
    hi = max(features) * 1e3 if features else 1e3
    if hi <= lo:
        hi = lo * 1e6
    decades = math.log10(hi / lo)
    n = max(int(decades * MARGIN_POINTS_PER_DECADE), 50)
    return np.logspace(math.log10(lo), math.log10(hi), n)


def _bisect(fn, a, b, iters=80):
    fa = fn(a)
    for _ in range(iters):
        mid = math.sqrt(a * b)  # geometric midpoint suits the log grid
        fm = fn(mid)
        if fa * fm <= 0.0:
            b = mid
        else:
            a, fa = mid, fm
    return math.sqrt(a * b)


def _phase_lag_deg(h):
    """Phase of ``h`` mapped into (-360, 0] degrees."""
    ph = math.degrees(math.atan2(h.imag, h.real))
    if ph > 0.0:
        ph -= 360.0
    return ph


def margins(loop_tf):
    """Gain and phase margins of an open-loop transfer function.

    Crossovers are located by sign changes on a dense log grid
    (MARGIN_POINTS_PER_DECADE points per decade) and refined by bisection.
    When several crossovers exist, the smallest margin of each kind is
    reported.
    """
    if not loop_tf.is_proper:
        raise ValueError("loop transfer must be proper")
    omega = _margin_grid(loop_tf)
    h = loop_tf(1j * omega)

    # Gain crossovers: |L| = 1.
    logmag = np.log10(np.abs(h))
    pm = math.inf
    w_gc = math.nan
    for i in np.nonzero(np.diff(np.signbit(logmag)))[0]:
        w = _bisect(lambda x: math.log10(abs(loop_tf(1j * x))),
                    omega[i], omega[i + 1])
        cand = 180.0 + _phase_lag_deg(loop_tf(1j * w))
        if cand < pm:
            pm, w_gc = cand, w

    # Phase crossovers: imag(L) = 0 with real(L) < 0.
    gm = math.inf
    w_pc = math.nan
    sign_flip = np.diff(np.signbit(h.imag))
    for i in np.nonzero(sign_flip)[0]:
        if h.real[i] >= 0.0 and h.real[i + 1] >= 0.0:
            continue
        w = _bisect(lambda x: loop_tf(1j * x).imag, omega[i], omega[i + 1])
        val = loop_tf(1j * w)
        if val.real >= 0.0:
            continue
        cand = -20.0 * math.log10(abs(val))
        if cand < gm:
            gm, w_pc = cand, w

    return StabilityMargins(
        gain_margin_db=gm,
        phase_margin_deg=pm,
        gain_crossover_rad_s=w_gc,
        phase_crossover_rad_s=w_pc,
        has_gain_crossover=math.isfinite(pm),
        has_phase_crossover=math.isfinite(gm),
    )


def abc_characteristic(kp, kd, g_dob, alpha):
    """Closed-loop cubic of the acceleration-based position loop.

    Closing qddot = [alpha (s+g)/(s+alpha g)] qddot_des around the PD law
    qddot_des = Kp e + Kd edot gives
    s^2 (s + alpha g) + alpha (s + g)(Kd s + Kp) = 0.
    """
    return Polynomial([
        1.0,
        alpha * (g_dob + kd),
        alpha * (kp + kd * g_dob),
        alpha * kp * g_dob,
    ])


def root_locus_alpha(kp, kd, g_dob, alpha_grid):
    """Closed-loop poles of the acceleration-based loop per outer gain alpha.

    Returns a list of (alpha, poles) with poles sorted by imaginary part.
    """
    if kp <= 0.0 or kd <= 0.0 or g_dob <= 0.0:
        raise ValueError("kp, kd and g_dob must be positive")
    alphas = np.asarray(list(alpha_grid), dtype=float)
    if alphas.size == 0 or np.any(alphas <= 0.0):
        raise ValueError("alpha_grid must be non-empty and positive")
    out = []
    for alpha in alphas:
        roots = poly_roots(abc_characteristic(kp, kd, g_dob, alpha))
        out.append((float(alpha), roots[np.argsort(roots.imag)]))
    return out


def abc_loop_tf(kp, kd, g_dob, alpha):
    """Open-loop transfer alpha (s+g)(Kd s + Kp) / (s^2 (s + alpha g))."""
    return inner_loop_tf(alpha, g_dob) * RationalTransfer(
        Polynomial([kd, kp]), Polynomial([1.0, 0.0, 0.0]))


def waterbed_integral(s_tf, omega_max, omega_min=0.0, tol=1e-3):
    """Numeric integral of ln|S(j w)| over [omega_min, omega_max].

    Adaptive trapezoid refinement with Richardson acceleration on log-spaced
    seed panels.  ``s_tf`` must be stable; ``omega_max`` should be large
    enough that |S| is essentially 1 beyond it (caller-checked).  When
    ``omega_min`` is 0 the integrable log singularity of a sensitivity that
    vanishes at DC is handled with its analytic leading term.
    """
    if not s_tf.is_stable():
        raise ValueError("sensitivity transfer must be stable")
    if omega_max <= max(omega_min, 0.0):
        raise ValueError("omega_max must exceed omega_min")

    def f(w):
        val = abs(s_tf(1j * w))
        if val == 0.0 or not math.isfinite(val):
            raise ValueError(f"ln|S| not finite at omega = {w!r}")
        return math.log(val)

    total = 0.0
    lo = omega_min
    if lo <= 0.0:
        lo = 1e-9 * omega_max
        # Leading behaviour |S| ~ c w^m near DC, m = multiplicity of the
        # zero at the origin; its integral over [0, lo] in closed form.
        coeffs = s_tf.num.coeffs
        m = 0
        while m < len(coeffs) and coeffs[len(coeffs) - 1 - m] == 0.0:
            m += 1
        c = abs(coeffs[len(coeffs) - 1 - m] / s_tf.den.coeffs[-1])
        total += lo * math.log(c) + m * lo * (math.log(lo) - 1.0)

    seeds = np.logspace(math.log10(lo), math.log10(omega_max),
                        max(int(32 * math.log10(omega_max / lo)), 8))
    budget = tol / (seeds.size - 1)
    for a, b in zip(seeds[:-1], seeds[1:]):
        total += _adaptive_trapezoid(f, a, b, budget)
    return total


def _adaptive_trapezoid(f, a, b, tol, depth=28):
    fa, fb = f(a), f(b)
    return _adapt(f, a, b, fa, fb, 0.5 * (b - a) * (fa + fb), tol, depth)


def _adapt(f, a, b, fa, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    fm = f(m)
    left = 0.25 * (b - a) * (fa + fm)
    right = 0.25 * (b - a) * (fm + fb)
    if depth <= 0 or abs(left + right - whole) <= 3.0 * tol:
        return left + right + (left + right - whole) / 3.0
    return (_adapt(f, a, m, fa, fm, left, 0.5 * tol, depth - 1)
            + _adapt(f, m, b, fm, fb, right, 0.5 * tol, depth - 1))
