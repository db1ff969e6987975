"""Small dense numerical kernel: polynomials, roots, Lyapunov solves, RK4.

Everything here is a pure function of its inputs and safe to call
concurrently.  Sizes are small by construction (polynomial degree <= ~8,
matrices up to 6x6), so the algorithms favour simplicity over asymptotics.
"""

from __future__ import annotations

import numpy as np

# Tolerances and iteration caps used by this kernel.
ROOTS_MAX_ITER = 200
ROOTS_UPDATE_TOL = 1e-12      # on the update norm, scaled by root magnitude
ROOTS_RESIDUAL_RTOL = 1e-8    # |p(r)| <= rtol * max|coeff|
LYAP_RESIDUAL_RTOL = 1e-9     # ||A'P + PA + Q||_max <= rtol * ||Q||_max
SYMMETRY_RTOL = 1e-9


class ConvergenceError(RuntimeError):
    """Iteration cap reached; ``best`` holds the best iterate found."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


class DivergenceError(RuntimeError):
    """A state or stage evaluation became non-finite; ``time`` names when."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class NotHurwitzError(ValueError):
    """The closed-loop matrix has an eigenvalue with nonnegative real part."""


class Polynomial:
    """Real-coefficient polynomial with coefficients stored highest degree first.

    The zero polynomial is represented as ``coeffs == [0.0]``.  For any other
    polynomial the leading coefficient is nonzero (leading zeros are trimmed
    on construction).
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        nz = np.nonzero(c)[0]
        self.coeffs = c[nz[0]:].copy() if nz.size else np.zeros(1)

    @classmethod
    def from_roots(cls, roots, leading=1.0):
        """Monic-times-``leading`` polynomial with the given roots."""
        c = np.array([1.0 + 0.0j])
        for r in roots:
            c = np.convolve(c, np.array([1.0, -r], dtype=complex))
        if np.max(np.abs(c.imag)) > 1e-6 * max(1.0, np.max(np.abs(c.real))):
            raise ValueError("roots do not form a real-coefficient polynomial")
        return cls(leading * c.real)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def is_zero(self):
        return self.degree == 0 and self.coeffs[0] == 0.0

    def __call__(self, s):
        return np.polyval(self.coeffs, s)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(np.polymul(self.coeffs, other.coeffs))
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial([float(other)])
        return Polynomial(np.polyadd(self.coeffs, other.coeffs))

    def __sub__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial([float(other)])
        return Polynomial(np.polysub(self.coeffs, other.coeffs))

    def __neg__(self):
        return Polynomial(-self.coeffs)

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"


def poly_roots(p, max_iter=ROOTS_MAX_ITER, tol=ROOTS_UPDATE_TOL):
    """All complex roots of ``p`` (with multiplicity) via Durand-Kerner.

    Operates on the monic normalization.  The update tolerance is scaled by
    (1 + |root|) so that large-magnitude roots, whose updates bottom out
    near machine precision times their size, still register as converged.
    Roots are returned sorted by (real, imag).

    Raises ValueError for the zero polynomial or degree < 1, and
    ConvergenceError (carrying the best iterate) if the cap is reached.
    """
    if not isinstance(p, Polynomial):
        p = Polynomial(p)
    if p.is_zero:
        raise ValueError("zero polynomial has no well-defined roots")
    if p.degree < 1:
        raise ValueError("degree must be at least 1")

    # Trailing zero coefficients are exact roots at the origin; peel them off
    # so the iteration only sees the reduced polynomial.
    coeffs = p.coeffs
    n_origin = 0
    while coeffs[-1] == 0.0 and len(coeffs) > 1:
        coeffs = coeffs[:-1]
        n_origin += 1
    if len(coeffs) == 1:
        return np.zeros(n_origin, dtype=complex)
    at_origin = np.zeros(n_origin, dtype=complex)

    monic = coeffs / coeffs[0]
    n = len(coeffs) - 1
    # Fujiwara bound on the root radius; tight enough that the far iterates
    # reach the root region well within the iteration cap.
    radius = 2.0 * np.max(np.abs(monic[1:]) ** (1.0 / np.arange(1, n + 1)))
    radius = max(radius, 1e-3)
    x = radius * (0.4 + 0.9j) ** np.arange(1, n + 1)

    converged = False
    for _ in range(max_iter):
        px = np.polyval(monic, x)
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        denom = np.prod(diff, axis=1)
        # Coincident iterates would zero the denominator; nudge them apart.
        bad = np.abs(denom) == 0.0
        if np.any(bad):
            x[bad] += 1e-8 * radius * (1 + 1j)
            continue
        delta = px / denom
        x = x - delta
        if np.max(np.abs(delta) / (1.0 + np.abs(x))) < tol:
            converged = True
            break

    x = np.concatenate([x, at_origin])
    order = np.lexsort((x.imag, x.real))
    x = x[order]
    residual = np.max(np.abs(np.polyval(p.coeffs, x)))
    bound = ROOTS_RESIDUAL_RTOL * np.max(np.abs(p.coeffs))
    if not converged and residual > bound:
        raise ConvergenceError(
            f"root iteration did not converge in {max_iter} steps "
            f"(residual {residual:.3e} > {bound:.3e})", best=x)
    return x


def _check_square(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def solve_lyapunov(a_cl, q):
    """Solve A'P + P A = -Q for symmetric positive definite P.

    Uses Kronecker vectorization and a dense pivoted solve, which is ample
    at the sizes handled here (n <= 6).  Requires ``a_cl`` Hurwitz and ``q``
    symmetric positive definite; the returned P satisfies the residual bound
    ||A'P + PA + Q||_max <= LYAP_RESIDUAL_RTOL * ||Q||_max.
    """
    a = _check_square(a_cl, "a_cl")
    q = _check_square(q, "q")
    n = a.shape[0]
    if q.shape[0] != n:
        raise ValueError("a_cl and q must have matching dimensions")
    qscale = np.max(np.abs(q))
    if np.max(np.abs(q - q.T)) > SYMMETRY_RTOL * max(qscale, 1.0):
        raise ValueError("q must be symmetric")
    q = 0.5 * (q + q.T)
    if np.min(np.linalg.eigvalsh(q)) <= 0.0:
        raise ValueError("q must be positive definite")
    eigs = np.linalg.eigvals(a)
    if np.max(eigs.real) >= 0.0:
        raise NotHurwitzError(
            f"a_cl is not Hurwitz (max eigenvalue real part {np.max(eigs.real):.3e})")

    eye = np.eye(n)
    system = np.kron(eye, a.T) + np.kron(a.T, eye)
    vec_p = np.linalg.solve(system, -q.flatten(order="F"))
    p = vec_p.reshape((n, n), order="F")
    p = 0.5 * (p + p.T)

    residual = np.max(np.abs(a.T @ p + p @ a + q))
    if residual > LYAP_RESIDUAL_RTOL * qscale:
        raise np.linalg.LinAlgError(
            f"Lyapunov residual {residual:.3e} exceeds {LYAP_RESIDUAL_RTOL * qscale:.3e}")
    if np.min(np.linalg.eigvalsh(p)) <= 0.0:
        raise np.linalg.LinAlgError("computed P is not positive definite")
    return p


def rk4_step(f, x, t, h):
    """One classical fourth-order Runge-Kutta step of ``xdot = f(t, x)``.

    Raises DivergenceError naming the stage time if any stage evaluates to
    a non-finite value.
    """
    if h <= 0.0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=float)

    def stage(ts, xs):
        k = np.asarray(f(ts, xs), dtype=float)
        if not np.all(np.isfinite(k)):
            raise DivergenceError(f"non-finite derivative at t = {ts!r}", time=ts)
        return k

    # Overflow here shows up as a non-finite state and is reported by the
    # caller's finiteness checks, so the numpy warning adds nothing.
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = stage(t, x)
        k2 = stage(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = stage(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = stage(t + h, x + h * k3)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
