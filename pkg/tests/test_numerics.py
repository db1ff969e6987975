import numpy as np
import pytest

from dobkit.numerics import (ConvergenceError, DivergenceError,
                             NotHurwitzError, Polynomial, poly_roots,
                             rk4_step, solve_lyapunov)


def companion_eigenvalues(coeffs):
    """Independent root oracle: eigenvalues of the companion matrix."""
    c = np.asarray(coeffs, dtype=float)
    c = c / c[0]
    n = len(c) - 1
    comp = np.zeros((n, n))
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -c[1:][::-1]
    return np.linalg.eigvals(comp)


def assert_root_sets_match(found, expected, tol):
    remaining = list(found)
    assert len(remaining) == len(expected)
    for e in expected:
        dist = [abs(f - e) for f in remaining]
        i = int(np.argmin(dist))
        assert dist[i] <= tol, f"no match for root {e} (closest {dist[i]:.3e})"
        remaining.pop(i)


class TestPolynomial:
    def test_trims_leading_zeros(self):
        p = Polynomial([0.0, 0.0, 2.0, 4.0])
        assert p.degree == 1
        assert p.coeffs.tolist() == [2.0, 4.0]

    def test_zero_polynomial(self):
        p = Polynomial([0.0, 0.0])
        assert p.is_zero
        assert p.degree == 0

    def test_degree_matches_length(self):
        p = Polynomial([1.0, 3.0, 2.0])
        assert p.degree == len(p.coeffs) - 1

    def test_arithmetic_and_eval(self):
        p = Polynomial([1.0, 1.0])          # s + 1
        q = Polynomial([1.0, 2.0])          # s + 2
        prod = p * q
        assert prod.coeffs.tolist() == [1.0, 3.0, 2.0]
        assert (p + q).coeffs.tolist() == [2.0, 3.0]
        assert (p - q).coeffs.tolist() == [-1.0]
        assert prod(-1.0) == 0.0
        assert prod(2j) == np.polyval([1, 3, 2], 2j)

    def test_from_roots(self):
        p = Polynomial.from_roots([-1.0, -2.0])
        assert np.allclose(p.coeffs, [1.0, 3.0, 2.0])

    def test_from_roots_conjugate_pair(self):
        p = Polynomial.from_roots([-1 + 2j, -1 - 2j])
        assert np.allclose(p.coeffs, [1.0, 2.0, 5.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Polynomial([1.0, np.nan])


class TestPolyRoots:
    def test_factorable_quadratic(self):
        roots = poly_roots(Polynomial([1.0, 3.0, 2.0]))
        assert_root_sets_match(roots, [-2.0, -1.0], 1e-10)

    def test_linear(self):
        roots = poly_roots(Polynomial([1.0, 100.0]))
        assert roots.size == 1
        assert abs(roots[0] - (-100.0)) < 1e-10

    def test_cubic_vs_companion_oracle(self):
        # Outer-gain locus cubic at alpha = 1 (Kp = 100, Kd = 12, g = 100).
        coeffs = [1.0, 112.0, 1300.0, 10000.0]
        found = poly_roots(Polynomial(coeffs))
        expected = companion_eigenvalues(coeffs)
        assert_root_sets_match(found, expected, 1e-8)

    def test_residual_bound(self):
        p = Polynomial.from_roots([-1000.0, -112.0, -887.0, -3.5])
        roots = poly_roots(p)
        residual = np.max(np.abs(np.polyval(p.coeffs, roots)))
        assert residual <= 1e-8 * np.max(np.abs(p.coeffs))

    def test_roots_of_origin_factor_are_exact(self):
        roots = poly_roots(Polynomial([1.0, 3.0, 2.0, 0.0, 0.0]))
        exact_zero = [r for r in roots if r == 0.0]
        assert len(exact_zero) == 2

    def test_zero_polynomial_rejected(self):
        with pytest.raises(ValueError):
            poly_roots(Polynomial([0.0]))

    def test_constant_rejected(self):
        with pytest.raises(ValueError):
            poly_roots(Polynomial([3.0]))

    def test_nonconvergence_reports_best_iterate(self):
        with pytest.raises(ConvergenceError) as info:
            poly_roots(Polynomial([1.0, 3.0, 2.0]), max_iter=1, tol=1e-300)
        assert info.value.best.size == 2

    def test_roundtrip_well_separated_degrees_up_to_six(self):
        rng = np.random.default_rng(7)
        for degree in range(2, 7):
            for _ in range(5):
                base = rng.uniform(0.5, 3.0, degree)
                roots = -np.cumsum(base) * rng.choice([1.0, 10.0])
                p = Polynomial.from_roots(roots)
                recovered = poly_roots(p)
                assert_root_sets_match(recovered, roots,
                                       1e-8 * max(1.0, np.max(np.abs(roots))))

    def test_complex_conjugate_roots(self):
        roots = [-3 + 4j, -3 - 4j, -10.0]
        found = poly_roots(Polynomial.from_roots(roots))
        assert_root_sets_match(found, roots, 1e-9)


class TestSolveLyapunov:
    def test_diagonal_case(self):
        p = solve_lyapunov(-np.eye(2), 2.0 * np.eye(2))
        assert np.allclose(p, np.eye(2), atol=1e-12)

    def test_scalar_case(self):
        p = solve_lyapunov(np.array([[-2.0]]), np.array([[4.0]]))
        assert abs(p[0, 0] - 1.0) < 1e-12

    def test_random_stable_3x3_residual(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 3)) - 5.0 * np.eye(3)
        q = rng.normal(size=(3, 3))
        q = q @ q.T + np.eye(3)
        p = solve_lyapunov(a, q)
        residual = np.max(np.abs(a.T @ p + p @ a + q))
        assert residual <= 1e-9 * np.max(np.abs(q))
        assert np.allclose(p, p.T)

    def test_positive_definite_on_random_vectors(self):
        rng = np.random.default_rng(11)
        a = np.array([[0.0, 1.0], [-30.0, -11.0]])
        p = solve_lyapunov(a, np.eye(2))
        for _ in range(100):
            x = rng.normal(size=2)
            while not np.any(x):
                x = rng.normal(size=2)
            assert x @ p @ x > 0.0

    def test_rejects_non_hurwitz(self):
        with pytest.raises(NotHurwitzError):
            solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))

    def test_rejects_marginally_stable(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        with pytest.raises(NotHurwitzError):
            solve_lyapunov(a, np.eye(2))

    def test_rejects_indefinite_q(self):
        with pytest.raises(ValueError):
            solve_lyapunov(-np.eye(2), np.diag([1.0, -1.0]))

    def test_rejects_asymmetric_q(self):
        with pytest.raises(ValueError):
            solve_lyapunov(-np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


def expm_series(a, order=40):
    """Truncated-series matrix exponential, oracle for the linear case."""
    result = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, order + 1):
        term = term @ a / k
        result = result + term
    return result


class TestRk4:
    def test_zero_field_leaves_state(self):
        x = np.array([1.0, -2.0])
        out = rk4_step(lambda t, s: np.zeros_like(s), x, 0.0, 0.1)
        assert np.array_equal(out, x)

    def test_exponential_decay(self):
        x = np.array([1.0])
        for i in range(100):
            x = rk4_step(lambda t, s: -s, x, i * 0.01, 0.01)
        assert abs(x[0] - np.exp(-1.0)) <= 1e-9

    def test_linear_system_vs_series_oracle(self):
        a = np.array([[0.0, 1.0], [-4.0, -2.0]])
        x = np.array([1.0, 0.5])
        h = 1e-3
        for i in range(1000):
            x = rk4_step(lambda t, s: a @ s, x, i * h, h)
        expected = expm_series(a) @ np.array([1.0, 0.5])
        assert np.max(np.abs(x - expected)) <= 1e-8

    def test_fourth_order_convergence(self):
        def solve(h):
            x = np.array([1.0])
            n = int(round(1.0 / h))
            for i in range(n):
                x = rk4_step(lambda t, s: -s, x, i * h, h)
            return abs(x[0] - np.exp(-1.0))

        coarse = solve(0.1)
        fine = solve(0.05)
        assert coarse / fine >= 15.0

    def test_divergence_names_time(self):
        def f(t, s):
            return s * np.inf if t > 0.05 else s

        with pytest.raises(DivergenceError) as info:
            rk4_step(f, np.array([1.0]), 0.0, 0.2)
        assert info.value.time is not None

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            rk4_step(lambda t, s: s, np.array([1.0]), 0.0, 0.0)
