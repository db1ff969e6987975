import math

import numpy as np
import pytest

from dobkit.numerics import Polynomial, rk4_step
from dobkit.observers import (BoundPrediction, FirstOrderDob, HighOrderDob,
                              NonlinearDob, dob1_estimate, dob1_zdot,
                              hdob_gains_from_bandwidth, hdob_zdots,
                              manip_dob_estimate, manip_dob_zdot,
                              ndob_estimate, ndob_zdot, ultimate_bound)
from dobkit.plants import TwoLinkArm, manipulator_dynamics, pendulum_plant


def fit_decay_rate(t, e, stop):
    """Slope of ln e over [0, stop]; e must stay positive there."""
    mask = t <= stop
    return -np.polyfit(t[mask], np.log(e[mask]), 1)[0]


def simulate_dob1(a_n, b_n, gain, tau_of_t, taudot_of_t, x0, duration,
                  h=1e-4, u_of_t=lambda t: 0.0):
    """Scalar-plant observer run; the plant matches its nominal model.

    The auxiliary variable starts at gain * x0 so the initial estimate is
    zero.  Returns (t, e) with e the estimation-error series tau_hat - tau.
    """
    n = x0.size
    y = np.concatenate([x0, gain * x0])  # [x, z]
    steps = int(round(duration / h))
    t_log = np.empty(steps + 1)
    e_log = np.empty(steps + 1)

    def deriv(t, yv):
        x, z = yv[:n], yv[n:]
        u = u_of_t(t)
        tau = tau_of_t(t)
        dx = a_n @ x + b_n * u - tau
        dz = dob1_zdot(z, x, u, (a_n, b_n), gain)
        return np.concatenate([dx, dz])

    for i in range(steps + 1):
        t = i * h
        t_log[i] = t
        e_log[i] = np.linalg.norm(dob1_estimate(y[n:], y[:n], gain) - tau_of_t(t))
        if i < steps:
            y = rk4_step(deriv, y, t, h)
    return t_log, e_log


class TestFirstOrderDob:
    def test_estimate_zero_when_z_tracks(self):
        x = np.array([0.5, -1.0])
        assert np.array_equal(dob1_estimate(100.0 * x, x, 100.0), np.zeros(2))

    def test_estimate_offset(self):
        x = np.array([0.5, -1.0])
        c = np.array([3.0, 4.0])
        assert np.allclose(dob1_estimate(100.0 * x + c, x, 100.0), c)

    def test_zero_disturbance_keeps_zero_estimate(self):
        a_n = np.zeros((1, 1))
        b_n = np.array([1.0])
        t, e = simulate_dob1(a_n, b_n, 50.0, lambda t: np.zeros(1),
                             lambda t: np.zeros(1), np.array([0.3]), 0.1,
                             u_of_t=lambda t: math.sin(5.0 * t))
        assert np.max(e) < 1e-12

    def test_constant_disturbance_decay_rate(self):
        a_n = np.zeros((1, 1))
        b_n = np.array([1.0])
        gain = 100.0
        t, e = simulate_dob1(a_n, b_n, gain, lambda t: np.array([5.0]),
                             lambda t: np.zeros(1), np.zeros(1), 0.06)
        rate = fit_decay_rate(t, e, 3.0 / gain)
        assert rate == pytest.approx(gain, rel=0.02)
        assert e[0] == pytest.approx(5.0)

    def test_converged_constant_estimate(self):
        a_n = np.zeros((1, 1))
        b_n = np.array([1.0])
        t, e = simulate_dob1(a_n, b_n, 100.0, lambda t: np.array([5.0]),
                             lambda t: np.zeros(1), np.zeros(1), 0.3)
        assert e[-1] < 1e-6

    def test_sinusoid_steady_error_amplitude(self):
        gain, w, amp = 100.0, 20.0, 2.0
        a_n = np.zeros((1, 1))
        b_n = np.array([1.0])
        t, e = simulate_dob1(a_n, b_n, gain,
                             lambda t: np.array([amp * math.sin(w * t)]),
                             None, np.zeros(1), 2.0)
        predicted = amp * w / math.sqrt(gain ** 2 + w ** 2)
        steady = np.max(e[t > 1.0])
        assert steady == pytest.approx(predicted, rel=0.05)

    def test_state_container(self):
        dob = FirstOrderDob(gain=100.0, z=np.array([1.0, 2.0]))
        x = np.array([0.004, 0.01])
        assert np.allclose(dob.estimate(x), [0.6, 1.0])
        with pytest.raises(ValueError):
            FirstOrderDob(gain=0.0, z=np.zeros(2))

    def test_decay_rate_matches_gain_on_nontrivial_plant(self):
        # Error dynamics are independent of the plant matrices and input.
        a_n = np.array([[0.0, 1.0], [-4.0, -3.0]])
        b_n = np.array([0.0, 2.0])
        gain = 200.0
        t, e = simulate_dob1(a_n, b_n, gain,
                             lambda t: np.array([0.5, 1.5]),
                             None, np.array([0.2, -0.1]), 0.05,
                             u_of_t=lambda t: math.cos(3.0 * t))
        rate = fit_decay_rate(t, e, 3.0 / gain)
        assert rate == pytest.approx(gain, rel=0.02)


class TestUltimateBound:
    def test_vanishing_tail_without_derivative_bound(self):
        bp = BoundPrediction(lam=1.0, gain=100.0, delta_dot=0.0, e0=5.0)
        assert ultimate_bound(bp, 1e3) < 1e-30
        assert ultimate_bound(bp, 0.0) == pytest.approx(5.0)

    def test_doubling_gain_halves_asymptote(self):
        lo = BoundPrediction(lam=1.0, gain=100.0, delta_dot=3.0, e0=0.0)
        hi = BoundPrediction(lam=1.0, gain=200.0, delta_dot=3.0, e0=0.0)
        assert ultimate_bound(lo, 10.0) == pytest.approx(
            2.0 * ultimate_bound(hi, 10.0))

    def test_bound_holds_on_sinusoid_run(self):
        gain, w, amp = 100.0, 20.0, 2.0
        a_n = np.zeros((1, 1))
        b_n = np.array([1.0])
        t, e = simulate_dob1(a_n, b_n, gain,
                             lambda t: np.array([amp * math.sin(w * t)]),
                             None, np.zeros(1), 1.0)
        bp = BoundPrediction(lam=1.0, gain=gain, delta_dot=amp * w, e0=e[0])
        tail = t > 5.0 / gain
        bounds = np.array([ultimate_bound(bp, ti) for ti in t[tail]])
        assert np.all(e[tail] <= bounds)

    def test_time_ordering_enforced(self):
        bp = BoundPrediction(lam=1.0, gain=10.0, delta_dot=0.0, e0=1.0)
        with pytest.raises(ValueError):
            ultimate_bound(bp, 0.0, t0=1.0)


class TestHighOrderGains:
    def test_first_order_reduces_to_bandwidth(self):
        assert hdob_gains_from_bandwidth(1, 123.0) == [123.0]

    def test_second_order_binomial(self):
        assert hdob_gains_from_bandwidth(2, 100.0) == [200.0, 10000.0]

    def test_third_order_matches_polynomial_expansion(self):
        g = 10.0
        gains = hdob_gains_from_bandwidth(3, g)
        assert gains == [30.0, 300.0, 1000.0]
        expansion = Polynomial.from_roots([-g] * 3)
        # (lam + g)^3 coefficients are [1, L1, L2, L3] with lam -> -root.
        assert np.allclose(np.abs(expansion.coeffs), [1.0] + gains)

    @pytest.mark.parametrize("k", range(1, 9))
    def test_binomial_sum_identity(self, k):
        gains = hdob_gains_from_bandwidth(k, 1.0)
        assert sum(gains) + 1.0 == 2 ** k

    def test_exact_binomial_coefficients(self):
        for k in range(1, 9):
            gains = hdob_gains_from_bandwidth(k, 1.0)
            assert gains == [math.comb(k, j) for j in range(1, k + 1)]


def simulate_hdob(k, g, tau_coeffs, duration, h=1e-4):
    """Order-k observer against a polynomial disturbance on a scalar plant."""
    a_n = np.zeros((1, 1))
    b_n = np.array([1.0])
    gains = hdob_gains_from_bandwidth(k, g)
    y = np.zeros(1 + k)  # [x, z_1 .. z_k]
    steps = int(round(duration / h))

    def tau(t):
        return sum(c * t ** j for j, c in enumerate(tau_coeffs))

    def deriv(t, yv):
        x = yv[:1]
        dob = HighOrderDob(gains, [yv[1 + j:2 + j] for j in range(k)])
        dx = -np.array([tau(t)])
        dz = np.concatenate(hdob_zdots(dob, x, 0.0, (a_n, b_n)))
        return np.concatenate([dx, dz])

    t_log = np.empty(steps + 1)
    e_log = np.empty(steps + 1)
    deriv_est = np.empty(steps + 1)
    for i in range(steps + 1):
        t = i * h
        dob = HighOrderDob(gains, [y[1 + j:2 + j] for j in range(k)])
        est = dob.estimates(y[:1])
        t_log[i] = t
        e_log[i] = abs(est[0][0] - tau(t))
        deriv_est[i] = est[1][0] if k > 1 else math.nan
        if i < steps:
            y = rk4_step(deriv, y, t, h)
    return t_log, e_log, deriv_est


class TestHighOrderDob:
    def test_ramp_with_second_order(self):
        rate = 3.0
        t, e, d_est = simulate_hdob(2, 100.0, [0.0, rate], 1.0)
        assert e[-1] < 1e-6
        assert d_est[-1] == pytest.approx(rate, abs=1e-6)

    def test_ramp_with_first_order_has_steady_offset(self):
        rate = 3.0
        gain = 100.0
        t, e, _ = simulate_hdob(1, gain, [0.0, rate], 1.0)
        assert e[-1] == pytest.approx(rate / gain, rel=1e-3)

    def test_quadratic_with_second_order_bounded_nonzero(self):
        coeffs = [0.0, 0.0, 1.0]              # tau = t^2, tau'' = 2
        g = 100.0
        t, e, _ = simulate_hdob(2, g, coeffs, 2.0)
        predicted = 2.0 / g ** 2              # |tau^(k)| / L_k
        assert e[-1] == pytest.approx(predicted, rel=0.05)
        assert e[-1] > 1e-8
        assert np.max(e[t > 1.0]) < 10.0 * predicted

    def test_estimate_identities_maintained(self):
        dob = HighOrderDob([10.0, 25.0], [np.array([1.0]), np.array([2.0])])
        x = np.array([0.3])
        est = dob.estimates(x)
        assert est[0][0] == pytest.approx(1.0 - 10.0 * 0.3, abs=1e-15)
        assert est[1][0] == pytest.approx(2.0 - 25.0 * 0.3, abs=1e-15)

    def test_shared_residual_structure(self):
        # Top stage has no chained term; lower stages add the next estimate.
        a_n = np.zeros((1, 1))
        b_n = np.array([1.0])
        dob = HighOrderDob([10.0, 25.0], [np.array([1.0]), np.array([2.0])])
        x = np.array([0.3])
        u = 0.7
        est = dob.estimates(x)
        residual = b_n * u - est[0]
        zdots = hdob_zdots(dob, x, u, (a_n, b_n))
        assert zdots[0][0] == pytest.approx((10.0 * residual + est[1])[0])
        assert zdots[1][0] == pytest.approx((25.0 * residual)[0])

    def test_gain_validation(self):
        with pytest.raises(ValueError):
            HighOrderDob([10.0, -1.0], [np.zeros(1), np.zeros(1)])
        with pytest.raises(ValueError):
            hdob_gains_from_bandwidth(0, 10.0)

    def test_from_bandwidth_constructor(self):
        dob = HighOrderDob.from_bandwidth(3, 10.0, n=2)
        assert dob.k == 3
        assert dob.gains == [30.0, 300.0, 1000.0]
        assert all(z.shape == (2,) and not z.any() for z in dob.z_list)


class TestNonlinearDob:
    def test_linear_gain_reduces_to_first_order(self):
        x = np.array([0.4, -0.7])
        z = np.array([1.0, 2.0])
        linear = ndob_estimate(z, x, lambda s: 50.0 * s)
        assert np.allclose(linear, dob1_estimate(z, x, 50.0))

    def test_estimate_zero_at_gain_value(self):
        gain_fun = lambda s: np.array([s[0] ** 2, 3.0 * s[1]])
        x = np.array([0.5, -2.0])
        assert np.allclose(ndob_estimate(gain_fun(x), x, gain_fun), np.zeros(2))

    def test_zdot_linear_specialization_matches_dob1(self):
        a_n = np.array([[0.0, 1.0], [-1.0, -2.0]])
        b_n = np.array([0.0, 1.0])
        plant = pendulum_plant()
        # Overwrite the vector fields with the linear model for this check.
        linear = type(plant)(f=lambda s: a_n @ s, g=lambda s: b_n,
                             f_n=lambda s: a_n @ s, g_n=lambda s: b_n, n=2)
        z = np.array([0.3, -0.4])
        x = np.array([0.1, 0.2])
        u = 0.8
        got = ndob_zdot(z, x, u, linear, lambda s: 50.0 * s,
                        lambda s: 50.0 * np.eye(2))
        want = dob1_zdot(z, x, u, (a_n, b_n), 50.0)
        assert np.allclose(got, want)

    def test_jacobian_consistency_check(self):
        with pytest.raises(ValueError):
            NonlinearDob(gain_fun=lambda s: 50.0 * s,
                         jac_fun=lambda s: 60.0 * np.eye(2),
                         z=np.zeros(2))

    def test_pendulum_constant_disturbance_converges(self):
        plant = pendulum_plant()
        diag = np.full(2, 50.0)
        jac = np.diag(diag)
        tau = np.array([0.0, 1.5])
        y = np.concatenate([np.array([0.5, 0.0]), np.zeros(2)])
        h = 1e-4

        def deriv(t, yv):
            x, z = yv[:2], yv[2:]
            dx = plant.derivative(x, 0.0, tau)
            dz = ndob_zdot(z, x, 0.0, plant, lambda s: diag * s,
                           lambda s: jac)
            return np.concatenate([dx, dz])

        errs = []
        for i in range(5000):
            e = np.linalg.norm(ndob_estimate(y[2:], y[:2], lambda s: diag * s)
                               - tau)
            errs.append(e)
            y = rk4_step(deriv, y, i * h, h)
        errs = np.asarray(errs)
        assert errs[-1] < 1e-5
        # Monotone decay after the initial transient.
        tail = errs[200:]
        assert np.all(np.diff(tail) <= 1e-12)

    def test_doubling_jacobian_halves_sinusoid_error(self):
        plant = pendulum_plant()
        h = 1e-4
        steady = {}
        for scale in (50.0, 100.0):
            diag = np.full(2, scale)
            y = np.zeros(4)

            def deriv(t, yv):
                x, z = yv[:2], yv[2:]
                tau = np.array([0.0, 2.0 * math.sin(5.0 * t)])
                dx = plant.derivative(x, 0.0, tau)
                dz = ndob_zdot(z, x, 0.0, plant, lambda s: diag * s,
                               lambda s: np.diag(diag))
                return np.concatenate([dx, dz])

            errs = []
            for i in range(20000):
                t = i * h
                tau = np.array([0.0, 2.0 * math.sin(5.0 * t)])
                errs.append(np.linalg.norm(
                    ndob_estimate(y[2:], y[:2], lambda s: diag * s) - tau))
                y = rk4_step(deriv, y, t, h)
            errs = np.asarray(errs)
            steady[scale] = np.max(errs[15000:])
        ratio = steady[50.0] / steady[100.0]
        assert ratio == pytest.approx(2.0, rel=0.1)

    def test_runtime_definiteness_record(self):
        dob = NonlinearDob(gain_fun=lambda s: 50.0 * s,
                           jac_fun=lambda s: 50.0 * np.eye(2),
                           z=np.zeros(2))
        dob.observe_jacobian(np.zeros(2))
        assert dob.min_sym_eig_seen == pytest.approx(50.0)


class _PointMassPair:
    """Decoupled stand-in arm: constant diagonal inertia, no gravity."""

    def __init__(self, mass):
        self.mass = mass

    def inertia(self, q, nominal=False):
        return self.mass * np.eye(2)

    def coriolis(self, q, qd, nominal=False):
        return np.zeros((2, 2))

    def gravity_torque(self, q, nominal=False):
        return np.zeros(2)


class TestManipulatorDob:
    def test_point_mass_reduction_matches_scalar_observer(self):
        # With constant diagonal inertia the arm observer collapses to the
        # scalar first-order law with effective gain L / m per joint.
        mass, gain = 2.5, 80.0
        stub = _PointMassPair(mass)
        q = np.array([0.2, -0.6])
        qd = np.array([0.4, -0.2])
        z = np.array([1.0, -0.5])
        tau = np.array([0.3, 0.1])
        got = manip_dob_zdot(z, q, qd, tau, stub, gain)
        # Scalar law per joint on the velocity state, torque units:
        # state = m * qd, gain' = L / m, zdot = gain' (tau - tau_hat).
        tau_hat = dob1_estimate(z, mass * qd, gain / mass)
        want = (gain / mass) * (tau - tau_hat)
        assert np.allclose(got, want)
        assert np.allclose(tau_hat, manip_dob_estimate(z, qd, gain))

    def test_constant_disturbance_convergence(self):
        arm = TwoLinkArm()
        gain = 100.0
        tau_dis = np.array([3.0, -2.0])
        zero = np.zeros(2)
        y = np.zeros(6)  # [q, qd, z]
        h = 1e-4

        def deriv(t, yv):
            q, qd, z = yv[:2], yv[2:4], yv[4:]
            qdd = manipulator_dynamics(arm, q, qd, zero, tau_dis)
            dz = manip_dob_zdot(z, q, qd, zero, arm, gain)
            return np.concatenate([qd, qdd, dz])

        for i in range(5000):
            y = rk4_step(deriv, y, i * h, h)
        err = np.linalg.norm(manip_dob_estimate(y[4:], y[2:4], gain) - tau_dis)
        assert err < 1e-4

    def test_gain_matrix_positive_definite_along_run(self):
        arm = TwoLinkArm()
        gain = 100.0
        rng = np.random.default_rng(4)
        for _ in range(50):
            q = rng.uniform(-math.pi, math.pi, 2)
            gain_matrix = gain * np.linalg.inv(arm.inertia(q, nominal=True))
            sym = 0.5 * (gain_matrix + gain_matrix.T)
            assert np.min(np.linalg.eigvalsh(sym)) > 0.0

    def test_doubling_gain_halves_sinusoid_error(self):
        arm = TwoLinkArm()
        zero = np.zeros(2)
        h = 1e-4
        w = 2.0 * math.pi  # 1 Hz
        steady = {}
        for gain in (100.0, 200.0):
            y = np.zeros(6)

            def deriv(t, yv):
                q, qd, z = yv[:2], yv[2:4], yv[4:]
                tau_dis = np.array([1.0, -0.5]) * math.sin(w * t)
                qdd = manipulator_dynamics(arm, q, qd, zero, tau_dis)
                dz = manip_dob_zdot(z, q, qd, zero, arm, gain)
                return np.concatenate([qd, qdd, dz])

            errs = []
            for i in range(20000):
                t = i * h
                tau_dis = np.array([1.0, -0.5]) * math.sin(w * t)
                errs.append(np.linalg.norm(
                    manip_dob_estimate(y[4:], y[2:4], gain) - tau_dis))
                y = rk4_step(deriv, y, t, h)
            # Peak over one full period, well past the gain-set transient.
            steady[gain] = np.max(np.asarray(errs)[10000:])
        assert steady[100.0] / steady[200.0] == pytest.approx(2.0, rel=0.1)

    def test_positive_gain_required(self):
        arm = TwoLinkArm()
        with pytest.raises(ValueError):
            manip_dob_zdot(np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2),
                           arm, 0.0)
