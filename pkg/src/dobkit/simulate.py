"""Fixed-step simulation of plant + observer + controller + disturbance.

One combined state vector (plant states, observer auxiliaries, exosystem
states) is advanced by classical RK4 with no operator splitting: the whole
interconnection is treated as a single continuous-time ODE, with the
control law and estimates re-evaluated at every integrator stage.  Only
the measurement-noise draw is held constant across each step (zero-order
hold).  Estimates are always derived from the auxiliary variables and
measured states, never integrated separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import observers, plants
from .control2dof import AbcGains, abc_desired_accel
from .numerics import DivergenceError, rk4_step


class SimulationDiverged(RuntimeError):
    """State became non-finite; ``trajectory`` holds the finite prefix."""

    def __init__(self, message, trajectory, last_index):
        super().__init__(message)
        self.trajectory = trajectory
        self.last_index = last_index


@dataclass
class Trajectory:
    """Uniformly sampled record of one scenario run.

    ``err`` is tau_hat - tau_dis recomputed from its neighbour columns;
    ``aux`` holds the raw observer auxiliary variables so the defining
    identities (estimate = aux - gain * measured state) can be audited.
    ``estimates_all`` carries the derivative-estimate stack of a high-order
    observer, one page per stage.
    """

    t: np.ndarray
    states: np.ndarray
    state_names: list
    measured: np.ndarray
    u: np.ndarray
    input_names: list
    tau_dis: np.ndarray
    tau_hat: np.ndarray
    err: np.ndarray
    err_norm: np.ndarray
    aux: np.ndarray
    estimates_all: np.ndarray = None
    v: np.ndarray = None

    def write_csv(self, stream):
        d = self.tau_dis.shape[1]
        cols = ["t"] + list(self.state_names) + list(self.input_names)
        cols += _numbered("tau_dis", d) + _numbered("tau_hat", d) + ["err_norm"]
        if self.v is not None:
            cols.append("V")
        stream.write(",".join(cols) + "\n")
        for i in range(self.t.size):
            row = [self.t[i], *self.states[i], *self.u[i],
                   *self.tau_dis[i], *self.tau_hat[i], self.err_norm[i]]
            if self.v is not None:
                row.append(self.v[i])
            stream.write(",".join(repr(float(val)) for val in row) + "\n")


def _numbered(base, d):
    if d == 1:
        return [base]
    return [f"{base}_{i + 1}" for i in range(d)]


def reference_signal(ref, t):
    """(q_ref, qd_ref, qdd_ref) for a reference spec at time ``t``."""
    if ref["type"] == "step":
        return (ref["amplitude"] if t >= ref["time"] else 0.0), 0.0, 0.0
    if ref["type"] == "sine":
        a, w, ph = ref["amplitude"], ref["omega"], ref["phase"]
        s = math.sin(w * t + ph)
        c = math.cos(w * t + ph)
        return a * s, a * w * c, -a * w * w * s
    return 0.0, 0.0, 0.0


def run(scenario):
    """Simulate a validated scenario and return its :class:`Trajectory`.

    Deterministic for a given seed.  On divergence the finite prefix of the
    trajectory is attached to the raised :class:`SimulationDiverged`.
    """
    sc = scenario
    plant = sc.plant
    ptype = sc.plant_type
    n_p = sc.x0.size
    d = sc.dist_dim
    obs = sc.observer
    ctrl = sc.controller
    exo = sc.disturbance

    # Observer auxiliary block.
    if obs["type"] == "none":
        z_dim = 0
    elif obs["type"] == "dob1":
        z_dim = 1 if ptype == "servo" else n_p
    elif obs["type"] == "hdob":
        z_dim = obs["k"] * n_p
    elif obs["type"] == "ndob":
        z_dim = plant.n
    else:  # manip_dob
        z_dim = 2

    n_u = len(sc.input_names)
    h = sc.step
    n_steps = int(round(sc.duration / h))
    n_samples = n_steps + 1

    rng = np.random.default_rng(sc.seed)
    noise_dim = {"servo": 1, "pendulum": 1, "two_link": 2, "lti": 0}[ptype]

    # Auxiliary variables start at gain * x(0) so the initial estimates are
    # zero rather than an artifact of the initial state.
    if obs["type"] == "dob1":
        z0 = (np.atleast_1d(obs["gain"] * plant.j_mn * sc.x0[2])
              if ptype == "servo" else obs["gain"] * sc.x0)
    elif obs["type"] == "hdob":
        z0 = np.concatenate([g * sc.x0 for g in obs["gains"]])
    elif obs["type"] == "ndob":
        z0 = obs["diag"] * sc.x0
    elif obs["type"] == "manip_dob":
        z0 = obs["gain"] * sc.x0[2:]
    else:
        z0 = np.zeros(0)

    y = np.concatenate([sc.x0, z0,
                        exo.x_tau0 if exo is not None else np.zeros(0)])

    t_log = np.arange(n_samples) * h
    states = np.empty((n_samples, n_p))
    measured_log = np.empty((n_samples, n_p))
    u_log = np.empty((n_samples, n_u))
    tau_dis_log = np.empty((n_samples, d))
    tau_hat_log = np.empty((n_samples, d))
    aux_log = np.empty((n_samples, z_dim))
    est_all = (np.empty((n_samples, obs["k"], d))
               if obs["type"] == "hdob" else None)
    v_log = np.empty(n_samples) if sc.certificate is not None else None

    noiseless = sc.noise_amplitude == 0.0

    def measure(xp, noise):
        """Measured view of the plant state (noise on velocity channels)."""
        if noiseless:
            return xp
        meas = xp.copy()
        if ptype == "servo":
            meas[2] = xp[2] + noise[0]     # filtered velocity measurement
        elif ptype == "pendulum":
            meas[1] = xp[1] + noise[0]
        elif ptype == "two_link":
            meas[2:] = xp[2:] + noise
        return meas

    zero_estimate = np.zeros(d)

    def estimate(zb, meas):
        if obs["type"] == "dob1":
            if ptype == "servo":
                x_obs = plant.j_mn * meas[2]
                return observers.dob1_estimate(zb, x_obs, obs["gain"])
            return observers.dob1_estimate(zb, meas, obs["gain"])
        if obs["type"] == "hdob":
            return zb[:n_p] - obs["gains"][0] * meas
        if obs["type"] == "ndob":
            return zb - obs["diag"] * meas
        if obs["type"] == "manip_dob":
            return observers.manip_dob_estimate(zb, meas[2:], obs["gain"])
        return zero_estimate

    abc_gains = (AbcGains(ctrl["kp"], ctrl["kd"])
                 if ctrl["type"] == "abc" else None)
    zero_input = np.zeros(n_u)

    def control(t, meas, tau_hat):
        if ctrl["type"] == "abc":
            ref = reference_signal(ctrl["reference"], t)
            qdd_des = abc_desired_accel(ref, (meas[0], meas[2]), abc_gains)
            comp = tau_hat[0] if obs["type"] != "none" else 0.0
            return np.array([(plant.j_mn * qdd_des + comp) / plant.k_taun])
        if ctrl["type"] == "sfb":
            u = -float(ctrl["k_row"] @ meas)
            if ctrl["cancel"] and obs["type"] != "none":
                b = plant.b_n
                u += float(tau_hat @ b / (b @ b))
            return np.array([u])
        return zero_input

    def plant_deriv(xp, u, tau_d):
        if ptype == "lti":
            return plant.derivative(xp, u[0], tau_d)
        if ptype == "servo":
            return plants.servo_dynamics(plant, xp, u[0], tau_d[0])
        if ptype == "pendulum":
            return plant.derivative(xp, u[0], tau_d)
        q, qd = xp[:2], xp[2:]
        qdd = plants.manipulator_dynamics(plant, q, qd, u, tau_d)
        return np.concatenate([qd, qdd])

    if obs["type"] == "dob1" and ptype == "servo":
        # The servo observer runs in torque units on the momentum state
        # J_mn * measured velocity, with the current as its model input.
        servo_model = (np.zeros((1, 1)), np.array([plant.k_taun]))
    ndob_jac = np.diag(obs["diag"]) if obs["type"] == "ndob" else None

    def obs_deriv(zb, meas, u):
        if obs["type"] == "dob1":
            if ptype == "servo":
                x_obs = np.atleast_1d(plant.j_mn * meas[2])
                return observers.dob1_zdot(zb, x_obs, u[0], servo_model,
                                           obs["gain"])
            return observers.dob1_zdot(zb, meas, u[0], (plant.a_n, plant.b_n),
                                       obs["gain"])
        if obs["type"] == "hdob":
            gains = obs["gains"]
            k = obs["k"]
            est = [zb[j * n_p:(j + 1) * n_p] - gains[j] * meas
                   for j in range(k)]
            residual = plant.a_n @ meas + plant.b_n * u[0] - est[0]
            parts = [gains[j] * residual + (est[j + 1] if j + 1 < k else 0.0)
                     for j in range(k)]
            return np.concatenate(parts)
        if obs["type"] == "ndob":
            tau_hat = zb - obs["diag"] * meas
            return ndob_jac @ (plant.f_n(meas) + plant.g_n(meas) * u[0]
                               - tau_hat)
        if obs["type"] == "manip_dob":
            return observers.manip_dob_zdot(zb, meas[:2], meas[2:], u,
                                            plant, obs["gain"])
        return np.zeros(0)

    def true_tau_dis(xp, u, tau_d):
        if ptype == "lti":
            return plant.tau_dis(xp, u[0], tau_d)
        if ptype == "servo":
            qdd = (plant.k_tau * u[0] - tau_d[0]) / plant.j_m
            return np.array([plant.k_taun * u[0] - plant.j_mn * qdd])
        if ptype == "pendulum":
            return plant.tau_dis(xp, u[0], tau_d)
        q, qd = xp[:2], xp[2:]
        qdd = plants.manipulator_dynamics(plant, q, qd, u, tau_d)
        return (np.asarray(u, dtype=float)
                - plant.inertia(q, nominal=True) @ qdd
                - plant.coriolis(q, qd, nominal=True) @ qd
                - plant.gravity_torque(q, nominal=True))

    def make_deriv(noise_held):
        # The control law is re-evaluated at every integrator stage from the
        # stage states (the loop is one continuous interconnection); only the
        # measurement-noise draw is held across the step.
        def deriv(t, yv):
            xp = yv[:n_p]
            zb = yv[n_p:n_p + z_dim]
            xe = yv[n_p + z_dim:]
            tau_d = exo.c_tau @ xe if exo is not None else np.zeros(d)
            meas = measure(xp, noise_held)
            u = control(t, meas, estimate(zb, meas))
            dxp = plant_deriv(xp, u, tau_d)
            dzb = obs_deriv(zb, meas, u) if z_dim else np.zeros(0)
            dxe = exo.a_tau @ xe if exo is not None else np.zeros(0)
            return np.concatenate([dxp, dzb, dxe])
        return deriv

    def assemble(keep):
        err = tau_hat_log[:keep] - tau_dis_log[:keep]
        return Trajectory(
            t=t_log[:keep], states=states[:keep], state_names=sc.state_names,
            measured=measured_log[:keep], u=u_log[:keep],
            input_names=sc.input_names,
            tau_dis=tau_dis_log[:keep], tau_hat=tau_hat_log[:keep], err=err,
            err_norm=np.linalg.norm(err, axis=1),
            aux=aux_log[:keep],
            estimates_all=est_all[:keep] if est_all is not None else None,
            v=v_log[:keep] if v_log is not None else None)

    for i in range(n_samples):
        t = t_log[i]
        xp = y[:n_p]
        zb = y[n_p:n_p + z_dim]
        xe = y[n_p + z_dim:]
        noise = (rng.uniform(-sc.noise_amplitude, sc.noise_amplitude, noise_dim)
                 if sc.noise_amplitude > 0.0 and noise_dim else np.zeros(noise_dim))
        tau_d = exo.c_tau @ xe if exo is not None else np.zeros(d)
        meas = measure(xp, noise)
        tau_hat = estimate(zb, meas)
        u = control(t, meas, tau_hat)

        states[i] = xp
        measured_log[i] = meas
        u_log[i] = u
        tau_dis_log[i] = true_tau_dis(xp, u, tau_d)
        tau_hat_log[i] = tau_hat
        aux_log[i] = zb
        if est_all is not None:
            for j in range(obs["k"]):
                est_all[i, j] = zb[j * n_p:(j + 1) * n_p] - obs["gains"][j] * meas
        if v_log is not None:
            v_log[i] = sc.certificate.v(xp)

        if i == n_steps:
            break
        try:
            y = rk4_step(make_deriv(noise), y, t, h)
        except DivergenceError as exc:
            raise SimulationDiverged(
                f"simulation diverged during the step from t = {t!r}: {exc}",
                assemble(i + 1), i) from exc
        if not np.all(np.isfinite(y)):
            raise SimulationDiverged(
                f"state became non-finite after the step from t = {t!r}",
                assemble(i + 1), i)

    return assemble(n_samples)
