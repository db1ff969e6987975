"""Scenario configuration: JSON schema, validation and model assembly.

A scenario document has top-level sections ``plant``, ``observer``,
``controller``, ``disturbance`` and ``sim`` (plus an optional ``analysis``
section consumed by the CLI).  Unknown keys anywhere are hard errors so
that typos in gain names never pass silently; every validation failure
names the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import plants
from .control2dof import make_certificate

_REQUIRED = object()


class ScenarioError(ValueError):
    """Configuration rejected; the message carries the offending field path."""


def _check_keys(section, path, allowed):
    if not isinstance(section, dict):
        raise ScenarioError(f"{path}: must be an object")
    for key in section:
        if key not in allowed:
            raise ScenarioError(f"{path}.{key}: unknown key")


def _number(section, path, key, default=_REQUIRED, minimum=None,
            exclusive=False):
    if key not in section:
        if default is _REQUIRED:
            raise ScenarioError(f"{path}.{key}: missing required key")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}.{key}: must be a number")
    value = float(value)
    if minimum is not None:
        if exclusive and value <= minimum:
            raise ScenarioError(f"{path}.{key}: must be > {minimum}")
        if not exclusive and value < minimum:
            raise ScenarioError(f"{path}.{key}: must be >= {minimum}")
    return value


def _integer(section, path, key, default=_REQUIRED, minimum=None):
    if key not in section:
        if default is _REQUIRED:
            raise ScenarioError(f"{path}.{key}: missing required key")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{path}.{key}: must be an integer")
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{path}.{key}: must be >= {minimum}")
    return value


def _vector(section, path, key, length=None, default=_REQUIRED):
    if key not in section:
        if default is _REQUIRED:
            raise ScenarioError(f"{path}.{key}: missing required key")
        return default
    value = section[key]
    if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ScenarioError(f"{path}.{key}: must be a list of numbers")
    if length is not None and len(value) != length:
        raise ScenarioError(f"{path}.{key}: must have length {length}")
    return np.asarray(value, dtype=float)


def _scalar_or_vector(section, path, key, length, default=_REQUIRED):
    """Scalar values broadcast over the disturbance channel vector."""
    if key not in section:
        if default is _REQUIRED:
            raise ScenarioError(f"{path}.{key}: missing required key")
        return default
    value = section[key]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, list):
        return _vector(section, path, key, length)
    raise ScenarioError(f"{path}.{key}: must be a number or list of numbers")


@dataclass
class Scenario:
    """Validated, assembled scenario ready for :func:`dobkit.simulate.run`."""

    plant_type: str
    plant: object
    observer: dict
    controller: dict
    disturbance: object          # DisturbanceModel or None
    duration: float
    step: float
    noise_amplitude: float
    seed: int
    x0: np.ndarray
    state_names: list
    input_names: list
    dist_dim: int
    certificate: object = None
    analysis: dict = field(default_factory=dict)


def load_scenario(source):
    """Load and validate a scenario from a dict, open stream or file path."""
    if isinstance(source, dict):
        return build_scenario(source)
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"config: invalid JSON at line {exc.lineno} column {exc.colno}: "
            f"{exc.msg}") from exc
    if not isinstance(config, dict):
        raise ScenarioError("config: top level must be an object")
    return build_scenario(config)


def build_scenario(config):
    _check_keys(config, "config",
                {"plant", "observer", "controller", "disturbance", "sim",
                 "analysis"})
    for key in ("plant", "sim"):
        if key not in config:
            raise ScenarioError(f"config.{key}: missing required section")

    plant_type, plant, x0, state_names, input_names, dist_dim = \
        _build_plant(config["plant"])
    observer = _build_observer(config.get("observer", {"type": "none"}),
                               plant_type, plant)
    controller = _build_controller(config.get("controller", {"type": "none"}),
                                   plant_type, plant)
    disturbance, channel = _build_disturbance(
        config.get("disturbance", {"family": "none"}), plant_type, plant,
        dist_dim)

    sim = config["sim"]
    _check_keys(sim, "sim", {"duration", "step", "seed", "noise_amplitude"})
    step = _number(sim, "sim", "step", default=1e-4, minimum=0.0, exclusive=True)
    duration = _number(sim, "sim", "duration", minimum=step)
    noise = _number(sim, "sim", "noise_amplitude", default=0.0, minimum=0.0)
    if noise > 0.0 and plant_type == "lti":
        raise ScenarioError("sim.noise_amplitude: lti plants have no "
                            "designated velocity measurement to perturb")
    seed = _integer(sim, "sim", "seed", default=0, minimum=0)

    analysis = config.get("analysis", {})
    _check_keys(analysis, "analysis",
                {"omega_min", "omega_max", "points", "alpha_grid", "sweep"})
    if "sweep" in analysis:
        _check_keys(analysis["sweep"], "analysis.sweep", {"param", "values"})

    certificate = None
    if controller["type"] == "sfb":
        _check_matched(channel, plant, disturbance)
        if controller["q_matrix"] is not None:
            try:
                certificate = make_certificate(plant.a_n, plant.b_n,
                                               controller["k_row"],
                                               controller["q_matrix"])
            except ValueError as exc:
                raise ScenarioError(f"controller.Q: {exc}") from exc

    return Scenario(plant_type=plant_type, plant=plant, observer=observer,
                    controller=controller, disturbance=disturbance,
                    duration=duration, step=step, noise_amplitude=noise,
                    seed=seed, x0=x0, state_names=state_names,
                    input_names=input_names, dist_dim=dist_dim,
                    certificate=certificate, analysis=analysis)


def _build_plant(section):
    _check_keys(section, "plant",
                {"type", "A", "A_n", "b", "b_n", "x0",
                 "J_m", "J_mn", "K_tau", "K_taun", "g_v", "q0", "qd0",
                 "m1", "m2", "l1", "l2", "lc1", "lc2", "I1", "I2", "gravity",
                 "m1_n", "m2_n", "l1_n", "l2_n", "lc1_n", "lc2_n",
                 "I1_n", "I2_n"})
    ptype = section.get("type")
    if ptype not in ("lti", "servo", "two_link", "pendulum"):
        raise ScenarioError(
            "plant.type: must be one of lti, servo, two_link, pendulum")

    if ptype == "lti":
        if "A" not in section:
            raise ScenarioError("plant.A: missing required key")
        a = section["A"]
        if not isinstance(a, list) or not all(isinstance(r, list) for r in a):
            raise ScenarioError("plant.A: must be a list of rows")
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ScenarioError("plant.A: must be square")
        n = a.shape[0]
        b = _vector(section, "plant", "b", n)
        a_n = section.get("A_n")
        if a_n is not None:
            a_n = np.asarray(a_n, dtype=float)
            if a_n.shape != a.shape:
                raise ScenarioError("plant.A_n: must match the shape of plant.A")
        else:
            a_n = a
        b_n = _vector(section, "plant", "b_n", n, default=b)
        try:
            plant = plants.LtiPlant(a=a, b=b, a_n=a_n, b_n=b_n)
        except ValueError as exc:
            raise ScenarioError(f"plant: {exc}") from exc
        x0 = _vector(section, "plant", "x0", n, default=np.zeros(n))
        names = [f"x{i + 1}" for i in range(n)]
        return ptype, plant, x0, names, ["u"], n

    if ptype == "servo":
        j_m = _number(section, "plant", "J_m", minimum=0.0, exclusive=True)
        k_tau = _number(section, "plant", "K_tau", minimum=0.0, exclusive=True)
        j_mn = _number(section, "plant", "J_mn", default=j_m,
                       minimum=0.0, exclusive=True)
        k_taun = _number(section, "plant", "K_taun", default=k_tau,
                         minimum=0.0, exclusive=True)
        g_v = _number(section, "plant", "g_v", minimum=0.0, exclusive=True)
        plant = plants.ServoPlant(j_m=j_m, k_tau=k_tau, j_mn=j_mn,
                                  k_taun=k_taun, g_v=g_v)
        q0 = _number(section, "plant", "q0", default=0.0)
        qd0 = _number(section, "plant", "qd0", default=0.0)
        return ptype, plant, np.array([q0, qd0, qd0]), ["q", "qd", "v_f"], ["u"], 1

    if ptype == "two_link":
        kwargs = {}
        mapping = {"m1": "m1", "m2": "m2", "l1": "l1", "l2": "l2",
                   "lc1": "lc1", "lc2": "lc2", "I1": "i1", "I2": "i2",
                   "gravity": "gravity",
                   "m1_n": "m1_n", "m2_n": "m2_n", "l1_n": "l1_n",
                   "l2_n": "l2_n", "lc1_n": "lc1_n", "lc2_n": "lc2_n",
                   "I1_n": "i1_n", "I2_n": "i2_n"}
        for cfg_key, attr in mapping.items():
            if cfg_key in section:
                kwargs[attr] = _number(section, "plant", cfg_key)
        try:
            plant = plants.TwoLinkArm(**kwargs)
        except ValueError as exc:
            raise ScenarioError(f"plant: {exc}") from exc
        q0 = _vector(section, "plant", "q0", 2, default=np.zeros(2))
        qd0 = _vector(section, "plant", "qd0", 2, default=np.zeros(2))
        x0 = np.concatenate([q0, qd0])
        return ptype, plant, x0, ["q1", "q2", "qd1", "qd2"], ["u_1", "u_2"], 2

    # pendulum
    for key in ("J_m", "K_tau", "g_v", "m1"):
        if key in section:
            raise ScenarioError(f"plant.{key}: not a pendulum parameter")
    plant = plants.pendulum_plant()
    x0 = _vector(section, "plant", "x0", 2, default=np.zeros(2))
    return ptype, plant, x0, ["x1", "x2"], ["u"], 2


def _build_observer(section, plant_type, plant):
    _check_keys(section, "observer",
                {"type", "L", "k", "g_dob", "gains", "gain"})
    otype = section.get("type", "none")
    if otype not in ("none", "dob1", "hdob", "ndob", "manip_dob"):
        raise ScenarioError(
            "observer.type: must be one of none, dob1, hdob, ndob, manip_dob")
    if otype == "none":
        return {"type": "none"}
    if otype == "dob1":
        if plant_type not in ("lti", "servo"):
            raise ScenarioError(
                "observer.type: dob1 requires an lti or servo plant")
        gain = _number(section, "observer", "L", minimum=0.0, exclusive=True)
        return {"type": "dob1", "gain": gain}
    if otype == "hdob":
        if plant_type != "lti":
            raise ScenarioError("observer.type: hdob requires an lti plant")
        k = _integer(section, "observer", "k", minimum=1)
        if "gains" in section:
            gains = list(_vector(section, "observer", "gains", k))
            if any(g <= 0.0 for g in gains):
                raise ScenarioError("observer.gains: must all be > 0")
        else:
            g_dob = _number(section, "observer", "g_dob",
                            minimum=0.0, exclusive=True)
            from .observers import hdob_gains_from_bandwidth
            gains = hdob_gains_from_bandwidth(k, g_dob)
        return {"type": "hdob", "k": k, "gains": gains}
    if otype == "ndob":
        if plant_type != "pendulum":
            raise ScenarioError("observer.type: ndob requires a pendulum plant")
        if "gains" in section:
            diag = _vector(section, "observer", "gains", plant.n)
        else:
            diag = np.full(plant.n, _number(section, "observer", "gain",
                                            minimum=0.0, exclusive=True))
        if np.any(diag <= 0.0):
            raise ScenarioError("observer.gains: must all be > 0")
        return {"type": "ndob", "diag": diag}
    # manip_dob
    if plant_type != "two_link":
        raise ScenarioError("observer.type: manip_dob requires a two_link plant")
    gain = _number(section, "observer", "L", minimum=0.0, exclusive=True)
    return {"type": "manip_dob", "gain": gain}


def _build_reference(section):
    _check_keys(section, "controller.reference",
                {"type", "amplitude", "time", "omega", "phase"})
    rtype = section.get("type", "none")
    if rtype not in ("none", "step", "sine"):
        raise ScenarioError(
            "controller.reference.type: must be one of none, step, sine")
    if rtype == "none":
        return {"type": "none"}
    if rtype == "step":
        return {"type": "step",
                "amplitude": _number(section, "controller.reference",
                                     "amplitude", default=1.0),
                "time": _number(section, "controller.reference", "time",
                                default=0.0, minimum=0.0)}
    return {"type": "sine",
            "amplitude": _number(section, "controller.reference", "amplitude",
                                 default=1.0),
            "omega": _number(section, "controller.reference", "omega",
                             minimum=0.0, exclusive=True),
            "phase": _number(section, "controller.reference", "phase",
                             default=0.0)}


def _build_controller(section, plant_type, plant):
    _check_keys(section, "controller",
                {"type", "Kp", "Kd", "reference", "K", "cancel", "Q"})
    ctype = section.get("type", "none")
    if ctype not in ("none", "abc", "sfb"):
        raise ScenarioError("controller.type: must be one of none, abc, sfb")
    if ctype == "none":
        return {"type": "none"}
    if ctype == "abc":
        if plant_type != "servo":
            raise ScenarioError("controller.type: abc requires a servo plant")
        kp = _number(section, "controller", "Kp", minimum=0.0, exclusive=True)
        kd = _number(section, "controller", "Kd", minimum=0.0, exclusive=True)
        reference = _build_reference(section.get("reference", {"type": "none"}))
        return {"type": "abc", "kp": kp, "kd": kd, "reference": reference}
    # sfb
    if plant_type != "lti":
        raise ScenarioError("controller.type: sfb requires an lti plant")
    k_row = _vector(section, "controller", "K", plant.n)
    cancel = section.get("cancel", True)
    if not isinstance(cancel, bool):
        raise ScenarioError("controller.cancel: must be a boolean")
    q_matrix = None
    if "Q" in section:
        q_raw = section["Q"]
        if not isinstance(q_raw, list) or not all(
                isinstance(r, list) for r in q_raw):
            raise ScenarioError("controller.Q: must be a list of rows")
        q_matrix = np.asarray(q_raw, dtype=float)
        if q_matrix.shape != (plant.n, plant.n):
            raise ScenarioError(
                f"controller.Q: must be {plant.n}x{plant.n}")
    return {"type": "sfb", "k_row": k_row, "cancel": cancel,
            "q_matrix": q_matrix}


def _build_disturbance(section, plant_type, plant, dist_dim):
    _check_keys(section, "disturbance",
                {"family", "value", "coeffs", "amplitude", "omega", "phase",
                 "channel"})
    family = section.get("family", "none")
    if family not in ("none", "constant", "polynomial", "sinusoid"):
        raise ScenarioError(
            "disturbance.family: must be one of none, constant, polynomial, "
            "sinusoid")

    channel = None
    if "channel" in section:
        if plant_type != "lti":
            raise ScenarioError(
                "disturbance.channel: only meaningful for lti plants")
        channel = _vector(section, "disturbance", "channel", dist_dim)
        if not np.any(channel):
            raise ScenarioError("disturbance.channel: must be nonzero")
    if channel is None:
        if plant_type == "lti":
            channel = plant.b_n.copy()
        elif plant_type == "pendulum":
            channel = np.array([0.0, 1.0])
        else:
            channel = np.ones(dist_dim)

    if family == "none":
        return None, channel

    def vectorize(value):
        if np.isscalar(value):
            return float(value) * channel
        return np.asarray(value, dtype=float)

    if family == "constant":
        value = _scalar_or_vector(section, "disturbance", "value", dist_dim)
        return plants.constant_disturbance(vectorize(value)), channel
    if family == "polynomial":
        coeffs = section.get("coeffs")
        if not isinstance(coeffs, list) or len(coeffs) == 0:
            raise ScenarioError(
                "disturbance.coeffs: must be a non-empty list")
        rows = []
        for i, c in enumerate(coeffs):
            if isinstance(c, (int, float)) and not isinstance(c, bool):
                rows.append(float(c) * channel)
            elif isinstance(c, list) and len(c) == dist_dim:
                rows.append(np.asarray(c, dtype=float))
            else:
                raise ScenarioError(
                    f"disturbance.coeffs[{i}]: must be a number or a list of "
                    f"length {dist_dim}")
        return plants.polynomial_disturbance(rows), channel
    # sinusoid
    amplitude = _scalar_or_vector(section, "disturbance", "amplitude", dist_dim)
    omega = _number(section, "disturbance", "omega", minimum=0.0, exclusive=True)
    phase = _number(section, "disturbance", "phase", default=0.0)
    return plants.sinusoid_disturbance(vectorize(amplitude), omega, phase), channel


def _check_matched(channel, plant, disturbance):
    """sfb cancellation needs the disturbance to act through the b_n channel."""
    if disturbance is None:
        return
    b = plant.b_n
    bhat = b / np.linalg.norm(b)
    for col in np.asarray(disturbance.c_tau).T:
        resid = col - (col @ bhat) * bhat
        if np.linalg.norm(resid) > 1e-9 * max(np.linalg.norm(col), 1.0):
            raise ScenarioError(
                "disturbance.channel: sfb cancellation requires a matched "
                "disturbance acting through the b_n channel")
