"""Disturbance-observer robust-control workbench.

Library layers: ``numerics`` (roots, Lyapunov solves, RK4), ``freqdomain``
(transfer-function algebra and loop analysis), ``plants`` (servo, LTI,
nonlinear and two-link arm models plus disturbance exosystems),
``observers`` (the observer families), ``control2dof`` (outer-loop control
and Lyapunov certificates) and ``simulate``/``scenario``/``cli`` (the
config-driven simulation surface).
"""

from .numerics import (ConvergenceError, DivergenceError, NotHurwitzError,
                       Polynomial, poly_roots, rk4_step, solve_lyapunov)
from .freqdomain import (FrequencyResponse, RationalTransfer,
                         StabilityMargins, bode, complementary_dob,
                         inner_loop_tf, make_qfilter, margins,
                         root_locus_alpha, sensitivity_dob,
                         servo_sensitivity, waterbed_integral,
                         closed_loop_ref_tf)
from .plants import (DisturbanceModel, LtiPlant, NonlinearPlant, ServoPlant,
                     TwoLinkArm, disturbance_signal, manipulator_dynamics,
                     servo_alpha, servo_dynamics)
from .observers import (BoundPrediction, FirstOrderDob, HighOrderDob,
                        NonlinearDob, dob1_estimate, dob1_zdot,
                        hdob_gains_from_bandwidth, hdob_zdots,
                        manip_dob_zdot, ndob_estimate, ndob_zdot,
                        ultimate_bound)
from .control2dof import (AbcGains, LyapunovCertificate, abc_desired_accel,
                          make_certificate, omega_radius,
                          sfb_with_cancellation, vdot_check)
from .scenario import Scenario, ScenarioError, load_scenario
from .simulate import SimulationDiverged, Trajectory, run

__version__ = "0.1.0"
