"""Adaptive LQR control with externally supplied parameter hints."""
from .control_core import (RiccatiSolution, StabilityCertificate, SystemTruth, certify_from_cost,
                           dare_gain, gain_cost, solve_dare, solve_lyapunov_cost, spectral_radius)
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
