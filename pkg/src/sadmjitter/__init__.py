"""Micro-vibration modelling of a flexible spacecraft driven by a solar array
drive mechanism: port-based multibody models, SADM harmonic disturbances,
worst-case pointing analysis and an LPV disturbance observer."""

from .errors import SadmError
from .lti import StateSpaceModel, connect, freq_response, h2_norm, hinf_norm, simulate

__version__ = "0.1.0"

__all__ = ["SadmError", "StateSpaceModel", "connect", "freq_response", "h2_norm", "hinf_norm", "simulate",
           "__version__"]
