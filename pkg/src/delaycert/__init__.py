"""Stability certificates for linear time-delay systems.

Piecewise polynomial Lyapunov functionals are searched by semidefinite
programming, checked independently of the solver, and used to bracket the
range of delays over which stability can be certified.
"""

from .analysis import analyze, bisect_margins
from .certifier import Certificate, sample_check, verify
from .ddesim import decay_estimate, simulate
from .encoder import EncodingOptions, build_program, extract_certificate
from .lie import LyapCandidate, eval_V, eval_Vdot, lie_consistency_check, lie_map, single_delay_lie_map
from .polymat import PiecewisePolyMat, PolyKernel
from .system import DelaySystem, SystemTemplate, load_system, validate_system

__all__ = [
    "Certificate",
    "DelaySystem",
    "EncodingOptions",
    "LyapCandidate",
    "PiecewisePolyMat",
    "PolyKernel",
    "SystemTemplate",
    "analyze",
    "bisect_margins",
    "build_program",
    "decay_estimate",
    "eval_V",
    "eval_Vdot",
    "extract_certificate",
    "lie_consistency_check",
    "lie_map",
    "load_system",
    "sample_check",
    "simulate",
    "single_delay_lie_map",
    "validate_system",
    "verify",
]
