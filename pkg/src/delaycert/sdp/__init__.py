from .ipm import solve
from .problem import ProblemBuilder, SdpProblem, SdpSolution

__all__ = ["ProblemBuilder", "SdpProblem", "SdpSolution", "solve"]
