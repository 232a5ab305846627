"""Local implicit-surface interpolation for point-cloud normals and curvatures.

Trial spaces: plain radial (RBF), Hermite radial (HRBF) and a sum of one
3-D radial family with three 1-D coordinate families (KRBF), all built on
half-integer Matérn-Sobolev kernels and solved as minimum-norm problems.
"""
from .errors import (ConditioningError, DataError, DomainError, GeometryError, InfeasibleError,
                     KanRBFError, ParseError, SmoothnessError)
from .kernel import MaternKernel
from .pipeline import EstimatorSpec, estimate_cloud
from .surfaces import PointCloud, ellipsoid, halton_sample, make_surface, sphube, torus
from .trialspace import CenterConfig

__all__ = [
    "CenterConfig", "ConditioningError", "DataError", "DomainError", "EstimatorSpec",
    "GeometryError", "InfeasibleError", "KanRBFError", "MaternKernel", "ParseError",
    "PointCloud", "SmoothnessError", "ellipsoid", "estimate_cloud", "halton_sample", "make_surface",
    "sphube", "torus",
]
__version__ = "0.1.0"
