# Models module
from .knockoffs import KnockoffModel, MomentEstimate
from .knockoff_stats import KnockoffStatistics
from .clustering import MechanismAssignment, RepresentativeSet
from .synthetic_network import SyntheticSpec, LinearGaussianCase
from .oracle import DiscreteTable

__all__ = [
    'KnockoffModel', 'MomentEstimate', 'KnockoffStatistics',
    'MechanismAssignment', 'RepresentativeSet',
    'SyntheticSpec', 'LinearGaussianCase', 'DiscreteTable',
]
