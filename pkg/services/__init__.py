# Services module
from .discovery_service import DiscoveryService, SelectionResult
from .learning_service import LearningService
from .evaluation_service import EvaluationService
from .synthesis_service import SynthesisService

__all__ = ['DiscoveryService', 'SelectionResult', 'LearningService', 'EvaluationService', 'SynthesisService']
