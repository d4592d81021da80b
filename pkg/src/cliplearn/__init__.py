"""Class-expression learning in ALC with a neural length cap on the search."""

from cliplearn.concept import Concept, length, parse_concept, print_concept
from cliplearn.kb import KnowledgeBase, load_kb, load_kb_file
from cliplearn.lpgen import LearningProblem
from cliplearn.refinement import RefinementConfig, rho
from cliplearn.retrieval import f_measure, instances
from cliplearn.search import ClipConfig, LearnResult, clip_learn

__all__ = [
    "Concept", "length", "parse_concept", "print_concept", "KnowledgeBase", "load_kb",
    "load_kb_file", "LearningProblem", "RefinementConfig", "rho", "f_measure", "instances",
    "ClipConfig", "LearnResult", "clip_learn",
]
__version__ = "0.1.0"
