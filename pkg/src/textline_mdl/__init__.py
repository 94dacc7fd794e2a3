"""Joint detection and classification of multilingual text lines by
hierarchical MDL energy minimization with fusion moves."""

from .core import (CATEGORY_NAMES, OUTLIER, EnergyParams, Language, Line, LineModel, Point2D,
                   TextCandidate, normalize_likelihoods)
from .energy import data_term, geometric_distance, total_energy
from .fusion import apply_crossover, assign_models, binary_energy, build_fusion_problem, solve_fusion
from .pearl import pearl, prune_unused

__version__ = "0.1.0"
