"""Mode-folding simulation of one-dimensional Bose-Hubbard chains."""

from .model import BoseHubbardParams, harmonic_trap, single_particle_matrix, unit_filling
from .folding import (FoldingPlan, ElementaryTransform, fold_banded, fold_inverse,
                      fold_nonunitary, fold_normal, propagate, propagate_imaginary,
                      replay_on_stack, spectral_plan)
from .tensor import TensorState, product_state, max_schmidt_rank
from .engine import (EvolutionConfig, GroundConfig, build_step_mf, build_step_tse, evolve,
                     ground_state_mf, run_evolution, run_quench, benchmark)

__version__ = "0.1.0"
