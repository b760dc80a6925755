"""Regular fractional sparse operators on dyadic grids and their weighted
weak-type behaviour, computed exactly at desk scale."""

__version__ = "0.1.0"

from .errors import BoundedConjugateRange, DivergenceError, DomainError, PreconditionError
from .grid import DyadicCube, GridFunction, frac_average, integrate, measure, root
from .maximal import dyadic_frac_maximal, iterated_bound_weight, luxemburg_norm, orlicz_maximal
from .sparse import (SparseFamily, generate_sparse, layer_decompose, level_sets,
                     sparse_operator, verify_n_regular, verify_sparse)
from .weaktype import exceptional_set, lemma_check, run_experiment, sanity_suite, weak_norm
from .young import YoungFunction, builtin_young, c_phi, conjugate, conjugate_inverse, eval_phi
