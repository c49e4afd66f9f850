"""Tensor-network structure search by alternating local enumeration."""

from .tensor import (ConformanceError, DenseTensor, Matrix, contract_network,
                     load_tnsr, rse, save_tnsr, singular_values, unfold)
from .structure import (EdgeOrder, TnStructure, VertexPermutation,
                        apply_permutation, compression_ratio, efficiency,
                        graph_neighborhood, param_count, rank_candidates,
                        ranks_to_padded_vector)
from .solver import (CoreSet, SolverConfig, SolverDivergenceError,
                     gradient_rse, init_cores, minimize_rse, permute_cores,
                     warm_start)
from .objective import (BudgetExceededError, EvaluationCache,
                        EvaluationRecord, Evaluator, ObjectiveConfig,
                        derive_rng, estimate_rank_sweep)
from .search import (AleConfig, GridCapExceededError, SearchTrace,
                     TnaleConfig, TnlsConfig, ale_sweep, brute_force,
                     evals_to_success, tnale, tnls)
from .landscape import (LandscapeTensor, LazyGrid, ale_min_entry,
                        build_landscape, finite_gradient, min_entry_brute,
                        unfolding_spectra)
from .datagen import (GenResult, GenSpec, TopologyTemplate, generate,
                      success, template_adjacency)

__version__ = "0.1.0"
