"""Exact verification engine for Fedosov resolutions and the algebraic index theorem.

Everything is formal and truncated: series in base coordinates, fiber
variables ``y``, odd generators ``th`` and ``h`` with exact rational
coefficients.
"""

from .dgla import (DGLAHandle, ModuleHandle, NotMaurerCartan, chain_module, cochain_dgla,
                   gauge_act, matrix_dgla, mc_residual, polyvector_dgla, semidirect_twist,
                   twist_differential)
from .fedosov import (Fedosov, NonConvergence, TorsionError, VectorField, build_A, exact_part,
                      flat_lift, gamma_E, lift_chain, solve_DE)
from .hochschild import (Chain, Cochain, act_R, chain_D, cochain_D, cotrace, cotrace_tw,
                         evaluate, gerstenhaber, hoch_boundary, hoch_codiff, normalize_chain,
                         product_cochain, trace_chain, trace_tw)
from .index import (IndexInstance, IndexMismatch, IndexResult, bq_iterate, classical_index,
                    index_compare, make_instance, quantum_index, trd, u_iterate)
from .matrix import MatrixSeries, graded_commutator
from .poisson import (DifferentialForm, NotPoisson, Polyvector, hp0_reduce, hp_dim, koszul,
                      lichnerowicz, poisson_bracket, schouten, standard_pi)
from .scenario import Scenario, ScenarioError
from .starprod import (StarProduct, diamond, fiber_product, idempotent_lift, idempotent_path,
                       mat_diamond, mat_star_mul, moyal_star, moyal_torus, naturality_check,
                       star_mul)
from .weyl import (FormalSeries, ModelConfig, Monomial, ParseError, TruncationError, chi,
                   de_rham, delta, delta_inv, hodge_residual, series_mul)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
