"""Synchronous games as sentences over finite tracial algebras.

The package turns a synchronous game into a restricted universal
sentence in the continuous logic of tracial von Neumann algebras,
evaluates and maximizes such sentences over finite-dimensional tracial
models, and rounds near-measurements and near-order-m unitaries back
to exact ones with quantitative bounds.

Typical flow:

    from syncgames import (compile_game_sentence, corpus_game,
                           make_algebra, maximize_sentence, OptimizerConfig)

    game = corpus_game("triangle")
    sentence = compile_game_sentence(game)
    algebra = make_algebra([(2, 1)])
    cert = maximize_sentence(sentence, algebra,
                             OptimizerConfig(pvm_shape=(game.n, game.m)))
"""

__version__ = "0.1.0"

from .errors import (AlgebraError, FormulaError, GameError, OptimizerError,
                     ParseError, RoundingError, SyncGamesError)
from .logic import (Formula, Sentence, Term, canonicalize, check_restricted,
                    count_atoms, expand_traces, free_vars, is_sentence,
                    lipschitz_bound, parse_formula, parse_sentence, peel_sup,
                    print_formula, print_sentence, value_range)
from .algebra import (AlgebraElement, FiniteTracialAlgebra, Presentation,
                      eval_formula, eval_term, load_model, make_algebra,
                      make_presentation, presentation_norm, random_contraction,
                      save_model)
from .pvm import (OrderMUnitary, PVMTuple, deterministic_tuple,
                  estimate_modulus, pvm_defect, pvm_to_unitary, random_pvm,
                  round_to_order_m_unitary, round_to_pvm, unitary_order_defect,
                  unitary_to_pvm)
from .games import (SyncGame, benchmark_games, classical_sync_value,
                    corpus_game, load_game, payoff_value, random_game,
                    save_game)
from .compiler import (PenaltyModulus, compile_defect_formula,
                       compile_game_sentence, compile_payoff_formula,
                       compile_tm_sentence, game_hash, read_sentence,
                       restrict_sentence, sentence_metadata, write_sentence)
from .engine import BatchContext, compile_body, evaluate_batch
from .optimizer import (CertifyReport, OptimizerConfig, ValueCertificate,
                        certify, maximize_sentence, seesaw_game_value)
from ._kernels import BACKEND as _KERNEL_BACKEND


def kernel_backend() -> str:
    """Which batched-kernel implementation is active: 'compiled' or 'numpy'."""
    return _KERNEL_BACKEND


__all__ = [
    "__version__",
    "kernel_backend",
    # errors
    "SyncGamesError", "ParseError", "FormulaError", "AlgebraError",
    "GameError", "RoundingError", "OptimizerError",
    # logic
    "Term", "Formula", "Sentence", "parse_formula", "parse_sentence",
    "print_formula", "print_sentence", "canonicalize", "peel_sup",
    "free_vars", "is_sentence", "count_atoms", "expand_traces",
    "check_restricted", "value_range", "lipschitz_bound",
    # algebra
    "FiniteTracialAlgebra", "AlgebraElement", "Presentation", "make_algebra",
    "make_presentation", "presentation_norm", "eval_term", "eval_formula",
    "random_contraction", "load_model", "save_model",
    # measurements and rounding
    "PVMTuple", "OrderMUnitary", "pvm_defect", "unitary_order_defect",
    "random_pvm", "deterministic_tuple", "round_to_pvm",
    "round_to_order_m_unitary", "pvm_to_unitary", "unitary_to_pvm",
    "estimate_modulus",
    # games
    "SyncGame", "payoff_value", "classical_sync_value", "benchmark_games",
    "corpus_game", "random_game", "load_game", "save_game",
    # compiler
    "PenaltyModulus", "compile_defect_formula", "compile_payoff_formula",
    "compile_game_sentence", "compile_tm_sentence", "restrict_sentence",
    "game_hash", "sentence_metadata", "write_sentence", "read_sentence",
    # engine
    "compile_body", "BatchContext", "evaluate_batch",
    # optimizer
    "OptimizerConfig", "ValueCertificate", "CertifyReport",
    "maximize_sentence", "seesaw_game_value", "certify",
]
