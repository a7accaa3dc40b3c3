"""Gradient ascent, see-saw, and witness certification."""
from fractions import Fraction

import numpy as np
import pytest

from syncgames import logic
from syncgames.algebra import eval_formula, make_algebra
from syncgames.compiler import compile_game_sentence
from syncgames.errors import OptimizerError
from syncgames.games import SyncGame, classical_sync_value, corpus_game
from syncgames.optimizer import (OptimizerConfig, ValueCertificate, certify,
                                 maximize_sentence, seesaw_game_value)
from syncgames.pvm import deterministic_tuple

F = Fraction
C1 = make_algebra([(1, 1)])
M2 = make_algebra([(2, 1)])
TRIANGLE = corpus_game("triangle")


def direct_sum_c(k):
    return make_algebra([(1, F(1, k))] * k)


def perfect_game(n=2, m=2):
    mu = [[F(1, n * n)] * n] * n
    return SyncGame(n, m, mu, np.ones((m, m, n, n), dtype=int))


def assignment_payoff(game, f):
    """Exact rational payoff of a deterministic strategy."""
    total = F(0)
    for x, y, p in game.mu_pairs():
        if game.accept[f[x], f[y], x, y]:
            total += p
    return total


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(OptimizerError, match="restarts"):
        OptimizerConfig(restarts=0)
    with pytest.raises(OptimizerError, match="max_iters"):
        OptimizerConfig(max_iters=0)
    with pytest.raises(OptimizerError, match="tolerance"):
        OptimizerConfig(tol=0.0)
    with pytest.raises(OptimizerError, match="step"):
        OptimizerConfig(step_size=-1.0)
    with pytest.raises(OptimizerError, match="threads"):
        OptimizerConfig(threads=0)
    with pytest.raises(OptimizerError, match="pvm shape"):
        OptimizerConfig(pvm_shape=(0, 2))


def test_config_json_echo():
    cfg = OptimizerConfig(restarts=4, seed=9, pvm_shape=(2, 2))
    d = cfg.to_json()
    assert d["restarts"] == 4 and d["seed"] == 9
    assert d["pvm_shape"] == [2, 2]


# ---------------------------------------------------------------------------
# generic ascent
# ---------------------------------------------------------------------------

def test_antihermitian_norm_on_disc():
    # |x - conj(x)| on the unit disc peaks at x = +/- i with value 2
    sentence = logic.parse_formula("(sup (x) (norm2 (sub x (adj x))))")
    cert = maximize_sentence(sentence, C1, OptimizerConfig(restarts=8, seed=3))
    assert cert.value == pytest.approx(2.0, abs=1e-7)
    w = complex(cert.witness[0].blocks[0][0, 0])
    assert abs(w.real) < 1e-6 and abs(abs(w.imag) - 1.0) < 1e-6


def test_const_zero_sentence():
    sentence = logic.parse_formula("(sup (x) (const 0))")
    cert = maximize_sentence(sentence, C1, OptimizerConfig(restarts=2))
    assert cert.value == 0.0


def test_bare_formula_no_variables():
    cert = maximize_sentence(logic.parse_formula("(const 1/2)"), M2)
    assert cert.value == 0.5
    assert cert.witness == ()
    assert cert.restart_values == (0.5,)


def test_two_norm_supremum_on_m2():
    sentence = logic.parse_formula("(sup (x) (norm2 x))")
    cert = maximize_sentence(sentence, M2, OptimizerConfig(restarts=4, seed=1))
    assert cert.value == pytest.approx(1.0, abs=1e-7)


def test_nested_quantifier_rejected():
    inner = logic.Sup((1,), logic.Const(F(0)))
    sentence = logic.Sup((0,), logic.Max(inner, logic.Const(F(0))))
    with pytest.raises(OptimizerError, match="quantifier"):
        maximize_sentence(sentence, C1)


def test_pvm_shape_mismatch_rejected():
    sentence = logic.parse_formula("(sup (x) (norm2 x))")
    with pytest.raises(OptimizerError, match="shape"):
        maximize_sentence(sentence, C1, OptimizerConfig(pvm_shape=(2, 2)))


def test_witness_stays_in_unit_ball():
    sentence = logic.parse_formula("(sup (x x1) (plus (norm2 x) (norm2 x1)))")
    cert = maximize_sentence(sentence, M2, OptimizerConfig(restarts=4, seed=2))
    for e in cert.witness:
        assert e.op_norm() <= 1.0 + 1e-9


def test_value_matches_witness_reevaluation():
    sentence = logic.parse_formula("(sup (x) (retrace x))")
    cert = maximize_sentence(sentence, M2, OptimizerConfig(restarts=4, seed=4))
    _, body = logic.peel_sup(sentence)
    again = eval_formula(body, M2, list(cert.witness))
    assert again == cert.value  # value is defined as this re-evaluation
    assert cert.value == pytest.approx(1.0, abs=1e-7)


def test_restart_prefix_independence():
    sentence = compile_game_sentence(TRIANGLE)
    A6 = direct_sum_c(6)
    small = maximize_sentence(sentence, A6,
                              OptimizerConfig(restarts=4, seed=7, pvm_shape=(3, 2)))
    large = maximize_sentence(sentence, A6,
                              OptimizerConfig(restarts=12, seed=7, pvm_shape=(3, 2)))
    assert large.restart_values[:4] == small.restart_values
    assert large.value >= small.value - 1e-9


def test_maximize_thread_independence():
    sentence = compile_game_sentence(TRIANGLE)
    A6 = direct_sum_c(6)
    runs = [maximize_sentence(sentence, A6,
                              OptimizerConfig(restarts=12, seed=7, threads=t,
                                              pvm_shape=(3, 2)))
            for t in (1, 4)]
    assert runs[0].value == runs[1].value
    assert runs[0].restart_values == runs[1].restart_values
    assert runs[0].best_restart == runs[1].best_restart


def test_triangle_sentence_reaches_classical():
    sentence = compile_game_sentence(TRIANGLE)
    cert = maximize_sentence(sentence, direct_sum_c(6),
                             OptimizerConfig(restarts=16, seed=0, pvm_shape=(3, 2)))
    assert cert.value == pytest.approx(7 / 9, abs=1e-6)


def test_perfect_game_sentence_reaches_one():
    sentence = compile_game_sentence(perfect_game())
    for algebra in (C1, M2):
        cert = maximize_sentence(sentence, algebra,
                                 OptimizerConfig(restarts=8, seed=0, pvm_shape=(2, 2)))
        assert cert.value == pytest.approx(1.0, abs=1e-6)


def test_certificate_json():
    import json
    sentence = logic.parse_formula("(sup (x) (retrace x))")
    cert = maximize_sentence(sentence, C1, OptimizerConfig(restarts=2, seed=0))
    payload = cert.to_json()
    text = json.dumps(payload)
    back = json.loads(text)
    assert back["value"] == cert.value
    assert back["config"]["restarts"] == 2
    assert len(back["witness"]) == 1
    assert back["wall_clock"] >= 0


# ---------------------------------------------------------------------------
# see-saw
# ---------------------------------------------------------------------------

def test_seesaw_triangle_direct_sum():
    cert = seesaw_game_value(TRIANGLE, direct_sum_c(3),
                             OptimizerConfig(restarts=8, seed=0))
    assert cert.value == pytest.approx(7 / 9, abs=1e-6)
    assert cert.pvm is not None
    assert cert.pvm.defect() < 1e-9


def test_seesaw_perfect_game():
    cert = seesaw_game_value(perfect_game(), M2, OptimizerConfig(restarts=2, seed=0))
    assert cert.value == pytest.approx(1.0, abs=1e-9)


def test_seesaw_beats_warm_start():
    # restart 0 starts at the fixed assignment x -> x mod m
    f = tuple(x % TRIANGLE.m for x in range(TRIANGLE.n))
    base = float(assignment_payoff(TRIANGLE, f))
    cert = seesaw_game_value(TRIANGLE, direct_sum_c(3),
                             OptimizerConfig(restarts=1, seed=0))
    assert cert.value >= base - 1e-12


def test_seesaw_matrix_block_dominates_classical():
    # the direct-sum embedding of any classical witness is available,
    # so more matrix room never hurts
    M4 = make_algebra([(4, 1)])
    cert = seesaw_game_value(TRIANGLE, M4, OptimizerConfig(restarts=12, seed=0))
    assert cert.value >= 7 / 9 - 1e-6


@pytest.mark.parametrize("name", ["sync-parity", "forced-or", "clique-coloring"])
def test_seesaw_recovers_classical(name):
    game = corpus_game(name)
    k = game.n * game.m
    cls, _ = classical_sync_value(game)
    cert = seesaw_game_value(game, direct_sum_c(k),
                             OptimizerConfig(restarts=16, seed=0, threads=2))
    assert cert.value == pytest.approx(float(cls), abs=1e-6)


def test_seesaw_thread_independence():
    runs = [seesaw_game_value(TRIANGLE, direct_sum_c(6),
                              OptimizerConfig(restarts=10, seed=7, threads=t))
            for t in (1, 4)]
    assert runs[0].value == runs[1].value
    assert runs[0].restart_values == runs[1].restart_values


def test_seesaw_value_is_oracle_value():
    from syncgames.games import payoff_value
    cert = seesaw_game_value(TRIANGLE, direct_sum_c(3),
                             OptimizerConfig(restarts=4, seed=1))
    assert cert.value == payoff_value(TRIANGLE, cert.pvm, cert.algebra)


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

def test_certify_seesaw_witness():
    cert = seesaw_game_value(TRIANGLE, direct_sum_c(3),
                             OptimizerConfig(restarts=4, seed=0))
    report = certify(TRIANGLE, cert.algebra, cert.pvm)
    assert report.ok
    assert report.gap < 1e-10
    assert report.violations == ()
    assert report.oracle_value == pytest.approx(report.formula_value, abs=1e-10)


def test_certify_tampered_witness():
    cert = seesaw_game_value(TRIANGLE, direct_sum_c(3),
                             OptimizerConfig(restarts=4, seed=0))
    elems = list(cert.witness)
    elems[0] = elems[0] * 0.0  # zero one projection: rows no longer resolve 1
    report = certify(TRIANGLE, cert.algebra, elems)
    assert not report.ok
    assert report.defect > 1e-9
    assert any("defect" in v for v in report.violations)
    assert report.oracle_value is None


def test_certify_deterministic_witness_rational():
    f = (0, 0, 1)
    E = deterministic_tuple(C1, 3, 2, f)
    report = certify(TRIANGLE, C1, E)
    exact = float(assignment_payoff(TRIANGLE, f))
    assert report.ok
    assert report.formula_value == pytest.approx(exact, abs=1e-10)
    assert report.oracle_value == pytest.approx(exact, abs=1e-10)


def test_certify_sentence_target():
    sentence = logic.parse_formula("(sup (x) (norm2 (sub x (adj x))))")
    cert = maximize_sentence(sentence, C1, OptimizerConfig(restarts=4, seed=3))
    report = certify(sentence, C1, list(cert.witness))
    assert report.ok
    assert report.gap < 1e-9


def test_certify_witness_shape_errors():
    with pytest.raises(OptimizerError, match="witness"):
        certify(TRIANGLE, C1, [C1.identity()] * 5)
    sentence = logic.parse_formula("(sup (x) (norm2 x))")
    with pytest.raises(OptimizerError, match="witness"):
        certify(sentence, C1, [])
