"""Compilation of games into penalized restricted sentences."""
from fractions import Fraction

import numpy as np
import pytest

from syncgames import logic
from syncgames.algebra import eval_formula, make_algebra
from syncgames.compiler import (PenaltyModulus, TuringMachineDescription,
                                compile_defect_formula, compile_game_sentence,
                                compile_payoff_formula, compile_tm_sentence,
                                demo_game_constructor, game_hash, load_tm,
                                read_sentence, restrict_sentence,
                                sentence_metadata, validate_tm,
                                write_sentence)
from syncgames.errors import FormulaError, GameError
from syncgames.games import benchmark_games, corpus_game, payoff_value
from syncgames.pvm import (deterministic_tuple, perturb_tuple, pvm_defect,
                           random_pvm, round_to_pvm)

F = Fraction
C1 = make_algebra([(1, 1)])
M2 = make_algebra([(2, 1)])
MIXED = make_algebra([(2, F(1, 2)), (1, F(1, 2))])
TRIANGLE = corpus_game("triangle")


def flat(tup_or_rows):
    rows = tup_or_rows.rows if hasattr(tup_or_rows, "rows") else tup_or_rows
    return [e for row in rows for e in row]


def ball(rows):
    # perturbation can leave the unit ball; pull each element back in
    out = []
    for row in rows:
        fixed = []
        for e in row:
            nrm = e.op_norm()
            fixed.append(e * (1.0 / nrm) if nrm > 1.0 else e)
        out.append(fixed)
    return out


# ---------------------------------------------------------------------------
# penalty modulus
# ---------------------------------------------------------------------------

def test_linear_penalty_default():
    pen = PenaltyModulus.linear()
    assert pen(0) == 0
    assert pen(F(1, 4)) == 25
    assert pen.hinges() == ((0, 100),)


def test_breakpoint_penalty_evaluates_exactly():
    pen = PenaltyModulus(((F(0), F(0)), (F(1, 2), F(1)), (F(1), F(3))),
                         final_slope=F(1, 2))
    assert pen(F(1, 4)) == F(1, 2)
    assert pen(F(1, 2)) == 1
    assert pen(F(3, 4)) == 2
    assert pen(2) == F(7, 2)
    # hinge sum reproduces the function everywhere
    for t in (F(0), F(1, 8), F(1, 2), F(2, 3), F(5), F(17, 3)):
        want = pen(t)
        got = sum(c * max(t - k, F(0)) for k, c in pen.hinges())
        assert got == want


def test_penalty_validation():
    with pytest.raises(FormulaError, match="start at"):
        PenaltyModulus(((F(1), F(0)),), F(1))
    with pytest.raises(FormulaError, match="nondecreasing"):
        PenaltyModulus(((F(0), F(0)), (F(1), F(-1))), F(1))
    with pytest.raises(FormulaError, match="strictly"):
        PenaltyModulus(((F(0), F(0)), (F(0), F(0))), F(1))
    with pytest.raises(FormulaError, match="slope"):
        PenaltyModulus.linear(-3)
    with pytest.raises(FormulaError, match="nonnegative"):
        PenaltyModulus.linear()(F(-1))


def test_penalty_describe_roundtrip():
    pen = PenaltyModulus(((F(0), F(0)), (F(1, 3), F(2))), F(7, 2))
    back = PenaltyModulus.parse(pen.describe())
    assert back == pen


def test_penalty_apply_matches_call(rng):
    pen = PenaltyModulus(((F(0), F(0)), (F(1, 2), F(1))), F(4))
    f = logic.parse_formula("(norm2 x)", free=("x",))
    applied = pen.apply(f)
    for _ in range(10):
        from syncgames.algebra import random_contraction
        e = random_contraction(MIXED, rng)
        t = eval_formula(f, MIXED, [e])
        want = float(pen(F(t).limit_denominator(10 ** 12)))
        got = eval_formula(applied, MIXED, [e])
        assert got == pytest.approx(want, abs=1e-9)


def test_zero_penalty_is_constant_zero():
    pen = PenaltyModulus.linear(0)
    f = logic.parse_formula("(norm2 x)", free=("x",))
    assert pen.apply(f) == logic.Const(0)


# ---------------------------------------------------------------------------
# defect formula
# ---------------------------------------------------------------------------

def test_defect_structure_2_2():
    defect_formula = compile_defect_formula(2, 2)
    assert logic.free_vars(defect_formula) == frozenset(range(4))
    assert logic.count_atoms(defect_formula) == 10
    assert logic.check_restricted(defect_formula)


def test_defect_rejects_small():
    with pytest.raises(GameError):
        compile_defect_formula(1, 2)
    with pytest.raises(GameError):
        compile_defect_formula(2, 1)


def test_defect_zero_on_exact_pvm(rng):
    defect_formula = compile_defect_formula(3, 2)
    E = random_pvm(M2, 3, 2, rng)
    assert eval_formula(defect_formula, M2, flat(E)) == pytest.approx(0.0, abs=1e-12)


def test_defect_constant_half_fixture():
    half = 0.5 * C1.identity()
    rows = [[half, half] for _ in range(2)]
    defect_formula = compile_defect_formula(2, 2)
    got = eval_formula(defect_formula, C1, flat(rows))
    assert got == pytest.approx(0.25, abs=1e-12)
    assert got == pytest.approx(pvm_defect(rows, C1), abs=1e-12)


def test_defect_matches_pvm_defect_randomized(rng):
    defect_formula = compile_defect_formula(2, 3)
    for scale in (0.01, 0.1, 0.4):
        E = random_pvm(MIXED, 2, 3, rng)
        raw = ball(perturb_tuple(E, rng, scale))
        got = eval_formula(defect_formula, MIXED, flat(raw))
        assert got == pytest.approx(pvm_defect(raw, MIXED), abs=1e-12)


# ---------------------------------------------------------------------------
# payoff formula
# ---------------------------------------------------------------------------

def test_payoff_never_accept_is_constant_zero():
    payoff = compile_payoff_formula(corpus_game("never-accept"))
    assert payoff == logic.Const(0)


def test_payoff_triangle_deterministic():
    payoff = compile_payoff_formula(TRIANGLE)
    E = deterministic_tuple(C1, 3, 2, (0, 0, 1))
    assert eval_formula(payoff, C1, flat(E)) == pytest.approx(7 / 9, abs=1e-10)


def test_payoff_matches_oracle_random_pvms(rng):
    for name, game in benchmark_games()[:5]:
        payoff = compile_payoff_formula(game)
        assert logic.lipschitz_bound(payoff) >= 0
        for _ in range(5):
            E = random_pvm(MIXED, game.n, game.m, rng)
            got = eval_formula(payoff, MIXED, flat(E))
            want = payoff_value(game, E, MIXED)
            assert got == pytest.approx(want, abs=1e-10), name


def test_payoff_nonnegative_everywhere(rng):
    from syncgames.algebra import random_contraction
    payoff = compile_payoff_formula(TRIANGLE)
    for _ in range(20):
        xs = [random_contraction(MIXED, rng) for _ in range(6)]
        assert eval_formula(payoff, MIXED, xs) >= 0


# ---------------------------------------------------------------------------
# game sentence
# ---------------------------------------------------------------------------

def test_sentence_shape_and_restriction():
    sentence = compile_game_sentence(TRIANGLE)
    assert isinstance(sentence, logic.Sup)
    assert sentence.variables == tuple(range(6))
    assert logic.check_restricted(sentence)
    text = logic.print_sentence(sentence)
    assert logic.parse_sentence(text) == logic.canonicalize(sentence)


def test_body_equals_payoff_on_exact_pvms(rng):
    sentence = compile_game_sentence(TRIANGLE)
    _, body = logic.peel_sup(sentence)
    for _ in range(5):
        E = random_pvm(MIXED, 3, 2, rng)
        got = eval_formula(body, MIXED, flat(E))
        want = payoff_value(TRIANGLE, E, MIXED)
        assert got == pytest.approx(want, abs=1e-10)


def test_body_dominated_by_payoff_formula(rng):
    from syncgames.algebra import random_contraction
    sentence = compile_game_sentence(TRIANGLE)
    _, body = logic.peel_sup(sentence)
    payoff = compile_payoff_formula(TRIANGLE)
    for _ in range(25):
        xs = [random_contraction(MIXED, rng) for _ in range(6)]
        assert eval_formula(body, MIXED, xs) <= eval_formula(payoff, MIXED, xs) + 1e-12


def test_perfect_game_body_is_one(rng):
    sentence = compile_game_sentence(corpus_game("all-accept"))
    _, body = logic.peel_sup(sentence)
    for algebra in (C1, M2, MIXED):
        E = random_pvm(algebra, 2, 2, rng)
        assert eval_formula(body, algebra, flat(E)) == pytest.approx(1, abs=1e-10)


def test_penalized_vs_rounded_gap(rng):
    # near the measurement set, the body never beats the rounded
    # strategy by more than the Lipschitz drift
    sentence = compile_game_sentence(TRIANGLE)
    _, body = logic.peel_sup(sentence)
    payoff = compile_payoff_formula(TRIANGLE)
    L = float(logic.lipschitz_bound(payoff))
    for scale in (1e-4, 1e-3, 1e-2):
        E = random_pvm(M2, 3, 2, rng)
        raw = ball(perturb_tuple(E, rng, scale))
        rounded, dist = round_to_pvm(raw, M2)
        body_val = eval_formula(body, M2, flat(raw))
        psi_rounded = payoff_value(TRIANGLE, rounded, M2)
        assert body_val <= psi_rounded + L * dist + 1e-8


# ---------------------------------------------------------------------------
# restriction rewriting
# ---------------------------------------------------------------------------

def smooth_sentence():
    child = logic.parse_formula("(norm2 x)", free=("x",))
    node = logic.Smooth(name="square", fn=lambda t: t * t, child=child,
                        lipschitz=F(2), out_lo=F(0), out_hi=F(1))
    return logic.Sup((0,), node)


def test_restrict_identity_on_restricted():
    sentence = compile_game_sentence(TRIANGLE)
    out, budget = restrict_sentence(sentence, F(1, 100))
    assert out is sentence
    assert budget == 0


def test_restrict_replaces_smooth(rng):
    sentence = smooth_sentence()
    assert not logic.check_restricted(sentence)
    out, budget = restrict_sentence(sentence, F(1, 10))
    assert logic.check_restricted(out)
    assert 0 < budget <= F(1, 10)
    _, body = logic.peel_sup(sentence)
    _, new_body = logic.peel_sup(out)
    from syncgames.algebra import random_contraction
    worst = 0.0
    for algebra in (C1, M2, MIXED):
        for _ in range(30):
            e = random_contraction(algebra, rng)
            a = eval_formula(body, algebra, [e])
            b = eval_formula(new_body, algebra, [e])
            worst = max(worst, abs(a - b))
    assert worst <= float(budget) + 1e-12


def test_restrict_validation():
    with pytest.raises(FormulaError, match="positive"):
        restrict_sentence(smooth_sentence(), 0)
    inf_sentence = logic.Inf((0,), logic.parse_formula("(norm2 x)", free=("x",)))
    with pytest.raises(FormulaError, match="inf"):
        restrict_sentence(inf_sentence, F(1, 10))
    with pytest.raises(FormulaError, match="knots"):
        restrict_sentence(smooth_sentence(), F(1, 100000))


def test_restrict_nested_smooth(rng):
    child = logic.parse_formula("(norm2 x)", free=("x",))
    inner = logic.Smooth(name="half", fn=lambda t: t / 2, child=child,
                         lipschitz=F(1, 2), out_lo=F(0), out_hi=F(1, 2))
    outer = logic.Smooth(name="square", fn=lambda t: t * t, child=inner,
                         lipschitz=F(1), out_lo=F(0), out_hi=F(1, 4))
    sentence = logic.Sup((0,), outer)
    out, budget = restrict_sentence(sentence, F(1, 8))
    assert logic.check_restricted(out)
    from syncgames.algebra import random_contraction
    for _ in range(20):
        e = random_contraction(M2, rng)
        a = eval_formula(logic.peel_sup(sentence)[1], M2, [e])
        b = eval_formula(logic.peel_sup(out)[1], M2, [e])
        assert abs(a - b) <= float(budget) + 1e-12


# ---------------------------------------------------------------------------
# Turing machine front end
# ---------------------------------------------------------------------------

BEAVER = {
    "states": ["run", "halt"],
    "alphabet": ["0", "1"],
    "blank": "0",
    "transitions": [["run", "0", "1", "R", "run"],
                    ["run", "1", "1", "L", "halt"]],
    "start": "run",
    "accept": "halt",
}


def test_tm_validation():
    tm = validate_tm(BEAVER)
    assert tm.start == "run"
    bad = dict(BEAVER, transitions=BEAVER["transitions"][:1])
    with pytest.raises(FormulaError, match="not total"):
        validate_tm(bad)
    bad = dict(BEAVER, transitions=BEAVER["transitions"]
               + [["run", "0", "0", "L", "run"]])
    with pytest.raises(FormulaError, match="duplicate"):
        validate_tm(bad)
    bad = dict(BEAVER, transitions=BEAVER["transitions"]
               + [["halt", "0", "0", "L", "halt"]])
    with pytest.raises(FormulaError, match="accept"):
        validate_tm(bad)
    bad = dict(BEAVER, blank="2")
    with pytest.raises(FormulaError, match="blank"):
        validate_tm(bad)
    with pytest.raises(FormulaError, match="missing field"):
        validate_tm({"states": ["a"]})


def test_tm_file_roundtrip(tmp_path):
    import json
    path = str(tmp_path / "machine.tm")
    with open(path, "w") as fh:
        json.dump(BEAVER, fh)
    tm = load_tm(path)
    assert tm == validate_tm(BEAVER)


def test_demo_ctor_constant():
    tm = validate_tm(BEAVER)
    sentence = compile_tm_sentence(tm, demo_game_constructor)
    assert sentence == compile_game_sentence(TRIANGLE)


def test_tm_pipeline_deterministic(tmp_path):
    tm = validate_tm(BEAVER)
    texts = []
    for k in range(2):
        sentence = compile_tm_sentence(tm, demo_game_constructor)
        path = str(tmp_path / f"out{k}.sent")
        write_sentence(path, sentence,
                       sentence_metadata(sentence, game=TRIANGLE,
                                         penalty=PenaltyModulus.linear(),
                                         extra={"ctor": "demo (non-normative)"}))
        with open(path, "rb") as fh:
            texts.append(fh.read())
    assert texts[0] == texts[1]


# ---------------------------------------------------------------------------
# sentence files
# ---------------------------------------------------------------------------

def test_sentence_file_roundtrip(tmp_path):
    sentence = compile_game_sentence(TRIANGLE)
    path = str(tmp_path / "triangle.sent")
    meta = sentence_metadata(sentence, game=TRIANGLE,
                             penalty=PenaltyModulus.linear())
    write_sentence(path, sentence, meta)
    back, got_meta = read_sentence(path)
    assert back == logic.canonicalize(sentence)
    assert got_meta["pvm-shape"] == "3x2"
    assert got_meta["restricted"] == "yes"
    assert got_meta["game-hash"] == game_hash(TRIANGLE)
    assert got_meta["penalty"].startswith("pl[")


def test_game_hash_distinguishes():
    assert game_hash(TRIANGLE) != game_hash(corpus_game("all-accept"))
    assert game_hash(TRIANGLE) == game_hash(corpus_game("triangle"))
