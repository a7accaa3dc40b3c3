"""Acceptance criteria: quantitative bounds and oracle agreements.

Each test covers one numbered criterion, prints exactly one PASS/FAIL
line with its headline statistics, and asserts both the bound and the
runtime budget.  Run with `pytest tests/test_acceptance.py -v -s` to
see the lines on passing runs.
"""
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from syncgames import cli, logic
from syncgames.algebra import (eval_formula, eval_term, make_algebra,
                               make_presentation, presentation_norm,
                               random_contraction, save_model)
from syncgames.compiler import (compile_defect_formula, compile_game_sentence,
                                compile_payoff_formula)
from syncgames.engine import BatchContext, compile_body
from syncgames.games import (SyncGame, benchmark_games, classical_sync_value,
                             corpus_game, payoff_value, save_game)
from syncgames.logic import Add, Adj, Mul, One, Sub, Var, check_restricted
from syncgames.optimizer import OptimizerConfig, maximize_sentence, seesaw_game_value
from syncgames.pvm import (OrderMUnitary, PVMTuple, pvm_defect, pvm_to_unitary,
                           random_pvm, round_to_order_m_unitary,
                           unitary_order_defect, unitary_to_pvm)

F = Fraction


def _report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def _random_order_unitary(rng, d: int, m: int) -> np.ndarray:
    basis = np.linalg.qr(rng.standard_normal((d, d))
                         + 1j * rng.standard_normal((d, d)))[0]
    roots = np.exp(2j * math.pi * rng.integers(0, m, size=d) / m)
    return (basis * roots) @ basis.conj().T


# ---------------------------------------------------------------------------
# 1. order-m unitary rounding bound
# ---------------------------------------------------------------------------

def test_criterion_1_order_m_rounding_bound():
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(10001))
    trials = 0
    violations = 0
    worst_ratio = 0.0
    while trials < 1000:
        m = int(rng.choice([2, 3, 4]))
        d = int(rng.integers(1, 17))
        exact = _random_order_unitary(rng, d, m)
        noise = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        noise /= np.linalg.norm(noise, 2)
        delta = float(rng.uniform(0.0, 0.9)) * 2.0 ** (-m) / (m + 2)
        algebra = make_algebra([(d, 1)])
        v = algebra.element([exact + delta * noise])
        eps = unitary_order_defect(v, m)
        if eps <= 0.0 or eps >= 2.0 ** (-m):
            continue
        u, dist = round_to_order_m_unitary(v, m)
        trials += 1
        if u.order_defect() > 1e-10 or dist > 2 ** (m + 2) * eps:
            violations += 1
        worst_ratio = max(worst_ratio, dist / eps)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 30.0
    _report(1, "order-m rounding bound", ok,
            f"{trials} trials, 0 tolerance for violations, got {violations}, "
            f"worst distance/eps {worst_ratio:.3f}, {elapsed:.1f}s")
    assert violations == 0
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# 2. measurement/unitary transform bijection
# ---------------------------------------------------------------------------

def test_criterion_2_fourier_bijection():
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(10002))
    worst = 0.0
    count = 0
    for m in (2, 3, 5):
        for _ in range(100):
            d = int(rng.integers(1, 9))
            algebra = make_algebra([(d, 1)])
            # composition 1: row -> unitary -> row
            row = random_pvm(algebra, 1, m, rng).rows[0]
            u = pvm_to_unitary(row)
            back = unitary_to_pvm(u)
            err1 = max((e - b).two_norm() for e, b in zip(row, back))
            # composition 2: unitary -> row -> unitary
            w = OrderMUnitary(algebra,
                              algebra.element([_random_order_unitary(rng, d, m)]),
                              m)
            w2 = pvm_to_unitary(unitary_to_pvm(w))
            err2 = (w.element - w2.element).two_norm()
            worst = max(worst, err1, err2)
            count += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 5.0
    _report(2, "transform bijection", ok,
            f"{count} rows, worst roundtrip error {worst:.2e}, {elapsed:.1f}s")
    assert worst < 1e-10
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# 3. compiled formula vs direct oracle agreement
# ---------------------------------------------------------------------------

def test_criterion_3_formula_oracle_agreement():
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(10003))
    games = benchmark_games()
    assert len(games) == 10 and all(g.n <= 4 and g.m <= 4 for _, g in games)
    algebra = make_algebra([(2, F(1, 2)), (1, F(1, 2))])
    worst_defect = 0.0
    worst_payoff = 0.0
    for _, game in games:
        defect_formula = compile_defect_formula(game.n, game.m)
        payoff = compile_payoff_formula(game)
        for _ in range(50):
            elems = [random_contraction(algebra, rng)
                     for _ in range(game.n * game.m)]
            rows = [elems[x * game.m:(x + 1) * game.m] for x in range(game.n)]
            got = eval_formula(defect_formula, algebra, elems)
            worst_defect = max(worst_defect, abs(got - pvm_defect(rows, algebra)))
        for _ in range(50):
            E = random_pvm(algebra, game.n, game.m, rng)
            flat = E.flat()
            got_defect = eval_formula(defect_formula, algebra, flat)
            worst_defect = max(worst_defect, abs(got_defect - pvm_defect(E, algebra)))
            got_payoff = eval_formula(payoff, algebra, flat)
            worst_payoff = max(worst_payoff, abs(got_payoff - payoff_value(game, E, algebra)))
    elapsed = time.perf_counter() - t0
    ok = worst_defect < 1e-12 and worst_payoff < 1e-10 and elapsed < 60.0
    _report(3, "defect/payoff oracle agreement", ok,
            f"10 games x 100 tuples, defect gap {worst_defect:.2e} < 1e-12, "
            f"payoff gap {worst_payoff:.2e} < 1e-10, {elapsed:.1f}s")
    assert worst_defect < 1e-12
    assert worst_payoff < 1e-10
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 4. classical recovery on commutative models
# ---------------------------------------------------------------------------

def test_criterion_4_classical_recovery():
    t0 = time.perf_counter()
    worst = 0.0
    tested = 0
    for name, game in benchmark_games():
        if game.m ** game.n > 100_000:
            continue
        k = game.n * game.m
        algebra = make_algebra([(1, F(1, k))] * k)
        exact, _ = classical_sync_value(game)
        cert = seesaw_game_value(game, algebra,
                                 OptimizerConfig(restarts=32, seed=0, threads=4))
        worst = max(worst, abs(cert.value - float(exact)))
        tested += 1
        if name == "triangle":
            assert exact == F(7, 9), "brute-force oracle must give exactly 7/9"
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and tested == 10 and elapsed < 120.0
    _report(4, "classical recovery", ok,
            f"{tested} games, worst |seesaw - classical| {worst:.2e} < 1e-6, "
            f"triangle exactly 7/9, {elapsed:.1f}s")
    assert tested == 10
    assert worst < 1e-6
    assert elapsed < 120.0


# ---------------------------------------------------------------------------
# 5. penalty soundness
# ---------------------------------------------------------------------------

def _stack_elements(algebra, lanes):
    """lanes[j][v] elements -> engine variable stacks [v][block]."""
    nvars = len(lanes[0])
    out = []
    for v in range(nvars):
        blocks = []
        for i, d in enumerate(algebra.dims):
            blocks.append(np.ascontiguousarray(
                np.stack([lanes[j][v].blocks[i] for j in range(len(lanes))])))
        out.append(blocks)
    return out


def test_criterion_5_penalty_soundness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(10005))
    algebra = make_algebra([(2, 1)])
    batch = 500  # 500 arbitrary + 500 exact tuples per game
    worst_exact_gap = 0.0
    min_slack = float("inf")
    for _, game in benchmark_games():
        sentence = compile_game_sentence(game)
        assert check_restricted(sentence)
        _, body = logic.peel_sup(sentence)
        payoff = compile_payoff_formula(game)
        nvars = game.n * game.m
        prog_body = compile_body(body, nvars)
        prog_payoff = compile_body(payoff, nvars)

        free = [[random_contraction(algebra, rng) for _ in range(nvars)]
                for _ in range(batch)]
        exact = [random_pvm(algebra, game.n, game.m, rng).flat()
                 for _ in range(batch)]
        for lanes, is_exact in ((free, False), (exact, True)):
            stacks = _stack_elements(algebra, lanes)
            vb = BatchContext(prog_body, algebra, batch).forward(stacks)
            vp = BatchContext(prog_payoff, algebra, batch).forward(stacks)
            min_slack = min(min_slack, float(np.min(vp - vb)))
            if is_exact:
                worst_exact_gap = max(worst_exact_gap,
                                      float(np.max(np.abs(vp - vb))))
    elapsed = time.perf_counter() - t0
    ok = (min_slack >= -1e-12 and worst_exact_gap < 1e-10 and elapsed < 60.0)
    _report(5, "penalty soundness", ok,
            f"10 games x 1000 tuples, min payoff-body slack {min_slack:.2e}, "
            f"exact-tuple gap {worst_exact_gap:.2e} < 1e-10, {elapsed:.1f}s")
    assert min_slack >= -1e-12, "penalized body exceeded the payoff formula"
    assert worst_exact_gap < 1e-10
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 6. perfect-game sentinel
# ---------------------------------------------------------------------------

def test_criterion_6_perfect_game_sentinel():
    accept = np.ones((2, 2, 2, 2), dtype=int)
    mu = [[F(1, 4)] * 2] * 2
    game = SyncGame(2, 2, mu, accept)
    sentence = compile_game_sentence(game)
    models = [
        ("C", make_algebra([(1, 1)])),
        ("C+C", make_algebra([(1, F(1, 2))] * 2)),
        ("M2", make_algebra([(2, 1)])),
        ("M2+M3", make_algebra([(2, F(1, 2)), (3, F(1, 2))])),
    ]
    worst = 0.0
    for _, algebra in models:
        cert = maximize_sentence(sentence, algebra,
                                 OptimizerConfig(restarts=8, seed=0,
                                                 pvm_shape=(2, 2)))
        worst = max(worst, abs(cert.value - 1.0))
        saw = seesaw_game_value(game, algebra, OptimizerConfig(restarts=4, seed=0))
        worst = max(worst, abs(saw.value - 1.0))
    ok = worst < 1e-6
    _report(6, "perfect-game sentinel", ok,
            f"{len(models)} models x 2 optimizers, worst |value - 1| {worst:.2e} < 1e-6")
    assert worst < 1e-6


# ---------------------------------------------------------------------------
# 7. CLI reproducibility across thread counts
# ---------------------------------------------------------------------------

def _payload_bytes(path) -> bytes:
    with open(path) as fh:
        report = json.load(fh)
    return json.dumps(report["payload"], sort_keys=True).encode()


def test_criterion_7_cli_reproducibility(tmp_path):
    game = tmp_path / "triangle.game"
    model = tmp_path / "c6.model"
    tm = tmp_path / "probe.tm"
    save_game(corpus_game("triangle"), str(game))
    save_model(make_algebra([(1, F(1, 6))] * 6), str(model))
    tm.write_text(json.dumps({
        "states": ["run", "halt"], "alphabet": ["0", "1"], "blank": "0",
        "start": "run", "accept": "halt",
        "transitions": [["run", "0", "1", "R", "halt"],
                        ["run", "1", "1", "L", "run"]]}))
    sent = tmp_path / "triangle.sent"
    assert cli.main(["compile", str(game), "--out", str(sent)]) == 0

    # witness path is recorded inside the payload, so it must not vary
    # with the thread count; each run overwrites it and we snapshot bytes
    wit = tmp_path / "wit.json"
    checked = []
    for threads in (1, 4, 8):
        t = str(threads)
        outs = {name: tmp_path / f"{name}.{threads}.out" for name in
                ("compile", "eval", "value", "classical",
                 "stability", "modulus", "tm")}
        runs = {
            "compile": ["compile", str(game), "--threads", t,
                        "--out", str(outs["compile"])],
            "eval": ["eval", str(sent), "--model", str(model), "--restarts",
                     "6", "--seed", "5", "--threads", t,
                     "--out", str(outs["eval"])],
            "value": ["value", str(game), "--model", str(model), "--restarts",
                      "6", "--seed", "5", "--threads", t,
                      "--witness-out", str(wit), "--out", str(outs["value"])],
            "classical": ["classical", str(game), "--threads", t,
                          "--out", str(outs["classical"])],
            "stability": ["stability", "--m", "2", "--dims", "2,4",
                          "--trials", "40", "--seed", "9", "--threads", t,
                          "--out", str(outs["stability"])],
            "modulus": ["modulus", "--trials", "30", "--seed", "3",
                        "--threads", t, "--out", str(outs["modulus"])],
            "tm": ["tm", str(tm), "--threads", t, "--out", str(outs["tm"])],
        }
        blobs = {}
        for name, argv in runs.items():
            assert cli.main(argv) == 0, f"{name} failed at threads={threads}"
            raw = outs[name].read_bytes()
            if name in ("eval", "value", "classical"):
                blobs[name] = _payload_bytes(outs[name])
            else:
                blobs[name] = raw
        blobs["witness"] = wit.read_bytes()
        checked.append(blobs)

    mismatched = [name for name in checked[0]
                  if not (checked[0][name] == checked[1][name] == checked[2][name])]
    ok = not mismatched
    _report(7, "CLI reproducibility", ok,
            f"7 commands + witness across threads 1/4/8, "
            f"mismatches: {mismatched or 'none'}")
    assert not mismatched


# ---------------------------------------------------------------------------
# 8. presentation norm precision
# ---------------------------------------------------------------------------

def test_criterion_8_presentation_norm():
    t0 = time.perf_counter()
    algebra = make_algebra([(2, F(1, 2)), (3, F(1, 2))])
    e11 = algebra.element([np.diag([1.0, 0.0]).astype(complex),
                           np.diag([1.0, 0.0, 0.0]).astype(complex)])
    shift2 = np.roll(np.eye(2, dtype=complex), 1, axis=0)
    shift3 = np.roll(np.eye(3, dtype=complex), 1, axis=0)
    cycle = algebra.element([shift2, shift3])
    pres = make_presentation(algebra, [e11, cycle], span_degree=6)

    terms = [Var(0), Var(1), Add(Var(0), Var(1)), Mul(Var(1), Var(1)),
             Sub(Mul(Var(0), Adj(Var(1))), One()),
             Mul(Var(1), Mul(Var(0), Adj(Var(1))))]
    worst_margin = float("inf")
    for term in terms:
        want = eval_term(term, algebra, pres.points).two_norm()
        for k in range(21):
            q = presentation_norm(pres, term, k)
            margin = 2.0 ** -k - abs(float(q) - want)
            worst_margin = min(worst_margin, margin)
    elapsed = time.perf_counter() - t0
    ok = worst_margin > 0 and elapsed < 5.0
    _report(8, "presentation norm precision", ok,
            f"{len(terms)} terms x k=0..20 on M2+M3, smallest margin "
            f"{worst_margin:.2e}, {elapsed:.1f}s")
    assert worst_margin > 0, "presentation_norm missed its 2^-k guarantee"
    assert elapsed < 5.0
