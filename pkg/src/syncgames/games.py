"""Synchronous game model and value oracles.

A synchronous game has one question set and one answer set shared by
both players, a rational distribution over question pairs, and a 0/1
decider table.  Strategies come from measurement tuples: the chance of
answers (a, b) on questions (x, y) is the trace of the product of the
corresponding projections.  This module holds the data model, the
strategy and payoff maps, an exact brute-force classical oracle, and
the benchmark corpus used across the test suite.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .algebra import FiniteTracialAlgebra
from .errors import GameError
from .pvm import PVMTuple, pvm_defect
from .scalars import format_rational, parse_rational

GAME_FORMAT = "syncgames-game/1"

_IMAG_TOL = 1e-9


class SyncGame:
    """Question count n, answer count m, exact-rational pair
    distribution, and a dense accept table indexed [a, b, x, y]."""

    __slots__ = ("n", "m", "mu", "accept", "_mu_float")

    def __init__(self, n: int, m: int,
                 mu: Sequence[Sequence[Fraction]],
                 accept: np.ndarray):
        if n < 1 or m < 1:
            raise GameError("need at least one question and one answer")
        self.n = n
        self.m = m
        rows = []
        total = Fraction(0)
        for x in range(n):
            row = []
            for y in range(n):
                p = Fraction(mu[x][y])
                if p < 0:
                    raise GameError(f"mu({x},{y}) = {p} is negative")
                total += p
                row.append(p)
            rows.append(tuple(row))
        if total != 1:
            raise GameError(f"mu sums to {total}, expected 1")
        self.mu = tuple(rows)
        acc = np.asarray(accept)
        if acc.shape != (m, m, n, n):
            raise GameError(f"accept table shape {acc.shape} != {(m, m, n, n)}")
        if not np.isin(acc, (0, 1)).all():
            raise GameError("decider table must be 0/1 valued")
        acc = acc.astype(bool).copy()
        acc.flags.writeable = False
        self.accept = acc
        mf = np.array([[float(p) for p in row] for row in self.mu])
        mf.flags.writeable = False
        self._mu_float = mf

    @property
    def mu_float(self) -> np.ndarray:
        return self._mu_float

    def mu_pairs(self) -> list[tuple[int, int, Fraction]]:
        """Positive-probability question pairs, sorted."""
        return [(x, y, self.mu[x][y])
                for x in range(self.n) for y in range(self.n)
                if self.mu[x][y] > 0]

    def accept_quadruples(self) -> list[tuple[int, int, int, int]]:
        out = np.argwhere(self.accept)
        return [tuple(int(v) for v in q) for q in out]

    def describe(self) -> str:
        return (f"{self.n} questions, {self.m} answers, "
                f"{len(self.mu_pairs())} pairs in play, "
                f"{int(self.accept.sum())} accepted quadruples")

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        mu_entries = [[x, y, format_rational(p)] for x, y, p in self.mu_pairs()]
        acc = sorted(self.accept_quadruples())
        return {"format": GAME_FORMAT, "n": self.n, "m": self.m,
                "mu": mu_entries, "accept": [list(q) for q in acc]}


def validate_game(raw: dict) -> SyncGame:
    """Normalize a raw JSON-shaped description into a SyncGame."""
    if not isinstance(raw, dict):
        raise GameError("game description must be a JSON object")
    try:
        n = int(raw["n"])
        m = int(raw["m"])
    except (KeyError, TypeError, ValueError):
        raise GameError("game description needs integer fields 'n' and 'm'") from None
    if n < 1 or m < 1:
        raise GameError("need at least one question and one answer")
    mu = [[Fraction(0)] * n for _ in range(n)]
    seen = set()
    for entry in raw.get("mu", []):
        try:
            x, y, p = entry
            x, y = int(x), int(y)
            prob = parse_rational(str(p))
        except (TypeError, ValueError) as exc:
            raise GameError(f"bad mu entry {entry!r}: {exc}") from None
        if not (0 <= x < n and 0 <= y < n):
            raise GameError(f"mu entry ({x},{y}) out of range for n={n}")
        if (x, y) in seen:
            raise GameError(f"duplicate mu entry for pair ({x},{y})")
        seen.add((x, y))
        mu[x][y] = prob
    accept = np.zeros((m, m, n, n), dtype=bool)
    for quad in raw.get("accept", []):
        try:
            a, b, x, y = (int(v) for v in quad)
        except (TypeError, ValueError):
            raise GameError(f"bad accept entry {quad!r}") from None
        if not (0 <= a < m and 0 <= b < m and 0 <= x < n and 0 <= y < n):
            raise GameError(f"accept entry {quad!r} out of range")
        accept[a, b, x, y] = True
    return SyncGame(n, m, mu, accept)


def load_game(path: str) -> SyncGame:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameError(f"bad game file {path}: {exc}") from None
    return validate_game(raw)


def save_game(game: SyncGame, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(game.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# strategies and payoffs
# ---------------------------------------------------------------------------


def strategy_from_pvm(game: SyncGame, E: PVMTuple,
                      algebra: FiniteTracialAlgebra) -> np.ndarray:
    """Correlation p[a, b, x, y] = Re trace(e_x^a e_y^b) of an exact tuple."""
    if E.n != game.n or E.m != game.m:
        raise GameError(f"tuple shape ({E.n},{E.m}) does not match game "
                        f"({game.n},{game.m})")
    d = pvm_defect(E, algebra)
    if d > 1e-9:
        raise GameError(f"measurement tuple has defect {d:.3g}; round it first")
    n, m = game.n, game.m
    p = np.zeros((m, m, n, n))
    worst_imag = 0.0
    for bi, (dim, w) in enumerate(zip(algebra.dims, algebra.weights)):
        stack = np.stack([np.stack([E.rows[x][a].blocks[bi] for a in range(m)])
                          for x in range(n)])  # (n, m, d, d)
        prod = np.einsum("xaij,ybji->abxy", stack, stack)
        p += float(w) / dim * prod.real
        worst_imag = max(worst_imag, float(w) / dim * float(np.abs(prod.imag).max()))
    if worst_imag > _IMAG_TOL:
        raise GameError(f"correlation has imaginary residue {worst_imag:.3g}")
    return p


def game_value_of_correlation(game: SyncGame, p: np.ndarray) -> float:
    """Expected accept probability under the pair distribution."""
    p = np.asarray(p)
    if p.shape != (game.m, game.m, game.n, game.n):
        raise GameError(f"correlation shape {p.shape} does not match game")
    terms = []
    for x, y, prob in game.mu_pairs():
        w = float(prob)
        for a in range(game.m):
            for b in range(game.m):
                if game.accept[a, b, x, y]:
                    terms.append(w * float(p[a, b, x, y]))
    return math.fsum(terms)


def payoff_value(game: SyncGame, E: PVMTuple,
                 algebra: FiniteTracialAlgebra) -> float:
    """Direct double sum over traces; an independent second oracle for
    the value of a measurement strategy."""
    if E.n != game.n or E.m != game.m:
        raise GameError(f"tuple shape ({E.n},{E.m}) does not match game")
    d = pvm_defect(E, algebra)
    if d > 1e-9:
        raise GameError(f"measurement tuple has defect {d:.3g}; round it first")
    terms = []
    for x, y, prob in game.mu_pairs():
        w = float(prob)
        for a in range(game.m):
            for b in range(game.m):
                if not game.accept[a, b, x, y]:
                    continue
                tr = (E.rows[x][a] @ E.rows[y][b]).trace()
                if abs(tr.imag) > _IMAG_TOL:
                    raise GameError(f"trace imaginary residue {tr.imag:.3g}")
                terms.append(w * tr.real)
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# exact classical oracle
# ---------------------------------------------------------------------------


def classical_sync_value(game: SyncGame, cap: int = 10_000_000,
                         threads: int = 1) -> tuple[Fraction, tuple[int, ...]]:
    """Exact maximum over deterministic assignments f: Q -> A.

    Returns the value as an exact rational together with the
    lexicographically smallest maximizing assignment.
    """
    n, m = game.n, game.m
    count = m ** n
    if count > cap:
        raise GameError(f"{m}^{n} = {count} assignments exceed the cap {cap}")
    denom = 1
    for _, _, prob in game.mu_pairs():
        denom = denom * prob.denominator // math.gcd(denom, prob.denominator)
    if denom <= 2 ** 31:
        return _classical_int(game, denom, count, threads)
    return _classical_fraction(game, count)


def _classical_int(game: SyncGame, denom: int, count: int,
                   threads: int) -> tuple[Fraction, tuple[int, ...]]:
    n, m = game.n, game.m
    weights = np.zeros((n, n), dtype=np.int64)
    for x, y, prob in game.mu_pairs():
        weights[x, y] = int(prob * denom)
    table = game.accept.astype(np.int64)
    chunk = 1 << 16

    def score_range(start: int, stop: int) -> tuple[int, int]:
        idx = np.arange(start, stop, dtype=np.int64)
        digits = [(idx // (m ** (n - 1 - x))) % m for x in range(n)]
        total = np.zeros(stop - start, dtype=np.int64)
        for x in range(n):
            for y in range(n):
                w = weights[x, y]
                if w:
                    total += w * table[digits[x], digits[y], x, y]
        best = int(np.argmax(total))
        return int(total[best]), start + best

    ranges = [(s, min(s + chunk, count)) for s in range(0, count, chunk)]
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: score_range(*r), ranges))
    else:
        results = [score_range(*r) for r in ranges]
    best_score, best_idx = max(results, key=lambda t: (t[0], -t[1]))
    assignment = tuple(int(best_idx // (m ** (n - 1 - x))) % m for x in range(n))
    return Fraction(best_score, denom), assignment


def _classical_fraction(game: SyncGame, count: int) -> tuple[Fraction, tuple[int, ...]]:
    n, m = game.n, game.m
    pairs = game.mu_pairs()
    best: Optional[tuple[Fraction, tuple[int, ...]]] = None
    f = [0] * n
    for idx in range(count):
        rem = idx
        for x in range(n - 1, -1, -1):
            f[x] = rem % m
            rem //= m
        score = Fraction(0)
        for x, y, prob in pairs:
            if game.accept[f[x], f[y], x, y]:
                score += prob
        if best is None or score > best[0]:
            best = (score, tuple(f))
    return best


# ---------------------------------------------------------------------------
# corpus and random games
# ---------------------------------------------------------------------------


def _uniform_mu(n: int) -> list[list[Fraction]]:
    p = Fraction(1, n * n)
    return [[p] * n for _ in range(n)]


def _coloring_accept(n: int, m: int, edges: set[tuple[int, int]]) -> np.ndarray:
    # same question -> same answer, edge -> different answers,
    # anything else -> accept
    acc = np.zeros((m, m, n, n), dtype=bool)
    for x in range(n):
        for y in range(n):
            for a in range(m):
                for b in range(m):
                    if x == y:
                        acc[a, b, x, y] = a == b
                    elif (x, y) in edges or (y, x) in edges:
                        acc[a, b, x, y] = a != b
                    else:
                        acc[a, b, x, y] = True
    return acc


def benchmark_games() -> list[tuple[str, SyncGame]]:
    """Ten small named games with n, m <= 4 used throughout the tests."""
    games: list[tuple[str, SyncGame]] = []

    tri_edges = {(0, 1), (1, 2), (0, 2)}
    games.append(("triangle",
                  SyncGame(3, 2, _uniform_mu(3), _coloring_accept(3, 2, tri_edges))))

    games.append(("all-accept",
                  SyncGame(2, 2, _uniform_mu(2), np.ones((2, 2, 2, 2), dtype=bool))))

    games.append(("never-accept",
                  SyncGame(2, 2, _uniform_mu(2), np.zeros((2, 2, 2, 2), dtype=bool))))

    agree = np.zeros((2, 2, 2, 2), dtype=bool)
    for a in range(2):
        agree[a, a, :, :] = True
    games.append(("agreement", SyncGame(2, 2, _uniform_mu(2), agree)))

    parity = np.zeros((2, 2, 2, 2), dtype=bool)
    for a in range(2):
        for b in range(2):
            for x in range(2):
                for y in range(2):
                    parity[a, b, x, y] = (a ^ b) == (x & y)
    games.append(("sync-parity", SyncGame(2, 2, _uniform_mu(2), parity)))

    k4 = {(x, y) for x in range(4) for y in range(4) if x < y}
    games.append(("clique-coloring",
                  SyncGame(4, 3, _uniform_mu(4), _coloring_accept(4, 3, k4))))

    c4 = {(0, 1), (1, 2), (2, 3), (3, 0)}
    mu_c4 = [[Fraction(0)] * 4 for _ in range(4)]
    for x in range(4):
        mu_c4[x][x] = Fraction(1, 12)
    for x, y in c4:
        mu_c4[x][y] = Fraction(1, 12)
        mu_c4[y][x] = Fraction(1, 12)
    games.append(("cycle-coloring",
                  SyncGame(4, 2, mu_c4, _coloring_accept(4, 2, c4))))

    forced = np.zeros((2, 2, 2, 2), dtype=bool)
    for x in range(2):
        for y in range(2):
            v = x | y
            forced[v, v, x, y] = True
    games.append(("forced-or", SyncGame(2, 2, _uniform_mu(2), forced)))

    mu_dir = [[Fraction(0)] * 3 for _ in range(3)]
    mu_dir[0][1] = Fraction(1, 2)
    mu_dir[1][2] = Fraction(1, 4)
    mu_dir[2][0] = Fraction(1, 4)
    differ = np.zeros((3, 3, 3, 3), dtype=bool)
    for a in range(3):
        for b in range(3):
            differ[a, b, :, :] = a != b
    games.append(("directed-triangle", SyncGame(3, 3, mu_dir, differ)))

    chord = {(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)}
    chordal = np.zeros((2, 2, 4, 4), dtype=bool)
    for x in range(4):
        for y in range(4):
            for a in range(2):
                for b in range(2):
                    if (x, y) in chord or (y, x) in chord:
                        chordal[a, b, x, y] = a != b
                    else:
                        chordal[a, b, x, y] = a == b
    games.append(("chordal-cycle",
                  SyncGame(4, 2, _uniform_mu(4), chordal)))

    return games


def corpus_game(name: str) -> SyncGame:
    for key, game in benchmark_games():
        if key == name:
            return game
    raise GameError(f"no corpus game named {name!r}")


def random_game(n: int, m: int, rng: np.random.Generator,
                density: float = 0.5) -> SyncGame:
    """Random game with exact rational pair weights."""
    nums = rng.integers(0, 10, size=(n, n))
    if nums.sum() == 0:
        nums[0, 0] = 1
    total = int(nums.sum())
    mu = [[Fraction(int(nums[x, y]), total) for y in range(n)] for x in range(n)]
    accept = rng.random((m, m, n, n)) < density
    return SyncGame(n, m, mu, accept)
