"""Game-to-sentence compilation.

A game on n questions and m answers turns into a restricted universal
sentence over n*m variables: variable x*m + a stands for the
measurement operator of answer a to question x. The sentence body is

    payoff  -.  penalty(defect)

where the defect formula is the max of the membership violations (the
self-adjointness, idempotence, and partition atoms of each question),
the payoff formula sums the accepted trace correlations, and the
penalty is a configurable nondecreasing piecewise-linear modulus that
vanishes at zero. On exact measurement tuples the penalty term is
zero and the body is exactly the winning probability, so the sup over
any algebra dominates the best exact strategy there.

Also here: the Turing-machine front end (description validation plus
a clearly labeled constant demo constructor; the real reduction's
game construction is not public), sentence file I/O with a metadata
header, and the rewriter that replaces out-of-family connectives by
piecewise-linear interpolants with an explicit error budget.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Union

from . import logic
from .errors import FormulaError, GameError
from .games import SyncGame, corpus_game, validate_game
from .scalars import format_rational, parse_rational

SENTENCE_FORMAT = "syncgames-sentence/1"
TM_FORMAT = "syncgames-tm/1"

DEFAULT_PENALTY_SLOPE = Fraction(100)


# ---------------------------------------------------------------------------
# penalty moduli
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PenaltyModulus:
    """Nondecreasing piecewise-linear rational function fixing 0 to 0.

    `breakpoints` lists (t, value) pairs with strictly increasing t,
    starting at (0, 0); past the last breakpoint the function
    continues with `final_slope`.
    """

    breakpoints: tuple[tuple[Fraction, Fraction], ...]
    final_slope: Fraction

    def __post_init__(self):
        pts = tuple((Fraction(t), Fraction(v)) for t, v in self.breakpoints)
        object.__setattr__(self, "breakpoints", pts)
        object.__setattr__(self, "final_slope", Fraction(self.final_slope))
        if not pts or pts[0] != (0, 0):
            raise FormulaError("penalty breakpoints must start at (0, 0)")
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if t1 <= t0:
                raise FormulaError("penalty breakpoints must increase strictly")
            if v1 < v0:
                raise FormulaError("penalty modulus must be nondecreasing")
        if self.final_slope < 0:
            raise FormulaError("penalty final slope must be nonnegative")

    @staticmethod
    def linear(slope: Union[Fraction, int] = DEFAULT_PENALTY_SLOPE
               ) -> "PenaltyModulus":
        return PenaltyModulus(((Fraction(0), Fraction(0)),), Fraction(slope))

    def __call__(self, t) -> Fraction:
        t = Fraction(t)
        if t < 0:
            raise FormulaError(f"penalty argument must be nonnegative, got {t}")
        pts = self.breakpoints
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if t <= t1:
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        tl, vl = pts[-1]
        return vl + self.final_slope * (t - tl)

    def hinges(self) -> tuple[tuple[Fraction, Fraction], ...]:
        """(knot, slope increment) pairs; the function is their
        hinge sum sum_j c_j * max(t - k_j, 0)."""
        pts = self.breakpoints
        slopes = [(v1 - v0) / (t1 - t0)
                  for (t0, v0), (t1, v1) in zip(pts, pts[1:])]
        slopes.append(self.final_slope)
        out = []
        prev = Fraction(0)
        for (knot, _), slope in zip(pts, slopes):
            if slope != prev:
                out.append((knot, slope - prev))
                prev = slope
        return tuple(out)

    def apply(self, f: logic.Formula) -> logic.Formula:
        """The modulus of a nonnegative-valued formula, in-family."""
        parts = []
        for knot, coeff in self.hinges():
            hinge = logic.TruncSub(f, logic.Const(knot))
            parts.append(hinge if coeff == 1 else logic.Scale(coeff, hinge))
        return logic.sum_of(parts)

    def describe(self) -> str:
        pts = ",".join(f"{format_rational(t)}:{format_rational(v)}"
                       for t, v in self.breakpoints)
        return f"pl[{pts}]+{format_rational(self.final_slope)}"

    @staticmethod
    def parse(text: str) -> "PenaltyModulus":
        if not text.startswith("pl[") or "]+" not in text:
            raise FormulaError(f"bad penalty description {text!r}")
        body, slope = text[3:].split("]+", 1)
        pts = []
        for chunk in body.split(","):
            t, v = chunk.split(":")
            pts.append((parse_rational(t), parse_rational(v)))
        return PenaltyModulus(tuple(pts), parse_rational(slope))


# ---------------------------------------------------------------------------
# game formulas
# ---------------------------------------------------------------------------


def variable_index(x: int, a: int, m: int) -> int:
    return x * m + a


def compile_defect_formula(n: int, m: int) -> logic.Formula:
    """Max of the n(2m+1) membership-violation atoms."""
    if n < 2 or m < 2:
        raise GameError(f"defect formula needs n, m >= 2, got ({n}, {m})")
    atoms = []
    for x in range(n):
        row = [logic.Var(variable_index(x, a, m)) for a in range(m)]
        for v in row:
            atoms.append(logic.Norm2(logic.Sub(v, logic.Adj(v))))
            atoms.append(logic.Norm2(logic.Sub(logic.Mul(v, v), v)))
        atoms.append(logic.Norm2(logic.Sub(logic.term_sum(row), logic.One())))
    return logic.max_of(atoms)


def compile_payoff_formula(game: SyncGame) -> logic.Formula:
    """Accepted trace correlations weighted by the question measure.

    The sum is wrapped in max(. , 0): on exact measurement tuples the
    raw sum is already a probability so the wrap changes nothing, and
    off the measurement set it keeps the formula nonnegative, which
    the penalized sentence body needs to be dominated by it.
    """
    m = game.m
    parts = []
    for x, y, p in game.mu_pairs():
        for a in range(m):
            for b in range(m):
                if game.accept[a, b, x, y]:
                    t = logic.Mul(logic.Var(variable_index(x, a, m)),
                                  logic.Var(variable_index(y, b, m)))
                    parts.append(logic.Scale(p, logic.ReTrace(t)))
    if not parts:
        return logic.Const(0)
    return logic.Max(logic.sum_of(parts), logic.Const(0))


def compile_game_sentence(game: SyncGame,
                          penalty: Optional[PenaltyModulus] = None
                          ) -> logic.Sentence:
    if penalty is None:
        penalty = PenaltyModulus.linear()
    payoff = compile_payoff_formula(game)
    defect = compile_defect_formula(game.n, game.m)
    body = logic.TruncSub(payoff, penalty.apply(defect))
    return logic.Sup(tuple(range(game.n * game.m)), body)


def game_hash(game: SyncGame) -> str:
    blob = json.dumps(game.to_json(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# restriction rewriting
# ---------------------------------------------------------------------------


def _count_smooth(f: logic.Formula) -> int:
    if isinstance(f, logic.Smooth):
        return 1 + _count_smooth(f.child)
    return sum(_count_smooth(c) for c in logic.subformulas(f))


def _signed_const(q: Fraction) -> logic.Formula:
    return logic.Const(q) if q >= 0 else logic.Scale(q, logic.Const(1))


def _sup_abs(f: logic.Formula) -> Fraction:
    lo, hi = logic.value_range(f)
    return max(abs(lo), abs(hi))


_MAX_KNOTS = 4096


def _interpolate(s: logic.Smooth, child: logic.Formula,
                 budget: Fraction) -> tuple[logic.Formula, Fraction]:
    """Replace one smooth node by an in-family interpolant.

    Returns the replacement and a bound on its pointwise error versus
    fn on the child's value range; the interpolant is clamped into the
    declared output range so enclosing range arithmetic is unchanged.
    """
    lo, hi = logic.value_range(child)
    fn, lip = s.fn, Fraction(s.lipschitz)
    # snap knot values to a dyadic grid fine enough for half the budget
    prec = 1
    while Fraction(1, 2 ** prec) > budget / 2:
        prec += 1
    if lip == 0 or lo == hi:
        mid = float((lo + hi) / 2)
        y = Fraction(round(float(fn(mid)) * 2 ** prec), 2 ** prec)
        approx: logic.Formula = _signed_const(y)
        err = Fraction(1, 2 ** (prec + 1))
    else:
        mesh = (budget / 2) / lip
        segments = int(-((lo - hi) // mesh))  # ceil((hi-lo)/mesh)
        if segments > _MAX_KNOTS:
            raise FormulaError(
                f"restriction budget needs {segments} interpolation knots "
                f"(cap {_MAX_KNOTS}); loosen the budget")
        step = (hi - lo) / segments
        knots = [lo + j * step for j in range(segments + 1)]
        values = [Fraction(round(float(fn(float(t))) * 2 ** prec), 2 ** prec)
                  for t in knots]
        parts: list[logic.Formula] = [_signed_const(values[0])]
        prev_slope = Fraction(0)
        for j in range(segments):
            slope = (values[j + 1] - values[j]) / step
            coeff = slope - prev_slope
            prev_slope = slope
            if coeff == 0:
                continue
            hinge = logic.TruncSub(child, _signed_const(knots[j]))
            parts.append(hinge if coeff == 1 else logic.Scale(coeff, hinge))
        approx = logic.sum_of(parts)
        # interpolation of a lip-Lipschitz function on this mesh plus
        # dyadic snapping of the knot values
        err = lip * step + Fraction(1, 2 ** (prec + 1))
    clamped = logic.Max(logic.Min(approx, _signed_const(Fraction(s.out_hi))),
                        _signed_const(Fraction(s.out_lo)))
    return clamped, err


def _replace_smooth(f: logic.Formula, amp: Fraction, budget_each: Fraction
                    ) -> tuple[logic.Formula, Fraction]:
    """Rewrites every smooth node; returns (formula, total error bound).

    `amp` is the Lipschitz amplification from here to the root, so the
    returned bound is already in root units.
    """
    if isinstance(f, logic.Smooth):
        child, used = _replace_smooth(f.child, amp * Fraction(f.lipschitz),
                                      budget_each)
        node_budget = budget_each / amp if amp > 0 else budget_each
        approx, err = _interpolate(f, child, node_budget)
        return approx, used + amp * err
    if isinstance(f, (logic.Norm2, logic.ReTrace, logic.ImTrace, logic.Const)):
        return f, Fraction(0)
    if isinstance(f, logic.Scale):
        body, used = _replace_smooth(f.body, amp * abs(f.factor), budget_each)
        return logic.Scale(f.factor, body), used
    if isinstance(f, logic.Times):
        # each side's error is amplified by the other's sup bound;
        # the clamp inside _interpolate keeps those bounds valid
        left, ul = _replace_smooth(f.left, amp * _sup_abs(f.right), budget_each)
        right, ur = _replace_smooth(f.right, amp * _sup_abs(f.left), budget_each)
        return logic.Times(left, right), ul + ur
    if isinstance(f, (logic.Plus, logic.TruncSub, logic.Max, logic.Min)):
        left, ul = _replace_smooth(f.left, amp, budget_each)
        right, ur = _replace_smooth(f.right, amp, budget_each)
        return type(f)(left, right), ul + ur
    raise FormulaError(f"cannot restrict node {type(f).__name__}")


def restrict_sentence(sentence: logic.Sentence, eta
                      ) -> tuple[logic.Sentence, Fraction]:
    """Rewrite into the restricted family, off by at most eta.

    Returns (sentence, bound) where bound <= eta is the recorded
    approximation budget; a sentence that is already restricted comes
    back unchanged with bound 0.
    """
    eta = Fraction(eta)
    if eta <= 0:
        raise FormulaError(f"approximation budget must be positive, got {eta}")
    cert = logic.check_restricted(sentence)
    if cert.restricted:
        return sentence, Fraction(0)
    variables, body = logic.peel_sup(sentence)
    if not logic.is_quantifier_free(body):
        raise FormulaError(f"cannot restrict: {cert.reason}")
    count = _count_smooth(body)
    if count == 0:
        raise FormulaError(f"cannot restrict: {cert.reason}")
    new_body, used = _replace_smooth(body, Fraction(1), eta / count)
    out = logic.Sup(variables, new_body) if variables else new_body
    if not logic.check_restricted(out):
        raise FormulaError("restriction rewrite left an out-of-family node")
    if used > eta:
        raise FormulaError(f"restriction error bound {used} exceeds {eta}")
    return out, used


# ---------------------------------------------------------------------------
# Turing machine front end
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TuringMachineDescription:
    """Single-tape machine, one-way infinite tape.

    Transitions are (state, read, write, move, next) with move L or R,
    exactly one per (state, symbol) pair for every non-accepting
    state. Nothing here ever runs the machine.
    """

    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    blank: str
    transitions: tuple[tuple[str, str, str, str, str], ...]
    start: str
    accept: str

    def __post_init__(self):
        states, alphabet = set(self.states), set(self.alphabet)
        if len(states) != len(self.states) or not states:
            raise FormulaError("machine states must be nonempty and distinct")
        if len(alphabet) != len(self.alphabet) or not alphabet:
            raise FormulaError("tape alphabet must be nonempty and distinct")
        if self.blank not in alphabet:
            raise FormulaError(f"blank symbol {self.blank!r} not in alphabet")
        for name, val in (("start", self.start), ("accept", self.accept)):
            if val not in states:
                raise FormulaError(f"{name} state {val!r} not declared")
        seen = set()
        for rule in self.transitions:
            if len(rule) != 5:
                raise FormulaError(f"transition {rule!r} must have 5 fields")
            state, read, write, move, nxt = rule
            if state == self.accept:
                raise FormulaError("no transitions may leave the accept state")
            if state not in states or nxt not in states:
                raise FormulaError(f"transition {rule!r} uses unknown state")
            if read not in alphabet or write not in alphabet:
                raise FormulaError(f"transition {rule!r} uses unknown symbol")
            if move not in ("L", "R"):
                raise FormulaError(f"transition move must be L or R, got {move!r}")
            if (state, read) in seen:
                raise FormulaError(f"duplicate transition for {(state, read)}")
            seen.add((state, read))
        needed = {(s, c) for s in self.states if s != self.accept
                  for c in self.alphabet}
        missing = needed - seen
        if missing:
            raise FormulaError(
                f"transition function not total; missing {sorted(missing)[:3]}")

    def to_json(self) -> dict:
        return {"format": TM_FORMAT, "states": list(self.states),
                "alphabet": list(self.alphabet), "blank": self.blank,
                "transitions": [list(r) for r in self.transitions],
                "start": self.start, "accept": self.accept}


def validate_tm(raw: dict) -> TuringMachineDescription:
    try:
        return TuringMachineDescription(
            states=tuple(raw["states"]), alphabet=tuple(raw["alphabet"]),
            blank=raw["blank"],
            transitions=tuple(tuple(r) for r in raw["transitions"]),
            start=raw["start"], accept=raw["accept"])
    except KeyError as exc:
        raise FormulaError(f"machine description missing field {exc}") from None


def load_tm(path: str) -> TuringMachineDescription:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameError(f"bad machine file {path}: {exc}") from None
    return validate_tm(raw)


GameConstructor = Callable[[TuringMachineDescription], SyncGame]


def demo_game_constructor(tm: TuringMachineDescription) -> SyncGame:
    """NON-NORMATIVE stand-in: every machine maps to the triangle game.

    The genuine reduction attaches to each machine a game whose
    perfect-strategy question is equivalent to non-halting; that
    construction is not published, so this demo exists only to
    exercise the pipeline end to end.
    """
    return corpus_game("triangle")


def compile_tm_sentence(tm: TuringMachineDescription,
                        ctor: GameConstructor,
                        penalty: Optional[PenaltyModulus] = None
                        ) -> logic.Sentence:
    game = ctor(tm)
    game = validate_game(game.to_json())
    return compile_game_sentence(game, penalty)


# ---------------------------------------------------------------------------
# sentence files
# ---------------------------------------------------------------------------


def sentence_metadata(sentence: logic.Sentence,
                      game: Optional[SyncGame] = None,
                      penalty: Optional[PenaltyModulus] = None,
                      extra: Optional[dict] = None) -> dict:
    _, body = logic.peel_sup(sentence)
    meta = {"format": SENTENCE_FORMAT}
    if game is not None:
        meta["game-hash"] = game_hash(game)
        meta["pvm-shape"] = f"{game.n}x{game.m}"
    if penalty is not None:
        meta["penalty"] = penalty.describe()
    meta["lipschitz-bound"] = format_rational(logic.lipschitz_bound(body))
    meta["restricted"] = "yes" if logic.check_restricted(sentence) else "no"
    if extra:
        meta.update(extra)
    return meta


def write_sentence(path: str, sentence: logic.Sentence,
                   metadata: Optional[dict] = None) -> None:
    meta = metadata or sentence_metadata(sentence)
    lines = [f"; {k}: {v}" for k, v in meta.items()]
    lines.append(logic.print_sentence(sentence))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sentence(path: str) -> tuple[logic.Sentence, dict]:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    meta = {}
    for line in text.splitlines():
        line = line.strip()
        if line.startswith(";") and ":" in line:
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line and not line.startswith(";"):
            break
    return logic.parse_sentence(text), meta
