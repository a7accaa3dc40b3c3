"""Finite tracial algebras: weighted direct sums of matrix blocks.

A model is a direct sum of full matrix algebras with a faithful tracial
state given by positive rational block weights summing to one.  The
trace of an element is the weight-average of the normalized block
traces, and the 2-norm is the root of the trace of x*x.  These models
are the finite-dimensional instances over which sentences are
evaluated and maximized; values obtained this way are lower bounds for
suprema over all tracial algebras, never upper bounds.

Elements are immutable stacks of dense complex blocks.  Evaluation of
quantifier-free formulas happens bottom-up with each connective value
clamped into its syntactically derived range (a provable no-op up to
float rounding, kept for numerical hygiene).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import logic
from .errors import AlgebraError, FormulaError
from .scalars import format_rational, parse_rational

_UNIT_BALL_TOL = 1e-9
_TRACE_IMAG_TOL = 1e-12

MODEL_FORMAT = "syncgames-model/1"


@dataclass(frozen=True)
class FiniteTracialAlgebra:
    """Direct sum of matrix blocks with rational trace weights."""

    dims: tuple[int, ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.dims) != len(self.weights) or not self.dims:
            raise AlgebraError("need one weight per block and at least one block")
        for d in self.dims:
            if not isinstance(d, int) or d < 1:
                raise AlgebraError(f"block dimension must be a positive integer, got {d!r}")
        for w in self.weights:
            if w <= 0:
                raise AlgebraError(f"block weight must be positive, got {w}")
        total = sum(self.weights, Fraction(0))
        if total != 1:
            raise AlgebraError(f"weights sum to {total}, expected 1")

    # -- metadata -----------------------------------------------------------

    @property
    def n_blocks(self) -> int:
        return len(self.dims)

    @property
    def max_dim(self) -> int:
        return max(self.dims)

    @property
    def vector_dim(self) -> int:
        """Complex dimension of the underlying vector space."""
        return sum(d * d for d in self.dims)

    def describe(self) -> str:
        parts = [f"M{d}^({format_rational(w)})" for d, w in zip(self.dims, self.weights)]
        return " + ".join(parts)

    # -- element constructors -------------------------------------------------

    def element(self, blocks: Sequence[np.ndarray]) -> "AlgebraElement":
        return AlgebraElement(self, blocks)

    def identity(self) -> "AlgebraElement":
        return AlgebraElement(self, [np.eye(d, dtype=np.complex128) for d in self.dims])

    def zero(self) -> "AlgebraElement":
        return AlgebraElement(self, [np.zeros((d, d), dtype=np.complex128) for d in self.dims])

    def scalar(self, c: complex) -> "AlgebraElement":
        return AlgebraElement(self, [c * np.eye(d, dtype=np.complex128) for d in self.dims])

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict:
        return {"format": MODEL_FORMAT,
                "blocks": [[d, format_rational(w)]
                           for d, w in zip(self.dims, self.weights)]}

    @staticmethod
    def from_json(data: dict) -> "FiniteTracialAlgebra":
        if not isinstance(data, dict) or "blocks" not in data:
            raise AlgebraError("model JSON must contain a 'blocks' list")
        dims, weights = [], []
        for entry in data["blocks"]:
            try:
                d, w = entry
                dims.append(int(d))
                weights.append(parse_rational(str(w)))
            except (TypeError, ValueError) as exc:
                raise AlgebraError(f"bad model block entry {entry!r}: {exc}") from None
        return make_algebra(list(zip(dims, weights)))


def make_algebra(blocks: Iterable[tuple[int, Union[Fraction, int, str]]],
                 normalize: bool = False) -> FiniteTracialAlgebra:
    """Build an algebra from (dimension, weight) pairs.

    Weights must be positive rationals summing to one; pass
    `normalize=True` to have a positive non-unit sum rescaled instead of
    rejected.
    """
    dims, weights = [], []
    for d, w in blocks:
        w = parse_rational(w) if isinstance(w, str) else Fraction(w)
        dims.append(d)
        weights.append(w)
    if normalize:
        total = sum(weights, Fraction(0))
        if total <= 0:
            raise AlgebraError("cannot normalize weights with non-positive sum")
        weights = [w / total for w in weights]
    return FiniteTracialAlgebra(tuple(dims), tuple(weights))


class AlgebraElement:
    """One dense complex matrix per block of the owning algebra."""

    __slots__ = ("algebra", "blocks")

    def __init__(self, algebra: FiniteTracialAlgebra,
                 blocks: Sequence[np.ndarray]):
        if len(blocks) != algebra.n_blocks:
            raise AlgebraError(f"expected {algebra.n_blocks} blocks, got {len(blocks)}")
        mats = []
        for d, b in zip(algebra.dims, blocks):
            m = np.asarray(b, dtype=np.complex128)
            if m.shape != (d, d):
                raise AlgebraError(f"block shape {m.shape} does not match dimension {d}")
            m = m.copy()
            m.flags.writeable = False
            mats.append(m)
        self.algebra = algebra
        self.blocks = tuple(mats)

    # -- arithmetic -----------------------------------------------------------

    def _check_same(self, other: "AlgebraElement") -> None:
        if self.algebra != other.algebra:
            raise AlgebraError("elements belong to different algebras")

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._check_same(other)
        return AlgebraElement(self.algebra,
                              [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._check_same(other)
        return AlgebraElement(self.algebra,
                              [a - b for a, b in zip(self.blocks, other.blocks)])

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement(self.algebra, [-a for a in self.blocks])

    def __matmul__(self, other: "AlgebraElement") -> "AlgebraElement":
        self._check_same(other)
        return AlgebraElement(self.algebra,
                              [a @ b for a, b in zip(self.blocks, other.blocks)])

    def __mul__(self, c) -> "AlgebraElement":
        c = complex(c)
        return AlgebraElement(self.algebra, [c * a for a in self.blocks])

    __rmul__ = __mul__

    def adjoint(self) -> "AlgebraElement":
        return AlgebraElement(self.algebra,
                              [a.conj().T for a in self.blocks])

    # -- trace and norms --------------------------------------------------------

    def trace(self) -> complex:
        """Weighted normalized trace, a complex number."""
        total = 0j
        for d, w, b in zip(self.algebra.dims, self.algebra.weights, self.blocks):
            total += float(w) / d * np.trace(b)
        return complex(total)

    def two_norm(self) -> float:
        total = 0.0
        imag = 0.0
        for d, w, b in zip(self.algebra.dims, self.algebra.weights, self.blocks):
            # tr(b* b) is real nonnegative up to rounding
            total += float(w) / d * float(np.vdot(b, b).real)
            imag += float(w) / d * float(np.vdot(b, b).imag)
        if abs(imag) > _TRACE_IMAG_TOL:
            raise AlgebraError(f"trace of x*x has imaginary part {imag}")
        return math.sqrt(max(total, 0.0))

    def op_norm(self) -> float:
        out = 0.0
        for b in self.blocks:
            if b.shape[0] == 1:
                out = max(out, abs(b[0, 0]))
            else:
                out = max(out, float(np.linalg.norm(b, 2)))
        return out

    def distance2(self, other: "AlgebraElement") -> float:
        return (self - other).two_norm()

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return all(np.max(np.abs(b - b.conj().T)) <= tol if b.size else True
                   for b in self.blocks)

    # -- serialization ----------------------------------------------------------

    def to_lists(self) -> list:
        """Per-block row-major [re, im] pairs."""
        out = []
        for b in self.blocks:
            flat = b.reshape(-1)
            out.append([[float(z.real), float(z.imag)] for z in flat])
        return out

    @staticmethod
    def from_lists(algebra: FiniteTracialAlgebra, data: Sequence) -> "AlgebraElement":
        if len(data) != algebra.n_blocks:
            raise AlgebraError(f"expected {algebra.n_blocks} blocks, got {len(data)}")
        blocks = []
        for d, entries in zip(algebra.dims, data):
            if len(entries) != d * d:
                raise AlgebraError(f"block of dimension {d} needs {d*d} entries, "
                                   f"got {len(entries)}")
            vals = np.array([complex(re, im) for re, im in entries],
                            dtype=np.complex128)
            blocks.append(vals.reshape(d, d))
        return AlgebraElement(algebra, blocks)

    def __repr__(self) -> str:
        return f"AlgebraElement({self.algebra.describe()})"


# ---------------------------------------------------------------------------
# Random sampling (all randomness flows through an explicit Generator)
# ---------------------------------------------------------------------------


def _ginibre(rng: np.random.Generator, d: int) -> np.ndarray:
    return (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)


def random_unitary(algebra: FiniteTracialAlgebra,
                   rng: np.random.Generator) -> AlgebraElement:
    """Haar-distributed unitary, blockwise (QR with phase correction)."""
    blocks = []
    for d in algebra.dims:
        q, r = np.linalg.qr(_ginibre(rng, d))
        phases = np.diagonal(r).copy()
        phases /= np.abs(phases)
        blocks.append(q * phases)
    return AlgebraElement(algebra, blocks)


def random_contraction(algebra: FiniteTracialAlgebra,
                       rng: np.random.Generator,
                       spread: float = 1.0) -> AlgebraElement:
    """Random element projected into the operator-norm unit ball."""
    blocks = []
    for d in algebra.dims:
        m = spread * _ginibre(rng, d)
        u, s, vh = np.linalg.svd(m)
        blocks.append((u * np.minimum(s, 1.0)) @ vh)
    return AlgebraElement(algebra, blocks)


def random_hermitian(algebra: FiniteTracialAlgebra,
                     rng: np.random.Generator,
                     norm: Optional[float] = None) -> AlgebraElement:
    """Random Hermitian element, optionally rescaled to a given 2-norm."""
    blocks = []
    for d in algebra.dims:
        g = _ginibre(rng, d)
        blocks.append((g + g.conj().T) / 2)
    x = AlgebraElement(algebra, blocks)
    if norm is not None:
        cur = x.two_norm()
        if cur > 0:
            x = x * (norm / cur)
    return x


def project_to_ball(x: AlgebraElement) -> AlgebraElement:
    """Clip singular values to 1 blockwise."""
    blocks = []
    for b in x.blocks:
        u, s, vh = np.linalg.svd(b)
        blocks.append((u * np.minimum(s, 1.0)) @ vh)
    return AlgebraElement(x.algebra, blocks)


# ---------------------------------------------------------------------------
# Term and formula evaluation (reference tree-walking path)
# ---------------------------------------------------------------------------


def eval_term(t: logic.Term, algebra: FiniteTracialAlgebra,
              assignment: Sequence[AlgebraElement]) -> AlgebraElement:
    if isinstance(t, logic.Var):
        try:
            x = assignment[t.index]
        except (IndexError, KeyError):
            raise FormulaError(f"no element assigned to variable x{t.index}") from None
        if x is None:
            raise FormulaError(f"no element assigned to variable x{t.index}")
        return x
    if isinstance(t, logic.One):
        return algebra.identity()
    if isinstance(t, logic.Adj):
        return eval_term(t.arg, algebra, assignment).adjoint()
    if isinstance(t, logic.Scal):
        return complex(t.coeff) * eval_term(t.arg, algebra, assignment)
    left = eval_term(t.left, algebra, assignment)
    right = eval_term(t.right, algebra, assignment)
    if isinstance(t, logic.Add):
        return left + right
    if isinstance(t, logic.Sub):
        return left - right
    if isinstance(t, logic.Mul):
        return left @ right
    raise FormulaError(f"unknown term node {type(t).__name__}")


def _clamp(v: float, node: logic.Formula) -> float:
    lo, hi = logic.value_range(node)
    return min(max(v, float(lo)), float(hi))


def _eval(f: logic.Formula, algebra, assignment) -> float:
    if isinstance(f, logic.Norm2):
        return eval_term(f.term, algebra, assignment).two_norm()
    if isinstance(f, logic.ReTrace):
        return eval_term(f.term, algebra, assignment).trace().real
    if isinstance(f, logic.ImTrace):
        return eval_term(f.term, algebra, assignment).trace().imag
    if isinstance(f, logic.Const):
        return float(f.value)
    if isinstance(f, logic.Scale):
        v = float(f.factor) * _eval(f.body, algebra, assignment)
    elif isinstance(f, logic.Plus):
        v = _eval(f.left, algebra, assignment) + _eval(f.right, algebra, assignment)
    elif isinstance(f, logic.Times):
        v = _eval(f.left, algebra, assignment) * _eval(f.right, algebra, assignment)
    elif isinstance(f, logic.TruncSub):
        a = _eval(f.left, algebra, assignment)
        b = _eval(f.right, algebra, assignment)
        v = max(a - b, 0.0)
    elif isinstance(f, logic.Max):
        v = max(_eval(f.left, algebra, assignment),
                _eval(f.right, algebra, assignment))
    elif isinstance(f, logic.Min):
        v = min(_eval(f.left, algebra, assignment),
                _eval(f.right, algebra, assignment))
    elif isinstance(f, logic.Smooth):
        v = float(f.fn(_eval(f.child, algebra, assignment)))
    else:
        raise FormulaError(f"cannot evaluate node {type(f).__name__} directly")
    return _clamp(v, f)


def eval_formula(f: logic.Formula, algebra: FiniteTracialAlgebra,
                 assignment: Union[Mapping[int, AlgebraElement],
                                   Sequence[AlgebraElement]]) -> float:
    """Evaluate a quantifier-free formula at a unit-ball assignment.

    The assignment maps variable indices to elements (a sequence works
    too); every free variable must be covered and every used element
    must satisfy op_norm <= 1 + 1e-9.
    """
    if not logic.is_quantifier_free(f):
        raise FormulaError("eval_formula requires a quantifier-free formula; "
                           "strip leading sups with peel_sup or use the optimizer")
    needed = sorted(logic.free_vars(f))
    if isinstance(assignment, Mapping):
        table: list[Optional[AlgebraElement]] = [None] * (max(needed, default=-1) + 1)
        for k, x in assignment.items():
            if k >= len(table):
                table.extend([None] * (k + 1 - len(table)))
            table[k] = x
    else:
        table = list(assignment)
    for k in needed:
        if k >= len(table) or table[k] is None:
            raise FormulaError(f"no element assigned to variable x{k}")
        x = table[k]
        if x.algebra != algebra:
            raise AlgebraError("assigned element belongs to a different algebra")
        if x.op_norm() > 1.0 + _UNIT_BALL_TOL:
            raise AlgebraError(
                f"variable x{k} violates the unit ball: op_norm = {x.op_norm():.6g}")
    return _eval(f, algebra, table)


# ---------------------------------------------------------------------------
# Presentations: special points with a rational norm oracle
# ---------------------------------------------------------------------------


def _term_degree(t: logic.Term) -> int:
    if isinstance(t, logic.Var):
        return 1
    if isinstance(t, logic.One):
        return 0
    if isinstance(t, (logic.Adj, logic.Scal)):
        return _term_degree(t.arg)
    if isinstance(t, logic.Mul):
        return _term_degree(t.left) + _term_degree(t.right)
    return max(_term_degree(t.left), _term_degree(t.right))


@dataclass(frozen=True)
class Presentation:
    """Special points whose rational *-polynomials are dense.

    In a finite-dimensional model density means the generated words
    span the whole algebra as a complex vector space; this is verified
    by a rank test on words up to `span_degree` when requested.
    """

    algebra: FiniteTracialAlgebra
    points: tuple[AlgebraElement, ...]
    degree_cap: int = 16


def make_presentation(algebra: FiniteTracialAlgebra,
                      points: Sequence[AlgebraElement],
                      degree_cap: int = 16,
                      check_density: bool = True,
                      span_degree: int = 4) -> Presentation:
    for p in points:
        if p.algebra != algebra:
            raise AlgebraError("special point belongs to a different algebra")
    pres = Presentation(algebra, tuple(points), degree_cap)
    if check_density and not _spans(algebra, points, span_degree):
        raise AlgebraError(
            f"special points do not span the algebra up to degree {span_degree}; "
            "presentation would not be dense")
    return pres


def _spans(algebra: FiniteTracialAlgebra,
           points: Sequence[AlgebraElement],
           max_degree: int) -> bool:
    # Generate words in the points and their adjoints, breadth-first,
    # and check the linear span reaches the full vector-space dimension.
    gens = []
    for p in points:
        gens.append(p)
        gens.append(p.adjoint())
    words = [algebra.identity()]
    frontier = [algebra.identity()]
    for _ in range(max_degree):
        nxt = []
        for w in frontier:
            for g in gens:
                nxt.append(w @ g)
        words.extend(nxt)
        frontier = nxt
    rows = np.stack([np.concatenate([b.reshape(-1) for b in w.blocks])
                     for w in words])
    rank = np.linalg.matrix_rank(rows, tol=1e-9)
    return rank == algebra.vector_dim


def presentation_norm(pres: Presentation, point: logic.Term, k: int) -> Fraction:
    """Rational q with |two_norm(point) - q| < 2^{-k}.

    `point` is a term whose variables refer to the special points by
    index.  The norm is computed exactly enough at working precision
    and rounded to a dyadic rational two extra bits fine.
    """
    if k < 0 or k > 40:
        raise AlgebraError("precision exponent k must be in 0..40")
    for idx in logic.term_vars(point):
        if idx >= len(pres.points):
            raise AlgebraError(f"presentation has no special point a{idx}")
    if _term_degree(point) > pres.degree_cap:
        raise AlgebraError(f"term degree exceeds the presentation cap {pres.degree_cap}")
    value = eval_term(point, pres.algebra, pres.points).two_norm()
    denom = 1 << (k + 2)
    return Fraction(round(value * denom), denom)


# ---------------------------------------------------------------------------
# Model and element file I/O
# ---------------------------------------------------------------------------


def load_model(path: str) -> FiniteTracialAlgebra:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise AlgebraError(f"bad model file {path}: {exc}") from None
    return FiniteTracialAlgebra.from_json(data)


def save_model(algebra: FiniteTracialAlgebra, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(algebra.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
