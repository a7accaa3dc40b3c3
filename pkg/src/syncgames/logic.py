"""Continuous-logic formulas over tracial algebras: AST, parser, printer.

Terms are *-polynomials in noncommuting variables with exact Gaussian
rational coefficients.  Formulas are built from 2-norm atoms (plus the
fixed trace sugar) using the computable connective family

    {Max, Min, Plus, Times, TruncSub, Scale(q), Const(q)}

and sup/inf quantifiers over operator-norm unit-ball tuples.  The AST is
exact: no floats anywhere.  Everything here is immutable and pure.

Grammar (UTF-8 s-expressions, `;` comments to end of line):

    term    :=  x | x<k> | one | (adj t) | (add t t) | (sub t t)
              | (mul t t) | (scal SCALAR t)
    formula :=  (norm2 t) | (retrace t) | (imtrace t)
              | (max e e) | (min e e) | (plus e e) | (times e e)
              | (tminus e e) | (scale RATIONAL e) | (const RATIONAL)
              | (sup (VARS) e) | (inf (VARS) e)

SCALAR is a Gaussian rational token (see scalars module), RATIONAL is
`p` or `p/q`.  Variables are alpha-renamed to canonical indices on
parse; index 0 prints as `x`, index k as `x<k>`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Union

from .errors import FormulaError, ParseError
from .scalars import QComplex, format_rational, parse_rational

# ---------------------------------------------------------------------------
# Term AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class One:
    pass


@dataclass(frozen=True)
class Adj:
    arg: "Term"


@dataclass(frozen=True)
class Add:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Sub:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Mul:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Scal:
    coeff: QComplex
    arg: "Term"


Term = Union[Var, One, Adj, Add, Sub, Mul, Scal]

# ---------------------------------------------------------------------------
# Formula AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Norm2:
    """Atomic predicate: the 2-norm of a term."""

    term: Term


@dataclass(frozen=True)
class ReTrace:
    """Sugar leaf: real part of the trace of a term.

    Expands by polarization into Norm2 atoms; see `expand_traces`.
    """

    term: Term


@dataclass(frozen=True)
class ImTrace:
    """Sugar leaf: imaginary part of the trace of a term."""

    term: Term


@dataclass(frozen=True)
class Const:
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))
        if self.value < 0:
            raise FormulaError(f"constants must be nonnegative, got {self.value}")


@dataclass(frozen=True)
class Scale:
    factor: Fraction
    body: "Formula"

    def __post_init__(self):
        object.__setattr__(self, "factor", Fraction(self.factor))


@dataclass(frozen=True)
class Plus:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Times:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class TruncSub:
    """Truncated subtraction: evaluates to max(left - right, 0)."""

    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Max:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Min:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Sup:
    variables: tuple[int, ...]
    body: "Formula"


@dataclass(frozen=True)
class Inf:
    variables: tuple[int, ...]
    body: "Formula"


@dataclass(frozen=True)
class Smooth:
    """A continuous connective outside the computable family.

    Carries the callable itself, a Lipschitz constant valid on the
    child's value range, and a declared output range.  Such nodes have
    no textual form; `restrict_sentence` replaces them by piecewise
    linear combinations of family connectives.
    """

    name: str
    fn: Callable[[float], float] = field(compare=False)
    child: "Formula" = None
    lipschitz: Fraction = Fraction(1)
    out_lo: Fraction = Fraction(0)
    out_hi: Fraction = Fraction(1)


Formula = Union[Norm2, ReTrace, ImTrace, Const, Scale, Plus, Times,
                TruncSub, Max, Min, Sup, Inf, Smooth]
Sentence = Formula

_BINARY = (Plus, Times, TruncSub, Max, Min)
_ATOMS = (Norm2, ReTrace, ImTrace)
_QUANTIFIERS = (Sup, Inf)

# ---------------------------------------------------------------------------
# Structure helpers
# ---------------------------------------------------------------------------


def subformulas(f: Formula) -> tuple[Formula, ...]:
    """Direct formula children of a node (terms are not descended)."""
    if isinstance(f, _BINARY):
        return (f.left, f.right)
    if isinstance(f, Scale):
        return (f.body,)
    if isinstance(f, _QUANTIFIERS):
        return (f.body,)
    if isinstance(f, Smooth):
        return (f.child,)
    return ()


def term_vars(t: Term) -> frozenset[int]:
    if isinstance(t, Var):
        return frozenset((t.index,))
    if isinstance(t, One):
        return frozenset()
    if isinstance(t, (Adj, Scal)):
        return term_vars(t.arg)
    return term_vars(t.left) | term_vars(t.right)


def free_vars(f: Formula) -> frozenset[int]:
    if isinstance(f, _ATOMS):
        return term_vars(f.term)
    if isinstance(f, Const):
        return frozenset()
    if isinstance(f, _QUANTIFIERS):
        return free_vars(f.body) - frozenset(f.variables)
    out: frozenset[int] = frozenset()
    for child in subformulas(f):
        out |= free_vars(child)
    return out


def is_sentence(f: Formula) -> bool:
    return not free_vars(f)


def is_quantifier_free(f: Formula) -> bool:
    if isinstance(f, _QUANTIFIERS):
        return False
    return all(is_quantifier_free(c) for c in subformulas(f))


def peel_sup(f: Formula) -> tuple[tuple[int, ...], Formula]:
    """Strip leading sup quantifiers, merging their variable tuples."""
    variables: list[int] = []
    while isinstance(f, Sup):
        variables.extend(f.variables)
        f = f.body
    return tuple(variables), f


def count_atoms(f: Formula) -> int:
    if isinstance(f, _ATOMS):
        return 1
    return sum(count_atoms(c) for c in subformulas(f))


def max_of(parts: Iterable[Formula]) -> Formula:
    """Left-associated binary Max tree over a nonempty sequence."""
    parts = list(parts)
    if not parts:
        raise FormulaError("max_of needs at least one formula")
    out = parts[0]
    for p in parts[1:]:
        out = Max(out, p)
    return out


def sum_of(parts: Iterable[Formula]) -> Formula:
    parts = list(parts)
    if not parts:
        return Const(Fraction(0))
    out = parts[0]
    for p in parts[1:]:
        out = Plus(out, p)
    return out


def term_sum(parts: Iterable[Term]) -> Term:
    parts = list(parts)
    if not parts:
        raise FormulaError("term_sum needs at least one term")
    out = parts[0]
    for p in parts[1:]:
        out = Add(out, p)
    return out

# ---------------------------------------------------------------------------
# Alpha-renaming to canonical indices
# ---------------------------------------------------------------------------


def _rename_term(t: Term, env: dict[int, int]) -> Term:
    if isinstance(t, Var):
        try:
            return Var(env[t.index])
        except KeyError:
            raise FormulaError(f"unbound variable x{t.index}") from None
    if isinstance(t, One):
        return t
    if isinstance(t, Adj):
        return Adj(_rename_term(t.arg, env))
    if isinstance(t, Scal):
        return Scal(t.coeff, _rename_term(t.arg, env))
    return type(t)(_rename_term(t.left, env), _rename_term(t.right, env))


def _canon(f: Formula, env: dict[int, int], counter: list[int]) -> Formula:
    if isinstance(f, _ATOMS):
        return type(f)(_rename_term(f.term, env))
    if isinstance(f, Const):
        return f
    if isinstance(f, Scale):
        return Scale(f.factor, _canon(f.body, env, counter))
    if isinstance(f, Smooth):
        return Smooth(f.name, f.fn, _canon(f.child, env, counter),
                      f.lipschitz, f.out_lo, f.out_hi)
    if isinstance(f, _BINARY):
        return type(f)(_canon(f.left, env, counter),
                       _canon(f.right, env, counter))
    if isinstance(f, _QUANTIFIERS):
        inner = dict(env)
        fresh = []
        for v in f.variables:
            inner[v] = counter[0]
            fresh.append(counter[0])
            counter[0] += 1
        return type(f)(tuple(fresh), _canon(f.body, inner, counter))
    raise FormulaError(f"unknown formula node {type(f).__name__}")


def canonicalize(f: Formula, free: tuple[int, ...] = ()) -> Formula:
    """Alpha-rename to canonical indices.

    Declared free variables get indices 0..len(free)-1 in declaration
    order; binders continue numbering outermost-first.
    """
    env = {v: i for i, v in enumerate(free)}
    return _canon(f, env, [len(free)])

# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_VAR_RE = re.compile(r"^x(\d*)$")


@dataclass
class _Token:
    kind: str  # "(", ")", "atom"
    text: str
    line: int
    col: int
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c.isspace():
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            tokens.append(_Token(c, c, line, col, i))
            col += 1
            i += 1
        else:
            start = i
            scol, sline, soff = col, line, i
            while i < n and not text[i].isspace() and text[i] not in "();":
                i += 1
                col += 1
            tokens.append(_Token("atom", text[start:i], sline, scol, soff))
    tokens.append(_Token("eof", "", line, col, n))
    return tokens


class _Parser:
    def __init__(self, text: str, const_bound: Fraction):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.const_bound = const_bound

    def _err(self, message: str, tok: Optional[_Token] = None) -> ParseError:
        tok = tok or self.tokens[self.pos]
        return ParseError(f"{message} (offset {tok.offset})", tok.line, tok.col)

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            raise self._err(f"expected {kind!r}, found {tok.text!r}", tok)
        return tok

    # -- tokens -> values ---------------------------------------------------

    def _rational(self, tok: _Token) -> Fraction:
        try:
            return parse_rational(tok.text)
        except ValueError:
            raise self._err(f"expected a rational literal, found {tok.text!r}", tok)

    def _scalar(self, tok: _Token) -> QComplex:
        try:
            return QComplex.parse(tok.text)
        except ValueError:
            raise self._err(f"expected a scalar literal, found {tok.text!r}", tok)

    # -- terms --------------------------------------------------------------

    def term(self, scope: dict[str, int]) -> Term:
        tok = self.next()
        if tok.kind == "atom":
            if tok.text == "one":
                return One()
            m = _VAR_RE.match(tok.text)
            if m:
                name = "x0" if tok.text == "x" else tok.text
                if name not in scope:
                    raise self._err(f"unbound variable {tok.text!r}", tok)
                return Var(scope[name])
            raise self._err(f"unknown term {tok.text!r}", tok)
        if tok.kind != "(":
            raise self._err(f"expected a term, found {tok.text!r}", tok)
        head = self.expect("atom")
        if head.text == "adj":
            out: Term = Adj(self.term(scope))
        elif head.text == "add":
            out = Add(self.term(scope), self.term(scope))
        elif head.text == "sub":
            out = Sub(self.term(scope), self.term(scope))
        elif head.text == "mul":
            out = Mul(self.term(scope), self.term(scope))
        elif head.text == "scal":
            coeff = self._scalar(self.expect("atom"))
            out = Scal(coeff, self.term(scope))
        else:
            raise self._err(f"unknown term operator {head.text!r}", head)
        self.expect(")")
        return out

    # -- formulas -----------------------------------------------------------

    def formula(self, scope: dict[str, int], counter: list[int]) -> Formula:
        tok = self.peek()
        if tok.kind != "(":
            raise self._err(f"expected '(', found {tok.text!r}")
        self.next()
        head = self.expect("atom")
        name = head.text
        if name in ("norm2", "retrace", "imtrace"):
            node = {"norm2": Norm2, "retrace": ReTrace, "imtrace": ImTrace}[name]
            out: Formula = node(self.term(scope))
        elif name in ("max", "min", "plus", "times", "tminus"):
            node = {"max": Max, "min": Min, "plus": Plus,
                    "times": Times, "tminus": TruncSub}[name]
            out = node(self.formula(scope, counter), self.formula(scope, counter))
        elif name == "scale":
            q = self._rational(self.expect("atom"))
            out = Scale(q, self.formula(scope, counter))
        elif name == "const":
            tok = self.expect("atom")
            q = self._rational(tok)
            if q < 0 or q > self.const_bound:
                raise self._err(
                    f"constant {format_rational(q)} outside [0, "
                    f"{format_rational(self.const_bound)}]", tok)
            out = Const(q)
        elif name in ("sup", "inf"):
            self.expect("(")
            names = []
            while self.peek().kind == "atom":
                vtok = self.next()
                if not _VAR_RE.match(vtok.text):
                    raise self._err(f"bad variable name {vtok.text!r}", vtok)
                names.append("x0" if vtok.text == "x" else vtok.text)
            self.expect(")")
            if not names:
                raise self._err("quantifier binds no variables", head)
            if len(set(names)) != len(names):
                raise self._err("duplicate variable in quantifier", head)
            inner = dict(scope)
            fresh = []
            for nm in names:
                inner[nm] = counter[0]
                fresh.append(counter[0])
                counter[0] += 1
            body = self.formula(inner, counter)
            out = (Sup if name == "sup" else Inf)(tuple(fresh), body)
        else:
            raise self._err(f"unknown connective {name!r}", head)
        self.expect(")")
        return out


def parse_formula(text: str, free: tuple[str, ...] = (),
                  const_bound: Fraction = Fraction(1000)) -> Formula:
    """Parse a formula whose free variables are declared in `free`.

    Variables are alpha-renamed to canonical indices: declared free
    names take 0..len(free)-1, quantifier binders continue from there.
    """
    scope = {}
    for i, nm in enumerate(free):
        key = "x0" if nm == "x" else nm
        scope[key] = i
    parser = _Parser(text, Fraction(const_bound))
    out = parser.formula(scope, [len(free)])
    tail = parser.peek()
    if tail.kind != "eof":
        raise parser._err(f"trailing input {tail.text!r}", tail)
    return out


def parse_sentence(text: str,
                   const_bound: Fraction = Fraction(1000)) -> Sentence:
    """Parse a sentence (formula with no free variables)."""
    return parse_formula(text, (), const_bound)

# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def var_name(index: int) -> str:
    return "x" if index == 0 else f"x{index}"


def _render_term(t: Term) -> str:
    if isinstance(t, Var):
        return var_name(t.index)
    if isinstance(t, One):
        return "one"
    if isinstance(t, Adj):
        return f"(adj {_render_term(t.arg)})"
    if isinstance(t, Scal):
        return f"(scal {t.coeff.format()} {_render_term(t.arg)})"
    op = {Add: "add", Sub: "sub", Mul: "mul"}[type(t)]
    return f"({op} {_render_term(t.left)} {_render_term(t.right)})"


def _render(f: Formula) -> str:
    if isinstance(f, Norm2):
        return f"(norm2 {_render_term(f.term)})"
    if isinstance(f, ReTrace):
        return f"(retrace {_render_term(f.term)})"
    if isinstance(f, ImTrace):
        return f"(imtrace {_render_term(f.term)})"
    if isinstance(f, Const):
        return f"(const {format_rational(f.value)})"
    if isinstance(f, Scale):
        return f"(scale {format_rational(f.factor)} {_render(f.body)})"
    if isinstance(f, _BINARY):
        op = {Plus: "plus", Times: "times", TruncSub: "tminus",
              Max: "max", Min: "min"}[type(f)]
        return f"({op} {_render(f.left)} {_render(f.right)})"
    if isinstance(f, _QUANTIFIERS):
        op = "sup" if isinstance(f, Sup) else "inf"
        names = " ".join(var_name(v) for v in f.variables)
        return f"({op} ({names}) {_render(f.body)})"
    if isinstance(f, Smooth):
        raise FormulaError(
            f"connective {f.name!r} is outside the computable family and has "
            "no textual form; apply restrict_sentence first")
    raise FormulaError(f"unknown formula node {type(f).__name__}")


def print_formula(f: Formula, free: tuple[int, ...] = ()) -> str:
    """Canonical text; round-trips through parse_formula."""
    return _render(canonicalize(f, free))


def print_sentence(s: Sentence) -> str:
    if not is_sentence(s):
        raise FormulaError("formula has free variables; not a sentence")
    return print_formula(s)

# ---------------------------------------------------------------------------
# Trace sugar expansion (polarization)
# ---------------------------------------------------------------------------

_MINUS_I = QComplex(Fraction(0), Fraction(-1))


def _retrace_expansion(t: Term) -> Formula:
    # Re tr(x) = (||x+1||^2 - ||x||^2 - 1) / 2, exact in every model.
    a_plus = Norm2(Add(t, One()))
    a_zero = Norm2(t)
    inner = Plus(Times(a_plus, a_plus),
                 Scale(Fraction(-1), Plus(Times(a_zero, a_zero),
                                          Const(Fraction(1)))))
    return Scale(Fraction(1, 2), inner)


def expand_traces(f: Formula) -> Formula:
    """Rewrite ReTrace/ImTrace sugar into Norm2 atoms.

    The rewrite is deterministic and idempotent; the result is in the
    official signature (2-norm atoms only).
    """
    if isinstance(f, ReTrace):
        return _retrace_expansion(f.term)
    if isinstance(f, ImTrace):
        return _retrace_expansion(Scal(_MINUS_I, f.term))
    if isinstance(f, (Norm2, Const)):
        return f
    if isinstance(f, Scale):
        return Scale(f.factor, expand_traces(f.body))
    if isinstance(f, Smooth):
        return Smooth(f.name, f.fn, expand_traces(f.child),
                      f.lipschitz, f.out_lo, f.out_hi)
    if isinstance(f, _BINARY):
        return type(f)(expand_traces(f.left), expand_traces(f.right))
    if isinstance(f, _QUANTIFIERS):
        return type(f)(f.variables, expand_traces(f.body))
    raise FormulaError(f"unknown formula node {type(f).__name__}")

# ---------------------------------------------------------------------------
# Monomial expansion of terms
# ---------------------------------------------------------------------------

Word = tuple[tuple[int, bool], ...]  # ((var, starred), ...)


def term_monomials(t: Term) -> dict[Word, QComplex]:
    """Expand a term into {word: coefficient} with exact coefficients."""
    if isinstance(t, Var):
        return {((t.index, False),): QComplex(Fraction(1))}
    if isinstance(t, One):
        return {(): QComplex(Fraction(1))}
    if isinstance(t, Adj):
        out: dict[Word, QComplex] = {}
        for word, c in term_monomials(t.arg).items():
            rev = tuple((v, not s) for v, s in reversed(word))
            _acc(out, rev, c.conjugate())
        return out
    if isinstance(t, Scal):
        out = {}
        for word, c in term_monomials(t.arg).items():
            _acc(out, word, t.coeff * c)
        return out
    if isinstance(t, (Add, Sub)):
        out = dict(term_monomials(t.left))
        sign = QComplex(Fraction(1)) if isinstance(t, Add) else QComplex(Fraction(-1))
        for word, c in term_monomials(t.right).items():
            _acc(out, word, sign * c)
        return out
    if isinstance(t, Mul):
        out = {}
        right = term_monomials(t.right)
        for w1, c1 in term_monomials(t.left).items():
            for w2, c2 in right.items():
                _acc(out, w1 + w2, c1 * c2)
        return out
    raise FormulaError(f"unknown term node {type(t).__name__}")


def _acc(table: dict[Word, QComplex], word: Word, coeff: QComplex) -> None:
    cur = table.get(word)
    new = coeff if cur is None else cur + coeff
    if new.is_zero:
        table.pop(word, None)
    else:
        table[word] = new


def _atom_coeff_degree_sum(t: Term) -> Fraction:
    """Sum over monomials of |coefficient| * degree (unit constant excluded)."""
    total = Fraction(0)
    for word, c in term_monomials(t).items():
        total += c.abs_bound() * len(word)
    return total


def _atom_value_bound(t: Term) -> Fraction:
    """Upper bound on ||t||_2 over unit-ball assignments: sum of |coeff|."""
    total = Fraction(0)
    for _, c in term_monomials(t).items():
        total += c.abs_bound()
    return total

# ---------------------------------------------------------------------------
# Value ranges and Lipschitz bounds
# ---------------------------------------------------------------------------


def value_range(f: Formula) -> tuple[Fraction, Fraction]:
    """Syntactic interval containing the value on unit-ball assignments."""
    if isinstance(f, Norm2):
        return Fraction(0), _atom_value_bound(f.term)
    if isinstance(f, (ReTrace, ImTrace)):
        u = _atom_value_bound(f.term)
        return -u, u
    if isinstance(f, Const):
        return f.value, f.value
    if isinstance(f, Scale):
        lo, hi = value_range(f.body)
        a, b = f.factor * lo, f.factor * hi
        return min(a, b), max(a, b)
    if isinstance(f, Plus):
        l1, h1 = value_range(f.left)
        l2, h2 = value_range(f.right)
        return l1 + l2, h1 + h2
    if isinstance(f, Times):
        l1, h1 = value_range(f.left)
        l2, h2 = value_range(f.right)
        prods = (l1 * l2, l1 * h2, h1 * l2, h1 * h2)
        return min(prods), max(prods)
    if isinstance(f, TruncSub):
        _, h1 = value_range(f.left)
        l2, _ = value_range(f.right)
        return Fraction(0), max(Fraction(0), h1 - l2)
    if isinstance(f, Max):
        l1, h1 = value_range(f.left)
        l2, h2 = value_range(f.right)
        return max(l1, l2), max(h1, h2)
    if isinstance(f, Min):
        l1, h1 = value_range(f.left)
        l2, h2 = value_range(f.right)
        return min(l1, l2), min(h1, h2)
    if isinstance(f, Smooth):
        return f.out_lo, f.out_hi
    if isinstance(f, _QUANTIFIERS):
        return value_range(f.body)
    raise FormulaError(f"unknown formula node {type(f).__name__}")


def lipschitz_bound(f: Formula) -> Fraction:
    """Syntactic Lipschitz bound w.r.t. max_i ||a_i - b_i||_2 on unit balls.

    Atoms contribute the sum over monomials of |coefficient| * degree
    (each single-variable substitution in a unit-ball word moves the
    2-norm by at most the replaced factor's 2-norm distance); Plus and
    TruncSub add, Max/Min take the larger child, Scale multiplies by
    |factor|, Times uses the product rule with syntactic range bounds.
    """
    if isinstance(f, _QUANTIFIERS):
        raise FormulaError("lipschitz_bound requires a quantifier-free formula")
    if isinstance(f, _ATOMS):
        return _atom_coeff_degree_sum(f.term)
    if isinstance(f, Const):
        return Fraction(0)
    if isinstance(f, Scale):
        return abs(f.factor) * lipschitz_bound(f.body)
    if isinstance(f, (Plus, TruncSub)):
        return lipschitz_bound(f.left) + lipschitz_bound(f.right)
    if isinstance(f, (Max, Min)):
        return max(lipschitz_bound(f.left), lipschitz_bound(f.right))
    if isinstance(f, Times):
        l1, h1 = value_range(f.left)
        l2, h2 = value_range(f.right)
        u1, u2 = max(abs(l1), abs(h1)), max(abs(l2), abs(h2))
        return lipschitz_bound(f.left) * u2 + lipschitz_bound(f.right) * u1
    if isinstance(f, Smooth):
        return f.lipschitz * lipschitz_bound(f.child)
    raise FormulaError(f"unknown formula node {type(f).__name__}")

# ---------------------------------------------------------------------------
# Restriction certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RestrictionCertificate:
    """Outcome of the restricted-universal check.

    `witness_path` is the child-index path from the root to the first
    offending node when the verdict is negative.
    """

    restricted: bool
    witness_path: Optional[tuple[int, ...]] = None
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.restricted


def _first_offence(f: Formula, path: tuple[int, ...],
                   quantifiers_ok: bool) -> Optional[tuple[tuple[int, ...], str]]:
    if isinstance(f, Smooth):
        return path, f"connective {f.name!r} outside the computable family"
    if isinstance(f, Inf):
        return path, "inf quantifier (not a universal sentence form)"
    if isinstance(f, Sup):
        if not quantifiers_ok:
            return path, "sup quantifier below a connective"
        return _first_offence(f.body, path + (0,), True)
    for i, child in enumerate(subformulas(f)):
        hit = _first_offence(child, path + (i,), False)
        if hit:
            return hit
    return None


def check_restricted(f: Formula) -> RestrictionCertificate:
    """Certify membership in the restricted universal class.

    Restricted means: every connective is drawn from the computable
    family (the trace sugar counts as its fixed family expansion) and
    every quantifier is a leading sup over unit-ball tuples.
    """
    hit = _first_offence(f, (), True)
    if hit is None:
        return RestrictionCertificate(True)
    path, reason = hit
    return RestrictionCertificate(False, path, reason)


def node_at(f: Formula, path: tuple[int, ...]) -> Formula:
    for i in path:
        f = subformulas(f)[i]
    return f
