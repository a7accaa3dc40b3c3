"""Projective measurement tuples and quantitative rounding.

A measurement tuple assigns to each of n questions an m-outcome
projection-valued measure: self-adjoint idempotents summing to the
identity.  The defect functional measures how far a raw tuple is from
satisfying those three relation families in 2-norm.  Rounding repairs
approximate tuples into exact ones with certified distance, going
through order-m unitaries: an approximate unitary of order m is polar
corrected and then spectrally snapped to the nearest m-th roots of
unity, with operator-norm distance at most 2^(m+2) times the input
defect.  A discrete Fourier pair converts between measurement rows and
order-m unitaries in both directions.
"""
from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .algebra import AlgebraElement, FiniteTracialAlgebra, random_hermitian
from .errors import RoundingError

EXACT_TOL = 1e-9


def _as_rows(elements) -> tuple[tuple[AlgebraElement, ...], ...]:
    rows = tuple(tuple(row) for row in elements)
    if not rows or not rows[0]:
        raise RoundingError("measurement tuple must have at least one row and outcome")
    m = len(rows[0])
    if any(len(r) != m for r in rows):
        raise RoundingError("ragged measurement tuple")
    return rows


@dataclass(frozen=True, eq=False)
class PVMTuple:
    """n questions, m outcomes, one element per (question, outcome)."""

    algebra: FiniteTracialAlgebra
    rows: tuple[tuple[AlgebraElement, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", _as_rows(self.rows))
        for row in self.rows:
            for e in row:
                if e.algebra != self.algebra:
                    raise RoundingError("tuple element belongs to a different algebra")

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def m(self) -> int:
        return len(self.rows[0])

    def defect(self) -> float:
        return pvm_defect(self.rows, self.algebra)

    def is_exact(self, tol: float = EXACT_TOL) -> bool:
        return self.defect() <= tol

    def require_exact(self, tol: float = EXACT_TOL) -> None:
        d = self.defect()
        if d > tol:
            raise RoundingError(f"measurement tuple has defect {d:.3g} > {tol:.0e}")

    def flat(self) -> list[AlgebraElement]:
        """Row-major flattening; variable x*m + a holds outcome a of question x."""
        return [e for row in self.rows for e in row]

    def to_lists(self) -> list:
        return [[e.to_lists() for e in row] for row in self.rows]

    @staticmethod
    def from_lists(algebra: FiniteTracialAlgebra, data) -> "PVMTuple":
        rows = [[AlgebraElement.from_lists(algebra, e) for e in row] for row in data]
        return PVMTuple(algebra, rows)


@dataclass(frozen=True, eq=False)
class OrderMUnitary:
    """An element u with u*u = uu* = 1 and u^m = 1, up to tolerance."""

    algebra: FiniteTracialAlgebra
    element: AlgebraElement
    order: int

    def order_defect(self) -> float:
        return unitary_order_defect(self.element, self.order)

    def require_exact(self, tol: float = EXACT_TOL) -> None:
        d = self.order_defect()
        if d > tol:
            raise RoundingError(f"unitary has order-{self.order} defect {d:.3g}")


def unitary_order_defect(v: AlgebraElement, m: int) -> float:
    """max of ||v*v - 1||, ||vv* - 1||, ||v^m - 1|| in operator norm."""
    one = v.algebra.identity()
    power = one
    for _ in range(m):
        power = power @ v
    return max((v.adjoint() @ v - one).op_norm(),
               (v @ v.adjoint() - one).op_norm(),
               (power - one).op_norm())


# ---------------------------------------------------------------------------
# defect functional
# ---------------------------------------------------------------------------


def pvm_defect(elements, algebra: FiniteTracialAlgebra) -> float:
    """Largest 2-norm violation of self-adjointness, idempotence, or
    the partition of unity across a raw measurement tuple."""
    rows = elements.rows if isinstance(elements, PVMTuple) else _as_rows(elements)
    one = algebra.identity()
    worst = 0.0
    for row in rows:
        total = algebra.zero()
        for e in row:
            worst = max(worst, (e - e.adjoint()).two_norm())
            worst = max(worst, (e @ e - e).two_norm())
            total = total + e
        worst = max(worst, (total - one).two_norm())
    return worst


# ---------------------------------------------------------------------------
# constructors and samplers
# ---------------------------------------------------------------------------


def deterministic_tuple(algebra: FiniteTracialAlgebra, n: int, m: int,
                        assignment: Sequence[int]) -> PVMTuple:
    """The classical strategy f as projections: outcome f(x) gets the
    identity, every other outcome the zero element."""
    if len(assignment) != n:
        raise RoundingError(f"assignment length {len(assignment)} != {n} questions")
    one, zero = algebra.identity(), algebra.zero()
    rows = []
    for x in range(n):
        a_star = assignment[x]
        if not 0 <= a_star < m:
            raise RoundingError(f"assignment value {a_star} outside 0..{m-1}")
        rows.append([one if a == a_star else zero for a in range(m)])
    return PVMTuple(algebra, rows)


def random_pvm(algebra: FiniteTracialAlgebra, n: int, m: int,
               rng: np.random.Generator) -> PVMTuple:
    """Exact random tuple: per block and question, a Haar eigenbasis
    partitioned uniformly among the m outcomes."""
    rows = []
    for _ in range(n):
        per_block = [[] for _ in range(m)]
        for d in algebra.dims:
            basis = _haar_basis(rng, d)
            labels = rng.integers(0, m, size=d)
            for a in range(m):
                sel = basis[:, labels == a]
                per_block[a].append(sel @ sel.conj().T)
        rows.append([algebra.element(bs) for bs in per_block])
    return PVMTuple(algebra, rows)


def _haar_basis(rng: np.random.Generator, d: int) -> np.ndarray:
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    q, r = np.linalg.qr(g)
    ph = np.diagonal(r).copy()
    ph /= np.abs(ph)
    return q * ph


def perturb_tuple(E: PVMTuple, rng: np.random.Generator,
                  scale: float) -> list[list[AlgebraElement]]:
    """Raw tuple: each entry shifted by scale times a unit-2-norm
    Hermitian noise element."""
    out = []
    for row in E.rows:
        out.append([e + scale * random_hermitian(E.algebra, rng, norm=1.0)
                    for e in row])
    return out


# ---------------------------------------------------------------------------
# Fourier pair between measurement rows and order-m unitaries
# ---------------------------------------------------------------------------


def _resolve_root(m: int, omega: Optional[complex]) -> complex:
    if omega is None:
        return cmath.exp(2j * cmath.pi / m)
    omega = complex(omega)
    if abs(abs(omega) - 1) > 1e-12 or abs(omega ** m - 1) > 1e-10:
        raise RoundingError(f"{omega} is not an m-th root of unity for m={m}")
    for k in range(1, m):
        if abs(omega ** k - 1) < 1e-10:
            raise RoundingError(f"{omega} is not primitive for m={m}")
    return omega


def pvm_to_unitary(row: Sequence[AlgebraElement],
                   omega: Optional[complex] = None) -> OrderMUnitary:
    """u = sum_a omega^a e_a for an exact m-outcome row."""
    row = list(row)
    m = len(row)
    algebra = row[0].algebra
    d = pvm_defect([row], algebra)
    if d > EXACT_TOL:
        raise RoundingError(f"row has defect {d:.3g}; round it first")
    w = _resolve_root(m, omega)
    u = algebra.zero()
    for a, e in enumerate(row):
        u = u + (w ** a) * e
    return OrderMUnitary(algebra, u, m)


def unitary_to_pvm(u: OrderMUnitary,
                   omega: Optional[complex] = None) -> list[AlgebraElement]:
    """e_a = (1/m) sum_c omega^{-ac} u^c, the inverse Fourier sum."""
    m = u.order
    d = u.order_defect()
    if d > 1e-8:
        raise RoundingError(f"element is not an order-{m} unitary (defect {d:.3g})")
    w = _resolve_root(m, omega)
    powers = [u.algebra.identity()]
    for _ in range(m - 1):
        powers.append(powers[-1] @ u.element)
    row = []
    for a in range(m):
        e = u.algebra.zero()
        for c in range(m):
            e = e + (w ** (-a * c) / m) * powers[c]
        row.append(e)
    return row


# ---------------------------------------------------------------------------
# rounding
# ---------------------------------------------------------------------------


def round_to_order_m_unitary(v: AlgebraElement, m: int) -> tuple[OrderMUnitary, float]:
    """Snap an approximate order-m unitary to an exact one.

    Requires eps = max(||v*v-1||, ||vv*-1||, ||v^m-1||) < 2^{-m}; the
    returned distance ||u-v|| in operator norm is guaranteed to be at
    most 2^{m+2} * eps.  The polar part of v is computed blockwise from
    the Hermitian factor, then each eigenvalue is collapsed to the
    nearest m-th root of unity (ties toward the smaller argument).
    """
    if m < 1:
        raise RoundingError("order must be at least 1")
    eps = unitary_order_defect(v, m)
    if eps >= 2.0 ** (-m):
        raise RoundingError(
            f"defect {eps:.6g} is not below 2^-{m} = {2.0**(-m):.6g}; "
            "the quantitative rounding guarantee does not apply")
    u = AlgebraElement(v.algebra, [_snap_block(b, m) for b in v.blocks])
    unit = OrderMUnitary(v.algebra, u, m)
    distance = (u - v).op_norm()
    return unit, distance


def _snap_block(b: np.ndarray, m: int) -> np.ndarray:
    # polar part: u0 = b (bb*)^{-1/2}
    h = b @ b.conj().T
    vals, vecs = np.linalg.eigh(h)
    vals = np.maximum(vals, 1e-30)
    inv_sqrt = (vecs * (vals ** -0.5)) @ vecs.conj().T
    u0 = b @ inv_sqrt
    # spectral snap: u0 is unitary, hence normal; its Schur form is
    # diagonal up to rounding and we keep only the diagonal
    t, z = scipy.linalg.schur(u0, output="complex")
    lam = np.diagonal(t)
    snapped = np.array([_nearest_root(val, m) for val in lam])
    return (z * snapped) @ z.conj().T


def _nearest_root(lam: complex, m: int) -> complex:
    theta = cmath.phase(lam) % (2 * math.pi)
    t = theta * m / (2 * math.pi)
    lower = math.floor(t)
    frac = t - lower
    if frac > 0.5:
        j = (lower + 1) % m
    elif frac < 0.5:
        j = lower % m
    else:
        # exact midpoint of an arc: the root with smaller argument wins
        j = min(lower % m, (lower + 1) % m)
    return cmath.exp(2j * math.pi * j / m)


def round_to_pvm(elements, algebra: FiniteTracialAlgebra,
                 omega: Optional[complex] = None) -> tuple[PVMTuple, float]:
    """Repair a raw tuple into an exact one, reporting the largest
    per-entry 2-norm the repair moved anything.

    Per question the entries are Fourier-summed into a candidate
    order-m unitary; when that candidate is close enough to admit the
    quantitative unitary rounding it is snapped and inverted back.
    Otherwise a whitening fallback reassigns eigenvectors greedily.
    Exact inputs are returned unchanged with distance 0.
    """
    rows = elements.rows if isinstance(elements, PVMTuple) else _as_rows(elements)
    m = len(rows[0])
    w = _resolve_root(m, omega)
    if pvm_defect(rows, algebra) <= EXACT_TOL:
        tup = elements if isinstance(elements, PVMTuple) else PVMTuple(algebra, rows)
        return tup, 0.0
    fixed_rows = []
    for row in rows:
        v = algebra.zero()
        for a, e in enumerate(row):
            v = v + (w ** a) * e
        if unitary_order_defect(v, m) < 2.0 ** (-m):
            unit, _ = round_to_order_m_unitary(v, m)
            fixed_rows.append(unitary_to_pvm(unit, omega=w))
        else:
            fixed_rows.append(_whiten_and_assign(row, algebra))
    out = PVMTuple(algebra, fixed_rows)
    out.require_exact()
    distance = 0.0
    for row, fixed in zip(rows, fixed_rows):
        for e, f in zip(row, fixed):
            distance = max(distance, (e - f).two_norm())
    return out, distance


def _whiten_and_assign(row, algebra: FiniteTracialAlgebra) -> list[AlgebraElement]:
    m = len(row)
    herm = [(e + e.adjoint()) * 0.5 for e in row]
    out_blocks: list[list[np.ndarray]] = [[] for _ in range(m)]
    for bi, d in enumerate(algebra.dims):
        hs = [h.blocks[bi] for h in herm]
        s = np.sum(hs, axis=0)
        vals, vecs = np.linalg.eigh(s)
        if vals.min() < 1e-8:
            raise RoundingError(
                "irrecoverable tuple: outcome sum is singular on a block")
        whit = (vecs * (vals ** -0.5)) @ vecs.conj().T
        fs = [whit @ h @ whit for h in hs]
        # basis from a weighted combination, then greedy per-vector assignment
        combo = np.zeros((d, d), dtype=np.complex128)
        for a, f in enumerate(fs):
            combo += a * f
        _, basis = np.linalg.eigh(combo)
        groups: list[list[np.ndarray]] = [[] for _ in range(m)]
        for i in range(d):
            vec = basis[:, i]
            scores = [float(np.real(vec.conj() @ f @ vec)) for f in fs]
            best = max(range(m), key=lambda a: (scores[a] - 1e-12 * a))
            groups[best].append(vec)
        for a in range(m):
            if groups[a]:
                mat = np.stack(groups[a], axis=1)
                out_blocks[a].append(mat @ mat.conj().T)
            else:
                out_blocks[a].append(np.zeros((d, d), dtype=np.complex128))
    return [algebra.element(bs) for bs in out_blocks]


# ---------------------------------------------------------------------------
# empirical almost-near modulus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModulusTable:
    """Empirical pairs (epsilon, delta_hat): the largest defect seen
    among sampled tuples whose repaired distance stayed within epsilon.
    Values are measurements on finite models, not certified moduli."""

    entries: tuple[tuple[float, float], ...]
    trials: int
    max_dim: int
    seed: int

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epsilon", "delta_hat", "trials", "max_dim", "seed"])
            for eps, delta in self.entries:
                writer.writerow([f"{eps:.10g}", f"{delta:.10g}",
                                 self.trials, self.max_dim, self.seed])


def estimate_modulus(n: int, m: int, dims: Sequence[int],
                     eps_grid: Sequence[float], trials: int,
                     seed: int) -> ModulusTable:
    """Sample perturbed tuples, round them, and tabulate the largest
    defect whose repair distance stayed under each epsilon."""
    if not dims:
        raise RoundingError("need at least one block dimension")
    if trials < 1:
        raise RoundingError("need at least one trial")
    eps_grid = sorted(float(e) for e in eps_grid)
    observed: list[tuple[float, float]] = []
    for i in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        d = dims[i % len(dims)]
        algebra = FiniteTracialAlgebra((int(d),), (Fraction(1),))
        exact = random_pvm(algebra, n, m, rng)
        scale = float(10 ** rng.uniform(-4, -0.5))
        raw = perturb_tuple(exact, rng, scale)
        defect = pvm_defect(raw, algebra)
        try:
            _, dist = round_to_pvm(raw, algebra)
        except RoundingError:
            continue
        observed.append((defect, dist))
    entries = []
    for eps in eps_grid:
        hits = [defect for defect, dist in observed if dist <= eps]
        entries.append((eps, max(hits, default=0.0)))
    # monotone regularization: delta_hat nondecreasing in epsilon
    best = 0.0
    regular = []
    for eps, delta in entries:
        best = max(best, delta)
        regular.append((eps, best))
    return ModulusTable(tuple(regular), trials, max(int(d) for d in dims), seed)
