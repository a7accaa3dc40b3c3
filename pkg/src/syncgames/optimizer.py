"""Numerical maximization over finite tracial algebras.

Two engines share the certificate plumbing here.  `maximize_sentence`
runs batched projected gradient ascent on the body of a universal
sentence, treating each restart as one lane of a batch.  It works for
any quantifier-free body but only finds local maxima inside the unit
ball.  `seesaw_game_value` is the structured alternative for game
payoffs: block-coordinate ascent over exact measurement tuples, which
stays on the constraint set the whole time and therefore certifies its
value through the independent games-module oracle.

Every reported value is a lower bound for the supremum over the given
algebra; nothing here produces upper bounds.
"""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import logic
from .algebra import AlgebraElement, FiniteTracialAlgebra, eval_formula
from .engine import BatchContext, compile_body
from .errors import OptimizerError
from .games import SyncGame, payoff_value
from .pvm import PVMTuple, deterministic_tuple, pvm_defect, random_pvm

__all__ = [
    "OptimizerConfig",
    "ValueCertificate",
    "CertifyReport",
    "maximize_sentence",
    "seesaw_game_value",
    "certify",
]

# lanes per batch context; fixed so float trajectories never depend on
# the thread count, only on the restart index
_GROUP = 8

_MIN_STEP = 1e-12
_TIE_EPS = 1e-15


# ---------------------------------------------------------------------------
# configuration and certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs shared by both maximizers.

    `pvm_shape`, when set to (n, m), tells the generic ascent that the
    n*m sentence variables are meant to be measurement rows; every
    even-indexed restart then starts from an exact random tuple instead
    of an unstructured contraction.  This matters because penalized
    game bodies are flat (identically zero) far away from the
    measurement set, where plain gradient ascent has nothing to climb.
    """

    restarts: int = 32
    max_iters: int = 500
    step_size: float = 0.1
    tol: float = 1e-8
    seed: int = 0
    threads: int = 1
    pvm_shape: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.restarts < 1:
            raise OptimizerError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters < 1:
            raise OptimizerError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise OptimizerError("tolerance must be positive")
        if not self.step_size > 0:
            raise OptimizerError("step size must be positive")
        if self.threads < 1:
            raise OptimizerError(f"threads must be >= 1, got {self.threads}")
        if self.pvm_shape is not None:
            n, m = self.pvm_shape
            if n < 1 or m < 1:
                raise OptimizerError(f"bad pvm shape {self.pvm_shape}")

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        if d["pvm_shape"] is not None:
            d["pvm_shape"] = list(d["pvm_shape"])
        return d


@dataclass(frozen=True)
class ValueCertificate:
    """A lower bound with the witness that attains it.

    `value` is always the result of re-evaluating `witness` through a
    reference path (the interpreter for sentences, the games oracle for
    see-saw runs), so re-evaluation reproduces it to float noise.
    """

    value: float
    witness: tuple[AlgebraElement, ...]
    algebra: FiniteTracialAlgebra
    restart_values: tuple[float, ...]
    best_restart: int
    config: OptimizerConfig
    wall_clock: float
    pvm: Optional[PVMTuple] = field(default=None, compare=False)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "algebra": self.algebra.describe(),
            "witness": [e.to_lists() for e in self.witness],
            "restart_values": list(self.restart_values),
            "best_restart": self.best_restart,
            "config": self.config.to_json(),
            "wall_clock": self.wall_clock,
        }


# ---------------------------------------------------------------------------
# generic projected ascent
# ---------------------------------------------------------------------------


def _scan_quantifiers(body: logic.Formula) -> None:
    if isinstance(body, (logic.Sup, logic.Inf)):
        raise OptimizerError("nested quantifiers are not supported")
    for child in logic.subformulas(body):
        _scan_quantifiers(child)


def _clip_ball(stack: np.ndarray) -> np.ndarray:
    """Singular-value clipping of a (batch, d, d) stack to op-norm <= 1."""
    if stack.shape[-1] == 1:
        mag = np.abs(stack)
        return np.where(mag > 1.0, stack / np.maximum(mag, 1e-300), stack)
    u, s, vh = np.linalg.svd(stack)
    np.minimum(s, 1.0, out=s)
    return np.einsum("kij,kj,kjl->kil", u, s, vh)


def _initial_elements(algebra, nvars, cfg, ridx, rng):
    if cfg.pvm_shape is not None and ridx % 2 == 0:
        n, m = cfg.pvm_shape
        return random_pvm(algebra, n, m, rng).flat()
    from .algebra import random_contraction
    return [random_contraction(algebra, rng) for _ in range(nvars)]


def _ascend_group(program, algebra, lanes, cfg):
    """Run one batch of restarts to convergence.

    Returns (values, witnesses) aligned with `lanes`.  The group
    composition is a pure function of the restart indices, so results
    do not depend on how groups are scheduled across threads.
    """
    nvars = program.nvars
    B = len(lanes)
    dims = list(algebra.dims)
    ctx = BatchContext(program, algebra, B)

    vars_np = [[np.zeros((B, d, d), dtype=np.complex128) for d in dims]
               for _ in range(nvars)]
    for j, ridx in enumerate(lanes):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(ridx,)))
        for v, e in enumerate(_initial_elements(algebra, nvars, cfg, ridx, rng)):
            for i, blk in enumerate(e.blocks):
                vars_np[v][i][j] = blk

    value = ctx.forward(vars_np).copy()
    grads = ctx.backward()
    step = np.full(B, cfg.step_size)
    active = np.ones(B, dtype=bool)

    prop = [[np.empty_like(vars_np[v][i]) for i in range(len(dims))]
            for v in range(nvars)]

    for _ in range(cfg.max_iters):
        if not active.any():
            break
        gsq = np.zeros(B)
        for v in range(nvars):
            for i in range(len(dims)):
                g = grads[v][i]
                gsq += np.einsum("kij,kij->k", g.real, g.real)
                gsq += np.einsum("kij,kij->k", g.imag, g.imag)
        scale = step / np.sqrt(np.maximum(gsq, 1e-300))
        for v in range(nvars):
            for i in range(len(dims)):
                prop[v][i][...] = _clip_ball(
                    vars_np[v][i] + scale[:, None, None] * grads[v][i])
        vprop = ctx.forward(prop)
        improved = active & (vprop > value + _TIE_EPS)
        for v in range(nvars):
            for i in range(len(dims)):
                vars_np[v][i][improved] = prop[v][i][improved]
        value[improved] = vprop[improved]
        step[improved] = np.minimum(step[improved] * 1.5, 1.0)
        shrink = active & ~improved
        step[shrink] *= 0.5
        # a lane is done once its trust radius is below the relative tolerance
        floor = np.maximum(_MIN_STEP, cfg.tol * np.maximum(1.0, np.abs(value)) * 1e-2)
        active &= step >= floor
        if active.any():
            ctx.forward(vars_np)
            grads = ctx.backward()

    witnesses = []
    for j in range(B):
        elems = tuple(
            AlgebraElement(algebra, [vars_np[v][i][j] for i in range(len(dims))])
            for v in range(nvars))
        witnesses.append(elems)
    return value, witnesses


def maximize_sentence(sentence: logic.Formula, algebra: FiniteTracialAlgebra,
                      cfg: Optional[OptimizerConfig] = None) -> ValueCertificate:
    """Best local maximum of the sentence body over unit-ball tuples.

    The sentence must be a (possibly nested) sup of a quantifier-free
    body.  Restarts are deterministic given the seed: restart i draws
    from its own child stream of the seed, gets ascended to a local
    maximum, and the best final value wins, ties to the lowest index.
    The certificate value is the reference interpreter's evaluation of
    the winning witness.
    """
    if cfg is None:
        cfg = OptimizerConfig()
    t0 = time.perf_counter()

    variables, body = logic.peel_sup(sentence)
    _scan_quantifiers(body)
    nvars = (max(variables) + 1) if variables else 0
    if cfg.pvm_shape is not None:
        n, m = cfg.pvm_shape
        if n * m != nvars:
            raise OptimizerError(
                f"pvm shape {cfg.pvm_shape} supplies {n * m} variables, "
                f"sentence declares {nvars}")

    if nvars == 0:
        val = float(eval_formula(body, algebra, []))
        return ValueCertificate(
            value=val, witness=(), algebra=algebra,
            restart_values=(val,), best_restart=0, config=cfg,
            wall_clock=time.perf_counter() - t0)

    program = compile_body(body, nvars)
    groups = [list(range(k, min(k + _GROUP, cfg.restarts)))
              for k in range(0, cfg.restarts, _GROUP)]

    def run(lanes):
        return _ascend_group(program, algebra, lanes, cfg)

    if cfg.threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, groups))
    else:
        results = [run(g) for g in groups]

    values = np.concatenate([r[0] for r in results])
    witnesses = [w for r in results for w in r[1]]
    best = int(np.argmax(values))  # argmax takes the first max: lowest index
    witness = witnesses[best]
    ref = float(eval_formula(body, algebra, list(witness)))

    return ValueCertificate(
        value=ref, witness=witness, algebra=algebra,
        restart_values=tuple(float(v) for v in values),
        best_restart=best, config=cfg,
        wall_clock=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# see-saw over exact measurement tuples
# ---------------------------------------------------------------------------


def _block_value(pairs, accept, rows, d: int) -> float:
    """Per-block payoff, normalized by the block dimension only.

    The algebra weight is deliberately left out: this number is what a
    block would contribute if it carried all the weight, which is the
    comparison consolidation needs.
    """
    total = 0.0
    m = len(rows[0])
    for x, y, p in pairs:
        acc = accept[:, :, x, y]
        for a in range(m):
            ra = rows[x][a]
            for b in range(m):
                if acc[a, b]:
                    total += p * np.trace(ra @ rows[y][b]).real
    return total / d


def _greedy_row(pairs, accept, rows, x: int, m: int, d: int):
    """Best-response row for question x on one block, others fixed.

    Builds the effective Hermitian payoff operator of each outcome,
    carves the space along the eigenbasis of a fixed weighted
    combination, and assigns each eigenvector to the outcome with the
    largest Rayleigh quotient.  Greedy, not optimal; the caller rejects
    the row if it does not improve.
    """
    eye = np.eye(d, dtype=np.complex128)
    ops = []
    for a in range(m):
        F = np.zeros((d, d), dtype=np.complex128)
        for qx, qy, p in pairs:
            if qx == x and qy != x:
                for b in range(m):
                    if accept[a, b, x, qy]:
                        F += p * rows[qy][b]
            elif qy == x and qx != x:
                for b in range(m):
                    if accept[b, a, qx, x]:
                        F += p * rows[qx][b]
            elif qx == x and qy == x and accept[a, a, x, x]:
                # diagonal term: exactly linear on the measurement set,
                # where distinct outcomes of one question annihilate
                F += p * eye
        ops.append((F + F.conj().T) / 2)

    combo = np.zeros((d, d), dtype=np.complex128)
    for a, F in enumerate(ops):
        combo += (a + 1) * F
    _, vecs = np.linalg.eigh(combo)

    new_row = [np.zeros((d, d), dtype=np.complex128) for _ in range(m)]
    for k in range(d):
        v = np.ascontiguousarray(vecs[:, k])
        scores = [float((v.conj() @ F @ v).real) for F in ops]
        a_star = int(np.argmax(scores))  # ties to the lowest outcome
        new_row[a_star] += np.outer(v, v.conj())
    return new_row


def _consolidate(blocks, block_vals, dims):
    """Copy the best block of each dimension class over its peers.

    Weights are fixed, so replacing a block's content with that of a
    better same-dimension block can only raise the total payoff.
    """
    by_dim: dict[int, list[int]] = {}
    for i, d in enumerate(dims):
        by_dim.setdefault(d, []).append(i)
    changed = False
    for members in by_dim.values():
        best = members[0]
        for i in members[1:]:
            if block_vals[i] > block_vals[best] + _TIE_EPS:
                best = i
        for i in members:
            if i != best and block_vals[best] > block_vals[i] + _TIE_EPS:
                blocks[i] = [[mat.copy() for mat in row] for row in blocks[best]]
                block_vals[i] = block_vals[best]
                changed = True
    return changed


def _seesaw_restart(game: SyncGame, algebra: FiniteTracialAlgebra,
                    cfg: OptimizerConfig, ridx: int):
    n, m = game.n, game.m
    pairs = [(x, y, float(p)) for x, y, p in game.mu_pairs()]
    accept = game.accept
    dims = list(algebra.dims)
    wnorm = [float(w) for w in algebra.weights]

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(ridx,)))
    if ridx == 0:
        # fixed warm start so one restart is RNG-free
        start = deterministic_tuple(algebra, n, m, tuple(x % m for x in range(n)))
    else:
        start = random_pvm(algebra, n, m, rng)

    # blocks[i][x][a] is the (d_i, d_i) matrix of outcome a of question x
    blocks = [[[np.array(start.rows[x][a].blocks[i]) for a in range(m)]
               for x in range(n)] for i in range(len(dims))]
    block_vals = [_block_value(pairs, accept, blocks[i], dims[i])
                  for i in range(len(dims))]

    def total():
        return sum(w * v for w, v in zip(wnorm, block_vals))

    def sweeps():
        score = total()
        for _ in range(cfg.max_iters):
            for x in range(n):
                for i, d in enumerate(dims):
                    row = _greedy_row(pairs, accept, blocks[i], x, m, d)
                    old_row = blocks[i][x]
                    blocks[i][x] = row
                    v_new = _block_value(pairs, accept, blocks[i], d)
                    if v_new >= block_vals[i] - _TIE_EPS:
                        block_vals[i] = v_new
                    else:
                        blocks[i][x] = old_row  # reject: monotone by force
            score_new = total()
            if score_new - score <= max(1e-12, cfg.tol * max(1.0, abs(score))):
                return score_new
            score = score_new
        return score

    sweeps()
    if _consolidate(blocks, block_vals, dims):
        sweeps()

    rows = [[algebra.element([blocks[i][x][a] for i in range(len(dims))])
             for a in range(m)] for x in range(n)]
    tup = PVMTuple(algebra, rows)
    tup.require_exact(1e-9)
    return payoff_value(game, tup, algebra), tup


def seesaw_game_value(game: SyncGame, algebra: FiniteTracialAlgebra,
                      cfg: Optional[OptimizerConfig] = None) -> ValueCertificate:
    """Lower bound on the game payoff over exact measurement tuples.

    Coordinate ascent: each question's row is replaced by a greedy
    best response while the others stay fixed, updates that lower the
    payoff are rejected, and after convergence the best block of each
    dimension is copied over its peers.  The witness is exact by
    construction (rows are eigenprojection sums), so the value comes
    straight from the games oracle.
    """
    if cfg is None:
        cfg = OptimizerConfig()
    t0 = time.perf_counter()

    def run(ridx):
        return _seesaw_restart(game, algebra, cfg, ridx)

    if cfg.threads > 1 and cfg.restarts > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, range(cfg.restarts)))
    else:
        results = [run(i) for i in range(cfg.restarts)]

    values = [r[0] for r in results]
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    tup = results[best][1]
    value = payoff_value(game, tup, algebra)

    return ValueCertificate(
        value=value, witness=tuple(tup.flat()), algebra=algebra,
        restart_values=tuple(values), best_restart=best, config=cfg,
        wall_clock=time.perf_counter() - t0, pvm=tup)


# ---------------------------------------------------------------------------
# independent certification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CertifyReport:
    """Two independent evaluations of one witness and their gap.

    Lower bounds only: `ok` says the evaluators agree and the witness
    satisfies its constraints, not that the value is optimal.
    """

    oracle_value: Optional[float]
    formula_value: float
    gap: Optional[float]
    defect: Optional[float]
    violations: tuple[str, ...]
    ok: bool

    def to_json(self) -> dict:
        return {
            "oracle_value": self.oracle_value,
            "formula_value": self.formula_value,
            "gap": self.gap,
            "defect": self.defect,
            "violations": list(self.violations),
            "ok": self.ok,
            "bound_kind": "lower",
        }


def _witness_rows(witness, algebra, n: int, m: int):
    if isinstance(witness, PVMTuple):
        if witness.n != n or witness.m != m:
            raise OptimizerError(
                f"witness shape ({witness.n},{witness.m}) does not match game ({n},{m})")
        return witness.rows
    elems = list(witness)
    if len(elems) != n * m:
        raise OptimizerError(f"expected {n * m} witness elements, got {len(elems)}")
    for e in elems:
        if not isinstance(e, AlgebraElement) or e.algebra != algebra:
            raise OptimizerError("witness element does not live in the target algebra")
    return [elems[x * m:(x + 1) * m] for x in range(n)]


def certify(target: Union[SyncGame, logic.Formula],
            algebra: FiniteTracialAlgebra, witness) -> CertifyReport:
    """Re-evaluate a witness through two independent paths.

    For a game target the paths are the games-module trace oracle and
    the compiled payoff formula; for a sentence target they are the
    reference interpreter and the batched engine.  Constraint
    violations (an inexact measurement tuple, mainly) are reported in
    the result rather than raised, so a tampered witness still gets a
    readable verdict.
    """
    gap_tol = 1e-8

    if isinstance(target, SyncGame):
        from .compiler import compile_payoff_formula
        rows = _witness_rows(witness, algebra, target.n, target.m)
        flat = [e for row in rows for e in row]
        defect = pvm_defect(rows, algebra)
        violations = []
        if defect > 1e-9:
            violations.append(
                f"measurement defect {defect:.3g} exceeds 1e-09")
        payoff_formula = compile_payoff_formula(target)
        formula_value = float(eval_formula(payoff_formula, algebra, flat))
        oracle_value = None
        gap = None
        if not violations:
            oracle_value = payoff_value(game=target,
                                        E=PVMTuple(algebra, rows),
                                        algebra=algebra)
            gap = abs(oracle_value - formula_value)
            if gap > gap_tol:
                violations.append(f"oracle/formula gap {gap:.3g} exceeds {gap_tol:.0e}")
        return CertifyReport(
            oracle_value=oracle_value, formula_value=formula_value,
            gap=gap, defect=defect, violations=tuple(violations),
            ok=not violations)

    variables, body = logic.peel_sup(target)
    _scan_quantifiers(body)
    nvars = (max(variables) + 1) if variables else 0
    elems = list(witness)
    if len(elems) != nvars:
        raise OptimizerError(f"expected {nvars} witness elements, got {len(elems)}")
    formula_value = float(eval_formula(body, algebra, elems))
    if nvars:
        program = compile_body(body, nvars)
        ctx = BatchContext(program, algebra, 1)
        stacked = [[np.ascontiguousarray(e.blocks[i][None, :, :])
                    for i in range(algebra.n_blocks)] for e in elems]
        engine_value = float(ctx.forward(stacked)[0])
    else:
        engine_value = formula_value
    gap = abs(engine_value - formula_value)
    violations = []
    if gap > gap_tol:
        violations.append(f"engine/interpreter gap {gap:.3g} exceeds {gap_tol:.0e}")
    return CertifyReport(
        oracle_value=engine_value, formula_value=formula_value,
        gap=gap, defect=None, violations=tuple(violations),
        ok=not violations)
