"""Batched evaluation of quantifier-free formulas, with gradients.

The reference evaluator in `algebra` walks the tree once per
assignment. The optimizer needs the same number many thousands of
times over whole populations of assignments, so this module compiles
a formula into a flat register program and runs it over stacks of
shape (batch, d, d), one stack per block of the algebra, using the
`_kernels` backends for the matrix work.

Forward values match `algebra.eval_formula` (same connective
clamping, same weighted norms) to float accuracy. The backward pass
produces, for every variable, the Wirtinger gradient with respect to
the conjugated entries; for real objectives that is the steepest
ascent direction. Kinked connectives (max, min, truncated
subtraction) use the active branch, ties to the first child.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import logic
from ._kernels import (batch_add_identity, batch_axpy, batch_frob_sq,
                       batch_mul, batch_mul_ha, batch_mul_hb, batch_trace)
from .algebra import FiniteTracialAlgebra
from .errors import FormulaError

# term opcodes
_VAR, _ONE, _ADJ, _ADD, _SUB, _MUL, _SCAL = range(7)
# scalar opcodes
_NORM2, _RETRACE, _IMTRACE, _CONST, _SCALE, _PLUS, _TIMES, _TMINUS, \
    _MAX, _MIN, _SMOOTH = range(10, 21)

_NO_CLAMP = (-np.inf, np.inf)


@dataclass
class Program:
    """A formula flattened into postorder register instructions.

    Instructions are tuples (op, dst, a, b, payload); `a`/`b` are
    source register numbers (term or scalar depending on the opcode)
    and `payload` carries the literal for var/const/scal/scale nodes
    and the callable for smooth ones.
    """

    nvars: int
    instructions: list
    n_term: int
    n_scalar: int
    out: int
    clamp_lo: np.ndarray
    clamp_hi: np.ndarray
    var_regs: dict


def compile_body(f: logic.Formula, nvars: int) -> Program:
    """Flatten a quantifier-free formula over variables 0..nvars-1."""
    if not logic.is_quantifier_free(f):
        raise FormulaError("engine programs must be quantifier-free")
    high = max(logic.free_vars(f), default=-1)
    if high >= nvars:
        raise FormulaError(f"formula uses x{high} but only {nvars} "
                           "variables were declared")
    instructions: list = []
    term_cache: dict = {}
    scalar_cache: dict = {}
    counts = [0, 0]  # term regs, scalar regs
    clamps: list = []

    def term_reg(t: logic.Term) -> int:
        hit = term_cache.get(t)
        if hit is not None:
            return hit
        # children claim registers first; the tuple is built afterwards
        # so dst numbering stays consistent
        if isinstance(t, logic.Var):
            op, a, b, payload = _VAR, -1, -1, t.index
        elif isinstance(t, logic.One):
            op, a, b, payload = _ONE, -1, -1, None
        elif isinstance(t, logic.Adj):
            op, a, b, payload = _ADJ, term_reg(t.arg), -1, None
        elif isinstance(t, logic.Add):
            op, a, b, payload = _ADD, term_reg(t.left), term_reg(t.right), None
        elif isinstance(t, logic.Sub):
            op, a, b, payload = _SUB, term_reg(t.left), term_reg(t.right), None
        elif isinstance(t, logic.Mul):
            op, a, b, payload = _MUL, term_reg(t.left), term_reg(t.right), None
        elif isinstance(t, logic.Scal):
            op, a, b = _SCAL, term_reg(t.arg), -1
            payload = complex(float(t.coeff.re), float(t.coeff.im))
        else:
            raise FormulaError(f"unknown term node {type(t).__name__}")
        dst = counts[0]
        counts[0] += 1
        instructions.append((op, dst, a, b, payload))
        term_cache[t] = dst
        return dst

    def scalar_reg(g: logic.Formula) -> int:
        key = id(g) if isinstance(g, logic.Smooth) else g
        hit = scalar_cache.get(key)
        if hit is not None:
            return hit
        clamp = _NO_CLAMP
        if isinstance(g, logic.Norm2):
            op, a, b, payload = _NORM2, term_reg(g.term), -1, None
        elif isinstance(g, logic.ReTrace):
            op, a, b, payload = _RETRACE, term_reg(g.term), -1, None
        elif isinstance(g, logic.ImTrace):
            op, a, b, payload = _IMTRACE, term_reg(g.term), -1, None
        elif isinstance(g, logic.Const):
            op, a, b, payload = _CONST, -1, -1, float(g.value)
        else:
            lo, hi = logic.value_range(g)
            clamp = (float(lo), float(hi))
            if isinstance(g, logic.Scale):
                op, a, b = _SCALE, scalar_reg(g.body), -1
                payload = float(g.factor)
            elif isinstance(g, logic.Plus):
                op, a, b, payload = (_PLUS, scalar_reg(g.left),
                                     scalar_reg(g.right), None)
            elif isinstance(g, logic.Times):
                op, a, b, payload = (_TIMES, scalar_reg(g.left),
                                     scalar_reg(g.right), None)
            elif isinstance(g, logic.TruncSub):
                op, a, b, payload = (_TMINUS, scalar_reg(g.left),
                                     scalar_reg(g.right), None)
            elif isinstance(g, logic.Max):
                op, a, b, payload = (_MAX, scalar_reg(g.left),
                                     scalar_reg(g.right), None)
            elif isinstance(g, logic.Min):
                op, a, b, payload = (_MIN, scalar_reg(g.left),
                                     scalar_reg(g.right), None)
            elif isinstance(g, logic.Smooth):
                op, a, b, payload = _SMOOTH, scalar_reg(g.child), -1, g.fn
            else:
                raise FormulaError(f"cannot compile node {type(g).__name__}")
        dst = counts[1]
        counts[1] += 1
        instructions.append((op, dst, a, b, payload))
        scalar_cache[key] = dst
        clamps.append(clamp)
        return dst

    out = scalar_reg(f)
    var_regs = {instr[4]: instr[1] for instr in instructions
                if instr[0] == _VAR}
    lo = np.array([c[0] for c in clamps])
    hi = np.array([c[1] for c in clamps])
    return Program(nvars=nvars, instructions=instructions,
                   n_term=counts[0], n_scalar=counts[1], out=out,
                   clamp_lo=lo, clamp_hi=hi, var_regs=var_regs)


class BatchContext:
    """Preallocated registers for one (program, algebra, batch) shape.

    Variables come in as nested lists: variables[v][i] is the
    C-contiguous complex128 stack (batch, d_i, d_i) for variable v on
    block i. The context is reusable but not thread-safe; give each
    worker its own.
    """

    def __init__(self, program: Program, algebra: FiniteTracialAlgebra,
                 batch: int):
        self.program = program
        self.algebra = algebra
        self.batch = batch
        self.weights = [float(w) / d for d, w in
                        zip(algebra.dims, algebra.weights)]
        self.dims = list(algebra.dims)
        self.term = [[np.zeros((batch, d, d), dtype=np.complex128)
                      for d in self.dims] for _ in range(program.n_term)]
        self.scalar = np.zeros((program.n_scalar, batch))
        self.cot_term = [[np.zeros((batch, d, d), dtype=np.complex128)
                          for d in self.dims] for _ in range(program.n_term)]
        self.cot_scalar = np.zeros((program.n_scalar, batch))
        self._tmp_f = np.zeros(batch)
        self._tmp_c = np.zeros(batch, dtype=np.complex128)

    # ---- forward -----------------------------------------------------

    def forward(self, variables) -> np.ndarray:
        prog, nb = self.program, len(self.dims)
        if len(variables) != prog.nvars:
            raise FormulaError(f"expected {prog.nvars} variables, "
                               f"got {len(variables)}")
        term, scalar = self.term, self.scalar
        for op, dst, a, b, payload in prog.instructions:
            if op == _VAR:
                for i in range(nb):
                    term[dst][i][...] = variables[payload][i]
            elif op == _ONE:
                for i, d in enumerate(self.dims):
                    blk = term[dst][i]
                    blk[...] = 0.0
                    idx = np.arange(d)
                    blk[:, idx, idx] = 1.0
            elif op == _ADJ:
                for i in range(nb):
                    np.conjugate(term[a][i].swapaxes(-1, -2),
                                 out=term[dst][i])
            elif op == _ADD:
                for i in range(nb):
                    np.add(term[a][i], term[b][i], out=term[dst][i])
            elif op == _SUB:
                for i in range(nb):
                    np.subtract(term[a][i], term[b][i], out=term[dst][i])
            elif op == _MUL:
                for i in range(nb):
                    batch_mul(term[a][i], term[b][i], term[dst][i])
            elif op == _SCAL:
                for i in range(nb):
                    np.multiply(term[a][i], payload, out=term[dst][i])
            elif op == _NORM2:
                acc = scalar[dst]
                acc[...] = 0.0
                for i in range(nb):
                    batch_frob_sq(term[a][i], self._tmp_f)
                    acc += self.weights[i] * self._tmp_f
                np.sqrt(acc, out=acc)
            elif op == _RETRACE or op == _IMTRACE:
                acc = scalar[dst]
                acc[...] = 0.0
                part = "real" if op == _RETRACE else "imag"
                for i in range(nb):
                    batch_trace(term[a][i], self._tmp_c)
                    acc += self.weights[i] * getattr(self._tmp_c, part)
            elif op == _CONST:
                scalar[dst][...] = payload
            else:
                if op == _SCALE:
                    np.multiply(scalar[a], payload, out=scalar[dst])
                elif op == _PLUS:
                    np.add(scalar[a], scalar[b], out=scalar[dst])
                elif op == _TIMES:
                    np.multiply(scalar[a], scalar[b], out=scalar[dst])
                elif op == _TMINUS:
                    np.subtract(scalar[a], scalar[b], out=scalar[dst])
                    np.maximum(scalar[dst], 0.0, out=scalar[dst])
                elif op == _MAX:
                    np.maximum(scalar[a], scalar[b], out=scalar[dst])
                elif op == _MIN:
                    np.minimum(scalar[a], scalar[b], out=scalar[dst])
                elif op == _SMOOTH:
                    src = scalar[a]
                    scalar[dst][...] = [float(payload(v)) for v in src]
                # connectives clamp into the node's syntactic range,
                # mirroring the reference evaluator
                np.clip(scalar[dst], prog.clamp_lo[dst], prog.clamp_hi[dst],
                        out=scalar[dst])
        return scalar[prog.out].copy()

    # ---- backward ----------------------------------------------------

    def backward(self, seed: Optional[np.ndarray] = None):
        """Cotangents for the most recent forward pass.

        Returns grads[v][i], the ascent direction for variable v on
        block i. Clamps are treated as the identity (they only bind at
        float-noise level on reachable values).
        """
        prog, nb = self.program, len(self.dims)
        term, scalar = self.term, self.scalar
        cterm, cscalar = self.cot_term, self.cot_scalar
        for regs in cterm:
            for blk in regs:
                blk[...] = 0.0
        cscalar[...] = 0.0
        cscalar[prog.out] = 1.0 if seed is None else seed
        grads = [[np.zeros((self.batch, d, d), dtype=np.complex128)
                  for d in self.dims] for _ in range(prog.nvars)]
        for op, dst, a, b, payload in reversed(prog.instructions):
            if op >= _NORM2:
                w = cscalar[dst]
                if op == _NORM2:
                    s = scalar[dst]
                    safe = np.where(s > 1e-30, 0.5 / np.maximum(s, 1e-30), 0.0)
                    for i in range(nb):
                        alpha = (w * safe * self.weights[i]).astype(complex)
                        batch_axpy(alpha, term[a][i], cterm[a][i])
                elif op == _RETRACE:
                    for i in range(nb):
                        alpha = (w * (0.5 * self.weights[i])).astype(complex)
                        batch_add_identity(cterm[a][i], alpha)
                elif op == _IMTRACE:
                    for i in range(nb):
                        alpha = w * (0.5j * self.weights[i])
                        batch_add_identity(cterm[a][i], alpha)
                elif op == _CONST:
                    pass
                elif op == _SCALE:
                    cscalar[a] += payload * w
                elif op == _PLUS:
                    cscalar[a] += w
                    cscalar[b] += w
                elif op == _TIMES:
                    cscalar[a] += w * scalar[b]
                    cscalar[b] += w * scalar[a]
                elif op == _TMINUS:
                    act = scalar[a] >= scalar[b]
                    cscalar[a] += w * act
                    cscalar[b] -= w * act
                elif op == _MAX:
                    act = scalar[a] >= scalar[b]
                    cscalar[a] += w * act
                    cscalar[b] += w * ~act
                elif op == _MIN:
                    act = scalar[a] <= scalar[b]
                    cscalar[a] += w * act
                    cscalar[b] += w * ~act
                elif op == _SMOOTH:
                    src = scalar[a]
                    h = 1e-6 * np.maximum(1.0, np.abs(src))
                    deriv = np.array([(payload(v + hh) - payload(v - hh))
                                      / (2 * hh) for v, hh in zip(src, h)])
                    cscalar[a] += w * deriv
            else:
                if op == _VAR:
                    for i in range(nb):
                        grads[payload][i] += cterm[dst][i]
                elif op == _ONE:
                    pass
                elif op == _ADJ:
                    for i in range(nb):
                        cterm[a][i] += cterm[dst][i].conj().swapaxes(-1, -2)
                elif op == _ADD:
                    for i in range(nb):
                        cterm[a][i] += cterm[dst][i]
                        cterm[b][i] += cterm[dst][i]
                elif op == _SUB:
                    for i in range(nb):
                        cterm[a][i] += cterm[dst][i]
                        cterm[b][i] -= cterm[dst][i]
                elif op == _MUL:
                    # product rule: left gets cot @ right^H,
                    # right gets left^H @ cot
                    for i in range(nb):
                        batch_mul_hb(cterm[dst][i], term[b][i], cterm[a][i],
                                     accum=True)
                        batch_mul_ha(term[a][i], cterm[dst][i], cterm[b][i],
                                     accum=True)
                elif op == _SCAL:
                    for i in range(nb):
                        cterm[a][i] += np.conjugate(payload) * cterm[dst][i]
        return grads

    def forward_backward(self, variables):
        values = self.forward(variables)
        return values, self.backward()


def evaluate_batch(f: logic.Formula, algebra: FiniteTracialAlgebra,
                   variables, nvars: Optional[int] = None) -> np.ndarray:
    """One-shot batched evaluation; see BatchContext for shapes."""
    if nvars is None:
        nvars = len(variables)
    program = compile_body(f, nvars)
    if variables:
        batch = variables[0][0].shape[0]
    else:
        batch = 1
    return BatchContext(program, algebra, batch).forward(variables)
