"""Timing comparison: compiled batch kernels vs the numpy fallback.

Runs each kernel on both implementations across a spread of batch and
block shapes, then times a full optimizer-style forward/backward pass
through the engine in a subprocess with SYNCGAMES_PURE toggled, since
the engine binds its kernels at import time.

    python3 benchmarks/bench_kernels.py [--repeats 200] [--quick]
"""
import argparse
import json
import subprocess
import sys
import time

import numpy as np

from syncgames._kernels import _core, numpy_impl


def _stack(rng, batch, d):
    return np.ascontiguousarray(rng.standard_normal((batch, d, d))
                                + 1j * rng.standard_normal((batch, d, d)))


def _time(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(shapes, repeats):
    rng = np.random.default_rng(7)
    rows = []
    for batch, d in shapes:
        a, b = _stack(rng, batch, d), _stack(rng, batch, d)
        out = np.zeros_like(a)
        sf = np.zeros(batch)
        sc = np.zeros(batch, dtype=np.complex128)
        alpha = rng.standard_normal(batch) + 1j * rng.standard_normal(batch)
        cases = [
            ("batch_mul", lambda m: m.batch_mul(a, b, out)),
            ("batch_mul_ha", lambda m: m.batch_mul_ha(a, b, out)),
            ("batch_mul_hb", lambda m: m.batch_mul_hb(a, b, out)),
            ("batch_axpy", lambda m: m.batch_axpy(alpha, a, out)),
            ("batch_frob_sq", lambda m: m.batch_frob_sq(a, sf)),
            ("batch_trace", lambda m: m.batch_trace(a, sc)),
            ("batch_add_identity", lambda m: m.batch_add_identity(out, alpha)),
        ]
        for name, call in cases:
            t_core = _time(lambda: call(_core), repeats)
            t_np = _time(lambda: call(numpy_impl), repeats)
            rows.append((name, batch, d, t_np * 1e6, t_core * 1e6,
                         t_np / t_core))
    return rows


_ENGINE_SNIPPET = """
import json, time
import numpy as np
from syncgames import kernel_backend
from syncgames.compiler import compile_game_sentence
from syncgames.engine import BatchContext, compile_body
from syncgames.games import corpus_game
from syncgames.logic import peel_sup
from syncgames.algebra import make_algebra, random_contraction

game = corpus_game("clique-coloring")
variables, body = peel_sup(compile_game_sentence(game))
program = compile_body(body, len(variables))
algebra = make_algebra([(4, 1)])
batch = {batch}
rng = np.random.default_rng(11)
stacks = []
for _ in range(len(variables)):
    elems = [random_contraction(algebra, rng) for _ in range(batch)]
    stacks.append([np.ascontiguousarray(
        np.stack([e.blocks[i] for e in elems])) for i in range(1)])
ctx = BatchContext(program, algebra, batch)
ctx.forward(stacks); ctx.backward()  # warm up
t0 = time.perf_counter()
for _ in range({repeats}):
    ctx.forward(stacks)
    ctx.backward()
dt = (time.perf_counter() - t0) / {repeats}
print(json.dumps({{"backend": kernel_backend(), "seconds": dt}}))
"""


def bench_engine(batch, repeats):
    out = {}
    for pure in ("0", "1"):
        proc = subprocess.run(
            [sys.executable, "-c",
             _ENGINE_SNIPPET.format(batch=batch, repeats=repeats)],
            capture_output=True, text=True, check=True,
            env={"SYNCGAMES_PURE": pure, "PATH": "/usr/bin:/bin"})
        got = json.loads(proc.stdout.strip().splitlines()[-1])
        out[got["backend"]] = got["seconds"]
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--quick", action="store_true",
                    help="fewer shapes and repeats")
    args = ap.parse_args()

    shapes = [(8, 2), (64, 2), (512, 2), (64, 8), (256, 8), (64, 32)]
    repeats = args.repeats
    if args.quick:
        shapes = [(64, 2), (256, 8)]
        repeats = min(repeats, 50)

    print(f"{'kernel':<20} {'batch':>6} {'dim':>4} "
          f"{'numpy us':>10} {'compiled us':>12} {'speedup':>8}")
    for name, batch, d, t_np, t_core, speed in bench_kernels(shapes, repeats):
        print(f"{name:<20} {batch:>6} {d:>4} "
              f"{t_np:>10.2f} {t_core:>12.2f} {speed:>7.2f}x")

    engine = bench_engine(batch=256, repeats=max(10, repeats // 10))
    if set(engine) == {"compiled", "numpy"}:
        speed = engine["numpy"] / engine["compiled"]
        print(f"\n{'engine fwd+bwd':<20} {256:>6} {4:>4} "
              f"{engine['numpy'] * 1e6:>10.2f} "
              f"{engine['compiled'] * 1e6:>12.2f} {speed:>7.2f}x")
    else:
        print("\nengine comparison skipped: compiled extension not built "
              f"(saw backends {sorted(engine)})")


if __name__ == "__main__":
    main()
