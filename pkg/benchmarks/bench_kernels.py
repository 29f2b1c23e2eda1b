"""Time the sampler kernels under numba and under the numpy fallback.

The kernel backend is fixed at import, so each backend runs in its own
subprocess with PRINCE_BART_NUMBA set accordingly.

    python benchmarks/bench_kernels.py --n 2000 --trees 200 --sweeps 20
"""

import argparse
import json
import os
import subprocess
import sys
import time


def measure(n: int, trees: int, sweeps: int) -> dict:
    import numpy as np

    from princebart import _jit
    from princebart.bart import BartSampler
    from princebart.bart import kernels as K

    r = np.random.default_rng(0)
    x = r.normal(size=(n, 5))
    y = (r.random(n) < 0.4).astype(np.int8)
    s = BartSampler(x, m=trees)
    s.set_data(y)
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    s.step(rng)  # includes compilation under numba
    first = time.perf_counter() - t0
    t0 = time.perf_counter()
    for _ in range(sweeps):
        s.step(rng)
    sweep = (time.perf_counter() - t0) / sweeps

    tot = np.linspace(-3, 3, n)
    lat = np.zeros(n)
    act = np.arange(n, dtype=np.int64)
    K.draw_latents(tot, 0.0, y, act, lat, rng)
    t0 = time.perf_counter()
    for _ in range(200):
        K.draw_latents(tot, 0.0, y, act, lat, rng)
    latents = (time.perf_counter() - t0) / 200
    return {"backend": _jit.backend_name(), "first_sweep_s": first, "sweep_s": sweep, "latents_s": latents}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--trees", type=int, default=200)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    a = ap.parse_args()
    if a.child:
        print(json.dumps(measure(a.n, a.trees, a.sweeps)))
        return
    rows = []
    for flag in ("1", "0"):
        env = {**os.environ, "PRINCE_BART_NUMBA": flag}
        out = subprocess.run([sys.executable, __file__, "--child", "--n", str(a.n), "--trees", str(a.trees),
                              "--sweeps", str(a.sweeps)], capture_output=True, text=True, env=env, check=True)
        rows.append(json.loads(out.stdout))
    print(f"n={a.n} trees={a.trees} sweeps={a.sweeps}")
    print(f"{'backend':8s} {'first sweep':>12s} {'per sweep':>12s} {'latents':>12s}")
    for r in rows:
        print(f"{r['backend']:8s} {r['first_sweep_s']:12.4f} {r['sweep_s']:12.4f} {r['latents_s']:12.6f}")
    nb, npy = rows
    print(f"speedup per sweep {npy['sweep_s'] / nb['sweep_s']:.1f}x, latents "
          f"{npy['latents_s'] / nb['latents_s']:.1f}x")


if __name__ == "__main__":
    main()
