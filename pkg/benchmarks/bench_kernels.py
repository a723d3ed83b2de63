"""Compare numpy and compiled kernel timings.

Runs each hot kernel on both backends at a few sizes and prints the median
wall time plus the speedup of the compiled path. Usage:

    python3 benchmarks/bench_kernels.py [--repeats 9] [--batch 256]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from demoret.nn import backend


def median_time(fn, repeats: int) -> float:
    fn()  # warmup
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_case(name: str, make_fn, repeats: int) -> dict:
    row = {"kernel": name}
    for backend_name in ("py", "cy"):
        try:
            mod = backend.get_kernels(backend_name)
        except ImportError:
            row[backend_name] = None
            continue
        row[backend_name] = median_time(make_fn(mod), repeats)
    if row.get("py") and row.get("cy"):
        row["speedup"] = row["py"] / row["cy"]
    return row


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=9)
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--dim", type=int, default=512)
    ap.add_argument("--hidden", type=int, default=1024)
    ap.add_argument("--embed", type=int, default=512)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    b, d, h, e = args.batch, args.dim, args.hidden, args.embed
    x = rng.standard_normal((b, d))
    w1 = rng.standard_normal((h, d)) * 0.05
    b1 = rng.standard_normal(h) * 0.05
    w2 = rng.standard_normal((h, h)) * 0.05
    b2 = rng.standard_normal(h) * 0.05
    w3 = rng.standard_normal((e, h)) * 0.05
    b3 = rng.standard_normal(e) * 0.05
    _, z1, z2 = backend.get_kernels("py").mlp_forward_batch(
        x, w1, b1, w2, b2, w3, b3, 0)
    dy = rng.standard_normal((b, e))

    n_params = w1.size + b1.size + w2.size + b2.size + w3.size + b3.size
    p = rng.standard_normal(n_params)
    g = rng.standard_normal(n_params)
    m = np.zeros(n_params)
    v = np.zeros(n_params)

    anchor = rng.standard_normal(e)
    pos = rng.standard_normal((40, e))
    neg = rng.standard_normal((100, e))

    cases = [
        ("mlp_forward_batch", lambda mod: lambda: mod.mlp_forward_batch(
            x, w1, b1, w2, b2, w3, b3, 0)),
        ("mlp_backward_batch", lambda mod: lambda: mod.mlp_backward_batch(
            x, z1, z2, w1, w2, w3, dy, 0)),
        ("adamw_update", lambda mod: lambda: mod.adamw_update(
            p.copy(), g, m.copy(), v.copy(), 1, 1e-4, 0.01, 0.9, 0.98, 1e-8)),
        ("contrastive_loss_grad", lambda mod: lambda: mod.contrastive_loss_grad(
            anchor, pos, neg, 0.07, True)),
    ]

    print(f"batch={b} dim={d} hidden={h} embed={e} repeats={args.repeats}")
    header = f"{'kernel':<24}{'py (ms)':>12}{'cy (ms)':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, make_fn in cases:
        row = bench_case(name, make_fn, args.repeats)
        py_ms = f"{row['py'] * 1e3:.3f}" if row.get("py") else "n/a"
        cy_ms = f"{row['cy'] * 1e3:.3f}" if row.get("cy") else "n/a"
        speed = f"{row['speedup']:.2f}x" if "speedup" in row else "n/a"
        print(f"{name:<24}{py_ms:>12}{cy_ms:>12}{speed:>10}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
