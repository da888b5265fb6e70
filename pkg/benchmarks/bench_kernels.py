"""Time the compiled and pure-Python kernel backends on network-sized tensors.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each row reports the best of ``--repeat`` timings per backend and the
speedup of the compiled core.  Outputs are checked for bitwise agreement
before timing.
"""

import argparse
import json
import platform
import timeit

import numpy as np

from pcbnet import kernels as K

# (label, input shape N,C,D,H,W, output channels)
CASES = [
    ("conv1 32x24 D10", (8, 1, 10, 24, 32), 32),
    ("conv2 32x24 D10", (8, 32, 10, 24, 32), 32),
    ("conv3 16x12 D5", (8, 32, 5, 12, 16), 64),
    ("conv1 80x60 D10", (2, 1, 10, 60, 80), 32),
]


def workloads(rng):
    for label, shape, k in CASES:
        x = rng.standard_normal(shape).astype(np.float32)
        p = K.ConvParams(rng.standard_normal((k, shape[1], 3, 3, 3)).astype(np.float32) * 0.1,
                         np.zeros(k, np.float32))
        out = K.conv3d_forward(x, p)
        g = rng.standard_normal(out.shape).astype(np.float32)
        pool_in = out if all(s % 2 == 0 for s in out.shape[2:]) else out[:, :, : out.shape[2] // 2 * 2]
        pool_in = np.ascontiguousarray(pool_in)
        pooled, idx = K.maxpool3d_forward(pool_in)
        gp = rng.standard_normal(pooled.shape).astype(np.float32)
        yield f"{label} conv forward", lambda x=x, p=p: K.conv3d_forward(x, p)
        yield f"{label} conv backward", lambda x=x, p=p, g=g: K.conv3d_backward(x, p, g)
        yield f"{label} maxpool forward", lambda a=pool_in: K.maxpool3d_forward(a)
        yield f"{label} maxpool backward", lambda idx=idx, gp=gp: K.maxpool3d_backward(idx, gp)


def _flatten(result):
    if isinstance(result, tuple):
        return [a for r in result for a in _flatten(r)]
    return [np.asarray(result)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the rows as JSON")
    args = ap.parse_args(argv)

    backends = K.available_backends()
    if "compiled" not in backends:
        print("compiled core not built; only the python backend is available")
    rows = []
    for label, fn in workloads(np.random.default_rng(0)):
        times, outputs = {}, {}
        for name in backends:
            K.use_backend(name)
            outputs[name] = _flatten(fn())
            times[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        agree = all(
            all(np.array_equal(a, b) for a, b in zip(outputs[backends[0]], outputs[n])) for n in backends[1:]
        )
        rows.append({"case": label, **{f"{n}_s": t for n, t in times.items()}, "bitwise_equal": agree})
    K.use_backend("auto")

    head = f"{'case':<40}" + "".join(f"{n + ' (ms)':>16}" for n in backends)
    if len(backends) > 1:
        head += f"{'speedup':>10}"
    print(f"numpy {np.__version__}, {platform.machine()}, best of {args.repeat}")
    print(head)
    for r in rows:
        line = f"{r['case']:<40}" + "".join(f"{r[n + '_s'] * 1e3:>16.2f}" for n in backends)
        if len(backends) > 1:
            line += f"{r['python_s'] / r['compiled_s']:>9.2f}x"
        if not r["bitwise_equal"]:
            line += "  MISMATCH"
        print(line)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
