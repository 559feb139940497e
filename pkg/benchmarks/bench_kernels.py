"""Compiled vs numpy kernels: per-kernel timings and one encoder pass per backend.

    python3 benchmarks/bench_kernels.py [--repeat N] [--skip-encoder]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from shipprompt import kernels

# rows x width of the activations seen when encoding a batch of 64 images
TOKENS = 64 * 65
WIDTH = 32
SCORES = (64 * 2 * 65, 65)

ENCODER_SNIPPET = """
import time, numpy as np
from shipprompt import kernels
from shipprompt.encoders import init_tiny_encoder, encode_visual_batch
enc = init_tiny_encoder(0)
x = np.random.default_rng(0).normal(size=(64, 3, 32, 32))
encode_visual_batch(enc, x)
t = time.perf_counter()
for _ in range(5):
    encode_visual_batch(enc, x)
print(kernels.BACKEND, (time.perf_counter() - t) / 5)
"""


def cases(rng):
    x = rng.normal(size=(TOKENS, WIDTH))
    g, b = rng.normal(size=WIDTH), rng.normal(size=WIDTH)
    s = rng.normal(size=SCORES)
    sig = 1.0 / (1.0 + np.exp(-1.702 * x))
    return {
        "layernorm_forward": lambda k: k.layernorm_forward(x, g, b, 1e-5),
        "layernorm_backward": lambda k: k.layernorm_backward(x, x, np.ones(TOKENS), g),
        "softmax_forward": lambda k: k.softmax_forward(s, 0),
        "softmax_backward": lambda k: k.softmax_backward(s, s),
        "quick_gelu_forward": lambda k: k.quick_gelu_forward(x),
        "quick_gelu_backward": lambda k: k.quick_gelu_backward(x, x, sig),
    }


def bench_kernels(repeat):
    backends = {"python": kernels.using("python")}
    try:
        backends["compiled"] = kernels.using("compiled")
    except ImportError:
        print("compiled extension not built; timing the numpy kernels only")
    rows = []
    for name, call in cases(np.random.default_rng(0)).items():
        times = {b: min(timeit.repeat(lambda: call(k), number=20, repeat=repeat)) / 20
                 for b, k in backends.items()}
        rows.append((name, times))
    print(f"{'kernel':<22}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, times in rows:
        line = f"{name:<22}" + "".join(f"{times[b] * 1e6:>11.1f} us" for b in backends)
        if "compiled" in times:
            line += f"{times['python'] / times['compiled']:>9.2f}x"
        print(line)


def bench_encoder():
    print("\nvisual encoder, batch of 64 images:")
    for backend in ("python", "compiled"):
        env = dict(os.environ, SHIPPROMPT_KERNELS=backend)
        done = subprocess.run([sys.executable, "-c", ENCODER_SNIPPET], env=env, capture_output=True, text=True)
        if done.returncode:
            print(f"  {backend:<9} unavailable")
            continue
        name, seconds = done.stdout.split()
        print(f"  {name:<9} {float(seconds) * 1e3:8.1f} ms")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-encoder", action="store_true")
    args = parser.parse_args(argv)
    bench_kernels(args.repeat)
    if not args.skip_encoder:
        bench_encoder()


if __name__ == "__main__":
    main()
