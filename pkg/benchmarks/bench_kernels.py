"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--megabytes N] [--pcap FILE]

Micro-benchmarks time each kernel on both backends; the end-to-end run
processes one synthetic capture per backend in a subprocess (the backend is
fixed at import time).
"""
import argparse
import os
import random
import subprocess
import sys
import tempfile
import time
from array import array
from pathlib import Path

from tlsfeat import kernels
from tlsfeat.synth import generate_mixed_pcap, tcp_frame


def best_of(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def micro(backend):
    k = kernels.load_backend(backend)
    rng = random.Random(0)
    frames = [tcp_frame("10.0.0.1", "10.0.0.2", 1, 443, i, 0, 0x18, rng.randbytes(rng.randrange(1400)))
              for i in range(20000)]
    payload = rng.randbytes(8 << 20)
    values = [rng.random() * 1500 for _ in range(200000)]
    hist = array("Q", bytes(2048))
    return {
        "decode_frame (20k frames)": best_of(lambda: [k.decode_frame(f, 1) for f in frames]),
        "update_histogram (8 MiB)": best_of(lambda: k.update_histogram(hist, payload)),
        "describe (200k values)": best_of(lambda: k.describe(values)),
    }


def end_to_end(pcap, backend):
    env = dict(os.environ)
    if backend == "python":
        env["TLSFEAT_PURE"] = "1"
    else:
        env.pop("TLSFEAT_PURE", None)
    code = ("import sys,time; from tlsfeat.report import analyze_file; t=time.perf_counter(); "
            "analyze_file(sys.argv[1]); print(time.perf_counter()-t)")
    out = subprocess.run([sys.executable, "-c", code, str(pcap)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--megabytes", type=int, default=50)
    ap.add_argument("--pcap", type=Path)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the python backend is available")
    results = {b: micro(b) for b in backends}
    names = list(next(iter(results.values())))
    print(f"{'kernel':28}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for n in names:
        row = [results[b][n] for b in backends]
        speed = f"{row[-1] / row[0]:10.1f}x" if len(row) == 2 else ""
        print(f"{n:28}" + "".join(f"{t:11.4f}s" for t in row) + speed)
    with tempfile.TemporaryDirectory() as tmp:
        pcap = args.pcap
        if pcap is None:
            pcap = Path(tmp) / "bench.pcap"
            generate_mixed_pcap(pcap, args.megabytes * 1024 * 1024)
        size = pcap.stat().st_size / 1e6
        print(f"\nend to end on {size:.0f} MB")
        for b in backends:
            t = end_to_end(pcap, b)
            print(f"{b:10} {t:8.2f}s {size / t:8.1f} MB/s")


if __name__ == "__main__":
    main()
