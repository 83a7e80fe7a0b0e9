"""Benchmark: compiled element-matrix kernels vs the numpy fallback.

Assembles the Maxwell operators and the wall elasticity stiffness for a
refined pillbox with each backend and reports wall times.

    python3 benchmarks/bench_kernels.py [--cross N] [--radial N] [--axial N]
                                        [--degree P] [--repeat K]
"""

import argparse
import time

import numpy as np

from cavitiga import _kernels, assembly
from cavitiga.elasticity import wall_space
from cavitiga.geometry import make_pillbox, refine_model
from cavitiga.spaces import build_hcurl_space
from cavitiga.geometry import PEC_WALL


def time_backend(backend, model, repeat):
    hc = build_hcurl_space(model.cavity, pec_tags=(PEC_WALL,))
    ws = wall_space(model)
    saved = assembly._kernels.active
    times = {"maxwell": [], "elasticity": []}
    try:
        assembly._kernels.active = backend
        for _ in range(repeat):
            t0 = time.perf_counter()
            K, M = assembly.assemble_maxwell(hc)
            times["maxwell"].append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            E = assembly.assemble_elasticity(ws, 3.8e10, 1.2e11)
            times["elasticity"].append(time.perf_counter() - t0)
    finally:
        assembly._kernels.active = saved
    return {k: min(v) for k, v in times.items()}, hc.n_dofs, ws.n_dofs, K


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cross", type=int, default=3)
    ap.add_argument("--radial", type=int, default=3)
    ap.add_argument("--axial", type=int, default=1)
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    model = refine_model(
        make_pillbox(0.035, 0.1, 0.003), args.degree,
        {"cross": args.cross, "radial": args.radial, "axial": args.axial})

    backends = [("fallback", _kernels.fallback)]
    if _kernels.compiled is not None:
        backends.append(("compiled", _kernels.compiled))
    else:
        print("note: compiled extension unavailable, timing fallback only")

    results = {}
    for name, backend in backends:
        times, n_hcurl, n_el, K = time_backend(backend, model, args.repeat)
        results[name] = times
        print("%-9s  maxwell %8.3f s   elasticity %8.3f s   "
              "(hcurl dofs %d, elastic dofs %d, nnz %d)"
              % (name, times["maxwell"], times["elasticity"],
                 n_hcurl, n_el, K.nnz))

    if "compiled" in results:
        for key in ("maxwell", "elasticity"):
            speedup = results["fallback"][key] / results["compiled"][key]
            print("speedup %-11s %.2fx" % (key + ":", speedup))


if __name__ == "__main__":
    main()
