"""Compare the compiled and NumPy kernel backends on headline-sized work.

    python benchmarks/bench_kernels.py [--blocks 120] [--steps 1600] [--repeat 3]

Prints the best-of-N wall time per kernel and backend and the max
difference between backends.
"""
import argparse
import time

import numpy as np

from nmr_probe import kernels
from nmr_probe.dynamics import SystemSpec
from nmr_probe.krotov import EnsembleSpec, flattop_shape


def timed(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(backend, blocks, steps, repeat):
    k = kernels.load(backend)
    s = SystemSpec()
    ens = EnsembleSpec(values=tuple(np.linspace(0.4, 1.2, blocks // 2)), n_steps=steps)
    baths = ens.block_baths()
    amp = np.array([b.equal_time_correlation for b in baths])
    decay = np.array([b.decay for b in baths])
    dt = ens.final_time / steps
    c = 0.5 * flattop_shape(steps)
    rho0 = np.broadcast_to(s.rho0, (len(baths), 2, 2))
    args = (s.drift, s.hc, s.coupling)
    res = {}
    res["obar_rk4"] = timed(lambda: k.obar_rk4(*args, amp, decay, c, dt), repeat)
    obar = res["obar_rk4"][1]
    res["rho_forward"] = timed(lambda: k.rho_forward(*args, obar, c, rho0, dt), repeat)
    rho = res["rho_forward"][1]
    chi_t = rho[:, -1] - 0.5 * np.eye(2)
    res["costate_backward"] = timed(lambda: k.costate_backward(*args, obar, c, chi_t, dt), repeat)
    chi = res["costate_backward"][1]
    res["sequential_update"] = timed(
        lambda: k.sequential_update(*args, obar, c, chi, rho0, flattop_shape(steps), 100.0, dt), repeat)
    return res


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--blocks", type=int, default=120)
    p.add_argument("--steps", type=int, default=1600)
    p.add_argument("--repeat", type=int, default=3)
    a = p.parse_args()
    backends = kernels.available()
    results = {b: run(b, a.blocks, a.steps, a.repeat) for b in backends}
    print(f"blocks={a.blocks} steps={a.steps} best of {a.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + ("    speedup  max|diff|" if len(backends) == 2 else ""))
    for name in results[backends[0]]:
        row = f"{name:<20}" + "".join(f"{results[b][name][0]:>11.4f}s" for b in backends)
        if len(backends) == 2:
            (tc, oc), (tp, op) = results["compiled"][name], results["python"][name]
            if isinstance(oc, tuple):
                oc, op = oc[1], op[1]
            row += f"{tp / tc:>10.1f}x  {np.max(np.abs(oc - op)):.1e}"
        print(row)


if __name__ == "__main__":
    main()
