"""Compare the numba and numpy kernels on world enumeration and Monte Carlo moments.

    python3 benchmarks/bench_kernels.py [--states-log2 20] [--samples 1000000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from harmcalc import kernels
from harmcalc.scm import Intervention, ScmBuilder


def chain_model(states_log2):
    """Binary exogenous inputs feeding a chain of parity mechanisms."""
    b = ScmBuilder()
    for i in range(states_log2):
        b.exogenous(f"u{i}", [0, 1], [0.5, 0.5])
    b.variable("A", [0, 1], fn=lambda: 0)
    prev = "A"
    per = max(1, states_log2 // 4)
    for k in range(4):
        exo = [f"u{i}" for i in range(k * per, min(states_log2, (k + 1) * per))] or ["u0"]
        b.variable(f"Y{k}", [0, 1], parents=[prev], exo=exo, fn=lambda p, *us: int((p + sum(us)) % 2 == 1))
        prev = f"Y{k}"
    return b.build(action="A", outcomes=[f"Y{k}" for k in range(4)])


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--states-log2", type=int, default=20)
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    scm = chain_model(args.states_log2)
    noise = scm.noise_states()
    c = scm._compiled
    wargs = (noise, scm._clamp_vector(Intervention.of({"A": 1})), c["order"], c["n_inputs"], c["kind"],
             c["src"], c["stride"], c["offsets"], c["flat"])
    rng = np.random.default_rng(0)
    eps = rng.standard_normal((args.samples, 3))
    d = np.array([0.4, -1.2, 0.7])
    margs = (eps, d, 0.3, 1.0)

    rows = [("evaluate_worlds", f"{noise.shape[0]} states", kernels.evaluate_worlds_numpy, kernels.evaluate_worlds_numba, wargs),
            ("mc_harm_moments", f"{args.samples} draws", kernels.mc_harm_moments_numpy, kernels.mc_harm_moments_numba, margs)]
    print(f"{'kernel':18s} {'size':>18s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s}")
    for name, size, np_fn, nb_fn, fargs in rows:
        t_np = best_of(lambda: np_fn(*fargs), args.repeat)
        if nb_fn is None:
            print(f"{name:18s} {size:>18s} {t_np:10.4f} {'n/a':>10s} {'n/a':>8s}")
            continue
        nb_fn(*fargs)  # compile outside the timing
        t_nb = best_of(lambda: nb_fn(*fargs), args.repeat)
        same = np.allclose(np.asarray(np_fn(*fargs), dtype=float), np.asarray(nb_fn(*fargs), dtype=float), rtol=1e-12)
        print(f"{name:18s} {size:>18s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.2f}  results equal: {same}")


if __name__ == "__main__":
    main()
