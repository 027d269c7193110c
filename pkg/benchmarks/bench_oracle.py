"""Benchmark the compiled evolution kernel against the numpy fallback.

Runs the exact-oracle propagation loop on the standard atom/cavity instance
at several joint dimensions and realization counts, prints wall times for
both backends and the max deviation of the chunk means.

    python benchmarks/bench_oracle.py [--threads N]
"""

import argparse
import time

import numpy as np

from noisefold import kernels
from noisefold.hamiltonian import stochastic_zeeman, zeeman_cavity_interaction
from noisefold.linalg import DensityMatrix, TimeGrid, tensor_product
from noisefold.noise import GaussianProcessSpec, ThermalBathSpec, sample_ou_ensemble, thermal_state


def bench_case(n_max, n_real, n_steps, threads):
    bath = ThermalBathSpec(mode_freqs=(1.0,), couplings=(0.35,), beta=1.2,
                           n_max=n_max, omega_0=1.0)
    grid = TimeGrid(dt=0.02, n_steps=n_steps)
    interaction = zeeman_cavity_interaction(bath)
    ensemble = sample_ou_ensemble(GaussianProcessSpec(0.4, 1.0, 99), grid, n_real)
    stochastic = stochastic_zeeman(ensemble)
    sampled = interaction.sampled(grid)
    b_mat = tensor_product(stochastic.base_op, np.eye(bath.env_dim, dtype=complex))
    a_mid = 0.5 * (ensemble.paths[:, :-1] + ensemble.paths[:, 1:])
    rho_s = DensityMatrix(np.full((2, 2), 0.5, dtype=complex))
    rho0 = tensor_product(rho_s.mat, thermal_state(bath).mat)
    args = (sampled.h_se_mid, b_mat, a_mid, rho0, 2, bath.env_dim,
            0.3, 0.2, grid.dt, "none")

    def run(impl):
        if threads <= 1:
            return impl.propagate_reduced_sum(*args)
        from concurrent.futures import ThreadPoolExecutor
        bounds = np.linspace(0, n_real, threads + 1, dtype=int)
        chunk_args = [(sampled.h_se_mid, b_mat, a_mid[b0:b1], rho0, 2,
                       bath.env_dim, 0.3, 0.2, grid.dt, "none")
                      for b0, b1 in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: impl.propagate_reduced_sum(*a),
                                  chunk_args))
        return sum(p[0] for p in parts), max(p[1] for p in parts)

    rows = {}
    for name, impl in (("compiled", kernels.compiled_impl()),
                       ("numpy", kernels.numpy_impl())):
        if impl is None:
            rows[name] = (None, None)
            continue
        run(impl)  # warm-up
        t0 = time.perf_counter()
        out, _ = run(impl)
        rows[name] = (time.perf_counter() - t0, out / n_real)
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--threads", type=int, default=1)
    opts = parser.parse_args()
    print(f"selected backend: {kernels.backend_name()}   threads: {opts.threads}")
    print(f"{'case':<28}{'compiled':>10}{'numpy':>10}{'speedup':>9}{'agree':>12}")
    for n_max, n_real, n_steps in ((1, 8000, 150), (2, 8000, 150),
                                   (3, 4000, 150), (7, 1000, 100)):
        rows = bench_case(n_max, n_real, n_steps, opts.threads)
        tc, mean_c = rows["compiled"]
        tn, mean_n = rows["numpy"]
        label = f"D={2 * (n_max + 1)} R={n_real} n={n_steps}"
        if tc is None:
            print(f"{label:<28}{'n/a':>10}{tn:>9.3f}s      (compiled kernel missing)")
            continue
        agree = float(np.max(np.abs(mean_c - mean_n)))
        print(f"{label:<28}{tc:>9.3f}s{tn:>9.3f}s{tn / tc:>8.2f}x{agree:>12.2e}")


if __name__ == "__main__":
    main()
