"""Acceptance suite: every shipped claim at its stated tolerance.

Each criterion prints one PASS/FAIL line (run with -s to stream them); all
checks run at desk scale and the whole module stays well under its runtime
budgets on a laptop-class machine.
"""

import math
import time

from noisefold.dynamics import zeeman_coefficients, zeeman_generator_terms
from noisefold.engine import build_map_family
from noisefold.hamiltonian import NoiseStrengths, stochastic_zeeman, zeeman_cavity_interaction
from noisefold.linalg import TimeGrid, max_abs
from noisefold.noise import GaussianProcessSpec, ThermalBathSpec, sample_ou_ensemble, thermal_state
from noisefold import verify

SEED = 20260808


def report(number, label, results, started):
    elapsed = time.time() - started
    ok = all(r.passed for r in results)
    print(f"ACCEPTANCE {number} [{label}]: {'PASS' if ok else 'FAIL'} "
          f"({elapsed:.1f}s)")
    for r in results:
        print(f"  {r.line()}")
    failed = [r.line() for r in results if not r.passed]
    assert not failed, f"criterion {number} failed: {failed}"


def test_criterion_1_second_order_noninterference():
    started = time.time()
    grid = TimeGrid(dt=0.03, n_steps=60)
    results = verify.run_cancellation(grid, SEED, n_instances=20, n_times=5,
                                      tol=1e-10)
    report(1, "second-order cross term cancels", [results[-1]], started)


def test_criterion_2_y_map_inversion():
    started = time.time()
    grid = TimeGrid(dt=0.025, n_steps=80)
    # strengths keep the assembled map sub-unit-normed: the identity is
    # algebraic, so the residual is pure rounding of the composition chain
    results = verify.run_y_map(grid, SEED, NoiseStrengths(0.15, 0.1),
                               q_values=(0, 1, 2), tol=1e-12)
    report(2, "alternating-map inversion identity", results, started)


def test_criterion_3_third_order_interference():
    started = time.time()
    grid = TimeGrid(dt=0.02, n_steps=150)
    bath = ThermalBathSpec(mode_freqs=(1.0,), couplings=(0.3,), beta=1.0,
                           n_max=3, omega_0=1.0)
    results, _ = verify.run_interference(bath, mean_value=0.8, grid=grid,
                                         norm_tol=1e-3, agree_tol=1e-8)
    report(3, "third-order interference exists, two paths agree", results, started)


def test_criterion_4_generator_equivalence():
    started = time.time()
    grid = TimeGrid(dt=0.025, n_steps=120)
    lam, delta = 0.3, 0.25
    spec = GaussianProcessSpec(sigma=0.5, gamma=1.0, seed=SEED)
    cases = [
        ("resonant-warm", ThermalBathSpec((1.0,), (0.3,), 1.0, 6, 1.0)),
        ("detuned-warm", ThermalBathSpec((1.6,), (0.25,), 0.7, 5, 1.0)),
        ("detuned-cold", ThermalBathSpec((1.3,), (0.35,), math.inf, 4, 1.0)),
    ]
    results = []
    for label, bath in cases:
        coeffs = zeeman_coefficients(bath, spec.kernel, grid)
        coeff_series = sum((lam ** t.order[0]) * (delta ** t.order[1]) * t.series
                           for t in zeeman_generator_terms(coeffs))
        ensemble = sample_ou_ensemble(spec, grid, 2)
        family = build_map_family(zeeman_cavity_interaction(bath),
                                  stochastic_zeeman(ensemble),
                                  thermal_state(bath), grid,
                                  max_order=2, noise_mode="analytic")
        engine_series = (lam ** 2) * family.generator_series(2, 0) \
            + (delta ** 2) * family.generator_series(0, 2)
        diff = max_abs(engine_series - coeff_series)
        results.append(verify.check_below(f"generator-equivalence[{label}]",
                                          diff, 1e-8,
                                          detail="absolute max-norm, full grid"))
    report(4, "worked-example generators match the engine", results, started)


def test_criterion_5_decay_rate_additivity():
    started = time.time()
    grid = TimeGrid(dt=0.025, n_steps=400)   # t in [0, 10/omega_0]
    bath = ThermalBathSpec(mode_freqs=(1.0,), couplings=(0.3,), beta=1.2,
                           n_max=3, omega_0=1.0)
    spec = GaussianProcessSpec(sigma=0.4, gamma=1.0, seed=SEED)
    results, _, _, _ = verify.run_zeeman(bath, spec, grid, lam=0.2, delta=0.2,
                                         coherence_tol=1e-8)
    keep = [r for r in results if r.name in ("decay-rate-additivity",
                                             "coherence-vs-rate-integral")]
    report(5, "decay-rate additivity and coherence decay", keep, started)


def test_criterion_6_oracle_convergence_order():
    started = time.time()
    grid = TimeGrid(dt=0.02, n_steps=150)
    bath = ThermalBathSpec(mode_freqs=(1.0,), couplings=(0.35,), beta=1.2,
                           n_max=3, omega_0=1.0)
    spec = GaussianProcessSpec(sigma=0.4, gamma=1.0, seed=SEED)
    results, meas = verify.run_convergence(
        bath, spec, grid, lam=0.2, delta=0.2, n_realizations=6000,
        mean_offset=0.6, ratio_lo=6.0, ratio_hi=10.0, se_factor=10.0)
    report(6, "halving strengths shrinks the oracle residual ~8x", results, started)


def test_criterion_7_first_order_vanishing():
    started = time.time()
    grid = TimeGrid(dt=0.04, n_steps=50)
    bath = ThermalBathSpec(mode_freqs=(1.0,), couplings=(0.3,), beta=1.0,
                           n_max=1, omega_0=1.0)
    spec = GaussianProcessSpec(sigma=0.4, gamma=1.0, seed=SEED)
    results = verify.run_first_order(bath, spec, grid, n_realizations=2000,
                                     thermal_tol=1e-12)
    report(7, "first-order generators vanish", results, started)


def test_criterion_8_dephasing_quadrature_order():
    started = time.time()
    grid = TimeGrid(dt=0.02, n_steps=100)
    spec = GaussianProcessSpec(sigma=1.0, gamma=2.0, seed=SEED)
    results, meas = verify.run_dephasing_quadrature(spec, grid, ratio_tol=0.15)
    closed_err = verify.check_below(
        "dephasing-closed-form-error", meas["err_coarse"],
        0.5 * grid.dt ** 2 * spec.gamma ** 2 * spec.sigma ** 2,
        detail="O(dt^2) bound")
    report(8, "dephasing coefficient quadrature is second order",
           results + [closed_err], started)
