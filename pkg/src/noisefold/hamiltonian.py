"""Interaction-picture Hamiltonians: factorized couplings and stochastic terms.

Pauli ladder conventions
------------------------
The default ("paper") convention uses doubled ladder operators,
sigma_pm = sigma_x +- i sigma_y, so sigma_plus |1> = 2 |0> with |0> spin-up.
The usual halved convention is available behind a flag.  Decay-rate
prefactors in the two-level example differ by a factor of 4 between the two,
so convention mismatches raise rather than silently rescale.

hbar = 1 throughout; all frequencies are angular.  The interaction-picture
form of each Hamiltonian is taken as the input; no rotating-frame transform
is performed at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConventionError, DimensionError
from .linalg import JOINT_DIM_CAP, TimeGrid, dag, is_hermitian, max_abs, tensor_product
from .noise import StochasticEnsemble, ThermalBathSpec

_HERM_PROBE_TIMES = (0.0, 0.1, 0.7237, 2.5, 7.91)


@dataclass(frozen=True)
class PauliOps:
    z: np.ndarray
    plus: np.ndarray
    minus: np.ndarray


def pauli_ops(convention: str = "paper") -> PauliOps:
    """Two-level operators in the energy eigenbasis (|0> = spin-up)."""
    z = np.diag([1.0 + 0j, -1.0])
    if convention == "paper":
        plus = np.array([[0.0, 2.0], [0.0, 0.0]], dtype=complex)
    elif convention == "halved":
        plus = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    else:
        raise ConventionError(f"unknown Pauli convention {convention!r}")
    return PauliOps(z=z, plus=plus, minus=dag(plus))


def destroy(n_levels: int) -> np.ndarray:
    """Truncated bosonic annihilation operator on n_levels Fock states."""
    a = np.zeros((n_levels, n_levels), dtype=complex)
    m = np.arange(1, n_levels)
    a[m - 1, m] = np.sqrt(m)
    return a


def mode_destroy(bath: ThermalBathSpec, k: int) -> np.ndarray:
    """Annihilation operator of mode k embedded in the full cavity space."""
    if not 0 <= k < bath.n_modes:
        raise IndexError(f"mode index {k} out of range")
    op = np.eye(1, dtype=complex)
    for kk in range(bath.n_modes):
        factor = destroy(bath.levels) if kk == k else np.eye(bath.levels, dtype=complex)
        op = np.kron(op, factor)
    return op


def _as_time_fn(op):
    if callable(op):
        return op
    arr = np.asarray(op, dtype=complex)
    return lambda t: arr


@dataclass(frozen=True)
class SampledInteraction:
    """Grid-evaluated factor and Hamiltonian arrays (read-only caches)."""

    grid: TimeGrid
    sys_factors: np.ndarray    # (n_factors, n_points, d, d)
    env_factors: np.ndarray    # (n_factors, n_points, e, e)
    h_se: np.ndarray           # (n_points, D, D)
    h_se_mid: np.ndarray       # (n_steps, D, D), evaluated at panel midpoints


class FactorizedInteraction:
    """H_SE(t) = sum_n S_n(t) (x) E_n(t) as operator-valued time functions."""

    def __init__(self, factors, sys_dim: int, env_dim: int,
                 cap: int = JOINT_DIM_CAP, check_times=_HERM_PROBE_TIMES):
        if sys_dim * env_dim > cap:
            raise CapacityError(
                f"joint dimension {sys_dim * env_dim} exceeds cap {cap}")
        self.sys_dim = sys_dim
        self.env_dim = env_dim
        self._sys_fns = tuple(_as_time_fn(s) for s, _ in factors)
        self._env_fns = tuple(_as_time_fn(e) for _, e in factors)
        self._cache: dict = {}
        for t in check_times:
            h = self.h_se(t)
            if not is_hermitian(h, tol=1e-12):
                raise ValueError(f"H_SE({t}) is not Hermitian")

    @property
    def n_factors(self) -> int:
        return len(self._sys_fns)

    @property
    def joint_dim(self) -> int:
        return self.sys_dim * self.env_dim

    def sys_factor(self, n: int):
        return self._sys_fns[n]

    def env_factor(self, n: int):
        return self._env_fns[n]

    def h_se(self, t: float) -> np.ndarray:
        h = np.zeros((self.joint_dim, self.joint_dim), dtype=complex)
        for s_fn, e_fn in zip(self._sys_fns, self._env_fns):
            s = np.asarray(s_fn(t), dtype=complex)
            e = np.asarray(e_fn(t), dtype=complex)
            if s.shape != (self.sys_dim,) * 2 or e.shape != (self.env_dim,) * 2:
                raise DimensionError("factor with wrong dimensions")
            h += tensor_product(s, e, cap=self.joint_dim)
        return h

    def sampled(self, grid: TimeGrid) -> SampledInteraction:
        """Evaluate all factors on the grid once; reused by every integral."""
        key = (grid.dt, grid.n_steps)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        n_pts, d, e = grid.n_points, self.sys_dim, self.env_dim
        sys_arr = np.empty((self.n_factors, n_pts, d, d), dtype=complex)
        env_arr = np.empty((self.n_factors, n_pts, e, e), dtype=complex)
        for n in range(self.n_factors):
            s_fn, e_fn = self._sys_fns[n], self._env_fns[n]
            for i, t in enumerate(grid.times):
                sys_arr[n, i] = s_fn(t)
                env_arr[n, i] = e_fn(t)
        h = np.einsum("fiab,ficd->iacbd", sys_arr, env_arr).reshape(n_pts, d * e, d * e)
        h_mid = np.empty((grid.n_steps, d * e, d * e), dtype=complex)
        for i, t in enumerate(grid.midpoints):
            h_mid[i] = self.h_se(t)
        out = SampledInteraction(grid=grid, sys_factors=sys_arr, env_factors=env_arr,
                                 h_se=h, h_se_mid=h_mid)
        self._cache[key] = out
        return out


@dataclass(frozen=True)
class NoiseStrengths:
    """Expansion strengths: lam for system-bath, delta for the stochastic term."""

    lam: float
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and np.isfinite(self.delta)):
            raise ValueError("noise strengths must be finite")
        if self.lam < 0 or self.delta < 0:
            raise ValueError("noise strengths must be >= 0")


class StochasticSystemHamiltonian:
    """H_S^(j)(t_i) = a^(j)(t_i) * base_op with a real coefficient ensemble."""

    def __init__(self, base_op: np.ndarray, ensemble: StochasticEnsemble):
        base_op = np.asarray(base_op, dtype=complex)
        if base_op.ndim != 2 or base_op.shape[0] != base_op.shape[1]:
            raise DimensionError("base_op must be square")
        if not is_hermitian(base_op, tol=1e-13):
            raise ValueError("base_op must be Hermitian (real coefficients)")
        self.base_op = base_op
        self.ensemble = ensemble

    @property
    def sys_dim(self) -> int:
        return self.base_op.shape[0]

    def coefficient(self, j: int, i: int) -> float:
        return float(self.ensemble.paths[j, i])

    def h_at(self, j: int, i: int) -> np.ndarray:
        return self.ensemble.paths[j, i] * self.base_op

    def mean_h(self, i: int, empirical: bool = False) -> np.ndarray:
        path = self.ensemble.empirical_mean() if empirical else self.ensemble.mean_path
        return path[i] * self.base_op


def zeeman_cavity_interaction(bath: ThermalBathSpec,
                              convention: str = "paper") -> FactorizedInteraction:
    """Rotating-wave atom-cavity coupling in the interaction picture.

    Two factors: S_1 = sigma_plus with E_1(t) = sum_k g_k e^{-i (w_k - w_0) t} b_k,
    and S_2 = sigma_minus with E_2(t) = E_1(t)^dag entry-wise.  Couplings are
    taken real (complex g_k would need conjugating in the adjoint factor).
    """
    pauli = pauli_ops(convention)
    ops = [mode_destroy(bath, k) for k in range(bath.n_modes)]
    gs = np.asarray(bath.couplings)
    dets = bath.detunings

    def e1(t):
        out = np.zeros((bath.env_dim, bath.env_dim), dtype=complex)
        for g, w, b in zip(gs, dets, ops):
            out += g * np.exp(-1j * w * t) * b
        return out

    def e2(t):
        return dag(e1(t))

    return FactorizedInteraction(
        factors=[(pauli.plus, e1), (pauli.minus, e2)],
        sys_dim=2, env_dim=bath.env_dim)


def stochastic_zeeman(ensemble: StochasticEnsemble) -> StochasticSystemHamiltonian:
    """Fluctuating level splitting: H_S^(j)(t) = a^(j)(t) sigma_z / 2."""
    sz = np.diag([1.0 + 0j, -1.0])
    return StochasticSystemHamiltonian(base_op=sz / 2.0, ensemble=ensemble)


def hermiticity_defect(op: np.ndarray) -> float:
    return max_abs(op - dag(op))
