"""Classical noise processes and quantum bath states.

The classical side samples stationary Ornstein-Uhlenbeck ensembles with the
exact discrete recursion (no discretization bias in the node marginals) and
keeps the analytic mean/kernel next to the sampled paths, so downstream code
can choose between empirical averaging and the analytic statistics.

The quantum side builds truncated-Fock thermal cavity states and two-time bath
correlation functions for factorized interactions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError
from .linalg import JOINT_DIM_CAP, DensityMatrix, TimeGrid


@dataclass(frozen=True)
class GaussianProcessSpec:
    """Stationary zero-mean Gaussian process with exponential autocorrelation.

    kernel: K(t, t') = sigma^2 exp(-gamma |t - t'|).
    """

    sigma: float
    gamma: float
    seed: int

    def __post_init__(self):
        if self.sigma < 0 or not np.isfinite(self.sigma):
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.gamma <= 0 or not np.isfinite(self.gamma):
            raise ValueError(f"gamma must be > 0, got {self.gamma}")

    def kernel(self, t, tp):
        return self.sigma ** 2 * np.exp(-self.gamma * np.abs(np.asarray(t) - np.asarray(tp)))

    def kernel_matrix(self, grid: TimeGrid) -> np.ndarray:
        t = grid.times
        return self.kernel(t[:, None], t[None, :])


@dataclass(frozen=True)
class StochasticEnsemble:
    """R sampled coefficient paths plus their analytic statistics.

    `paths` has shape (R, n_points).  `mean_path` is the analytic mean on the
    grid (all zeros for OU); `kernel` is the analytic centered covariance
    K(t, t') or None when only sampled paths are available.
    """

    grid: TimeGrid
    paths: np.ndarray
    mean_path: np.ndarray
    kernel: object = None
    seed: int | None = None

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=float)
        if paths.ndim != 2 or paths.shape[1] != self.grid.n_points:
            raise ValueError(f"paths shape {paths.shape} does not match grid")
        if paths.shape[0] < 1:
            raise ValueError("empty ensemble: need at least one realization")
        if not np.all(np.isfinite(paths)):
            raise ValueError("ensemble path with non-finite values")
        object.__setattr__(self, "paths", paths)
        mean_path = np.asarray(self.mean_path, dtype=float)
        if mean_path.shape != (self.grid.n_points,):
            raise ValueError("mean_path does not match grid")
        object.__setattr__(self, "mean_path", mean_path)

    @property
    def n_realizations(self) -> int:
        return self.paths.shape[0]

    def empirical_mean(self) -> np.ndarray:
        return self.paths.mean(axis=0)

    def empirical_second_moment(self) -> np.ndarray:
        """(n_points, n_points) matrix of mean a(t_i) a(t_j) over realizations."""
        return self.paths.T @ self.paths / self.n_realizations

    def kernel_matrix(self) -> np.ndarray:
        if self.kernel is None:
            raise ValueError("ensemble has no analytic kernel")
        t = self.grid.times
        return np.asarray(self.kernel(t[:, None], t[None, :]), dtype=float)


def sample_ou_ensemble(spec: GaussianProcessSpec, grid: TimeGrid, n_realizations: int,
                       antithetic: bool = False,
                       mean_offset: float = 0.0) -> StochasticEnsemble:
    """Sample R stationary OU paths with the exact node recursion.

    a_{i+1} = a_i e^{-gamma dt} + sigma sqrt(1 - e^{-2 gamma dt}) xi_i, with
    a_0 ~ N(0, sigma^2).  Realization j draws from an independent substream
    derived from (seed, j), so results do not depend on batching or order.
    With `antithetic`, the zero-mean parts come in sign-flipped pairs
    (2j, 2j+1), which leaves the mean path exact and all even moments
    untouched.  `mean_offset` shifts every path by a constant, giving a
    nonzero-mean process with the same centered kernel.
    """
    if n_realizations < 1:
        raise ValueError("empty ensemble: n_realizations must be >= 1")
    if antithetic and n_realizations % 2:
        raise ValueError("antithetic sampling needs an even number of realizations")
    n_pts = grid.n_points
    n_draw = n_realizations // 2 if antithetic else n_realizations
    xi = np.empty((n_draw, n_pts))
    for j in range(n_draw):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(j,)))
        xi[j] = rng.standard_normal(n_pts)
    decay = math.exp(-spec.gamma * grid.dt)
    innov = spec.sigma * math.sqrt(max(0.0, 1.0 - decay * decay))
    base = np.empty_like(xi)
    base[:, 0] = spec.sigma * xi[:, 0]
    for i in range(1, n_pts):
        base[:, i] = base[:, i - 1] * decay + innov * xi[:, i]
    if antithetic:
        paths = np.empty((n_realizations, n_pts))
        paths[0::2] = base
        paths[1::2] = -base
    else:
        paths = base
    return StochasticEnsemble(grid=grid, paths=paths + mean_offset,
                              mean_path=np.full(n_pts, mean_offset),
                              kernel=spec.kernel, seed=spec.seed)


def deterministic_ensemble(grid: TimeGrid, values) -> StochasticEnsemble:
    """Single deterministic path (R=1); its analytic mean is the path itself."""
    values = np.broadcast_to(np.asarray(values, dtype=float), (grid.n_points,)).copy()
    return StochasticEnsemble(grid=grid, paths=values[None, :], mean_path=values,
                              kernel=lambda t, tp: np.zeros(np.broadcast(t, tp).shape))


def path_ensemble(grid: TimeGrid, paths, mean_path=None) -> StochasticEnsemble:
    """Wrap explicit sampled paths; mean defaults to the empirical mean."""
    paths = np.asarray(paths, dtype=float)
    if mean_path is None:
        mean_path = paths.mean(axis=0)
    return StochasticEnsemble(grid=grid, paths=paths, mean_path=mean_path)


@dataclass(frozen=True)
class ThermalBathSpec:
    """Discrete-mode cavity with per-mode Fock truncation.

    beta = math.inf selects the zero-temperature (ground-state) limit.
    """

    mode_freqs: tuple
    couplings: tuple
    beta: float
    n_max: int
    omega_0: float
    joint_cap: int = JOINT_DIM_CAP

    def __post_init__(self):
        freqs = tuple(float(w) for w in np.atleast_1d(self.mode_freqs))
        gs = tuple(float(g) for g in np.atleast_1d(self.couplings))
        object.__setattr__(self, "mode_freqs", freqs)
        object.__setattr__(self, "couplings", gs)
        if len(freqs) != len(gs) or not freqs:
            raise ValueError("mode_freqs and couplings must be equal-length, nonempty")
        if any(w <= 0 for w in freqs):
            raise ValueError("mode frequencies must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.env_dim > self.joint_cap:
            raise CapacityError(
                f"environment dimension {self.env_dim} exceeds cap {self.joint_cap}")

    @property
    def n_modes(self) -> int:
        return len(self.mode_freqs)

    @property
    def levels(self) -> int:
        return self.n_max + 1

    @property
    def env_dim(self) -> int:
        return self.levels ** self.n_modes

    @property
    def detunings(self) -> np.ndarray:
        """omega_k - omega_0 for each mode."""
        return np.asarray(self.mode_freqs) - self.omega_0


def _mode_weights(bath: ThermalBathSpec, k: int) -> np.ndarray:
    """Normalized Boltzmann weights of mode k on the truncated Fock ladder."""
    if not 0 <= k < bath.n_modes:
        raise IndexError(f"mode index {k} out of range")
    if bath.beta <= 0:
        raise ValueError(f"beta must be > 0 (or inf), got {bath.beta}")
    m = np.arange(bath.levels)
    if math.isinf(bath.beta):
        w = np.zeros(bath.levels)
        w[0] = 1.0
        return w
    w = np.exp(-m * bath.beta * bath.mode_freqs[k])
    return w / w.sum()


def thermal_state(bath: ThermalBathSpec) -> DensityMatrix:
    """Product of per-mode truncated thermal states, diagonal in the Fock basis."""
    p = np.ones(1)
    for k in range(bath.n_modes):
        p = np.kron(p, _mode_weights(bath, k))
    return DensityMatrix(np.diag(p.astype(complex)), tol=1e-12)


def mean_occupation(bath: ThermalBathSpec, k: int) -> float:
    """Tr(b_k^dag b_k rho) under the truncated thermal state.

    Computed from the truncated partition sum (not the closed Bose-Einstein
    form) so the perturbative engine and the exact oracle share one value.
    """
    p = _mode_weights(bath, k)
    return float(np.arange(bath.levels) @ p)


def raising_occupation(bath: ThermalBathSpec, k: int) -> float:
    """Tr(b_k b_k^dag rho) under the truncated thermal state.

    On the truncated ladder this is sum_{m<n_max}(m+1)p_m, which differs from
    mean_occupation + 1 by the top-level defect (n_max+1) p_{n_max}; emission
    coefficients must use this value to match truncated-operator dynamics.
    """
    p = _mode_weights(bath, k)
    m = np.arange(bath.levels)
    return float(((m + 1) * p)[:-1].sum())


class BathCorrelation:
    """Two-time correlations C_mn(t, t') = Tr_E(E_m(t) E_n(t') rho_E0)."""

    def __init__(self, interaction, rho_e0: DensityMatrix):
        self._interaction = interaction
        self._rho = rho_e0.mat

    def __call__(self, m: int, n: int, t: float, tp: float) -> complex:
        em = self._interaction.env_factor(m)(t)
        en = self._interaction.env_factor(n)(tp)
        return complex(np.trace(em @ en @ self._rho))

    def single(self, m: int, t: float) -> complex:
        return complex(np.trace(self._interaction.env_factor(m)(t) @ self._rho))

    def connected(self, m: int, n: int, t: float, tp: float) -> complex:
        """C_mn minus the product of single-operator means."""
        return self(m, n, t, tp) - self.single(m, t) * self.single(n, tp)


def bath_correlation(interaction, rho_e0: DensityMatrix, m: int, n: int,
                     t: float, tp: float, connected: bool = False) -> complex:
    corr = BathCorrelation(interaction, rho_e0)
    return corr.connected(m, n, t, tp) if connected else corr(m, n, t, tp)
