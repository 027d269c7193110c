"""Two-parameter perturbative machinery for combined quantum/classical noise.

The joint propagator is expanded in the two coupling strengths; the expansion
terms U_{m,n} obey a first-order recursion in which each term integrates the
two lower neighbours,

    dU_{m,n}/dt = -i [ H_SE(t) U_{m-1,n} + (H_S^(j)(t) (x) I_E) U_{m,n-1} ],

with U_{0,0} = I and negative indices meaning zero.  All integrals are the
shared cumulative trapezoid, and every time derivative below is built from
this recursion and the product rule, never from finite differences: the exact
cancellation of the (1,1) cross generator holds at the integrand level, so it
survives discretization only if derivative and integral use consistent rules.

From the U terms, the order-(M,N) transfer maps eps_{(M,N)} and their
derivatives are assembled as superoperator time series, ensemble-averaged
over realizations with a fixed reduction order.  Generators of the time-local
master equation are collected by the alternating-sign composition rule

    L_{(M,N)} = sum over ordered tuples of nonzero orders summing to (M,N):
                (-1)^q  eps_dot_(first) . eps_(second) . ... . eps_(last).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, UnsupportedOrderError
from .hamiltonian import FactorizedInteraction, NoiseStrengths, StochasticSystemHamiltonian
from .linalg import (
    DensityMatrix,
    Superoperator,
    TimeGrid,
    cumulative_trapezoid,
    dag,
    matrix_units,
    partial_trace_env,
    tensor_product,
    unvec,
    vec,
)

ORDER_CAP_DEFAULT = 4
_TERM_BYTES_CAP = 4 << 30


def _kron_batched(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product over the last two axes of stacked arrays."""
    da, db = a.shape[-1], b.shape[-1]
    out = np.einsum("...ij,...kl->...ikjl", a, b)
    return out.reshape(out.shape[:-4] + (da * db, da * db))


class PropagatorTerms:
    """Expansion terms U_{m,n}^(j)(t_i) on a grid, plus their exact derivatives.

    Term arrays have shape (R_j, n_points, D, D) where R_j is 1 for
    deterministic terms (no stochastic factor) and the realization count
    otherwise.  In analytic noise mode the coefficient array is the single
    analytic mean path.
    """

    def __init__(self, interaction: FactorizedInteraction,
                 stochastic_h: StochasticSystemHamiltonian | None,
                 grid: TimeGrid, max_order: int,
                 noise_mode: str = "empirical",
                 order_cap: int = ORDER_CAP_DEFAULT):
        if max_order < 1:
            raise ValueError("max_order must be >= 1")
        if max_order > order_cap:
            raise CapacityError(
                f"max_order {max_order} beyond configured limit {order_cap}")
        if noise_mode not in ("empirical", "analytic"):
            raise ValueError(f"unknown noise_mode {noise_mode!r}")
        self.interaction = interaction
        self.stochastic_h = stochastic_h
        self.grid = grid
        self.max_order = max_order
        self.noise_mode = noise_mode
        self.sys_dim = interaction.sys_dim
        self.env_dim = interaction.env_dim
        joint = interaction.joint_dim

        sampled = interaction.sampled(grid)
        self._h = sampled.h_se
        if stochastic_h is not None:
            if stochastic_h.sys_dim != self.sys_dim:
                raise ValueError("stochastic base operator dimension mismatch")
            egrid = stochastic_h.ensemble.grid
            if (egrid.dt, egrid.n_steps) != (grid.dt, grid.n_steps):
                raise ValueError("stochastic ensemble was sampled on a different grid")
            self._b = tensor_product(stochastic_h.base_op,
                                     np.eye(self.env_dim, dtype=complex))
            if noise_mode == "empirical":
                self._coeff = stochastic_h.ensemble.paths
            else:
                self._coeff = stochastic_h.ensemble.mean_path[None, :]
        else:
            self._b = np.zeros((joint, joint), dtype=complex)
            self._coeff = np.zeros((1, grid.n_points))

        n_sto = sum(1 for m in range(max_order + 1) for n in range(max_order + 1 - m)
                    if n >= 1)
        est = (max_order + 1 + n_sto * self._coeff.shape[0]) \
            * grid.n_points * joint * joint * 16 * 2
        if est > _TERM_BYTES_CAP:
            raise CapacityError(
                f"propagator terms would need ~{est >> 20} MiB; reduce R, the "
                f"grid, or max_order")

        self._u: dict = {}
        self._udot: dict = {}
        ident = np.eye(joint, dtype=complex)
        self._u[(0, 0)] = np.broadcast_to(ident, (1, grid.n_points, joint, joint))
        for total in range(1, max_order + 1):
            for m in range(total + 1):
                n = total - m
                integ = self._derivative(m, n)
                self._u[(m, n)] = cumulative_trapezoid(integ, grid.dt, axis=1)
                self._udot[(m, n)] = integ

    @property
    def n_realizations(self) -> int:
        return self._coeff.shape[0]

    def _derivative(self, m: int, n: int) -> np.ndarray:
        """-i (H_SE U_{m-1,n} + c B U_{m,n-1}), the exact nodewise derivative."""
        parts = []
        if m >= 1:
            parts.append(self._h @ self._u[(m - 1, n)])
        if n >= 1:
            lower = self._b @ self._u[(m, n - 1)]
            parts.append(self._coeff[:, :, None, None] * lower)
        if not parts:
            shape = self._u[(0, 0)].shape
            return np.zeros((1,) + shape[1:], dtype=complex)
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return -1j * total

    def term(self, m: int, n: int) -> np.ndarray:
        if (m, n) == (0, 0):
            return self._u[(0, 0)]
        if m < 0 or n < 0 or m + n > self.max_order:
            raise CapacityError(f"order ({m},{n}) outside computed range")
        return self._u[(m, n)]

    def term_dot(self, m: int, n: int) -> np.ndarray:
        if (m, n) == (0, 0):
            return np.zeros_like(self._u[(0, 0)])
        if m < 0 or n < 0 or m + n > self.max_order:
            raise CapacityError(f"order ({m},{n}) outside computed range")
        return self._udot[(m, n)]


def compute_propagator_terms(interaction: FactorizedInteraction,
                             stochastic_h: StochasticSystemHamiltonian | None,
                             grid: TimeGrid, max_order: int = 3,
                             noise_mode: str = "empirical",
                             order_cap: int = ORDER_CAP_DEFAULT) -> PropagatorTerms:
    return PropagatorTerms(interaction, stochastic_h, grid, max_order,
                           noise_mode=noise_mode, order_cap=order_cap)


def composition_terms(order_m: int, order_n: int):
    """Ordered tuples of nonzero orders summing to (M, N), with signs (-1)^q.

    Returns a list of (sign, tuple_of_orders); the first order of each tuple
    indexes the derivative map, the rest plain maps.
    """

    def sequences(m, n):
        if (m, n) == (0, 0):
            yield ()
            return
        for m0 in range(m + 1):
            for n0 in range(n + 1):
                if m0 + n0 == 0:
                    continue
                for rest in sequences(m - m0, n - n0):
                    yield ((m0, n0),) + rest

    return [((-1) ** (len(seq) - 1), seq)
            for seq in sequences(order_m, order_n) if seq]


@dataclass(frozen=True)
class GeneratorTerm:
    """One order of the master equation: a superoperator time series."""

    order: tuple
    series: np.ndarray  # (n_points, d^2, d^2)


class OrderedMapFamily:
    """Time series of the transfer maps eps_{(M,N)} and their derivatives.

    Built lazily from propagator terms and the initial bath state; immutable
    once populated.  Ensemble reduction is a fixed-order mean over the
    realization axis, so repeated builds are bit-identical.
    """

    def __init__(self, terms: PropagatorTerms, rho_e0: DensityMatrix):
        if rho_e0.dim != terms.env_dim:
            raise ValueError("bath state dimension does not match interaction")
        self.terms = terms
        self.grid = terms.grid
        self.sys_dim = terms.sys_dim
        self.env_dim = terms.env_dim
        self.max_order = terms.max_order
        d, e = self.sys_dim, self.env_dim
        self._units = np.stack([
            tensor_product(u, rho_e0.mat, cap=d * e) for u in matrix_units(d)])
        self._eps: dict = {}
        self._eps_dot: dict = {}
        self._gen: dict = {}
        self._corr = None

    def _second_moment(self):
        """Kernel corrections, built on first (0,2) request in analytic mode."""
        if self._corr is None:
            self._corr = _AnalyticSecondMoment(self.terms)
        return self._corr

    # -- assembly ---------------------------------------------------------

    def _check_order(self, m: int, n: int):
        if m < 0 or n < 0 or (m, n) != (0, 0) and m + n > self.max_order:
            raise CapacityError(f"order ({m},{n}) outside computed range")
        if (self.terms.noise_mode == "analytic" and n >= 2
                and (m, n) != (0, 2)):
            raise UnsupportedOrderError(
                f"analytic noise mode cannot build order ({m},{n}); only "
                f"delta-order <= 1 and (0,2) are exact from mean and kernel")

    def _pair_sum(self, order_m: int, order_n: int, dotted: bool) -> np.ndarray:
        """Sum over index splits of Tr_E(U_L X U_R^dag), averaged over j."""
        d, e = self.sys_dim, self.env_dim
        n_pts = self.grid.n_points
        acc = np.zeros((d * d, n_pts, d, d), dtype=complex)
        for m in range(order_m + 1):
            for n in range(order_n + 1):
                left = (order_m - m, order_n - n)
                right = (m, n)
                pairs = [(self.terms.term(*left), self.terms.term(*right))]
                if dotted:
                    pairs = [
                        (self.terms.term_dot(*left), self.terms.term(*right)),
                        (self.terms.term(*left), self.terms.term_dot(*right)),
                    ]
                for u_l, u_r in pairs:
                    u_r_dag = dag(u_r)
                    for k in range(d * d):
                        prod = u_l @ self._units[k] @ u_r_dag
                        reduced = partial_trace_env(prod, d, e)
                        acc[k] += reduced.mean(axis=0)
        return acc

    def _pack(self, acc: np.ndarray) -> np.ndarray:
        """(d^2, n_points, d, d) accumulator -> (n_points, d^2, d^2) series."""
        d = self.sys_dim
        n_pts = self.grid.n_points
        cols = acc.transpose(1, 0, 3, 2).reshape(n_pts, d * d, d * d)
        return cols.transpose(0, 2, 1)

    def eps_series(self, m: int, n: int) -> np.ndarray:
        self._check_order(m, n)
        key = (m, n)
        if key not in self._eps:
            if key == (0, 0):
                ident = np.eye(self.sys_dim ** 2, dtype=complex)
                series = np.broadcast_to(ident, (self.grid.n_points,) + ident.shape)
                self._eps[key] = series
            else:
                series = self._pack(self._pair_sum(m, n, dotted=False))
                if key == (0, 2) and self.terms.noise_mode == "analytic" \
                        and self.terms.stochastic_h is not None:
                    series = series + self._second_moment().eps_correction()
                self._eps[key] = series
        return self._eps[key]

    def eps_dot_series(self, m: int, n: int) -> np.ndarray:
        self._check_order(m, n)
        key = (m, n)
        if key not in self._eps_dot:
            if key == (0, 0):
                self._eps_dot[key] = np.zeros(
                    (self.grid.n_points, self.sys_dim ** 2, self.sys_dim ** 2),
                    dtype=complex)
            else:
                series = self._pack(self._pair_sum(m, n, dotted=True))
                if key == (0, 2) and self.terms.noise_mode == "analytic" \
                        and self.terms.stochastic_h is not None:
                    series = series + self._second_moment().eps_dot_correction()
                self._eps_dot[key] = series
        return self._eps_dot[key]

    def generator_series(self, m: int, n: int) -> np.ndarray:
        """Collect L_{(M,N)}(t) over the whole grid."""
        if m + n < 1:
            raise ValueError("generators start at total order 1")
        key = (m, n)
        if key not in self._gen:
            total = np.zeros_like(self.eps_dot_series(m, n))
            for sign, seq in composition_terms(m, n):
                prod = self.eps_dot_series(*seq[0])
                for order in seq[1:]:
                    prod = prod @ self.eps_series(*order)
                total = total + sign * prod
            self._gen[key] = total
        return self._gen[key]

    def generator_term(self, m: int, n: int) -> GeneratorTerm:
        return GeneratorTerm(order=(m, n), series=self.generator_series(m, n))

    # -- single-time views -------------------------------------------------

    def eps(self, m: int, n: int, i: int) -> Superoperator:
        return Superoperator(self.eps_series(m, n)[i])

    def eps_dot(self, m: int, n: int, i: int) -> Superoperator:
        return Superoperator(self.eps_dot_series(m, n)[i])

    def generator(self, m: int, n: int, i: int) -> Superoperator:
        return Superoperator(self.generator_series(m, n)[i])

    # -- assembled total map ------------------------------------------------

    def orders(self):
        return [(m, n) for total in range(1, self.max_order + 1)
                for m in range(total + 1) for n in [total - m]]

    def eps_total_at(self, strengths: NoiseStrengths, i: int) -> np.ndarray:
        """Matrix of the strength-weighted total map eps_t (identity excluded)."""
        d2 = self.sys_dim ** 2
        total = np.zeros((d2, d2), dtype=complex)
        for m, n in self.orders():
            total = total + (strengths.lam ** m) * (strengths.delta ** n) \
                * self.eps_series(m, n)[i]
        return total

    def propagate(self, strengths: NoiseStrengths, i: int, rho0: np.ndarray) -> np.ndarray:
        """rho_t = (I + eps_t)(rho_0) under the truncated map."""
        v = vec(rho0)
        return unvec(v + self.eps_total_at(strengths, i) @ v, self.sys_dim)


class _AnalyticSecondMoment:
    """Covariance-kernel corrections making (0,2) maps exact in analytic mode.

    The centered kernel enters through three scalar series:
      kappa(t)  = int_0^t K(t,u) du            (derivative maps)
      T2(t)     = int_0^t dt' int_0^t' K(t',u) du
      W(t)      = int_0^t int_0^t K(u,v) du dv
    and the base operator B of the stochastic Hamiltonian:
      delta eps_dot_(0,2) = -kappa (B^2 rho + rho B^2) + 2 kappa B rho B
      delta eps_(0,2)     = -T2    (B^2 rho + rho B^2) + W       B rho B
    """

    def __init__(self, terms: PropagatorTerms):
        ensemble = terms.stochastic_h.ensemble
        if ensemble.kernel is None:
            raise UnsupportedOrderError(
                "analytic noise mode needs a covariance kernel for order (0,2)")
        grid = terms.grid
        kmat = ensemble.kernel_matrix()
        c1 = cumulative_trapezoid(kmat, grid.dt, axis=1)
        self._kappa = np.diagonal(c1).copy()
        self._t2 = cumulative_trapezoid(self._kappa, grid.dt)
        m2 = cumulative_trapezoid(c1, grid.dt, axis=0)
        self._w = np.diagonal(m2).copy()
        b = terms.stochastic_h.base_op
        d = b.shape[0]
        ident = np.eye(d, dtype=complex)
        b2 = b @ b
        self._anti = np.kron(ident, b2) + np.kron(b2.T, ident)
        self._sand = np.kron(b.T, b)

    def eps_correction(self) -> np.ndarray:
        return (-self._t2[:, None, None] * self._anti
                + self._w[:, None, None] * self._sand)

    def eps_dot_correction(self) -> np.ndarray:
        return self._kappa[:, None, None] * (2.0 * self._sand - self._anti)


def build_map_family(interaction: FactorizedInteraction,
                     stochastic_h: StochasticSystemHamiltonian | None,
                     rho_e0: DensityMatrix, grid: TimeGrid,
                     max_order: int = 3, noise_mode: str = "empirical",
                     order_cap: int = ORDER_CAP_DEFAULT) -> OrderedMapFamily:
    terms = compute_propagator_terms(interaction, stochastic_h, grid, max_order,
                                     noise_mode=noise_mode, order_cap=order_cap)
    return OrderedMapFamily(terms, rho_e0)


def epsilon_map(terms: PropagatorTerms, rho_e0: DensityMatrix,
                m: int, n: int, i: int) -> Superoperator:
    return OrderedMapFamily(terms, rho_e0).eps(m, n, i)


def epsilon_dot_map(terms: PropagatorTerms, rho_e0: DensityMatrix,
                    m: int, n: int, i: int) -> Superoperator:
    return OrderedMapFamily(terms, rho_e0).eps_dot(m, n, i)


def collect_generator(family: OrderedMapFamily, m: int, n: int, i: int) -> Superoperator:
    return family.generator(m, n, i)


def y_map(family: OrderedMapFamily, strengths: NoiseStrengths, q_max: int,
          i: int, rho: np.ndarray) -> np.ndarray:
    """Alternating composition sum_{q=0}^{Q} (-1)^q eps_t^(q)(rho)."""
    if q_max < 0:
        raise ValueError("Q must be >= 0")
    eps = family.eps_total_at(strengths, i)
    v = vec(np.asarray(rho, dtype=complex))
    acc = v.copy()
    cur = v
    sign = 1.0
    for _ in range(q_max):
        cur = eps @ cur
        sign = -sign
        acc = acc + sign * cur
    return unvec(acc, family.sys_dim)


def iterated_eps(family: OrderedMapFamily, strengths: NoiseStrengths, power: int,
                 i: int, rho: np.ndarray) -> np.ndarray:
    """eps_t^(power)(rho), the power-fold composition of the total map."""
    eps = family.eps_total_at(strengths, i)
    v = vec(np.asarray(rho, dtype=complex))
    for _ in range(power):
        v = eps @ v
    return unvec(v, family.sys_dim)


def l21_closed_form(interaction: FactorizedInteraction,
                    stochastic_h: StochasticSystemHamiltonian,
                    rho_e0: DensityMatrix, grid: TimeGrid, i: int,
                    mean_mode: str = "analytic") -> Superoperator:
    """Direct double-integral form of the third-order interference generator.

    Evaluates, with connected bath correlations C and the mean stochastic
    Hamiltonian Hbar(t') = mbar(t') B,

        L_(2,1)(rho) = i int_0^t dt' int_0^t' dt''  sum_{m,n}
            C_mn(t,t'') [S_m(t), [Hbar(t'), S_n(t'')] rho]
          - C_nm(t'',t) [S_m(t), rho [Hbar(t'), S_n(t'')]]

    by nested trapezoids on the grid.  The t' dependence enters only through
    mbar, so the inner integral is accumulated once and weighted by the mean
    path in the outer pass.
    """
    if mean_mode not in ("analytic", "empirical"):
        raise ValueError(f"unknown mean_mode {mean_mode!r}")
    d = interaction.sys_dim
    sampled = interaction.sampled(grid)
    rho_mat = rho_e0.mat
    mean = (stochastic_h.ensemble.mean_path if mean_mode == "analytic"
            else stochastic_h.ensemble.empirical_mean())
    base = stochastic_h.base_op

    nb = i + 1
    env_i = sampled.env_factors[:, i]               # (F, e, e)
    env_b = sampled.env_factors[:, :nb]             # (F, nb, e, e)
    sys_i = sampled.sys_factors[:, i]               # (F, d, d)
    sys_b = sampled.sys_factors[:, :nb]             # (F, nb, d, d)

    # connected correlators against the final time
    right = env_b @ rho_mat
    c_fwd = np.einsum("mxy,nbyx->mnb", env_i, right)
    left = env_i @ rho_mat
    c_rev = np.einsum("nbxy,myx->nmb", env_b, left)
    s_i = np.trace(env_i @ rho_mat, axis1=-2, axis2=-1)
    s_b = np.trace(right, axis1=-2, axis2=-1)
    c_fwd = c_fwd - s_i[:, None, None] * s_b[None, :, :]
    c_rev = c_rev - s_b[:, None, :] * s_i[None, :, None]

    ident = np.eye(d, dtype=complex)
    g_b = base @ sys_b - sys_b @ base               # (F, nb, d, d), [B, S_n(t'')]
    phi = np.zeros((nb, d * d, d * d), dtype=complex)
    for m in range(interaction.n_factors):
        sm = sys_i[m]
        for n in range(interaction.n_factors):
            g = g_b[n]
            m1 = _kron_batched(np.broadcast_to(ident, g.shape), sm @ g) \
                - _kron_batched(np.broadcast_to(sm.T, g.shape), g)
            m2 = _kron_batched(g.transpose(0, 2, 1), np.broadcast_to(sm, g.shape)) \
                - _kron_batched((g @ sm).transpose(0, 2, 1),
                                np.broadcast_to(ident, g.shape))
            phi += c_fwd[m, n][:, None, None] * m1 - c_rev[n, m][:, None, None] * m2
    psi = cumulative_trapezoid(phi, grid.dt, axis=0)
    outer = mean[:nb, None, None] * psi
    l_mat = cumulative_trapezoid(outer, grid.dt, axis=0)[i]
    return Superoperator(1j * l_mat)
