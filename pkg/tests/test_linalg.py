import numpy as np
import pytest

from noisefold.errors import CapacityError, DimensionError
from noisefold.linalg import (
    DensityMatrix,
    Superoperator,
    TimeGrid,
    cumulative_trapezoid,
    dag,
    matrix_exp,
    matrix_units,
    max_abs,
    partial_trace_env,
    superop_from_action,
    tensor_product,
    trapezoid_weights,
    unvec,
    vec,
)

RNG = np.random.default_rng(101)


def random_complex(shape):
    return RNG.standard_normal(shape) + 1j * RNG.standard_normal(shape)


def random_hermitian(d):
    a = random_complex((d, d))
    return 0.5 * (a + dag(a))


def random_density(d):
    a = random_complex((d, d))
    m = a @ dag(a)
    return m / np.trace(m)


class TestTimeGrid:
    def test_points(self):
        grid = TimeGrid(dt=0.25, n_steps=4)
        assert np.array_equal(grid.times, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert grid.t_end == 1.0
        assert grid.n_points == 5
        assert np.allclose(grid.midpoints, [0.125, 0.375, 0.625, 0.875])

    def test_index_of(self):
        grid = TimeGrid(dt=0.1, n_steps=10)
        assert grid.index_of(0.5) == 5
        with pytest.raises(ValueError):
            grid.index_of(0.55)

    def test_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(dt=0.0, n_steps=3)
        with pytest.raises(ValueError):
            TimeGrid(dt=0.1, n_steps=-1)


class TestVec:
    def test_column_stacking_order(self):
        a = np.array([[1.0, 3.0], [2.0, 4.0]])
        assert np.array_equal(vec(a), [1.0, 2.0, 3.0, 4.0])
        assert np.array_equal(unvec(vec(a)), a)

    def test_units_match_vec_indices(self):
        units = matrix_units(3)
        for k, unit in enumerate(units):
            v = vec(unit)
            assert v[k] == 1.0 and np.count_nonzero(v) == 1


class TestTensorProduct:
    def test_identity(self):
        assert np.array_equal(tensor_product(np.eye(2), np.eye(3)), np.eye(6))

    def test_sigma_z_outer(self):
        sz = np.diag([1.0, -1.0])
        assert np.array_equal(np.diag(tensor_product(sz, np.eye(2))),
                              [1.0, 1.0, -1.0, -1.0])

    def test_raising_times_lowering_on_joint_ket(self):
        # (sigma_+ (x) b) |1>|1> = 2 |0>|0> in the doubled-ladder convention
        sp = np.array([[0.0, 2.0], [0.0, 0.0]])
        b = np.array([[0.0, 1.0], [0.0, 0.0]])
        joint = tensor_product(sp, b)
        ket = np.zeros(4)
        ket[1 * 2 + 1] = 1.0
        out = joint @ ket
        expected = np.zeros(4)
        expected[0] = 2.0
        assert np.array_equal(out, expected)

    def test_errors(self):
        with pytest.raises(DimensionError):
            tensor_product(np.ones((2, 3)), np.eye(2))
        with pytest.raises(CapacityError):
            tensor_product(np.eye(80), np.eye(80), cap=4096)


class TestPartialTrace:
    def test_product_state(self):
        rho_s = random_density(3)
        rho_e = random_density(4)
        joint = tensor_product(rho_s, rho_e)
        assert max_abs(partial_trace_env(joint, 3, 4) - rho_s) < 1e-14

    def test_maximally_entangled(self):
        psi = np.zeros(4)
        psi[0] = psi[3] = 1.0 / np.sqrt(2.0)
        rho = np.outer(psi, psi.conj())
        assert max_abs(partial_trace_env(rho, 2, 2) - np.eye(2) / 2) < 1e-15

    def test_against_loop_oracle(self):
        j = random_hermitian(6)
        expected = np.zeros((2, 2), dtype=complex)
        for a in range(2):
            for b in range(2):
                for m in range(3):
                    expected[a, b] += j[a * 3 + m, b * 3 + m]
        assert max_abs(partial_trace_env(j, 2, 3) - expected) == 0.0

    def test_trace_preserved(self):
        j = random_complex((12, 12))
        reduced = partial_trace_env(j, 3, 4)
        assert abs(np.trace(reduced) - np.trace(j)) < 1e-13 * abs(np.trace(j))

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            partial_trace_env(np.eye(6), 2, 4)


class TestSuperopFromAction:
    def test_identity_action(self):
        sup = superop_from_action(lambda rho: rho, 3)
        assert np.array_equal(sup.mat, np.eye(9))

    def test_commutator_kills_trace(self):
        h = random_hermitian(3)
        sup = superop_from_action(lambda rho: -1j * (h @ rho - rho @ h), 3)
        assert sup.trace_column_defect() < 1e-14

    def test_sandwich_matches_kron_kernel(self):
        a = random_complex((2, 2))
        b = random_complex((2, 2))
        sup = superop_from_action(lambda rho: a @ rho @ b, 2)
        assert max_abs(sup.mat - np.kron(b.T, a)) < 1e-14
        # brute force over all matrix units
        for k, unit in enumerate(matrix_units(2)):
            assert max_abs(unvec(sup.mat[:, k]) - a @ unit @ b) < 1e-15

    def test_apply_reproduces_action(self):
        h = random_hermitian(3)
        a = random_complex((3, 3))

        def action(rho):
            return -1j * (h @ rho - rho @ h) + a @ rho @ dag(a)

        sup = superop_from_action(action, 3)
        for _ in range(100):
            rho = random_density(3)
            direct = action(rho)
            scale = max(max_abs(direct), 1.0)
            assert max_abs(sup.apply(rho) - direct) < 1e-13 * scale

    def test_compose_is_matrix_product(self):
        a, b = random_complex((2, 2)), random_complex((2, 2))
        sup_a = superop_from_action(lambda r: a @ r, 2)
        sup_b = superop_from_action(lambda r: r @ b, 2)
        rho = random_density(2)
        assert max_abs(sup_a.compose(sup_b).apply(rho) - a @ (rho @ b)) < 1e-14


class TestMatrixExp:
    def test_zero(self):
        assert np.array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))

    def test_pi_half_rotation(self):
        sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
        u = matrix_exp(sx, scale=-1j * np.pi / 2.0)
        assert max_abs(u - (-1j) * sx) < 1e-12
        assert max_abs(dag(u) @ u - np.eye(2)) < 1e-12

    def test_hermitian_against_taylor(self):
        h = random_hermitian(4)
        a = -1j * 1e-3 * h
        term = np.eye(4, dtype=complex)
        total = np.eye(4, dtype=complex)
        for k in range(1, 21):
            term = term @ a / k
            total = total + term
        assert max_abs(matrix_exp(h, scale=-1j * 1e-3) - total) < 1e-12

    def test_unitarity_of_hermitian_exp(self):
        h = random_hermitian(5)
        u = matrix_exp(h, scale=-1j * 0.37)
        assert max_abs(dag(u) @ u - np.eye(5)) < 1e-12

    def test_nonhermitian_pade_against_scaled_taylor(self):
        a = 0.8 * random_complex((4, 4))
        # oracle: Taylor on a/2^5, squared back up
        small = a / 32.0
        term = np.eye(4, dtype=complex)
        total = np.eye(4, dtype=complex)
        for k in range(1, 25):
            term = term @ small / k
            total = total + term
        for _ in range(5):
            total = total @ total
        assert max_abs(matrix_exp(a) - total) < 1e-12 * max(1.0, max_abs(total))

    def test_nonfinite_rejected(self):
        bad = np.array([[np.nan, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError):
            matrix_exp(bad)


class TestQuadrature:
    def test_cumtrapz_matches_weights(self):
        f = RNG.standard_normal(9)
        dt = 0.3
        running = cumulative_trapezoid(f, dt)
        for k in range(1, 9):
            w = trapezoid_weights(k + 1, dt)
            assert abs(running[k] - w @ f[:k + 1]) < 1e-14

    def test_cumtrapz_quadratic_error(self):
        grid = TimeGrid(dt=0.01, n_steps=200)
        t = grid.times
        exact = t ** 3 / 3.0
        approx = cumulative_trapezoid(t ** 2, grid.dt)
        assert max_abs(approx - exact) < 0.5 * grid.dt ** 2 * grid.t_end

    def test_axis_and_zero_start(self):
        f = RNG.standard_normal((4, 5, 3))
        out = cumulative_trapezoid(f, 0.1, axis=1)
        assert out.shape == f.shape
        assert max_abs(out[:, 0, :]) == 0.0


class TestDensityMatrix:
    def test_valid(self):
        dm = DensityMatrix(np.diag([0.25, 0.75]).astype(complex))
        assert dm.dim == 2
        assert dm.min_eigenvalue >= 0.0

    def test_rejects_nonhermitian(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[0.5, 0.4], [0.0, 0.5]], dtype=complex))

    def test_rejects_bad_trace(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([0.7, 0.7]).astype(complex))

    def test_rejects_negative_beyond_floor(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([1.001, -0.001]).astype(complex), tol=1e-9)

    def test_accepts_tiny_negative_transient(self):
        DensityMatrix(np.diag([1.0 + 5e-10, -5e-10]).astype(complex), tol=1e-9)


class TestSuperoperator:
    def test_identity_zero(self):
        ident = Superoperator.identity(2)
        zero = Superoperator.zero(2)
        rho = random_density(2)
        assert np.array_equal(ident.apply(rho), rho)
        assert max_abs(zero.apply(rho)) == 0.0
        assert (ident - ident).max_norm() == 0.0
        assert (2.0 * zero + ident).max_norm() == 1.0

    def test_bad_shape(self):
        with pytest.raises(DimensionError):
            Superoperator(np.zeros((3, 4)))
