"""Dense complex operator algebra on small Hilbert spaces.

Conventions used by the whole package:

* Vectorization is column-stacking: ``vec(rho)[i + d*j] = rho[i, j]``, so the
  map ``rho -> A @ rho @ B`` has the matrix ``kron(B.T, A)``.
* Kronecker products put the system factor on the slow (outer) index, so a
  partial trace over the environment contracts the inner index blocks.
* All time integrals are uniform-grid cumulative trapezoids.  Higher-level
  identities between assembled maps only survive discretization because every
  integral in the package goes through the same rule, so do not "improve" the
  quadrature locally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DimensionError

JOINT_DIM_CAP = 4096

_PSD_TOL_DEFAULT = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i*dt, i = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0.0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")

    @property
    def n_points(self) -> int:
        return self.n_steps + 1

    @property
    def t_end(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dt

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    def index_of(self, t: float) -> int:
        i = int(round(t / self.dt))
        if not (0 <= i <= self.n_steps) or abs(i * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a grid point of {self}")
        return i


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    return v.reshape((d, d), order="F")


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose; on stacked arrays acts on the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def max_abs(a: np.ndarray) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a)))


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    a = np.asarray(a)
    scale = max(max_abs(a), 1.0)
    return max_abs(a - dag(a)) <= tol * scale


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def tensor_product(a: np.ndarray, b: np.ndarray, cap: int = JOINT_DIM_CAP) -> np.ndarray:
    """Kronecker product with the first (system) factor on the outer index."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise DimensionError("tensor_product expects two square matrices")
    joint = a.shape[0] * b.shape[0]
    if joint > cap:
        raise CapacityError(f"joint dimension {joint} exceeds cap {cap}")
    return np.kron(a, b)


def partial_trace_env(j: np.ndarray, sys_dim: int, env_dim: int) -> np.ndarray:
    """Trace out the environment factor of a joint-space operator."""
    j = np.asarray(j)
    d = sys_dim * env_dim
    if j.shape[-2:] != (d, d):
        raise DimensionError(
            f"joint operator of shape {j.shape} does not factor as {sys_dim}x{env_dim}"
        )
    r = j.reshape(j.shape[:-2] + (sys_dim, env_dim, sys_dim, env_dim))
    return np.einsum("...ambm->...ab", r)


def cumulative_trapezoid(y: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Prefix trapezoid sums along `axis`; output[0] = 0, same shape as input."""
    y = np.asarray(y)
    y = np.moveaxis(y, axis, 0)
    out = np.zeros_like(y)
    if y.shape[0] > 1:
        increments = 0.5 * dt * (y[:-1] + y[1:])
        np.cumsum(increments, axis=0, out=out[1:])
    return np.moveaxis(out, 0, axis)


def trapezoid_weights(n_points: int, dt: float) -> np.ndarray:
    """Quadrature weights matching `cumulative_trapezoid` at the last node."""
    if n_points < 1:
        raise ValueError("need at least one point")
    if n_points == 1:
        return np.zeros(1)
    w = np.full(n_points, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def matrix_units(d: int) -> np.ndarray:
    """All d^2 matrix units, ordered to match column-stacking vec indices."""
    units = np.zeros((d * d, d, d), dtype=complex)
    for k in range(d * d):
        units[k, k % d, k // d] = 1.0
    return units


def matrix_exp(h: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """exp(scale*h); eigendecomposition for Hermitian h, Pade otherwise."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionError("matrix_exp expects a square matrix")
    if not np.all(np.isfinite(h)):
        raise ValueError("matrix_exp: non-finite entries")
    if is_hermitian(h):
        w, v = np.linalg.eigh(h)
        return (v * np.exp(scale * w)) @ dag(v)
    return _expm_pade(scale * h)


def hermitian_exp_batched(h: np.ndarray, scale: complex) -> np.ndarray:
    """Batched exp(scale*h) for stacked Hermitian matrices (..., n, n)."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(scale * w)[..., None, :]) @ dag(v)


# Pade-13 scaling-and-squaring (Higham 2005), degree fixed for simplicity.
_PADE13_B = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_PADE13_THETA = 5.371920351148152


def _expm_pade(a: np.ndarray) -> np.ndarray:
    b = _PADE13_B
    n = a.shape[0]
    ident = np.eye(n, dtype=complex)
    norm = float(np.max(np.sum(np.abs(a), axis=0))) if n else 0.0
    s = max(0, int(np.ceil(np.log2(norm / _PADE13_THETA))) if norm > _PADE13_THETA else 0)
    a = a / (2.0 ** s)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


class Superoperator:
    """A d^2 x d^2 matrix acting on column-stacked operators."""

    __slots__ = ("mat", "sys_dim")

    def __init__(self, mat: np.ndarray):
        mat = np.asarray(mat, dtype=complex)
        d = int(round(np.sqrt(mat.shape[0])))
        if mat.ndim != 2 or mat.shape != (d * d, d * d):
            raise DimensionError(f"superoperator matrix has bad shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ValueError("superoperator with non-finite entries")
        self.mat = mat
        self.sys_dim = d

    @classmethod
    def identity(cls, d: int) -> "Superoperator":
        return cls(np.eye(d * d, dtype=complex))

    @classmethod
    def zero(cls, d: int) -> "Superoperator":
        return cls(np.zeros((d * d, d * d), dtype=complex))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.mat @ vec(rho), self.sys_dim)

    def compose(self, other: "Superoperator") -> "Superoperator":
        """self after other, i.e. (self . other)(rho) = self(other(rho))."""
        return Superoperator(self.mat @ other.mat)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.mat + other.mat)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.mat - other.mat)

    def __mul__(self, c: complex) -> "Superoperator":
        return Superoperator(self.mat * c)

    __rmul__ = __mul__

    def max_norm(self) -> float:
        return max_abs(self.mat)

    def trace_column_defect(self) -> float:
        """Max over columns of |sum of trace-position entries|.

        Zero for any generator of trace-preserving dynamics.
        """
        d = self.sys_dim
        trace_rows = self.mat[np.arange(d) * (d + 1), :]
        return max_abs(np.sum(trace_rows, axis=0))


def superop_from_action(action, d: int) -> Superoperator:
    """Materialize a linear map on d x d operators, column by matrix unit."""
    mat = np.empty((d * d, d * d), dtype=complex)
    for k, unit in enumerate(matrix_units(d)):
        mat[:, k] = vec(np.asarray(action(unit), dtype=complex))
    return Superoperator(mat)


def left_mul_super(a: np.ndarray) -> np.ndarray:
    """Matrix of rho -> a @ rho."""
    d = a.shape[0]
    return np.kron(np.eye(d), a)


def right_mul_super(b: np.ndarray) -> np.ndarray:
    """Matrix of rho -> rho @ b."""
    d = b.shape[0]
    return np.kron(b.T, np.eye(d))


def sandwich_super(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of rho -> a @ rho @ b."""
    return np.kron(b.T, a)


@dataclass(frozen=True)
class DensityMatrix:
    """Validated density matrix.

    The positivity floor is -tol rather than 0: second-order truncated
    evolutions can produce slightly negative transient eigenvalues.
    """

    mat: np.ndarray
    tol: float = _PSD_TOL_DEFAULT
    _min_eig: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=complex)
        object.__setattr__(self, "mat", mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError("density matrix must be square")
        if not np.all(np.isfinite(mat)):
            raise ValueError("density matrix with non-finite entries")
        if max_abs(mat - dag(mat)) > self.tol:
            raise ValueError("density matrix is not Hermitian within tolerance")
        tr = np.trace(mat)
        if abs(tr - 1.0) > self.tol:
            raise ValueError(f"density matrix trace {tr} is not 1 within tolerance")
        min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (mat + dag(mat)))))
        if min_eig < -self.tol:
            raise ValueError(f"density matrix has eigenvalue {min_eig} below -tol")
        object.__setattr__(self, "_min_eig", min_eig)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        return self._min_eig
