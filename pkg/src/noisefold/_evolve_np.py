"""Pure-numpy fallback for the joint-unitary propagation kernel.

Batched over the realization chunk: per step, a stacked Hermitian
eigendecomposition builds the midpoint exponential, the propagators are
updated, and the partial-traced states are accumulated into the chunk sum.
Semantics match `_evolve` (the compiled kernel) to floating-point roundoff.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def _dag(a):
    return np.conj(np.swapaxes(a, -1, -2))


def propagate_reduced_sum(h_mid, b_mat, a_mid, rho0, sys_dim, env_dim,
                          lam, delta, dt, check_mode="none"):
    """Propagate one realization chunk; return (sum of reduced states, defect).

    h_mid: (n_steps, D, D) interaction Hamiltonian at panel midpoints.
    a_mid: (chunk, n_steps) stochastic coefficient at panel midpoints.
    Output sum has shape (n_steps + 1, sys_dim, sys_dim); the defect is the
    max |W^dag W - I| entry over the checked step matrices W.
    """
    a_mid = np.asarray(a_mid, dtype=float)
    n_chunk, n_steps = a_mid.shape
    dim = sys_dim * env_dim
    out = np.zeros((n_steps + 1, sys_dim, sys_dim), dtype=complex)
    red0 = np.einsum("ambm->ab", rho0.reshape(sys_dim, env_dim, sys_dim, env_dim))
    out[0] = n_chunk * red0
    u = np.broadcast_to(np.eye(dim, dtype=complex), (n_chunk, dim, dim)).copy()
    ident = np.eye(dim)
    defect = 0.0
    for i in range(n_steps):
        h = lam * h_mid[i] + delta * a_mid[:, i, None, None] * b_mat
        w, v = np.linalg.eigh(h)
        step = (v * np.exp(-1j * dt * w)[:, None, :]) @ _dag(v)
        if check_mode == "full":
            defect = max(defect, float(np.max(np.abs(_dag(step) @ step - ident))))
        elif check_mode == "sample":
            s0 = step[0]
            defect = max(defect, float(np.max(np.abs(_dag(s0) @ s0 - ident))))
        u = step @ u
        chi = u @ rho0 @ _dag(u)
        out[i + 1] = np.einsum(
            "jambm->ab", chi.reshape(n_chunk, sys_dim, env_dim, sys_dim, env_dim))
    return out, defect
