"""Evolution-kernel selection.

The compiled extension is preferred when it imported cleanly; the numpy
fallback is always available.  Setting NOISEFOLD_PURE_PYTHON=1 forces the
fallback (used by the benchmark to compare both).
"""

from __future__ import annotations

import os

from . import _evolve_np

if os.environ.get("NOISEFOLD_PURE_PYTHON"):
    _impl = _evolve_np
else:
    try:
        from . import _evolve as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _evolve_np


def backend_name() -> str:
    return _impl.BACKEND


def propagate_reduced_sum(h_mid, b_mat, a_mid, rho0, sys_dim, env_dim,
                          lam, delta, dt, check_mode="none"):
    return _impl.propagate_reduced_sum(h_mid, b_mat, a_mid, rho0, sys_dim,
                                       env_dim, lam, delta, dt, check_mode)


def numpy_impl():
    """The fallback module, for direct comparison regardless of selection."""
    return _evolve_np


def compiled_impl():
    """The compiled module or None when unavailable."""
    try:
        from . import _evolve
        return _evolve
    except ImportError:
        return None
