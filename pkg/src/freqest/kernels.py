"""Hot-loop kernels, compiled when available.

The Cython extension ``freqest._kernels`` is used if it imports; otherwise the
numpy implementation is selected.  Set ``FREQEST_PURE_PYTHON=1`` to force the
fallback.  ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("FREQEST_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def signed_contrast(outcomes, times, eta=1.0, t2=np.inf):
    """Per-measurement ``(1 - 2 d) * eta * exp(-t/t2)``."""
    t = np.asarray(times, dtype=float)
    c = np.full_like(t, eta) if np.isinf(t2) else eta * np.exp(-t / t2)
    return (1.0 - 2.0 * np.asarray(outcomes, dtype=float)) * c


def loglik_accumulate(nodes, times, signed_contrast, out):
    """Add ``sum_k log Pr(d_k | node, t_k)`` into ``out`` in place."""
    _impl.loglik_accumulate(
        np.ascontiguousarray(nodes, dtype=float),
        np.ascontiguousarray(times, dtype=float),
        np.ascontiguousarray(signed_contrast, dtype=float),
        out,
    )
    return out


def loglik_accumulate_uniform(start, step, times, signed_contrast, out):
    """As :func:`loglik_accumulate` for the uniform nodes ``start + i * step``."""
    _impl.loglik_accumulate_uniform(
        float(start),
        float(step),
        np.ascontiguousarray(times, dtype=float),
        np.ascontiguousarray(signed_contrast, dtype=float),
        out,
    )
    return out


def loglik(nodes, times, outcomes, eta=1.0, t2=np.inf):
    """Log-likelihood of a whole record evaluated at each node.

    Guards against a non-finite ``-inf`` floor: nodes where an outcome has
    probability zero come back as ``-inf``.
    """
    nodes = np.ascontiguousarray(nodes, dtype=float)
    out = np.zeros_like(nodes)
    return loglik_accumulate(nodes, times, signed_contrast(outcomes, times, eta, t2), out)
