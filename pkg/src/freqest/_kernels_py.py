"""Pure-numpy implementation of the grid log-likelihood kernel."""
import numpy as np

_CHUNK = 64


def loglik_accumulate(nodes, times, signed_contrast, out):
    nodes = np.asarray(nodes, dtype=float)
    times = np.asarray(times, dtype=float)
    a = np.asarray(signed_contrast, dtype=float)
    if out.shape != nodes.shape or a.shape != times.shape:
        raise ValueError("shape mismatch")
    with np.errstate(divide="ignore"):
        for start in range(0, times.size, _CHUNK):
            tk = times[start:start + _CHUNK]
            ak = a[start:start + _CHUNK]
            p = 0.5 + 0.5 * ak[:, None] * np.cos(np.outer(tk, nodes))
            out += np.log(p).sum(axis=0)


def loglik_accumulate_uniform(start, step, times, signed_contrast, out):
    nodes = start + step * np.arange(out.shape[0], dtype=float)
    loglik_accumulate(nodes, times, signed_contrast, out)
