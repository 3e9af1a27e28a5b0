import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freqest import _kernels_py, kernels

cython = pytest.importorskip("freqest._kernels")


def exact_loglik(nodes, times, a):
    # direct per-term log, the definition the kernels implement
    with np.errstate(divide="ignore"):
        return np.log(0.5 + 0.5 * a[:, None] * np.cos(np.outer(times, nodes))).sum(axis=0)


def random_case(seed, m, t_max, n_nodes):
    rng = np.random.default_rng(seed)
    times = rng.uniform(0, t_max, m)
    d = rng.integers(0, 2, m)
    a = kernels.signed_contrast(d, times, 0.95, 1e3)
    nodes = np.sort(rng.uniform(0.01, 0.99, n_nodes))
    return nodes, times, a


def test_backend_is_named():
    assert kernels.BACKEND in ("cython", "python")


@given(st.integers(0, 2**31), st.integers(1, 300), st.floats(1.0, 1e4))
def test_backends_agree_on_arbitrary_nodes(seed, m, t_max):
    nodes, times, a = random_case(seed, m, t_max, 50)
    out_c, out_p = np.zeros(50), np.zeros(50)
    cython.loglik_accumulate(nodes, times, a, out_c)
    _kernels_py.loglik_accumulate(nodes, times, a, out_p)
    ref = exact_loglik(nodes, times, a)
    np.testing.assert_allclose(out_c, ref, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(out_p, ref, rtol=1e-12, atol=1e-9)


@given(st.integers(0, 2**31), st.integers(1, 200), st.floats(1.0, 5e3))
def test_uniform_rotation_stays_within_tolerance(seed, m, t_max):
    _, times, a = random_case(seed, m, t_max, 1)
    n = 10_000
    step = 1.0 / n
    out_c, out_p = np.zeros(n), np.zeros(n)
    cython.loglik_accumulate_uniform(0.5 * step, step, times, a, out_c)
    _kernels_py.loglik_accumulate_uniform(0.5 * step, step, times, a, out_p)
    finite = np.isfinite(out_p)
    assert np.array_equal(finite, np.isfinite(out_c))
    # rotation drift perturbs each cosine by ~1e-15, which moves log p by ~1e-15 / p;
    # allow a 1000-fold margin on that error model
    nodes = 0.5 * step + step * np.arange(n)
    p = 0.5 + 0.5 * a[:, None] * np.cos(np.outer(times, nodes))
    with np.errstate(divide="ignore"):
        bound = 1e-12 * np.sum(1.0 / p, axis=0) + 1e-9
    assert np.all(np.abs(out_c[finite] - out_p[finite]) <= bound[finite])


def test_accumulate_adds_into_existing_values():
    nodes, times, a = random_case(7, 20, 100.0, 10)
    out = np.full(10, 3.0)
    kernels.loglik_accumulate(nodes, times, a, out)
    np.testing.assert_allclose(out - 3.0, exact_loglik(nodes, times, a), rtol=1e-12)


def test_zero_probability_gives_minus_inf():
    # d=0 at omega t = pi has probability zero in the noiseless model
    out = kernels.loglik([1.0], [math.pi], [0])
    assert out[0] == -math.inf


def test_no_underflow_for_long_records():
    # product of 10^4 halves underflows a double; the log sum must not
    times = np.full(10_000, math.pi / 2)
    out = kernels.loglik([1.0], times, np.zeros(10_000, int))
    assert out[0] == pytest.approx(10_000 * math.log(0.5), rel=1e-12)


def test_shape_mismatch_is_rejected():
    with pytest.raises(ValueError):
        kernels.loglik_accumulate(np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3))


def test_pure_python_switch_selects_fallback():
    import os
    import subprocess
    import sys

    code = "from freqest import kernels, strategies as S, model as m; print(kernels.BACKEND, S.run_trial(S.StrategySpec('linear', 30), m.TrueModel(0.3), 4)[1])"
    env = dict(os.environ, FREQEST_PURE_PYTHON="1")
    pure = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout.split()
    env.pop("FREQEST_PURE_PYTHON")
    default = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout.split()
    assert pure[0] == "python"
    assert float(pure[1]) == pytest.approx(float(default[1]), abs=1e-9)
