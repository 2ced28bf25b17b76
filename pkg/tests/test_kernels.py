import os
import subprocess
import sys

import numpy as np
import pytest

from mixhess import _pykernels, kernels
from mixhess import grid as gr

try:
    from mixhess import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


@pytest.fixture(scope="module")
def case():
    g = gr.build_grid(gr.DomainSpec.ellipse(1.1, 0.9), 1 / 24)
    rng = np.random.default_rng(4)
    w = 0.6 * g.x ** 2 + 0.4 * g.y ** 2 + 0.1 * g.x * g.y + 1e-4 * rng.standard_normal(g.n)
    m = len(g.interior)
    a0 = rng.uniform(0.1, 0.6, m)
    a1 = rng.uniform(0.1, 0.6, m)
    return g, w, a0, a1


def test_fallback_residual_formula(case):
    g, w, a0, a1 = case
    F, ok = _pykernels.interior_residual(w, g.nbr, 1 / g.h ** 2, a0, a1, 0.0)
    hxx, hyy, hxy = gr.hessians(g, w)
    assert np.allclose(F, (hxx * hyy - hxy ** 2 - a0) / (hxx + hyy) - a1, atol=1e-12)
    assert ok.all()


def test_fallback_jacobian_matches_fd(case):
    g, w, a0, a1 = case
    inv_h2 = 1 / g.h ** 2
    F, vals, _ = _pykernels.interior_jacobian(w, g.nbr, inv_h2, a0, a1)
    row = len(g.interior) // 3
    for c in range(9):
        node = g.nbr[row, c]
        step = 1e-7
        wp, wm = w.copy(), w.copy()
        wp[node] += step
        wm[node] -= step
        Fp, _ = _pykernels.interior_residual(wp, g.nbr, inv_h2, a0, a1, 0.0)
        Fm, _ = _pykernels.interior_residual(wm, g.nbr, inv_h2, a0, a1, 0.0)
        fd = (Fp[row] - Fm[row]) / (2 * step)
        assert vals[row, c] == pytest.approx(fd, rel=1e-5, abs=1e-6 * inv_h2)


@needs_ext
def test_backends_agree(case):
    g, w, a0, a1 = case
    inv_h2 = 1 / g.h ** 2
    Fp, okp = _pykernels.interior_residual(w, g.nbr, inv_h2, a0, a1, 1e-12)
    Fc, okc = _ckernels.interior_residual(w, g.nbr, inv_h2, a0, a1, 1e-12)
    assert np.array_equal(np.asarray(okp), np.asarray(okc))
    assert np.allclose(Fp, Fc, rtol=1e-14, atol=1e-14)
    Jp = _pykernels.interior_jacobian(w, g.nbr, inv_h2, a0, a1)
    Jc = _ckernels.interior_jacobian(w, g.nbr, inv_h2, a0, a1)
    for a, b in zip(Jp, Jc):
        assert np.allclose(a, b, rtol=1e-13, atol=1e-13 * inv_h2)


@needs_ext
def test_backends_flag_zero_trace():
    g = gr.build_grid(gr.DomainSpec.disk(1.0), 1 / 16)
    w = 0.5 * (g.x ** 2 - g.y ** 2)
    m = len(g.interior)
    a = np.full(m, 0.3)
    Fp, okp = _pykernels.interior_residual(w, g.nbr, 256.0, a, a, 0.0)
    Fc, okc = _ckernels.interior_residual(w, g.nbr, 256.0, a, a, 0.0)
    assert np.isnan(Fp).all() and np.isnan(np.asarray(Fc)).all()
    assert not np.asarray(okp).any() and not np.asarray(okc).any()


def test_env_forces_fallback():
    env = dict(os.environ, MIXHESS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from mixhess import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_selected_backend():
    expected = "python" if os.environ.get("MIXHESS_PURE_PYTHON") or _ckernels is None else "cython"
    assert kernels.BACKEND == expected
