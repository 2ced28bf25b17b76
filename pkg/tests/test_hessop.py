import numpy as np
import pytest

from mixhess import hessop, symfun
from mixhess.verify import random_rotation, sample_admissible_matrices, sample_regime


def test_spectral_examples():
    lam, Q = hessop.spectral(np.eye(2))
    assert np.allclose(lam, [1, 1]) and np.allclose(Q, np.eye(2))
    lam, Q = hessop.spectral(np.diag([3.0, 1.0]))
    assert np.allclose(lam, [3, 1]) and np.allclose(Q, np.eye(2))
    lam, Q = hessop.spectral(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(lam, [1, -1])
    s = np.sqrt(0.5)
    # columns of the 45 degree rotation, each fixed up to sign by the orientation rule
    assert np.allclose(np.abs(Q), s)
    assert np.allclose(Q[:, 0], [s, s])
    assert np.allclose(Q[:, 1], [s, -s])


@pytest.mark.parametrize("n", [2, 3])
def test_spectral_reconstructs(n):
    rng = np.random.default_rng(n)
    A = rng.standard_normal((200, n, n))
    W = A + np.swapaxes(A, -1, -2)
    lam, Q = hessop.spectral(W)
    eye = np.broadcast_to(np.eye(n), W.shape)
    assert np.allclose(np.swapaxes(Q, -1, -2) @ Q, eye, atol=1e-12)
    R = (Q * lam[..., None, :]) @ np.swapaxes(Q, -1, -2)
    assert np.allclose(R, W, rtol=0, atol=1e-10 * np.abs(W).max())
    assert np.all(np.diff(lam, axis=-1) <= 0)
    assert np.allclose(lam, np.linalg.eigvalsh(W)[..., ::-1], atol=1e-12)


def test_g_value_examples():
    assert hessop.g_value(np.eye(2), [0.5, 0.25]) == pytest.approx(0.25, abs=1e-15)
    assert hessop.g_value(np.eye(3), [0.3, 1.0]) == pytest.approx(0.9, abs=1e-15)
    assert hessop.g_value(np.diag([2.0, 1.0]), [0.6, 1.0]) == pytest.approx(1.4 / 3, abs=1e-15)


def test_g_gradient_example():
    assert np.allclose(hessop.g_gradient(np.eye(2), [0.5, 0.25]), 0.375 * np.eye(2), atol=1e-15)


def test_not_admissible():
    with pytest.raises(hessop.NotAdmissible):
        hessop.g_value(np.diag([1.0, -2.0]), [0.5, 0.25])
    with pytest.raises(hessop.NotAdmissible):
        hessop.g_value(np.diag([1.0, 1.0, -0.6]), [0.5, 0.25, 1.0])


def _fd_gradient(W, alpha, step=1e-5):
    n = W.shape[-1]
    out = np.zeros_like(W)
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            d = (hessop.g_value(W + step * E, alpha) - hessop.g_value(W - step * E, alpha)) / (2 * step)
            # a symmetric off-diagonal perturbation moves both (i,j) and (j,i)
            out[..., i, j] = out[..., j, i] = d if i == j else d / 2
    return out


@pytest.mark.parametrize("n,k", [(2, 2), (3, 2), (3, 3)])
def test_gradient_vs_fd(n, k):
    rng = np.random.default_rng(10 * n + k)
    W = sample_admissible_matrices(rng, n, k, 100)
    lam = hessop.spectral(W).values
    # keep away from the cone boundary, where the FD stencil would leave it
    keep = np.all(symfun.elementary(lam)[:, 1:k + 1] > 1e-2, axis=-1)
    W = W[keep]
    alpha = rng.uniform(0.05, 2.0, size=(len(W), k))
    grad = hessop.g_gradient(W, alpha)
    fd = _fd_gradient(W, alpha)
    scale = np.abs(grad).max(axis=(-1, -2), keepdims=True)
    assert np.all(np.abs(grad - fd) <= 1e-6 * scale)


def test_gradient_near_repeated_eigenvalues():
    W = np.diag([2.0, 2.0 + 1e-9, 1.0])
    alpha = [0.3, 0.7]
    assert np.allclose(hessop.g_gradient(W, alpha), _fd_gradient(W, alpha), rtol=1e-6, atol=1e-9)


def test_rotation_equivariance():
    rng = np.random.default_rng(5)
    for n, k in [(2, 2), (3, 2), (3, 3)]:
        W = sample_admissible_matrices(rng, n, k, 50)
        alpha = rng.uniform(0.1, 1.0, size=(50, k))
        R = np.stack([random_rotation(rng, n) for _ in range(50)])
        W2 = np.swapaxes(R, -1, -2) @ W @ R
        assert np.allclose(hessop.g_value(W2, alpha), hessop.g_value(W, alpha), atol=1e-10)


def test_trace_bounds_examples():
    tr, lo, hi = hessop.trace_bounds_check(np.eye(2), [0.5, 0.25])
    assert tr == pytest.approx(0.75) and (lo, hi) == (0.5, 1.0)
    tr, lo, hi = hessop.trace_bounds_check(np.eye(3), [0.3, 1.0])
    assert lo <= tr < hi and (lo, hi) == (1.0, 2.0)


def test_concavity_examples():
    mid, chord = hessop.concavity_probe(np.eye(2), np.eye(2), [0.5, 0.25])
    assert mid == chord
    mid, chord = hessop.concavity_probe(np.diag([3.0, 1.0]), np.diag([1.0, 3.0]), [0.5, 0.25])
    assert mid > chord


def test_ratio_constants():
    assert hessop.ratio_constant(2, 2, 0) == 0.25
    assert hessop.quotient_constant(2, 2) == 1.0


def test_ratio_bounds_check():
    # on-shell: G(I) = 0.25 = alpha_1
    rep = hessop.ratio_bounds_check(np.eye(2), [0.5, 0.25])
    assert rep.status == "pass" and not rep.violations
    rep = hessop.ratio_bounds_check(np.eye(2), [0.5, 0.3])
    assert rep.status == "not-on-shell"


def test_comparison_coefficient():
    assert hessop.comparison_coefficient([0.5, 0.25], 2, 2) == pytest.approx(0.5, abs=1e-14)
    # alpha_0 -> 0 gives sup alpha_{k-1} C_n^{k-1} / (2 C_n^k)
    A = hessop.comparison_coefficient([1e-12, 0.25], 2, 2)
    assert A == pytest.approx(0.25 * 2 / 2, rel=1e-6)
    A = hessop.comparison_coefficient([0.4, 0.7, 1.1], 3, 3)
    lam = np.full(3, 2 * A)
    assert hessop.g_value(np.diag(lam), [0.4, 0.7, 1.1]) == pytest.approx(1.1, rel=1e-12)


def test_min_eig_preconditions():
    with pytest.raises(ValueError):
        hessop.min_eig_derivative_check([1.0, 2.0, 3.0], [0.5, 0.5], "negative_lambda1")
    with pytest.raises(ValueError):
        hessop.min_eig_derivative_check([3.0, 2.0, -0.1], [0.5, 0.5], "pinch", 0.5, 0.5)
    with pytest.raises(ValueError):
        hessop.min_eig_derivative_check([-0.1, 3.0, 3.0], [0.5, 0.5], "other")


def test_min_eig_negative_example():
    lhs, rhs = hessop.min_eig_derivative_check([-0.1, 3.0, 3.0], [0.01, 1.0], "negative_lambda1")
    assert lhs >= rhs > 0


@pytest.mark.parametrize("n,k,mode,eps", [(3, 2, "negative_lambda1", 0.5), (4, 3, "negative_lambda1", 0.5),
                                          (3, 2, "pinch", 0.25), (4, 2, "pinch", 0.5)])
def test_min_eig_sampled(n, k, mode, eps):
    rng = np.random.default_rng(7)
    lam = sample_regime(rng, n, k, 300, mode, delta=0.5, eps=eps)
    alpha = rng.uniform(0.05, 2.0, size=(300, k))
    lhs, rhs = hessop.min_eig_derivative_check(lam, alpha, mode, delta=0.5, eps=eps)
    assert np.all(lhs >= rhs)


def test_pinch_empty_for_wide_eps():
    # sigma_2 <= lam1 (lam2 (1 - eps) - eps lam1) <= 0 when eps = 1/2 and n = 3
    with pytest.raises(RuntimeError):
        sample_regime(np.random.default_rng(0), 3, 2, 10, "pinch", 0.5, 0.5, max_rounds=20)
