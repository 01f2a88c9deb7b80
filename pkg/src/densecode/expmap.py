"""Exponential-map parameterization of unitary matrices.

A d x d unitary is written U = exp(A) with A anti-Hermitian.  A real
parameter vector of length d*d packs A as [diagonal phases | upper real
parts | upper imaginary parts].  Because A is normal, both the exponential
and the derivative of the exponential are computed from one Hermitian
eigendecomposition: with -iA = V diag(theta) V^dagger,

    exp(A) = V diag(exp(i theta)) V^dagger,
    Dexp_A(E) = V (Gamma * (V^dagger E V)) V^dagger,

where Gamma[k, l] = exp(i(theta_k + theta_l)/2) * sinc((theta_k - theta_l)/2)
is the divided difference of exp between i*theta_k and i*theta_l, written in
a form with no cancellation for close eigenvalues.  The adjoint of Dexp_A
(used to pull cost gradients back to parameters) replaces Gamma by its
conjugate.

All functions operate on stacks: shape (n, d, d) matrices and (n, d*d)
parameter blocks.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def param_count(d: int) -> int:
    return d * d


def _upper_indices(d: int):
    return np.triu_indices(d, 1)


def unpack(x: np.ndarray, d: int, count: int) -> np.ndarray:
    """Real parameter vector -> stack of (count, d, d) anti-Hermitian matrices."""
    x = np.asarray(x, dtype=float).reshape(count, d * d)
    n_off = d * (d - 1) // 2
    iu, ju = _upper_indices(d)
    a = np.zeros((count, d, d), dtype=complex)
    diag = x[:, :d]
    re = x[:, d : d + n_off]
    im = x[:, d + n_off :]
    a[:, np.arange(d), np.arange(d)] = 1j * diag
    a[:, iu, ju] = re + 1j * im
    a[:, ju, iu] = -re + 1j * im
    return a


def pack(a: np.ndarray) -> np.ndarray:
    """Inverse of unpack; assumes the stack is anti-Hermitian."""
    count, d, _ = a.shape
    iu, ju = _upper_indices(d)
    diag = np.imag(a[:, np.arange(d), np.arange(d)])
    re = np.real(a[:, iu, ju])
    im = np.imag(a[:, iu, ju])
    return np.concatenate([diag, re, im], axis=1).reshape(-1)


def eig_antiherm(a: np.ndarray):
    """Eigendecomposition A = V diag(i theta) V^dagger of an anti-Hermitian stack."""
    theta, v = np.linalg.eigh(-1j * a)
    return theta, v


def exp_from_eig(theta: np.ndarray, v: np.ndarray) -> np.ndarray:
    phases = np.exp(1j * theta)
    return np.einsum("nab,nb,ncb->nac", v, phases, np.conj(v))


def expm_antiherm(a: np.ndarray) -> np.ndarray:
    theta, v = eig_antiherm(a)
    return exp_from_eig(theta, v)


def _sinc(x: np.ndarray) -> np.ndarray:
    # np.sinc is sin(pi x)/(pi x); rescale to sin(x)/x.
    return np.sinc(x / np.pi)


def gamma_factors(theta: np.ndarray) -> np.ndarray:
    """Divided-difference coefficients Gamma[k, l] for each matrix in the stack."""
    s = 0.5 * (theta[:, :, None] + theta[:, None, :])
    t = 0.5 * (theta[:, :, None] - theta[:, None, :])
    return np.exp(1j * s) * _sinc(t)


def dexp_apply(theta: np.ndarray, v: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Directional derivative Dexp_A(E) for stacks of directions E."""
    gamma = gamma_factors(theta)
    e_tilde = np.einsum("nba,nbc,ncd->nad", np.conj(v), e, v)
    return np.einsum("nab,nbc,ndc->nad", v, gamma * e_tilde, np.conj(v))


def dexp_adjoint(theta: np.ndarray, v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Adjoint of Dexp_A applied to a stack of cogradients G.

    Satisfies Re Tr(G^dagger Dexp_A(E)) = Re Tr(M^dagger E) with M the
    returned stack, for every direction E.
    """
    gamma_bar = np.conj(gamma_factors(theta))
    g_tilde = np.einsum("nba,nbc,ncd->nad", np.conj(v), g, v)
    return np.einsum("nab,nbc,ndc->nad", v, gamma_bar * g_tilde, np.conj(v))


def grad_to_params(m: np.ndarray) -> np.ndarray:
    """Pull a stack of cogradient matrices M back to packed parameters.

    The cost differential is dC = 2 Re Tr(M^dagger dA) restricted to
    anti-Hermitian dA; with W = M - M^dagger the components along the
    packing basis are Im(W_aa) for the diagonal phases and 2 Re / 2 Im of
    the upper triangle for the off-diagonal pairs.
    """
    count, d, _ = m.shape
    iu, ju = _upper_indices(d)
    w = m - np.conj(m.transpose(0, 2, 1))
    g_diag = np.imag(w[:, np.arange(d), np.arange(d)])
    g_re = 2.0 * np.real(w[:, iu, ju])
    g_im = 2.0 * np.imag(w[:, iu, ju])
    return np.concatenate([g_diag, g_re, g_im], axis=1).reshape(-1)


def phi_components(z: np.ndarray) -> np.ndarray:
    """Complex derivative rows Tr(Z^dagger B_p) over the packing basis.

    Given a stack Z of adjoint-transported pair matrices, returns the
    complex vector of holomorphic derivatives of an overlap with respect to
    each packed parameter (diagonal, then upper-real, then upper-imag).
    """
    count, d, _ = z.shape
    iu, ju = _upper_indices(d)
    zc = np.conj(z)
    col_diag = 1j * zc[:, np.arange(d), np.arange(d)]
    col_re = zc[:, iu, ju] - zc[:, ju, iu]
    col_im = 1j * (zc[:, iu, ju] + zc[:, ju, iu])
    return np.concatenate([col_diag, col_re, col_im], axis=1)


def log_unitary(u: np.ndarray) -> np.ndarray:
    """Anti-Hermitian logarithm of a single unitary matrix."""
    t, z = scipy.linalg.schur(np.asarray(u, dtype=complex), output="complex")
    phases = np.angle(np.diagonal(t))
    a = (z * (1j * phases)[None, :]) @ np.conj(z.T)
    return 0.5 * (a - np.conj(a.T))


def params_from_unitaries(u: np.ndarray) -> np.ndarray:
    """Packed parameters whose exponentials reproduce the given stack."""
    a = np.array([log_unitary(m) for m in u])
    return pack(a)


def random_params(rng: np.random.Generator, d: int, count: int, scale: float) -> np.ndarray:
    """Gaussian generator parameters; scale ~1 spreads eigenphases over the circle."""
    return scale * rng.standard_normal(count * d * d)
