"""Mode-3 DFT tensor algebra: t-product, t-SVD, tubal nuclear norm and
the truncation / singular-value-thresholding projections built on them.

A third-order tensor is a plain real ndarray of shape (n1, n2, n3); its
frontal slices are t[:, :, i].  All decompositions work slice-wise in the
frequency domain after a DFT along the third mode.  Only the first
n3 // 2 + 1 frequency slices are ever decomposed; the rest follow from the
conjugate symmetry of the DFT of real data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, ShapeMismatch, SymmetryViolation

# Relative floor below which a frequency-domain singular value counts as zero
# for rank decisions.
RANK_FLOOR = 1e-12


def _require_tensor3(t: np.ndarray, name: str = "tensor") -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeMismatch(f"{name} must be 3-way, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise NonFinite(f"{name} contains non-finite entries")
    return t


def _half_count(n3: int) -> int:
    """Number of frequency slices that must be computed explicitly."""
    return n3 // 2 + 1


def dft_mode3(t: np.ndarray) -> np.ndarray:
    """DFT along the third mode.

    Returns a complex array of the same shape whose frontal slices are the
    frequency slices; slice i equals conj(slice[n3 - i]) for real input.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeMismatch(f"expected 3-way tensor, got shape {t.shape}")
    return np.fft.fft(t, axis=2)


def idft_mode3(f: np.ndarray) -> np.ndarray:
    """Inverse DFT along the third mode, with a realness check.

    Raises SymmetryViolation when the inverse has an imaginary residual
    larger than 1e-6 times the Frobenius norm of the (real) result, which
    signals a frequency-domain edit that broke conjugate symmetry.  The
    imaginary part is discarded otherwise.
    """
    f = np.asarray(f, dtype=np.complex128)
    if f.ndim != 3:
        raise ShapeMismatch(f"expected 3-way frequency slices, got shape {f.shape}")
    inv = np.fft.ifft(f, axis=2)
    real = inv.real
    imag_max = float(np.max(np.abs(inv.imag))) if inv.size else 0.0
    if imag_max > 1e-6 * np.linalg.norm(real):
        raise SymmetryViolation(
            f"inverse transform is not real (max imag {imag_max:.3e})"
        )
    return np.ascontiguousarray(real)


def t_identity(n: int, n3: int) -> np.ndarray:
    """t-identity tensor: identity matrix in frontal slice 0, zeros elsewhere."""
    e = np.zeros((n, n, n3))
    e[:, :, 0] = np.eye(n)
    return e


def t_transpose(t: np.ndarray) -> np.ndarray:
    """Tensor transpose under the t-product.

    Transposes every frontal slice and reverses the order of slices 1..n3-1.
    """
    t = _require_tensor3(t)
    out = np.transpose(t, (1, 0, 2)).copy()
    out[:, :, 1:] = out[:, :, :0:-1]
    return out


def t_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """t-product of a (n1 x m x n3) with b (m x n2 x n3).

    Equals the slice-wise matrix product in the frequency domain followed by
    the inverse transform; equivalently, circular convolution of the tubes.
    """
    a = _require_tensor3(a, "a")
    b = _require_tensor3(b, "b")
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeMismatch(f"t_product shapes {a.shape} and {b.shape} do not chain")
    fa = np.fft.fft(a, axis=2)
    fb = np.fft.fft(b, axis=2)
    fc = np.einsum("ikn,kjn->ijn", fa, fb)
    return np.fft.ifft(fc, axis=2).real


@dataclass
class TSvdFactors:
    """Rank-r t-SVD factors.

    u, v are real tensors (n1 x r x n3 and n2 x r x n3) whose frequency
    slices have orthonormal columns; sdiag holds the per-frequency singular
    values as an (r, n3) array, descending within each column.
    """

    u: np.ndarray
    sdiag: np.ndarray
    v: np.ndarray
    rank: int


def _freq_svd_truncated(t: np.ndarray, r: int):
    """Per-frequency-slice SVDs truncated to rank r, mirrored by symmetry.

    Returns (uf, s, vf) with uf (n1, r, n3) and vf (n2, r, n3) complex and
    s (r, n3) real.
    """
    n1, n2, n3 = t.shape
    if not 1 <= r <= min(n1, n2):
        raise ValueError(f"rank must be in [1, {min(n1, n2)}], got {r}")
    f = np.fft.fft(t, axis=2)
    uf = np.empty((n1, r, n3), dtype=np.complex128)
    vf = np.empty((n2, r, n3), dtype=np.complex128)
    s = np.empty((r, n3), dtype=np.float64)
    for i in range(_half_count(n3)):
        try:
            ui, si, vhi = np.linalg.svd(f[:, :, i], full_matrices=False)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise NonFinite(f"SVD of frequency slice {i} failed") from exc
        uf[:, :, i] = ui[:, :r]
        s[:, i] = si[:r]
        vf[:, :, i] = vhi[:r, :].conj().T
    for i in range(_half_count(n3), n3):
        uf[:, :, i] = uf[:, :, n3 - i].conj()
        s[:, i] = s[:, n3 - i]
        vf[:, :, i] = vf[:, :, n3 - i].conj()
    return uf, s, vf


def t_svd(t: np.ndarray, r: int) -> TSvdFactors:
    """Truncated t-SVD: top-r components of every frequency slice.

    reconstruct() of the result with r = min(n1, n2) reproduces the input to
    ~1e-9 relative error.
    """
    t = _require_tensor3(t)
    uf, s, vf = _freq_svd_truncated(t, r)
    u = np.fft.ifft(uf, axis=2).real
    v = np.fft.ifft(vf, axis=2).real
    return TSvdFactors(u=u, sdiag=s, v=v, rank=r)


def reconstruct(factors: TSvdFactors) -> np.ndarray:
    """Assemble U * diag(S) * V^H slice-wise in the frequency domain."""
    uf = np.fft.fft(factors.u, axis=2)
    vf = np.fft.fft(factors.v, axis=2)
    fc = np.einsum("irn,rn,jrn->ijn", uf, factors.sdiag, vf.conj())
    return np.fft.ifft(fc, axis=2).real


def _freq_singular_values(t: np.ndarray) -> np.ndarray:
    """Full singular values of every frequency slice, (min(n1,n2), n3)."""
    n1, n2, n3 = t.shape
    f = np.fft.fft(t, axis=2)
    s = np.empty((min(n1, n2), n3), dtype=np.float64)
    for i in range(_half_count(n3)):
        s[:, i] = np.linalg.svd(f[:, :, i], compute_uv=False)
    for i in range(_half_count(n3), n3):
        s[:, i] = s[:, n3 - i]
    return s


def tubal_nuclear_norm(t: np.ndarray) -> float:
    """Tensor nuclear norm: (1/n3) times the sum of all frequency-domain
    slice singular values.  Reduces to the matrix nuclear norm at n3 = 1."""
    t = _require_tensor3(t)
    s = _freq_singular_values(t)
    return float(s.sum() / t.shape[2])


def tubal_rank(t: np.ndarray) -> int:
    """Number of nonzero singular-value tubes, with singular values below
    RANK_FLOOR times the slice maximum treated as zero."""
    t = _require_tensor3(t)
    s = _freq_singular_values(t)
    floor = RANK_FLOOR * s.max(axis=0, keepdims=True)
    return int(np.max(np.sum(s > floor, axis=0), initial=0))


def truncated_project_with_factors(t: np.ndarray, r: int):
    """Rank-r truncated t-SVD projection, also returning the retained
    frequency-domain subspaces (used for the custom backward rule).

    Returns (projected, uf, vf) with uf (n1, r, n3), vf (n2, r, n3).
    """
    t = _require_tensor3(t)
    uf, s, vf = _freq_svd_truncated(t, r)
    fc = np.einsum("irn,rn,jrn->ijn", uf, s, vf.conj())
    return np.fft.ifft(fc, axis=2).real, uf, vf


def truncated_tsvd_project(t: np.ndarray, r: int) -> np.ndarray:
    """Hard rank-r truncation of the tubal spectrum.

    Keeps the top-r singular triplets of every frequency slice; the result
    has tubal rank at most r and the map is idempotent.
    """
    out, _, _ = truncated_project_with_factors(t, r)
    return out


def tsvt(t: np.ndarray, tau: float) -> np.ndarray:
    """Tubal singular value thresholding.

    Soft-thresholds every frequency-domain singular value by n3 * tau; this
    is the proximal operator of tau * sum_i ||slice_i||_* (equivalently of
    n3 * tau times the 1/n3-normalized tubal nuclear norm).  tsvt(t, 0) is
    the identity up to round-off.
    """
    t = _require_tensor3(t)
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    n1, n2, n3 = t.shape
    r = min(n1, n2)
    uf, s, vf = _freq_svd_truncated(t, r)
    s = np.maximum(s - n3 * tau, 0.0)
    fc = np.einsum("irn,rn,jrn->ijn", uf, s, vf.conj())
    return np.fft.ifft(fc, axis=2).real
