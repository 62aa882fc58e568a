"""Transform-matrix machinery: DCT basis, shrinkage family, threshold algebra,
and orthonormality tools.

A transform is a dense invertible p^2 x p^2 matrix P whose columns are basis
atoms; patches are vectorized row-major. Analysis is multiplication by P^-1,
synthesis by P. No fast-transform structure is assumed anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_RCOND_MIN = 1e-12
_INV_RESIDUAL_MAX = 1e-8


class TransformBasis:
    """Invertible p^2 x p^2 real matrix with a cached, verified inverse."""

    __slots__ = ("p", "mat", "inv")

    def __init__(self, mat: np.ndarray):
        mat = np.array(mat, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"transform must be square, got {mat.shape}")
        n = mat.shape[0]
        p = round(np.sqrt(n))
        if p * p != n or p % 2 == 0:
            raise ValueError(f"matrix side {n} is not the square of an odd p")
        sv = np.linalg.svd(mat, compute_uv=False)
        if sv[-1] <= _RCOND_MIN * sv[0]:
            rcond = sv[-1] / sv[0] if sv[0] > 0 else 0.0
            raise ValueError(f"transform is numerically singular (rcond {rcond:.2e})")
        inv = np.linalg.inv(mat)
        residual = np.linalg.norm(inv @ mat - np.eye(n))
        if residual > _INV_RESIDUAL_MAX:
            raise ValueError(f"inverse residual {residual:.2e} exceeds tolerance")
        mat.setflags(write=False)
        inv.setflags(write=False)
        self.p = p
        self.mat = mat
        self.inv = inv

    def __eq__(self, other) -> bool:
        return isinstance(other, TransformBasis) and np.array_equal(
            self.mat, other.mat
        )

    def __repr__(self) -> str:
        return f"TransformBasis(p={self.p})"


@dataclass(frozen=True)
class ShrinkSpec:
    """Threshold lam and approximation order m; m=0 selects exact hard shrink."""

    lam: float
    m: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError("m must be a nonnegative integer")


def dct_basis(p: int) -> TransformBasis:
    """Orthonormal 2-D cosine basis for p x p patches.

    Entry at row i = x*p+y, column j = u*p+v (0-based) is
    (2/p) * a(u) * a(v) * cos((2x+1)u*pi/(2p)) * cos((2y+1)v*pi/(2p))
    with a(0) = 1/sqrt(2) and a(k) = 1 otherwise. The first column is the
    constant atom 1/p; P^T P = I to machine precision.
    """
    if p < 1 or p % 2 == 0:
        raise ValueError(f"p must be odd and >= 1, got {p}")
    x = np.arange(p)
    u = np.arange(p)
    c1 = np.sqrt(2.0 / p) * np.cos((2 * x[:, None] + 1) * u[None, :] * np.pi / (2 * p))
    c1[:, 0] /= np.sqrt(2.0)
    return TransformBasis(np.kron(c1, c1))


def hard_shrink(x, lam):
    """Zero every value with |x| <= lam (the boundary is killed), keep the rest.

    `lam` may be a scalar or an array of per-coefficient thresholds broadcast
    against x.
    """
    x = np.asarray(x, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0):
        raise ValueError("lam must be >= 0")
    out = np.where(np.abs(x) > lam, x, 0.0)
    return float(out) if out.ndim == 0 else out


def _pow_int(base: np.ndarray, e: int, out: np.ndarray, tmp: np.ndarray) -> None:
    """out = base**e elementwise for integer e >= 1, by square-and-multiply.

    Exact for power-of-two bases at any e; far faster than a transcendental
    pow for the large even exponents used here. `base` is left untouched.
    """
    have = False
    np.copyto(tmp, base)
    while True:
        if e & 1:
            if have:
                np.multiply(out, tmp, out=out)
            else:
                np.copyto(out, tmp)
                have = True
        e >>= 1
        if e == 0:
            return
        np.multiply(tmp, tmp, out=tmp)


_CHUNK = 1 << 14


def _smooth_eval(
    x, lam, m, phi=None, zeta=None, phi_prime=None, zeta_prime=None, zeta_rowsum=None
):
    """Fill any subset of (phi, zeta, phi', zeta') for the smooth shrinkage.

    Shared kernel so every caller gets bit-identical values. Overflow-free:
    with g = min(r, 1/r)^(2m), r = |x|/lam, and h = 1/(1+g),
      zeta  = h if r > 1 else g*h
      phi   = x * zeta (exact identity by construction)
      phi'  = zeta + 2m * zeta*(1-zeta)
      zeta' = 2m * zeta*(1-zeta) / x, with the x = 0 limit 0,
    where zeta*(1-zeta) = g*h*h in both branches, avoiding cancellation.
    Processes cache-sized chunks; all outputs must be preallocated C-order
    arrays of x's shape. `zeta_rowsum`, if given for a 2-D x, receives the
    per-row sums of zeta without zeta itself ever being stored full-size.
    """
    flat = x.reshape(-1)
    n = flat.shape[0]
    row = 0
    if zeta_rowsum is not None:
        if x.ndim != 2:
            raise ValueError("zeta_rowsum requires 2-D input")
        row = x.shape[1]
    ch = min(_CHUNK, n)
    if row:
        ch = max(row, ch - ch % row)
    a, w, g, h, t, pr = (np.empty(ch) for _ in range(6))
    big = np.empty(ch, dtype=bool)
    phi_f = None if phi is None else phi.reshape(-1)
    zeta_f = None if zeta is None else zeta.reshape(-1)
    php_f = None if phi_prime is None else phi_prime.reshape(-1)
    ztp_f = None if zeta_prime is None else zeta_prime.reshape(-1)
    need_prod = php_f is not None or ztp_f is not None
    two_m = float(2 * m)
    for lo in range(0, n, ch):
        hi = min(lo + ch, n)
        k = hi - lo
        c = flat[lo:hi]
        ak, wk, gk, hk, tk, prk = a[:k], w[:k], g[:k], h[:k], t[:k], pr[:k]
        bk = big[:k]
        np.abs(c, out=ak)
        np.greater(ak, lam, out=bk)
        np.maximum(ak, lam, out=wk)
        np.minimum(ak, lam, out=ak)
        np.divide(ak, wk, out=wk)
        _pow_int(wk, 2 * m, out=gk, tmp=ak)
        np.add(gk, 1.0, out=hk)
        np.reciprocal(hk, out=hk)
        np.multiply(gk, hk, out=tk)
        if need_prod:
            np.multiply(tk, hk, out=prk)
        # branchless select: zeta = t + big*(h - t); the small branch stays
        # bitwise g*h (t untouched when big is false)
        zk = tk if zeta_f is None else zeta_f[lo:hi]
        np.subtract(hk, tk, out=gk)
        np.multiply(gk, bk, out=gk)
        np.add(tk, gk, out=zk)
        if row:
            np.sum(zk.reshape(-1, row), axis=1, out=zeta_rowsum[lo // row : hi // row])
        if phi_f is not None:
            np.multiply(c, zk, out=phi_f[lo:hi])
        if need_prod:
            np.multiply(prk, two_m, out=prk)
            if php_f is not None:
                np.add(zk, prk, out=php_f[lo:hi])
            if ztp_f is not None:
                zpk = ztp_f[lo:hi]
                np.equal(c, 0.0, out=bk)
                np.add(c, bk, out=hk)
                np.divide(prk, hk, out=zpk)
                np.logical_not(bk, out=bk)
                np.multiply(zpk, bk, out=zpk)


def smooth_indicator(x, spec: ShrinkSpec):
    """zeta_{m,lam}(x) = x^(2m) / (x^(2m) + lam^(2m)), evaluated overflow-free.

    Values lie in [0,1) for lam > 0 and converge pointwise to the indicator of
    |x| > lam as m grows. lam = 0 returns the exact indicator of x != 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if spec.m < 1:
        raise ValueError("smooth_indicator requires m >= 1")
    if spec.lam == 0.0:
        out = (x != 0.0).astype(np.float64)
        return float(out) if out.ndim == 0 else out
    arr = np.ascontiguousarray(x.reshape(-1) if x.ndim == 0 else x)
    out = np.empty(arr.shape)
    _smooth_eval(arr, spec.lam, spec.m, zeta=out)
    return float(out.reshape(-1)[0]) if x.ndim == 0 else out.reshape(x.shape)


def smooth_shrink(x, spec: ShrinkSpec):
    """phi_{m,lam}(x) = x^(2m+1) / (x^(2m) + lam^(2m)) = x * zeta_{m,lam}(x).

    Odd in x, |phi(x)| <= |x|, and phi(0) = 0 by definition even when lam = 0.
    Computed as x times smooth_indicator, which keeps the identity
    phi = x * zeta exact in floating point.
    """
    x = np.asarray(x, dtype=np.float64)
    out = x * smooth_indicator(x, spec)
    return float(out) if out.ndim == 0 else out


def shrink_with_grads(x: np.ndarray, lam: float, m: int, out=None):
    """Evaluate (phi, zeta, phi', zeta') of the smooth shrinkage in one pass.

    phi'  = zeta * (1 + 2m*(1 - zeta))
    zeta' = 2m * zeta*(1 - zeta) / x, with the x = 0 limit 0
    `out`, if given, is a 4-tuple of preallocated arrays of x's shape that
    receive the results (a training-loop allocation saver).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if m < 1:
        raise ValueError("shrink_with_grads requires m >= 1")
    if out is None:
        out = tuple(np.empty(x.shape) for _ in range(4))
    phi, zeta, phi_prime, zeta_prime = out
    if lam == 0.0:
        np.copyto(phi, x)
        np.copyto(zeta, x != 0.0)
        phi_prime.fill(1.0)
        zeta_prime.fill(0.0)
        return phi, zeta, phi_prime, zeta_prime
    _smooth_eval(x, lam, m, phi=phi, zeta=zeta, phi_prime=phi_prime, zeta_prime=zeta_prime)
    return phi, zeta, phi_prime, zeta_prime


def apply_shrink(x: np.ndarray, spec: ShrinkSpec) -> np.ndarray:
    """Dispatch on spec.m: exact hard shrink for m = 0, smooth surrogate otherwise."""
    if spec.m == 0:
        return hard_shrink(x, spec.lam)
    return smooth_shrink(x, spec)


def rescale_basis(basis: TransformBasis, c: float, c_new: float) -> TransformBasis:
    """Return Q = (c/c_new) * P, which moves a threshold multiplier into the basis:
    Q * phi_{c_new*s}(Q^-1 y) = P * phi_{c*s}(P^-1 y) for every y and s > 0."""
    if c <= 0 or c_new <= 0:
        raise ValueError("threshold multipliers must be > 0")
    if c == c_new:
        return basis
    return TransformBasis(basis.mat * (c / c_new))


def fold_thresholds(basis: TransformBasis, tv: np.ndarray) -> TransformBasis:
    """Fold per-coefficient thresholds into the basis: returns P @ diag(tv).

    Denoising with the folded basis at unit threshold multiplier reproduces
    denoising with P under per-coefficient thresholds tv_i * s:
    P * phi_{tv*s}(P^-1 y) = (P Lam) * phi_s((P Lam)^-1 y).
    """
    tv = np.asarray(tv, dtype=np.float64)
    n = basis.mat.shape[0]
    if tv.shape != (n,):
        raise ValueError(f"threshold vector must have shape ({n},)")
    if np.any(tv <= 0):
        raise ValueError("thresholds must be strictly positive")
    return TransformBasis(basis.mat * tv[None, :])


def matrix_sqrt_spd(a: np.ndarray) -> np.ndarray:
    """Symmetric positive-definite square root via eigendecomposition."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("input must be square")
    scale = np.max(np.abs(a)) or 1.0
    if np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise ValueError("input must be symmetric")
    vals, vecs = np.linalg.eigh((a + a.T) / 2.0)
    if vals[0] <= 0:
        raise ValueError(f"input must be positive definite (min eigenvalue {vals[0]:.2e})")
    return (vecs * np.sqrt(vals)) @ vecs.T


def orthonormal_param(m: np.ndarray) -> np.ndarray:
    """Map an invertible matrix to the orthonormal Q = M (sqrt(M^T M))^-1.

    Surjective onto orthonormal matrices and the identity on them, so an
    unconstrained M can parameterize the orthonormal set.
    """
    m = np.asarray(m, dtype=np.float64)
    gram = m.T @ m
    vals = np.linalg.eigvalsh((gram + gram.T) / 2.0)
    if vals[0] <= 0 or vals[0] < 1e-24 * vals[-1]:
        raise ValueError("matrix is singular or too ill-conditioned")
    root = matrix_sqrt_spd(gram)
    # M @ root^-1 without forming the inverse: (root^-1 M^T)^T, root symmetric
    return np.linalg.solve(root, m.T).T


def nearest_orthonormal(p: np.ndarray) -> np.ndarray:
    """Closest orthonormal matrix in Frobenius distance: U V^T from P = U S V^T."""
    p = np.asarray(p, dtype=np.float64)
    u, s, vt = np.linalg.svd(p)
    if s[-1] <= 1e-14 * s[0]:
        raise ValueError("rank-deficient input has no unique nearest orthonormal matrix")
    return u @ vt


def orthogonal_to_orthonormal(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a matrix with diagonal Gram P^T P = D into (Q, tv).

    Q = P (sqrt(D))^-1 is orthonormal and tv_i = sqrt(D_ii), so that folding tv
    back into Q (column scaling) recovers P and its denoising behavior.
    """
    p = np.asarray(p, dtype=np.float64)
    gram = p.T @ p
    diag = np.diag(gram).copy()
    off = gram - np.diag(diag)
    if np.max(np.abs(off)) >= 1e-8 * np.max(np.abs(diag)):
        raise ValueError("P^T P is not diagonal within tolerance")
    if np.any(diag <= 0):
        raise ValueError("P^T P has a nonpositive diagonal entry")
    tv = np.sqrt(diag)
    return p / tv[None, :], tv


def orthogonality_energy(p: np.ndarray) -> float:
    """Diagonal share of the Gram matrix energy: sum G_ii^2 / sum G_ij^2, G = P^T P.

    Equals 1.0 exactly for orthonormal (or any orthogonal) P and decays toward 0
    as columns lose orthogonality.
    """
    p = np.asarray(p, dtype=np.float64)
    gram = p.T @ p
    total = float(np.sum(gram * gram))
    if total == 0.0:
        return 0.0
    return float(np.sum(np.diag(gram) ** 2) / total)
