"""Forward denoising paths and model persistence.

Both denoisers share the same per-window math: vectorize every p x p window of
the mirror-padded image row-major, analyze with P^-1, shrink, reconstruct with
P, then average each pixel's p^2 estimates (uniformly or weighted by sparsity).
The image is padded by 2q = p-1 so that every original pixel is covered by
exactly p^2 windows and the per-pixel normalizer never degenerates.

dct_denoise aggregates by gathering estimates per output pixel; dct2net_forward
aggregates by scattering per-window estimates into accumulators (the
transposed-convolution view of the same sum). The two orders agree to well
below 1e-8, which is itself a tested property.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import reflect_pad
from .transform import (
    ShrinkSpec,
    TransformBasis,
    apply_shrink,
    dct_basis,
    smooth_indicator,
    smooth_shrink,
)

DEFAULT_LAM_MULT = 3.0

MODEL_MAGIC = b"DCT2NET1"
MODEL_VERSION = 1

# target element count per streamed block of window rows (keeps peak memory flat)
_BLOCK_ELEMS = 6_000_000


class ModelFormatError(ValueError):
    """Corrupt, truncated, or inconsistent model file."""


@dataclass(eq=False)
class DenoiserModel:
    """A learned (or fixed) transform plus the settings it was trained with."""

    basis: TransformBasis
    p: int
    m: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.basis.p != self.p:
            raise ValueError(f"basis side {self.basis.p} != model p {self.p}")
        if self.p % 2 == 0 or self.p < 3:
            raise ValueError("p must be odd and >= 3")
        if self.m < 0:
            raise ValueError("m must be >= 0")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DenoiserModel)
            and self.p == other.p
            and self.m == other.m
            and self.meta == other.meta
            and np.array_equal(self.basis.mat, other.basis.mat)
        )


def dct_model(p: int, m: int = 32, meta: dict | None = None) -> DenoiserModel:
    """Untrained model: the orthonormal cosine basis for side p."""
    return DenoiserModel(dct_basis(p), p, m, dict(meta or {}))


def adaptive_weight(coeffs: np.ndarray) -> float:
    """Sparsity weight (1 + number of nonzero coefficients)^-1, in (0, 1]."""
    return 1.0 / (1.0 + np.count_nonzero(coeffs))


def _window_stack(padded: np.ndarray, p: int) -> np.ndarray:
    """View of all p x p windows as (rows, cols, p, p), top-left indexed."""
    return sliding_window_view(padded, (p, p))


def _row_blocks(n_rows: int, cols: int, p: int):
    blk = max(1, _BLOCK_ELEMS // max(1, cols * p * p))
    for start in range(0, n_rows, blk):
        yield start, min(start + blk, n_rows)


def _shrink_and_weigh(
    coeffs: np.ndarray, spec: ShrinkSpec, smooth_weights: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Shrunk coefficients and per-window aggregation weights.

    Hard path: exact nonzero count. Smooth path: the count is replaced by the
    sum of smooth indicator values, the differentiable surrogate used while
    training.
    """
    if smooth_weights:
        if spec.m < 1:
            raise ValueError("smooth weights require m >= 1")
        zeta = smooth_indicator(coeffs, spec)
        shrunk = coeffs * zeta
        counts = zeta.sum(axis=-1)
    else:
        shrunk = apply_shrink(coeffs, spec)
        counts = np.count_nonzero(shrunk, axis=-1).astype(np.float64)
    return shrunk, 1.0 / (1.0 + counts)


def _reconstruction_stack(
    padded: np.ndarray,
    basis: TransformBasis,
    spec: ShrinkSpec,
    smooth_weights: bool,
    uniform: bool,
):
    """Per-window reconstructions (rows, cols, p^2) and weights (rows, cols)."""
    p = basis.p
    windows = _window_stack(padded, p)
    rows, cols = windows.shape[:2]
    recon = np.empty((rows, cols, p * p))
    weights = np.ones((rows, cols))
    for lo, hi in _row_blocks(rows, cols, p):
        vec = windows[lo:hi].reshape(-1, p * p)
        coeffs = vec @ basis.inv.T
        shrunk, w = _shrink_and_weigh(coeffs, spec, smooth_weights)
        recon[lo:hi] = (shrunk @ basis.mat.T).reshape(hi - lo, cols, p * p)
        if not uniform:
            weights[lo:hi] = w.reshape(hi - lo, cols)
    return recon, weights


def dct_denoise(
    img: np.ndarray,
    sigma: float,
    basis: TransformBasis,
    mode: str = "adaptive",
    shrink: ShrinkSpec | None = None,
) -> np.ndarray:
    """Sliding-window transform denoiser with per-pixel gather aggregation.

    Every pixel averages the p^2 estimates it receives from the windows
    containing it; "uniform" weights them equally, "adaptive" weights each
    window by (1 + number of surviving coefficients)^-1. The threshold
    defaults to 3*sigma with exact hard shrinkage.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if mode not in ("uniform", "adaptive"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    if shrink is None:
        shrink = ShrinkSpec(DEFAULT_LAM_MULT * sigma, 0)
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    p = basis.p
    q = (p - 1) // 2
    padded = reflect_pad(img, 2 * q)
    recon, weights = _reconstruction_stack(
        padded, basis, shrink, smooth_weights=False, uniform=(mode == "uniform")
    )
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for di in range(p):
        for dj in range(p):
            idx = (p - 1 - di) * p + (p - 1 - dj)
            wslice = weights[di : di + h, dj : dj + w]
            num += wslice * recon[di : di + h, dj : dj + w, idx]
            den += wslice
    return num / den


def dct2net_forward(
    img: np.ndarray,
    sigma: float,
    model: DenoiserModel,
    phase: str = "eval",
    lam_mult: float = DEFAULT_LAM_MULT,
) -> np.ndarray:
    """Learned-transform denoiser forward pass with scatter aggregation.

    phase="eval" uses exact hard shrinkage and exact nonzero counts;
    phase="train" uses the smooth shrinkage of order model.m and replaces the
    count with the sum of smooth indicator values so the whole pass is
    differentiable. With model.basis equal to the cosine basis, the eval phase
    reproduces dct_denoise(mode="adaptive") to well below 1e-8.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if phase not in ("train", "eval"):
        raise ValueError(f"unknown phase {phase!r}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    p = model.p
    q = (p - 1) // 2
    smooth = phase == "train"
    spec = ShrinkSpec(lam_mult * sigma, model.m if smooth else 0)
    padded = reflect_pad(img, 2 * q)
    basis = model.basis
    windows = _window_stack(padded, p)
    rows, cols = windows.shape[:2]
    num = np.zeros(padded.shape)
    den = np.zeros(padded.shape)
    for lo, hi in _row_blocks(rows, cols, p):
        vec = windows[lo:hi].reshape(-1, p * p)
        coeffs = vec @ basis.inv.T
        shrunk, wts = _shrink_and_weigh(coeffs, spec, smooth)
        recon = (shrunk @ basis.mat.T).reshape(hi - lo, cols, p * p)
        wblk = wts.reshape(hi - lo, cols)
        for u in range(p):
            for v in range(p):
                num[lo + u : hi + u, v : v + cols] += wblk * recon[:, :, u * p + v]
                den[lo + u : hi + u, v : v + cols] += wblk
    core = slice(2 * q, 2 * q + h), slice(2 * q, 2 * q + w)
    return num[core] / den[core]


def patch_forward(
    img: np.ndarray,
    sigma: float,
    model: DenoiserModel,
    phase: str = "eval",
    lam_mult: float = DEFAULT_LAM_MULT,
) -> np.ndarray:
    """Per-window reconstructions without aggregation.

    The input is used as given (no padding): the result has shape
    (H-p+1, W-p+1, p^2), one reconstructed patch per window position. To
    reproduce the aggregated denoiser, run this on an image pre-padded by p-1
    and average the overlapping estimates.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if phase not in ("train", "eval"):
        raise ValueError(f"unknown phase {phase!r}")
    img = np.asarray(img, dtype=np.float64)
    p = model.p
    if img.shape[0] < p or img.shape[1] < p:
        raise ValueError(f"image smaller than one {p}x{p} patch")
    lam = lam_mult * sigma
    basis = model.basis
    windows = _window_stack(img, p)
    rows, cols = windows.shape[:2]
    out = np.empty((rows, cols, p * p))
    for lo, hi in _row_blocks(rows, cols, p):
        vec = windows[lo:hi].reshape(-1, p * p)
        coeffs = vec @ basis.inv.T
        if phase == "train":
            shrunk = smooth_shrink(coeffs, ShrinkSpec(lam, model.m))
        else:
            shrunk = apply_shrink(coeffs, ShrinkSpec(lam, 0))
        out[lo:hi] = (shrunk @ basis.mat.T).reshape(hi - lo, cols, p * p)
    return out


def clean_patches(img: np.ndarray, p: int) -> np.ndarray:
    """Row-major patch vectors of an image, shape (H-p+1, W-p+1, p^2)."""
    img = np.asarray(img, dtype=np.float64)
    return _window_stack(img, p).reshape(
        img.shape[0] - p + 1, img.shape[1] - p + 1, p * p
    )


def save_model(model: DenoiserModel, path: str) -> None:
    """Serialize magic + length-prefixed JSON header + row-major float64 matrix."""
    header = json.dumps(
        {"version": MODEL_VERSION, "p": model.p, "m": model.m, "meta": model.meta},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    mat = np.ascontiguousarray(model.basis.mat, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(mat.tobytes(order="C"))


def load_model(path: str) -> DenoiserModel:
    """Inverse of save_model; round-trips the matrix bit-exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MODEL_MAGIC) + 4 or not blob.startswith(MODEL_MAGIC):
        raise ModelFormatError("bad magic: not a model file")
    off = len(MODEL_MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    if len(blob) < off + hlen:
        raise ModelFormatError("truncated model header")
    try:
        header = json.loads(blob[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model header: {exc}") from exc
    off += hlen
    if header.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {header.get('version')!r}")
    p = header.get("p")
    m = header.get("m")
    if not isinstance(p, int) or not isinstance(m, int):
        raise ModelFormatError("model header missing integer p/m")
    expected = p * p * p * p * 8
    payload = blob[off:]
    if len(payload) != expected:
        raise ModelFormatError(
            f"matrix payload is {len(payload)} bytes, expected {expected} for p={p}"
        )
    mat = np.frombuffer(payload, dtype="<f8").reshape(p * p, p * p)
    try:
        basis = TransformBasis(mat)
    except ValueError as exc:
        raise ModelFormatError(f"invalid transform in model file: {exc}") from exc
    return DenoiserModel(basis, p, m, header.get("meta") or {})
