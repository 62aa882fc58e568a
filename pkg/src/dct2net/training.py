"""Gradient-based learning of the transform matrix.

The forward pass (analysis by P^-1, smooth shrinkage, synthesis by P, smooth
sparsity weights, normalized scatter aggregation) is differentiated by hand in
reverse mode; the only nontrivial adjoints are the matrix inverse,
d(P^-1) = -P^-1 dP P^-1, and the eigendecomposition-based square root used by
the orthonormal parameterization. Everything runs in float64 and is verified
against central finite differences before any training result is trusted.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .denoise import DEFAULT_LAM_MULT, DenoiserModel, dct2net_forward
from .image import add_gaussian_noise, psnr, reflect_pad
from .transform import (
    TransformBasis,
    _smooth_eval,
    dct_basis,
    orthonormal_param,
    shrink_with_grads,
)

LOSSES = ("mse", "masked", "ortho_reg", "patch_target", "ortho_param")

# crops drawn per training image per epoch; steps/epoch = ceil(665*n/batch)
CROPS_PER_IMAGE = 665


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of a training run in one record."""

    epochs: int = 15
    batch: int = 32
    crop: int = 128
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    m: int = 32
    sigma_range: tuple[float, float] = (1.0, 55.0)
    seed: int = 0
    p: int = 13
    loss: str = "mse"
    beta: float = 0.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not (self.lr_start >= self.lr_end > 0):
            raise ValueError("need lr_start >= lr_end > 0")
        if self.m < 1:
            raise ValueError("training requires smooth shrinkage, m >= 1")
        lo, hi = self.sigma_range
        if not (0 < lo <= hi < 255):
            raise ValueError("sigma_range must satisfy 0 < lo <= hi < 255")
        if self.p < 3 or self.p % 2 == 0:
            raise ValueError("p must be odd and >= 3")
        if self.crop < self.p:
            raise ValueError("crop must be at least p")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass
class GradReport:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_err: float


@dataclass
class AdamState:
    """First/second moment estimates and step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape))


def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Sum of squared differences (a sum, not a mean; the lr absorbs the scale)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.sum((pred - target) ** 2))


def loss_masked(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """Squared error restricted to mask = 1 pixels."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not (pred.shape == target.shape == mask.shape):
        raise ValueError("pred, target and mask must share a shape")
    return float(np.sum(mask * (pred - target) ** 2))


def loss_ortho_penalty(p_mat: np.ndarray, beta: float) -> float:
    """beta times the entrywise l1 norm of (I - P^T P)."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    p_mat = np.asarray(p_mat, dtype=np.float64)
    eye = np.eye(p_mat.shape[0])
    return float(beta * np.sum(np.abs(eye - p_mat.T @ p_mat)))


def loss_patch_target(stack: np.ndarray, clean_stack: np.ndarray) -> float:
    """Squared error summed over all patches and entries."""
    stack = np.asarray(stack, dtype=np.float64)
    clean_stack = np.asarray(clean_stack, dtype=np.float64)
    if stack.shape != clean_stack.shape:
        raise ValueError(f"shape mismatch: {stack.shape} vs {clean_stack.shape}")
    return float(np.sum((stack - clean_stack) ** 2))


def _dihedral(a: np.ndarray, k: int) -> np.ndarray:
    """The 8 axis-aligned symmetries; k = 0 is the identity."""
    if not 0 <= k <= 7:
        raise ValueError("augmentation id must be in 0..7")
    out = np.rot90(a, k % 4)
    if k >= 4:
        out = np.fliplr(out)
    return np.ascontiguousarray(out)


def sample_batch(dataset, cfg: TrainConfig, step_seed) -> list:
    """Draw cfg.batch elements (noisy, clean, sigma, mask-or-None).

    Each element: a random crop of a random dataset image, one of the 8
    dihedral augmentations, sigma uniform over cfg.sigma_range, Gaussian noise.
    Dataset entries are either images or (image, mask) pairs; masks are cropped
    and augmented together with the image but never get noise. The whole batch
    is a pure function of step_seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(step_seed))
    lo, hi = cfg.sigma_range
    batch = []
    for _ in range(cfg.batch):
        entry = dataset[rng.integers(len(dataset))]
        img, mask = entry if isinstance(entry, tuple) else (entry, None)
        h, w = img.shape
        if h < cfg.crop or w < cfg.crop:
            raise ValueError(f"image {h}x{w} smaller than crop {cfg.crop}")
        r = int(rng.integers(h - cfg.crop + 1))
        c = int(rng.integers(w - cfg.crop + 1))
        k = int(rng.integers(8))
        clean = _dihedral(img[r : r + cfg.crop, c : c + cfg.crop], k)
        mcrop = None
        if mask is not None:
            mcrop = _dihedral(mask[r : r + cfg.crop, c : c + cfg.crop], k)
        sigma = float(rng.uniform(lo, hi))
        noisy = clean + sigma * rng.standard_normal(clean.shape)
        batch.append((noisy, clean, sigma, mcrop))
    return batch


def adam_step(p_mat: np.ndarray, grad: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected update; returns the new matrix and state."""
    if p_mat.shape != grad.shape or p_mat.shape != state.m.shape:
        raise ValueError("parameter, gradient and state shapes must match")
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    new_p = p_mat - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_p, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


class _Workspace:
    """Named reusable buffers; training reuses them across batch elements."""

    __slots__ = ("bufs",)

    def __init__(self):
        self.bufs = {}

    def arr(self, key: str, shape) -> np.ndarray:
        shape = tuple(shape)
        buf = self.bufs.get(key)
        if buf is None or buf.shape != shape:
            buf = np.empty(shape)
            self.bufs[key] = buf
        return buf


def _aggregated_backward(noisy, clean, sigma, p_mat, b_mat, cfg, mask, ws):
    """Loss and dL/dP for one element of the aggregated (image-level) losses.

    Forward: pad by 2q, per-window coefficients C = V B^T (B = P^-1), smooth
    shrinkage phi and indicator zeta, reconstructions R = phi(C) P^T, weights
    w = 1/(1 + sum zeta), scatter-normalized average, crop, squared error.
    Reverse: unwind the division, the scatter (a windowed gather of the
    accumulator adjoints), the weight path, the shrinkage, and both matrix
    products, with dB folded back through d(P^-1) = -B^T dL/dB B^T.
    Heavily buffer-reusing and in-place: this is the whole training budget.
    """
    p = cfg.p
    pp = p * p
    q = (p - 1) // 2
    rows, cols = noisy.shape
    lam = DEFAULT_LAM_MULT * sigma
    padded = reflect_pad(noisy, 2 * q)
    hr = padded.shape[0] - p + 1
    wc = padded.shape[1] - p + 1
    n_win = hr * wc

    win = ws.arr("win", (hr, wc, p, p))
    np.copyto(win, sliding_window_view(padded, (p, p)))
    vec = win.reshape(n_win, pp)
    coeffs = ws.arr("coeffs", (n_win, pp))
    np.matmul(vec, b_mat.T, out=coeffs)
    phi = ws.arr("phi", (n_win, pp))
    phi_prime = ws.arr("php", (n_win, pp))
    zeta_prime = ws.arr("ztp", (n_win, pp))
    weights = ws.arr("wsum", (n_win,))
    if lam == 0.0:
        np.copyto(phi, coeffs)
        phi_prime.fill(1.0)
        zeta_prime.fill(0.0)
        np.copyto(weights, np.count_nonzero(coeffs, axis=1))
    else:
        # zeta itself is never materialized: its row sums land in `weights`
        _smooth_eval(
            coeffs, lam, cfg.m,
            phi=phi, phi_prime=phi_prime, zeta_prime=zeta_prime, zeta_rowsum=weights,
        )
    np.add(weights, 1.0, out=weights)
    np.reciprocal(weights, out=weights)
    # coeffs is dead from here on; reuse its buffer for recon, later d_phi
    recon = coeffs
    np.matmul(phi, p_mat.T, out=recon)

    wgrid = weights.reshape(hr, wc)
    rgrid = recon.reshape(hr, wc, pp)
    num = ws.arr("num", padded.shape)
    num.fill(0.0)
    plane = ws.arr("plane", (hr, wc))
    for u in range(p):
        for v in range(p):
            np.multiply(wgrid, rgrid[:, :, u * p + v], out=plane)
            num[u : u + hr, v : v + wc] += plane
    # den is the correlation of wgrid with an all-ones window: separable sums
    rowacc = ws.arr("rowacc", (padded.shape[0], wc))
    rowacc.fill(0.0)
    for u in range(p):
        rowacc[u : u + hr] += wgrid
    den = ws.arr("den", padded.shape)
    den.fill(0.0)
    for v in range(p):
        den[:, v : v + wc] += rowacc

    core = slice(2 * q, 2 * q + rows), slice(2 * q, 2 * q + cols)
    out = num[core] / den[core]
    residual = out - clean
    if mask is not None:
        residual = mask * residual
    loss = float(np.sum(residual * residual))

    g_out = 2.0 * residual
    if mask is not None:
        g_out = mask * g_out
    g_num = ws.arr("g_num", padded.shape)
    g_num.fill(0.0)
    g_num[core] = g_out / den[core]
    g_den = ws.arr("g_den", padded.shape)
    g_den.fill(0.0)
    np.multiply(g_num[core], out, out=g_den[core])
    np.negative(g_den[core], out=g_den[core])
    gwin = ws.arr("gwin", (hr, wc, p, p))
    # gather g_num windows already scaled by w, so gn IS d_recon directly
    np.multiply(
        sliding_window_view(g_num, (p, p)), wgrid[:, :, None, None], out=gwin
    )
    gn = gwin.reshape(n_win, pp)
    # window sums of g_den, again separable
    colacc = ws.arr("colacc", (padded.shape[0], wc))
    colacc.fill(0.0)
    for v in range(p):
        colacc += g_den[:, v : v + wc]
    gdgrid = ws.arr("gdgrid", (hr, wc))
    gdgrid.fill(0.0)
    for u in range(p):
        gdgrid += colacc[u : u + hr]

    # d_s = -(w^2) * (sum_j recon*gn_raw + gd); with gn pre-scaled the row
    # dot already carries one factor of w, so scale gd once and w once more
    d_weight = ws.arr("dw", (n_win,))
    np.einsum("ij,ij->i", recon, gn, out=d_weight)
    gd = gdgrid.reshape(-1)
    np.multiply(gd, weights, out=gd)
    d_weight += gd
    np.multiply(d_weight, weights, out=d_weight)
    np.negative(d_weight, out=d_weight)
    d_phi = recon
    np.matmul(gn, p_mat, out=d_phi)
    # d_coeffs built in phi_prime's buffer
    np.multiply(phi_prime, d_phi, out=phi_prime)
    zeta_prime *= d_weight[:, None]
    phi_prime += zeta_prime
    d_coeffs = phi_prime

    d_p = np.matmul(gn.T, phi, out=ws.arr("dp", (pp, pp)))
    d_b = np.matmul(d_coeffs.T, vec, out=ws.arr("db", (pp, pp)))
    d_p -= b_mat.T @ d_b @ b_mat.T
    return loss, d_p


def _patch_backward(noisy, clean, sigma, p_mat, b_mat, cfg, ws):
    """Loss and dL/dP for one element of the patch-target loss.

    No padding and no aggregation: the targets are the clean image's own patch
    vectors, reconstruction error is summed over every window and entry.
    """
    p = cfg.p
    pp = p * p
    hr, wc = noisy.shape[0] - p + 1, noisy.shape[1] - p + 1
    n_win = hr * wc
    lam = DEFAULT_LAM_MULT * sigma
    win = ws.arr("win", (hr, wc, p, p))
    np.copyto(win, sliding_window_view(noisy, (p, p)))
    vec = win.reshape(n_win, pp)
    coeffs = ws.arr("coeffs", (n_win, pp))
    np.matmul(vec, b_mat.T, out=coeffs)
    phi = ws.arr("phi", (n_win, pp))
    phi_prime = ws.arr("php", (n_win, pp))
    if lam == 0.0:
        np.copyto(phi, coeffs)
        phi_prime.fill(1.0)
    else:
        _smooth_eval(coeffs, lam, cfg.m, phi=phi, phi_prime=phi_prime)
    recon = ws.arr("recon", (n_win, pp))
    np.matmul(phi, p_mat.T, out=recon)
    tgt = ws.arr("tgt", (hr, wc, p, p))
    np.copyto(tgt, sliding_window_view(clean, (p, p)))
    diff = recon
    diff -= tgt.reshape(n_win, pp)
    loss = float(np.einsum("ij,ij->", diff, diff))

    diff *= 2.0
    d_recon = diff
    d_phi = ws.arr("dphi", (n_win, pp))
    np.matmul(d_recon, p_mat, out=d_phi)
    np.multiply(phi_prime, d_phi, out=phi_prime)
    d_coeffs = phi_prime
    d_p = np.matmul(d_recon.T, phi, out=ws.arr("dp", (pp, pp)))
    d_b = np.matmul(d_coeffs.T, vec, out=ws.arr("db", (pp, pp)))
    d_p -= b_mat.T @ d_b @ b_mat.T
    return loss, d_p


def _ortho_param_backward(m_param: np.ndarray, g_wrt_p: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. P = M (sqrt(M^T M))^-1 back to M.

    Uses the eigendecomposition of A = M^T M; the square-root adjoint divides
    by sqrt(a_i) + sqrt(a_j), which is bounded away from zero for SPD A, so no
    special handling of close eigenvalues is needed.
    """
    gram = m_param.T @ m_param
    vals, vecs = np.linalg.eigh((gram + gram.T) / 2.0)
    if vals[0] <= 0:
        raise ValueError("parameter matrix is singular")
    sq = np.sqrt(vals)
    root = (vecs * sq) @ vecs.T
    root_inv = (vecs / sq) @ vecs.T
    g_m = g_wrt_p @ root_inv
    s_bar = -root_inv @ m_param.T @ g_wrt_p @ root_inv
    denom = sq[:, None] + sq[None, :]
    a_bar = vecs @ ((vecs.T @ s_bar @ vecs) / denom) @ vecs.T
    g_m += m_param @ (a_bar + a_bar.T)
    return g_m


def _grad_and_loss(batch, param: np.ndarray, cfg: TrainConfig, ws=None):
    """Total loss and gradient w.r.t. the trained matrix for one batch.

    For loss="ortho_param", `param` is the unconstrained matrix M and the
    forward pass runs with P = orthonormal_param(M); otherwise `param` is P
    itself. The ortho_reg penalty is added once per batch, not per element.
    """
    param = np.asarray(param, dtype=np.float64)
    if cfg.loss == "ortho_param":
        p_mat = orthonormal_param(param)
    else:
        p_mat = param
    b_mat = np.linalg.inv(p_mat)
    total_loss = 0.0
    total_grad = np.zeros_like(p_mat)
    if ws is None:
        ws = _Workspace()
    for noisy, clean, sigma, mask in batch:
        if cfg.loss == "patch_target":
            loss, grad = _patch_backward(noisy, clean, sigma, p_mat, b_mat, cfg, ws)
        else:
            elem_mask = mask if cfg.loss == "masked" else None
            loss, grad = _aggregated_backward(
                noisy, clean, sigma, p_mat, b_mat, cfg, elem_mask, ws
            )
        total_loss += loss
        total_grad += grad
    if cfg.loss == "ortho_reg" and cfg.beta > 0:
        eye = np.eye(p_mat.shape[0])
        gap = eye - p_mat.T @ p_mat
        total_loss += cfg.beta * float(np.sum(np.abs(gap)))
        sign = np.sign(gap)
        total_grad -= cfg.beta * (p_mat @ (sign + sign.T))
    if cfg.loss == "ortho_param":
        total_grad = _ortho_param_backward(param, total_grad)
    return total_loss, total_grad


def grad_wrt_basis(batch, param: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """Exact reverse-mode gradient of the configured loss for one batch.

    `param` is P, except for loss="ortho_param" where it is the unconstrained
    parameterization matrix M.
    """
    return _grad_and_loss(batch, param, cfg)[1]


def batch_loss(batch, param: np.ndarray, cfg: TrainConfig) -> float:
    """Forward-only loss of a batch (used by the finite-difference oracle)."""
    return _grad_and_loss(batch, param, cfg)[0]


def gradcheck(p: int, image: np.ndarray, sigma: float, cfg: TrainConfig) -> GradReport:
    """Compare the analytic gradient against central finite differences.

    Builds a one-element batch from `image` with seed-derived noise (and a
    seed-derived binary mask when the loss needs one), perturbs the trained
    matrix entry by entry with step 1e-5, and reports the maximum relative
    error over entries with |analytic| > 1e-6. The starting matrix is the
    cosine basis plus a small seeded perturbation, so the inverse path is
    exercised away from orthonormality.
    """
    cfg = replace(cfg, p=p, crop=min(cfg.crop, min(image.shape)))
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xC4EC)))
    noisy = add_gaussian_noise(image, sigma, np.random.SeedSequence((cfg.seed, 1)))
    mask = None
    if cfg.loss == "masked":
        mask = (rng.random(image.shape) < 0.5).astype(np.float64)
    batch = [(noisy, np.asarray(image, dtype=np.float64), sigma, mask)]
    n = p * p
    param = dct_basis(p).mat + 0.1 / n * rng.standard_normal((n, n))
    analytic = grad_wrt_basis(batch, param, cfg)
    numeric = np.zeros_like(analytic)
    h = 1e-5
    for i in range(n):
        for j in range(n):
            plus = param.copy()
            plus[i, j] += h
            minus = param.copy()
            minus[i, j] -= h
            numeric[i, j] = (batch_loss(batch, plus, cfg) - batch_loss(batch, minus, cfg)) / (
                2 * h
            )
    significant = np.abs(analytic) > 1e-6
    if not np.any(significant):
        return GradReport(analytic, numeric, 0.0)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.abs(analytic - numeric)[significant] / denom[significant]
    return GradReport(analytic, numeric, float(np.max(rel)))


def _split_validation(dataset) -> tuple[list, list]:
    """Hold out 5% (min 1) of the images, taken from the end of the list.

    A single-image dataset is reused for both roles so training stays possible.
    """
    items = list(dataset)
    if len(items) == 1:
        return items, items
    n_val = max(1, round(0.05 * len(items)))
    return items[:-n_val], items[-n_val:]


def _center_crop(img: np.ndarray, side: int) -> np.ndarray:
    h, w = img.shape
    if h <= side and w <= side:
        return img
    r = max(0, (h - side) // 2)
    c = max(0, (w - side) // 2)
    return img[r : r + min(side, h), c : c + min(side, w)]


def validation_psnr(val_images, p_mat, cfg: TrainConfig) -> float:
    """Mean eval-phase PSNR at sigma 25 on 256-crops of the held-out images."""
    model = DenoiserModel(TransformBasis(p_mat), cfg.p, cfg.m)
    scores = []
    for idx, img in enumerate(val_images):
        clean = _center_crop(img, 256)
        noisy = add_gaussian_noise(
            clean, 25.0, np.random.SeedSequence((cfg.seed, 10_000 + idx))
        )
        scores.append(psnr(dct2net_forward(noisy, 25.0, model, phase="eval"), clean))
    return float(np.mean(scores))


def _mask_for_image(img: np.ndarray, index: int, cfg: TrainConfig) -> np.ndarray:
    """Complex-region mask from a roughly denoised copy of the clean image.

    Computed once per clean image: add sigma-25 noise with a seed derived from
    (cfg.seed, image index), denoise with the cosine basis, run the edge
    classifier with default settings.
    """
    from .classify import CannyParams, canny_mask
    from .denoise import dct_denoise

    noisy = add_gaussian_noise(
        img, 25.0, np.random.SeedSequence((cfg.seed, 0x3A5C, index))
    )
    rough = dct_denoise(noisy, 25.0, dct_basis(cfg.p), mode="adaptive")
    return canny_mask(rough, CannyParams()).astype(np.float64)


def _run_training(dataset, cfg: TrainConfig, log, ortho_param_mode: bool):
    train_images, val_images = _split_validation(dataset)
    if cfg.loss == "masked":
        train_set = [
            (img, _mask_for_image(img, i, cfg)) for i, img in enumerate(train_images)
        ]
    else:
        train_set = list(train_images)
    steps_per_epoch = math.ceil(CROPS_PER_IMAGE * len(train_set) / cfg.batch)
    total_steps = cfg.epochs * steps_per_epoch
    param = dct_basis(cfg.p).mat.copy()
    state = AdamState.zeros(param.shape)
    decay = cfg.lr_end / cfg.lr_start
    ws = _Workspace()
    for step in range(total_steps):
        started = time.monotonic()
        lr = cfg.lr_start * decay ** (step / total_steps)
        batch = sample_batch(train_set, cfg, (cfg.seed, step))
        loss, grad = _grad_and_loss(batch, param, cfg, ws)
        param, state = adam_step(param, grad, state, lr)
        val = None
        if (step + 1) % steps_per_epoch == 0:
            basis_now = orthonormal_param(param) if ortho_param_mode else param
            val = validation_psnr(val_images, basis_now, cfg)
        if log is not None:
            log(
                {
                    "step": step,
                    "epoch": step // steps_per_epoch,
                    "lr": lr,
                    "loss": loss,
                    "val_psnr": val,
                    "wall_ms": (time.monotonic() - started) * 1000.0,
                }
            )
    final = orthonormal_param(param) if ortho_param_mode else param
    meta = {
        "loss": cfg.loss,
        "epochs": cfg.epochs,
        "batch": cfg.batch,
        "crop": cfg.crop,
        "sigma_range": list(cfg.sigma_range),
        "seed": cfg.seed,
        "lam_mult": DEFAULT_LAM_MULT,
        "train_images": len(train_set),
        "val_images": len(val_images),
        "steps": total_steps,
    }
    if cfg.loss == "ortho_reg":
        meta["beta"] = cfg.beta
    if cfg.loss == "masked":
        meta["mask_policy"] = "once-per-clean-image, sigma-25 rough denoise, seed-derived"
    return DenoiserModel(TransformBasis(final), cfg.p, cfg.m, meta)


def train(dataset, cfg: TrainConfig, log=None) -> DenoiserModel:
    """Learn the transform from clean images per the configured loss.

    Starts from the cosine basis, runs epochs x ceil(665*n/batch) steps of
    sample -> forward(train phase) -> gradient -> Adam with a per-step
    exponential lr schedule lr_start * (lr_end/lr_start)^(t/T). `log`, if
    given, receives one dict per step. epochs=0 returns the initialization.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if cfg.loss == "ortho_param":
        return _run_training(dataset, cfg, log, ortho_param_mode=True)
    return _run_training(dataset, cfg, log, ortho_param_mode=False)


def train_ortho_param(dataset, cfg: TrainConfig, log=None) -> DenoiserModel:
    """train() restricted to the orthonormal manifold via Q = M (sqrt(M^T M))^-1.

    The optimizer walks the unconstrained M; every forward pass and the
    returned model use the orthonormalized matrix, so the result satisfies
    Q^T Q = I to numerical precision by construction.
    """
    return train(dataset, replace(cfg, loss="ortho_param"), log)
