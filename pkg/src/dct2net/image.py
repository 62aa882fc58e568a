"""Grayscale image I/O, synthetic noise, quality metrics, and patch geometry.

Images are 2-D float64 arrays on the 0-255 scale throughout the package.
Values may leave [0,255] in intermediate results (noise, sliding-window sums);
clamping happens only when a file is written.
"""

from __future__ import annotations

import numpy as np
from PIL import Image as _PILImage


class ImageFormatError(ValueError):
    """Unreadable or unsupported image file."""


def _parse_pgm_tokens(data: bytes, count: int, pos: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated integers, honoring '#' comments."""
    tokens: list[int] = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if pos == start:
            raise ImageFormatError("truncated PGM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise ImageFormatError("malformed PGM header") from None
    return tokens, pos


def _read_pgm(data: bytes) -> np.ndarray:
    if not data.startswith(b"P5"):
        raise ImageFormatError("not a binary PGM (P5) file")
    (width, height, maxval), pos = _parse_pgm_tokens(data, 3, 2)
    if maxval != 255:
        raise ImageFormatError(f"unsupported PGM maxval {maxval}, expected 255")
    if width < 1 or height < 1:
        raise ImageFormatError("invalid PGM dimensions")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) < width * height:
        raise ImageFormatError("truncated PGM raster")
    return (
        np.frombuffer(raster, dtype=np.uint8)
        .reshape(height, width)
        .astype(np.float64)
    )


def _read_png(path: str) -> np.ndarray:
    try:
        with _PILImage.open(path) as im:
            if im.mode != "L":
                raise ImageFormatError(
                    f"unsupported PNG mode {im.mode!r}, expected 8-bit grayscale (L)"
                )
            return np.asarray(im, dtype=np.float64)
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"unreadable PNG: {exc}") from exc


def read_image(path: str) -> np.ndarray:
    """Read an 8-bit grayscale image (binary PGM or PNG) as float64 in [0,255].

    The format is sniffed from the file's magic bytes, not its extension.
    Raises ImageFormatError for color, non-8-bit, or malformed files.
    """
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"P5":
        with open(path, "rb") as fh:
            return _read_pgm(fh.read())
    if head == b"\x89P":
        return _read_png(path)
    raise ImageFormatError(f"unrecognized image format in {path!r}")


def quantize(img: np.ndarray) -> np.ndarray:
    """Clamp to [0,255] and round half away from zero, as done at file write."""
    clipped = np.clip(np.asarray(img, dtype=np.float64), 0.0, 255.0)
    # all values nonnegative after clipping, so floor(x + 0.5) rounds half up
    return np.floor(clipped + 0.5)


def write_image(img: np.ndarray, path: str) -> None:
    """Write as 8-bit grayscale PGM (.pgm/.pnm) or PNG (.png) after quantize()."""
    img = np.atleast_2d(np.asarray(img, dtype=np.float64))
    data = quantize(img).astype(np.uint8)
    lower = path.lower()
    if lower.endswith((".pgm", ".pnm")):
        height, width = data.shape
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (width, height))
            fh.write(data.tobytes())
    elif lower.endswith(".png"):
        _PILImage.fromarray(data, mode="L").save(path, format="PNG")
    else:
        raise ImageFormatError(f"unsupported output extension in {path!r}")


def add_gaussian_noise(img: np.ndarray, sigma: float, seed) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise with standard deviation `sigma`.

    Deterministic for a fixed seed: samples come from NumPy's PCG64 generator
    via Generator.standard_normal (ziggurat method). `seed` may be an int or a
    numpy SeedSequence.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    img = np.asarray(img, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return img + sigma * rng.standard_normal(img.shape)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio 10*log10(peak^2 / MSE); +inf when MSE is 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def half_width(p: int) -> int:
    """Half side q = (p-1)/2 of an odd patch size p."""
    if p < 3 or p % 2 == 0:
        raise ValueError(f"patch side must be odd and >= 3, got {p}")
    return (p - 1) // 2


def patch_index(i: int, j: int, p: int) -> int:
    """1-based position of center offset (i, j) in a row-major p*p patch vector.

    Offsets are taken from the patch center, -q <= i, j <= q, and the returned
    index is (q-i)*p + (q-j) + 1: offset (q, q) maps to 1, (0, 0) to the patch
    center, (-q, -q) to p*p.
    """
    q = half_width(p)
    if not (-q <= i <= q and -q <= j <= q):
        raise ValueError(f"offset ({i}, {j}) outside [-{q}, {q}]^2")
    return (q - i) * p + (q - j) + 1


def reflect_pad(img: np.ndarray, border: int) -> np.ndarray:
    """Mirror-pad without repeating the edge pixel: [1,2,3], border 1 -> [2,1,2,3,2]."""
    img = np.asarray(img, dtype=np.float64)
    if border < 0:
        raise ValueError("border must be >= 0")
    if border == 0:
        return img.copy()
    if border >= min(img.shape):
        raise ValueError(
            f"border {border} too large for {img.shape[0]}x{img.shape[1]} image"
        )
    return np.pad(img, border, mode="reflect")
