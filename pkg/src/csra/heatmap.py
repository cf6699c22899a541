"""Attention heatmaps as portable pixmaps (P5 grayscale, P6 color)."""

from pathlib import Path

import numpy as np

from .attention import attention_scores, raw_scores
from .errors import DimensionError, ParameterError
from .io import _atomic_write

MODES = ("bilinear", "nearest")

# Jet-like colormap: (position, RGB) stops, linearly interpolated into a LUT.
COLORMAP_STOPS = (
    (0.000, (0, 0, 128)),
    (0.125, (0, 0, 255)),
    (0.375, (0, 255, 255)),
    (0.625, (255, 255, 0)),
    (0.875, (255, 0, 0)),
    (1.000, (128, 0, 0)),
)


def _build_lut():
    pos = np.array([p for p, _ in COLORMAP_STOPS])
    rgb = np.array([c for _, c in COLORMAP_STOPS], dtype=np.float64)
    t = np.arange(256) / 255.0
    lut = np.stack([np.interp(t, pos, rgb[:, c]) for c in range(3)], axis=1)
    return np.floor(lut + 0.5).astype(np.uint8)


COLORMAP = _build_lut()


def _source_coords(out, n):
    # half-pixel centres, clamped to the grid
    src = (np.arange(out) + 0.5) * (n / out) - 0.5
    src = np.clip(src, 0.0, n - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    return lo, hi, src - lo


def resize(grid, size, mode="bilinear"):
    """Resize a 2-D float grid to ``size = (height, width)``."""
    grid = np.asarray(grid, dtype=np.float64)
    H, W = size
    if H < 1 or W < 1:
        raise ParameterError(f"output size must be positive, got {size}")
    h, w = grid.shape
    if mode == "nearest":
        ys = np.minimum(((np.arange(H) + 0.5) * h / H).astype(np.int64), h - 1)
        xs = np.minimum(((np.arange(W) + 0.5) * w / W).astype(np.int64), w - 1)
        return grid[ys[:, None], xs[None, :]]
    if mode != "bilinear":
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    y0, y1, fy = _source_coords(H, h)
    x0, x1, fx = _source_coords(W, w)
    fy, fx = fy[:, None], fx[None, :]
    top = (1 - fx) * grid[y0[:, None], x0[None, :]] + fx * grid[y0[:, None], x1[None, :]]
    bot = (1 - fx) * grid[y1[:, None], x0[None, :]] + fx * grid[y1[:, None], x1[None, :]]
    return (1 - fy) * top + fy * bot


def to_gray(values):
    """Min-max normalize to 0..255; a constant map becomes all zeros."""
    lo, hi = values.min(), values.max()
    if not hi > lo:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = (values - lo) / (hi - lo) * 255.0
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def render(attention_row, h, w, size, mode="bilinear"):
    """Grayscale image of one attention row laid out row-major on an h x w grid."""
    row = np.asarray(attention_row, dtype=np.float64)
    if row.shape != (h * w,):
        raise DimensionError(f"attention row of length {row.size} does not fit {h}x{w}")
    return to_gray(resize(row.reshape(h, w), size, mode))


def colorize(gray):
    return COLORMAP[gray]


def encode_pnm(img):
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise DimensionError(f"image must be (H, W) or (H, W, 3), got {img.shape}")
    H, W = img.shape[:2]
    return magic + f"\n{W} {H}\n255\n".encode("ascii") + img.tobytes()


def write_pnm(path, img):
    _atomic_write(Path(path), encode_pnm(img))


def attention_image(x, model, class_index, size, head=0, mode="bilinear", color=False):
    """Heatmap of class ``class_index`` from head ``head`` for one feature tensor."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionError(f"feature tensor must be (d, h, w), got {x.shape}")
    if not 0 <= head < model.config.H:
        raise IndexError(f"head {head} out of range for H={model.config.H}")
    W = model.heads[head]
    if not 0 <= class_index < W.shape[0]:
        raise IndexError(f"class index {class_index} out of range for {W.shape[0]} classes")
    A = attention_scores(raw_scores(x, W), model.config.temperatures[head])
    gray = render(A[class_index], x.shape[1], x.shape[2], size, mode)
    return colorize(gray) if color else gray
