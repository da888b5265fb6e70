"""Per-frame and per-clip transforms: grayscale, resize, temporal sampling,
horizontal flip.  All pure; inputs are never modified."""

import numpy as np

from ..errors import ShapeError, TooShortError, ValidationError
from .clip import Clip

BT601 = (0.299, 0.587, 0.114)


def _check_unit_range(x, what):
    if x.size and (np.nanmin(x) < 0 or np.nanmax(x) > 1 or np.isnan(x).any()):
        raise ValidationError(f"{what} values must lie in [0, 1]")


def to_grayscale(rgb, weights=BT601):
    """Luma of a (3, H, W) frame, or of (T, 3, H, W) frames."""
    rgb = np.asarray(rgb, dtype=np.float32)
    if rgb.ndim not in (3, 4) or rgb.shape[-3] != 3:
        raise ShapeError(f"expected (3, H, W) or (T, 3, H, W), got {rgb.shape}")
    _check_unit_range(rgb, "RGB")
    r, g, b = (rgb[..., i, :, :] for i in range(3))
    wr, wg, wb = (np.float32(w) for w in weights)
    return np.clip(wr * r + wg * g + wb * b, 0, 1)


def _axis_weights(n_in, n_out):
    # half-pixel centres: source coordinate of output sample i is (i + 0.5) * n_in / n_out - 0.5
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize(frames, width, height):
    """Bilinear resize of (H, W) or (T, H, W) frames to ``height x width``."""
    frames = np.asarray(frames)
    if width < 1 or height < 1:
        raise ShapeError(f"target size {width}x{height} must be at least 1x1")
    if frames.ndim not in (2, 3) or 0 in frames.shape:
        raise ShapeError(f"expected non-empty (H, W) or (T, H, W), got {frames.shape}")
    src = frames.astype(np.float64)
    y0, y1, fy = _axis_weights(src.shape[-2], height)
    x0, x1, fx = _axis_weights(src.shape[-1], width)
    rows = src[..., y0, :] * (1 - fy)[:, None] + src[..., y1, :] * fy[:, None]
    out = rows[..., x0] * (1 - fx) + rows[..., x1] * fx
    return np.clip(out, 0, 1).astype(np.float32)


def temporal_indices(length, depth, loop_pad=False):
    if length < 1 or depth < 1:
        raise ShapeError(f"length {length} and depth {depth} must be positive")
    if length < depth:
        if not loop_pad:
            raise TooShortError(length, depth)
        return np.arange(depth) % length
    return (np.arange(depth) * length) // depth


def temporal_sample(frames, depth, loop_pad=False):
    """Pick ``depth`` frames at ``floor(i * L / depth)`` from an L-frame segment."""
    frames = np.asarray(frames)
    return frames[temporal_indices(frames.shape[0], depth, loop_pad)]


def flip_horizontal(clip: Clip) -> Clip:
    """Mirror every frame across the vertical axis and toggle ``flipped``."""
    return Clip(
        frames=np.ascontiguousarray(clip.frames[:, :, ::-1]),
        label=clip.label,
        source_id=clip.source_id,
        flipped=not clip.flipped,
    )


def prepare_clip(frames, label, source_id, width, height, depth, loop_pad=False) -> Clip:
    """Source segment (L, H, W) -> clip at the dataset's resolution and depth."""
    frames = np.asarray(frames)
    if frames.ndim == 4:
        frames = to_grayscale(frames)
    sampled = temporal_sample(frames, depth, loop_pad)
    if sampled.shape[1:] != (height, width):
        sampled = resize(sampled, width, height)
    sampled = np.ascontiguousarray(sampled, dtype=np.float32)
    _check_unit_range(sampled, f"clip {source_id}")
    return Clip(sampled, label, source_id)
