"""Synthetic stand-in for the shoplifting footage.

Both classes show the same static scene (dark floor, a brighter shelf
region) and one bright blob.  Normal clips: the blob walks across the frame
at constant velocity.  Suspicious clips: the blob approaches the shelf,
loiters there with small oscillations and pauses, then retreats.  Each clip
draws from its own random stream, so pool ``i`` is the same whatever the
pool size.
"""

import numpy as np

from ..errors import ConfigError
from ..kernels.rng import seeded_rng
from .clip import NORMAL, SUSPICIOUS, Clip

MIN_WIDTH, MIN_HEIGHT, MIN_DEPTH = 16, 12, 8
NOISE_SIGMA = 0.05
BACKGROUND = 0.15
SHELF_LEVEL = 0.35
BLOB_PEAK = 0.75


def _scene(width, height):
    img = np.full((height, width), BACKGROUND)
    x0, x1 = int(0.45 * width), int(0.62 * width)
    y0, y1 = int(0.15 * height), int(0.35 * height)
    img[y0:y1 + 1, x0:x1 + 1] = SHELF_LEVEL
    target = ((x0 + x1) / 2, y1 + 0.12 * height)
    return img, target


def _render(path, width, height, rng):
    scene, _ = _scene(width, height)
    sigma = max(1.0, 0.05 * width)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    frames = np.empty((len(path), height, width))
    for t, (cx, cy) in enumerate(path):
        blob = BLOB_PEAK * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma ** 2))
        frames[t] = np.maximum(scene, blob)
    frames += rng.normal(0.0, NOISE_SIGMA, frames.shape)
    return np.clip(frames, 0.0, 1.0).astype(np.float32)


def normal_path(width, height, depth, rng):
    margin = 0.02 + 0.02 * rng.random()
    xs = np.linspace(margin * width, (1 - margin) * width - 1, depth)
    if rng.random() < 0.5:
        xs = xs[::-1]
    y0 = rng.uniform(0.45, 0.85) * height
    y1 = np.clip(y0 + rng.uniform(-0.1, 0.1) * height, 0.4 * height, 0.9 * height)
    ys = np.linspace(y0, y1, depth)
    return np.stack([xs, ys], axis=1)


def suspicious_path(width, height, depth, rng):
    _, (tx, ty) = _scene(width, height)
    tx += rng.uniform(-0.05, 0.05) * width
    side = 1 if rng.random() < 0.5 else -1
    reach = rng.uniform(0.05, 0.09) * width
    start = np.array([tx + side * reach, ty + rng.uniform(0.05, 0.15) * height])
    target = np.array([tx, ty])
    amp = rng.uniform(0.01, 0.03) * width
    phase = rng.uniform(0, 2 * np.pi)
    u = np.linspace(0.0, 1.0, depth)
    a_end, r_start = rng.uniform(0.15, 0.3), rng.uniform(0.7, 0.85)
    path = np.empty((depth, 2))
    hold = None
    for t, ut in enumerate(u):
        if ut < a_end:
            p = start + (target - start) * (ut / a_end)
        elif ut > r_start:
            p = target + (start - target) * ((ut - r_start) / (1 - r_start))
        else:
            # loiter: jitter around the shelf, sometimes freezing in place
            if hold is not None and rng.random() < 0.4:
                p = hold
            else:
                p = target + amp * np.array([np.sin(phase + 5 * ut * np.pi), 0.5 * np.cos(phase + 3 * ut * np.pi)])
            hold = p
        path[t] = p
    return path


def synth_clip(label, index, width, height, depth, seed):
    rng = seeded_rng(seed, f"synth/{label}/{index}")
    make = suspicious_path if label == SUSPICIOUS else normal_path
    path = make(width, height, depth, rng)
    prefix = "SB" if label == SUSPICIOUS else "NB"
    return Clip(_render(path, width, height, rng), label, f"{prefix}_{index}")


def synth_generate(n_per_class, resolution=(32, 24), depth=10, seed=0):
    """Return ``(suspicious_pool, normal_pool)``, each ``n_per_class`` clips."""
    width, height = resolution
    if width < MIN_WIDTH or height < MIN_HEIGHT or depth < MIN_DEPTH:
        raise ConfigError(
            f"synthetic clips need at least {MIN_WIDTH}x{MIN_HEIGHT}x{MIN_DEPTH}, got {width}x{height}x{depth}",
            ["resolution", "depth"],
        )
    if n_per_class < 1:
        raise ConfigError("n_per_class must be positive", ["n_per_class"])
    suspicious = [synth_clip(SUSPICIOUS, i, width, height, depth, seed) for i in range(1, n_per_class + 1)]
    normal = [synth_clip(NORMAL, i, width, height, depth, seed) for i in range(1, n_per_class + 1)]
    return suspicious, normal
