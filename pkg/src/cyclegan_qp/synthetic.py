"""Toy unpaired image folders for smoke runs, demos and tests.

Photos are smooth colour gradients with a bright disc; paintings are
diagonal stripes in a warm palette.  Both are deterministic given a seed.
"""

from pathlib import Path

import numpy as np
from PIL import Image

__all__ = ["photo", "painting", "write_domain_pair"]


def photo(rng, width, height):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3))
    t = (xx / width)[..., None]
    img = (1 - t) * c0 + t * c1
    cx, cy = rng.uniform(0.3, 0.7) * width, rng.uniform(0.3, 0.7) * height
    r = rng.uniform(0.15, 0.3) * min(width, height)
    disc = ((xx - cx) ** 2 + (yy - cy) ** 2) < r * r
    img[disc] = 0.5 * img[disc] + 0.5
    return (img.clip(0, 1) * 255).astype(np.uint8)


def painting(rng, width, height):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    period = rng.uniform(6, 16)
    phase = rng.uniform(0, 2 * np.pi)
    s = 0.5 + 0.5 * np.sin(2 * np.pi * (xx + yy) / period + phase)
    warm = np.array([0.9, 0.6, 0.2], dtype=np.float32)
    dark = np.array([0.2, 0.1, 0.3], dtype=np.float32) * rng.uniform(0.5, 1.5)
    img = s[..., None] * warm + (1 - s[..., None]) * dark
    return (img.clip(0, 1) * 255).astype(np.uint8)


def write_domain_pair(root, style="vangogh", n_photos=8, n_paintings=8, size=(80, 72), seed=0):
    """Write ``<root>/<style>/trainA`` and ``trainB`` PNG folders; returns the style dir."""
    rng = np.random.default_rng(seed)
    base = Path(root) / style
    w, h = size
    for sub, n, make in (("trainA", n_photos, photo), ("trainB", n_paintings, painting)):
        d = base / sub
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            Image.fromarray(make(rng, w, h), "RGB").save(d / f"{i:03d}.png")
    return base
