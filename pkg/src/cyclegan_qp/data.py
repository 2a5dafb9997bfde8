"""Unpaired image folders, preprocessing and random batch sampling.

Expected layout::

    <root>/<style>/trainA/   photos     (domain r)
    <root>/<style>/trainB/   paintings  (domain s)
"""

import logging
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

__all__ = [
    "STYLES",
    "IMAGE_SUFFIXES",
    "PixelCodec",
    "UnpairedDataset",
    "load_rgb",
    "resize_short_side",
    "center_crop_offsets",
    "preprocess",
    "load_for_inference",
    "sample_batch",
    "batch_rng",
    "denormalize",
    "save_image",
    "Prefetcher",
]

STYLES = ("cezanne", "monet", "ukiyoe", "vangogh")
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


@dataclass(frozen=True)
class PixelCodec:
    """Per-channel affine map between [0, 1] pixels and [-1, 1] network values."""

    mean: float = 0.5
    std: float = 0.5

    def encode(self, p):
        return (p - self.mean) / self.std

    def decode(self, x):
        return x * self.std + self.mean


CODEC = PixelCodec()


def list_images(directory):
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass
class UnpairedDataset:
    domain_r_paths: list
    domain_s_paths: list
    crop_size: int = 256
    flip_probability: float = 0.5
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.domain_r_paths or not self.domain_s_paths:
            raise ValueError("both domains need at least one image")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must lie in [0, 1]")
        if self.crop_size < 1:
            raise ValueError("crop_size must be positive")

    @classmethod
    def from_root(cls, root, style, **kwargs):
        base = Path(root) / style
        dirs = base / "trainA", base / "trainB"
        for d in dirs:
            if not d.is_dir():
                raise FileNotFoundError(f"missing image directory: {d}")
        return cls(list_images(dirs[0]), list_images(dirs[1]), **kwargs)

    def image(self, path):
        """Decoded RGB image, memoised per path."""
        img = self._cache.get(path)
        if img is None:
            img = self._cache[path] = load_rgb(path)
        return img


def load_rgb(path):
    with Image.open(path) as im:
        return im.convert("RGB")


def resize_short_side(image, size):
    w, h = image.size
    scale = size / min(w, h)
    new = (max(size, round(w * scale)), max(size, round(h * scale)))
    return image.resize(new, Image.BICUBIC)


def center_crop_offsets(width, height, size):
    """(left, top) of a centred ``size`` x ``size`` window."""
    return (width - size) // 2, (height - size) // 2


def _to_array(image):
    if isinstance(image, Image.Image):
        return np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    return arr[..., :3]


def preprocess(image, crop_size=256, flip_probability=0.5, rng=None):
    """Random horizontal flip, centre crop, and map [0, 1] pixels to [-1, 1].

    ``image`` is a PIL image or an ``(H, W, 3)`` float array in [0, 1].  PIL
    images with a side shorter than ``crop_size`` are first resized so the
    short side equals ``crop_size``.  Returns a float32 tensor ``(3, s, s)``.
    """
    if isinstance(image, Image.Image) and min(image.size) < crop_size:
        image = resize_short_side(image, crop_size)
    arr = _to_array(image)
    h, w = arr.shape[:2]
    if h < crop_size or w < crop_size:
        raise ValueError(f"image {w}x{h} is smaller than crop size {crop_size}")
    if flip_probability > 0:
        rng = np.random.default_rng() if rng is None else rng
        if rng.random() < flip_probability:
            arr = arr[:, ::-1]
    left, top = center_crop_offsets(w, h, crop_size)
    arr = arr[top:top + crop_size, left:left + crop_size]
    x = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))
    return CODEC.encode(x)


def load_for_inference(path, size):
    """Resize the short side to ``size``, centre crop, normalise; returns (1, 3, size, size)."""
    img = resize_short_side(load_rgb(path), size)
    return preprocess(img, size, flip_probability=0.0)[None]


def batch_rng(seed, iteration):
    """Independent, reproducible sampling stream for one training iteration."""
    return np.random.default_rng([int(seed), int(iteration)])


def _draw(ds, paths, batch_size, rng, max_failures):
    out, failures = [], 0
    while len(out) < batch_size:
        path = paths[int(rng.integers(len(paths)))]
        try:
            img = ds.image(path)
            out.append(preprocess(img, ds.crop_size, ds.flip_probability, rng))
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            failures += 1
            log.warning("skipping %s: %s", path, exc)
            if failures >= max_failures:
                raise RuntimeError(f"{failures} consecutive unreadable images, last: {path}") from exc
    return torch.stack(out)


def sample_batch(ds, batch_size, rng, max_failures=100):
    """Draw ``batch_size`` images with replacement from each domain, paired at random.

    Unreadable files are skipped with a warning and redrawn.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    x_r = _draw(ds, ds.domain_r_paths, batch_size, rng, max_failures)
    x_s = _draw(ds, ds.domain_s_paths, batch_size, rng, max_failures)
    return x_r, x_s


def denormalize(x):
    """Map network values in [-1, 1] to uint8 HWC pixels (clamping out-of-range values).

    Accepts ``(3, H, W)`` or ``(N, 3, H, W)``; rounds half up.
    """
    x = torch.as_tensor(x).detach().to("cpu", torch.float64)
    p = CODEC.decode(x.clamp(-1.0, 1.0))
    u8 = torch.floor(p * 255.0 + 0.5).clamp(0, 255).to(torch.uint8)
    return u8.movedim(-3, -1).numpy()


def save_image(x, path):
    """Write one ``(3, H, W)`` or ``(1, 3, H, W)`` network-range image to disk."""
    arr = denormalize(x)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ValueError("save_image writes a single image")
        arr = arr[0]
    Image.fromarray(arr, "RGB").save(path)


class Prefetcher:
    """Background producer of training batches through a bounded queue.

    Batch ``i`` is always drawn from ``batch_rng(seed, i)``, so the sequence
    does not depend on timing or on where a run was resumed.
    """

    _STOP = object()

    def __init__(self, ds, batch_size, seed, start, stop, depth=2):
        self._q = queue.Queue(maxsize=depth)
        self._halt = threading.Event()
        self._thread = threading.Thread(
            target=self._run, args=(ds, batch_size, seed, start, stop), daemon=True)
        self._thread.start()

    def _put(self, item):
        while not self._halt.is_set():
            try:
                self._q.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _run(self, ds, batch_size, seed, start, stop):
        try:
            for i in range(start, stop):
                if not self._put((i, sample_batch(ds, batch_size, batch_rng(seed, i)))):
                    return
        except Exception as exc:  # surfaced to the consumer
            self._put(exc)
            return
        self._put(self._STOP)

    def __iter__(self):
        while True:
            item = self._q.get()
            if item is self._STOP:
                return
            if isinstance(item, Exception):
                raise item
            yield item

    def close(self):
        self._halt.set()
        self._thread.join(timeout=5)
