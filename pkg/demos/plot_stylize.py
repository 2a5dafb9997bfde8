"""
Translating an image with a checkpoint
======================================

Inference uses the same entry points as the command line.  A freshly
initialised checkpoint is enough to show the plumbing; swap in a trained
one for real results.
"""
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from cyclegan_qp import cli
from cyclegan_qp.models import CriticSpec, GeneratorSpec
from cyclegan_qp.synthetic import photo
from cyclegan_qp.trainer import TrainConfig, TrainState, save_checkpoint

work = Path(tempfile.mkdtemp())
cfg = TrainConfig(generator=GeneratorSpec(base_width=8, n_residual_blocks=2),
                  critic=CriticSpec(base_width=8, n_layers=3))
save_checkpoint(TrainState(cfg), work / "ckpt.pt")
Image.fromarray(photo(np.random.default_rng(0), 320, 240)).save(work / "photo.png")

# %%
# ``reconstruct`` translates to the other domain and back, writing both.
cli.main(["reconstruct", "--checkpoint", str(work / "ckpt.pt"), "--input", str(work / "photo.png"),
          "--output", str(work / "back.png"), "--size", "256"])

fig, axes = plt.subplots(1, 3, figsize=(12, 4))
for ax, name in zip(axes, ("photo.png", "back_translated.png", "back.png")):
    ax.imshow(Image.open(work / name))
    ax.set_title(name)
    ax.axis("off")
fig.savefig("stylize.png", dpi=100)
