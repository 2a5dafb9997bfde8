"""
A tiny training run on synthetic data
=====================================

Full-size training takes days.  A narrow network on a handful of synthetic
64x64 crops shows the losses moving in the right direction within a minute
on a CPU.
"""
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from cyclegan_qp.models import CriticSpec, GeneratorSpec
from cyclegan_qp.synthetic import write_domain_pair
from cyclegan_qp.trainer import LOG_NAME, TrainConfig, fit, read_log

work = Path(tempfile.mkdtemp())
write_domain_pair(work / "data", "vangogh", n_photos=8, n_paintings=8)

cfg = TrainConfig(
    total_iterations=200, crop_size=64, batch_size=4, seed=0,
    data_root=str(work / "data"), out_dir=str(work / "run"),
    generator=GeneratorSpec(base_width=16, n_residual_blocks=2),
    critic=CriticSpec(base_width=16, n_layers=3),
    checkpoint_every=100,
)
fit(cfg, resume=False)
log = read_log(work / "run" / LOG_NAME)

# %%
# Cycle and identity losses over the run, and the critic objective against
# its ceiling lam * d / 2.
it = np.array([r.iteration for r in log])
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.plot(it, [r.cyc_r + r.cyc_s for r in log], label="cycle")
ax1.plot(it, [r.id_r + r.id_s for r in log], label="identity")
ax1.legend()
ax2.plot(it, [r.critic_s for r in log], label="critic_s")
ax2.plot(it, [cfg.lam * r.d_s / 2 for r in log], "--", label="ceiling")
ax2.legend()
fig.savefig("micro_training.png", dpi=100)
print("checkpoint in", work / "run")
