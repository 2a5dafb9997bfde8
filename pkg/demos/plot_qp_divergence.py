"""
The QP objective as a function of the critic gap
================================================

For a fixed per-sample distance ``d`` the critic objective is a downward
parabola in the score gap ``a``.  It peaks at ``a = lam * d`` with value
``lam * d / 2``, so the critic cannot run off to infinity.
"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from cyclegan_qp.diagnostics import check_qp_analytics
from cyclegan_qp.divergence import qp_value

# %%
# Evaluate the objective on a grid of gaps for a few distances.
lam = 10.0
a = torch.linspace(-20, 60, 801, dtype=torch.float64)
fig, ax = plt.subplots(figsize=(6, 4))
for d in (0.5, 1.0, 2.0):
    q = qp_value(a, torch.tensor(d, dtype=torch.float64), lam)
    ax.plot(a, q, label=f"d = {d}")
    ax.plot([lam * d], [lam * d / 2], "k.")
ax.set_xlabel("score gap a")
ax.set_ylabel("objective")
ax.set_ylim(-20, 15)
ax.legend()
fig.savefig("qp_divergence.png", dpi=100)

# %%
# The same fact, checked numerically over random (lam, d).
rep = check_qp_analytics(trials=20, rng=np.random.default_rng(0))
print("passed:", rep.passed, "worst value error:", rep.max_value_error)
