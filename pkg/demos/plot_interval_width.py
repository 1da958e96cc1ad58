"""
How truncation stretches an interval
====================================

A single normal observation truncated to a window. Near the middle of the
window the corrected interval barely differs from ``x +/- 1.96 sigma``; near
an edge it widens sharply, because values close to the edge are explained
almost equally well by a wide range of means.
"""

import matplotlib.pyplot as plt
import numpy as np

from tobitinf.simulate import interval_width_curve

fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
for ax, kind in zip(axes, ("lower", "both")):
    rows = interval_width_curve(1.0, kind)
    x = np.array([r["x_over_sigma"] for r in rows])
    ax.fill_between(x, [r["normal_lower"] for r in rows], [r["normal_upper"] for r in rows],
                    color="0.85", label="normal")
    ax.plot(x, [r["corrected_lower"] for r in rows], "C0")
    ax.plot(x, [r["corrected_upper"] for r in rows], "C0", label="corrected")
    ax.set_title("[-3, inf)" if kind == "lower" else "[-3, 3]")
    ax.set_xlabel("x / sigma")
    ax.set_ylim(-12, 10)
axes[0].legend()

# %%
# The width ratio at the center and next to the lower edge:
rows = interval_width_curve(1.0, "both", [0.0, -2.9])
for r in rows:
    print(f"x = {r['x_over_sigma']:+.1f}: corrected / normal width = {r['width_ratio']:.2f}")

plt.show()
