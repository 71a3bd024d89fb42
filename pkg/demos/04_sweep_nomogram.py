# %% [markdown]
# # A nomogram: boundary slices for several reactive loads
#
# sweep_contours repeats seeding and tracing for each value of a third
# parameter, here Q3, and labels every curve with the value it belongs to.
# Operators read such a family of slices like a contour map.

# %%
import numpy as np

from feasbound import Binding, plane_system, sweep_contours, three_bus_case

from _common import plt, polyline, save

B = Binding.parse
case = three_bus_case()
base = plane_system(case, [B("2:P"), B("3:P")], {B("3:Q"): 0.0}).with_free((0, 1))
values = [-0.1, 0.0, 0.05, 0.1]
curves = sweep_contours(base, 2, values, n_restarts=8, jobs=2)
print(len(curves), "curves; failures:", curves.failures)

fig, ax = plt.subplots(figsize=(6, 5))
for c in curves:
    vals = base.params.values.copy()
    vals[2] = c.label["value"]
    P = polyline(base.with_free((0, 1), vals), c)
    ax.plot(P[:, 0], P[:, 1], label=f"Q3 = {c.label['value']:g}")
ax.set_xlabel("P2 (p.u.)")
ax.set_ylabel("P3 (p.u.)")
ax.legend()
save(fig, "04_nomogram.png")
