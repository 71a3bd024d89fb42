# %% [markdown]
# # Scaling to the IEEE 300-bus system
#
# The augmented unknown vector has more than a thousand entries here, so the
# smallest singular value comes from a Lanczos iteration through one sparse
# LU per evaluation instead of a dense SVD.  This demo traces the
# solvability boundary in the (P8, P14) plane and reports the cost per step.
#
# Transformer taps are unsupported, so they are replaced by plain lines
# first.  After that several buses sit below 0.9 p.u. even at the base point,
# which is why this demo traces solvability rather than feasibility.

# %%
import time

import numpy as np

from feasbound import Binding, TraceSettings, builtin_case, find_seeds, plane_system, trace_curve

from _common import plt, polyline, save

B = Binding.parse
case = builtin_case("case300", neutralize_transformers=True)
plane = [B("8:P"), B("14:P")]
start = (case.bus(8).p_inj, case.bus(14).p_inj)
s1 = plane_system(case, plane, {B("14:Q"): 0.0}, start, limits=False)
s2 = s1.with_free((0, 1))
print("unknowns:", s2.dim)

t0 = time.perf_counter()
seed = find_seeds(s1, 1)[0]
print("seed in", round(time.perf_counter() - t0, 1), "s")

t0 = time.perf_counter()
curve = trace_curve(s2, s2.lift(seed.z, s1), settings=TraceSettings(max_steps=400))
dt = time.perf_counter() - t0
print(curve.termination.value, len(curve), "points,", round(dt / max(len(curve) - 1, 1), 3), "s per step")

P = polyline(s2, curve)
fig, ax = plt.subplots(figsize=(6, 5))
ax.plot(P[:, 0], P[:, 1], "k-")
ax.set_xlabel("P8 (p.u.)")
ax.set_ylabel("P14 (p.u.)")
save(fig, "06_ieee300.png")
