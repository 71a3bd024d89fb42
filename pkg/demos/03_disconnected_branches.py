# %% [markdown]
# # Two disconnected boundary curves
#
# At P2 = 0.02 p.u. the boundary in the (Q3, P3) plane splits into separate
# closed curves.  A single seed cannot reach both, which is why find_seeds
# runs TENR from a flat start plus random perturbed starts and keeps every
# distinct solution.

# %%
from feasbound import Binding, BranchSwitcher, find_seeds, plane_system, three_bus_case
from feasbound.tracer import trace_seeds

from _common import plt, polyline, save

B = Binding.parse
case = three_bus_case()
s1 = plane_system(case, [B("3:Q"), B("3:P")], {B("2:P"): 0.02})
s2 = s1.with_free((0, 1))
seeds = find_seeds(s1, 32, seed=0)
print(len(seeds), "seeds:", [s.origin for s in seeds])

raw = trace_seeds(s2, [s2.lift(s.z, s1) for s in seeds])
for c in raw:
    print("curve", c.label.get("curve"), c.termination.value, len(c), "points")

# %% [markdown]
# Each raw curve is the boundary of one solution branch.  Parts of it can lie
# inside the region where another branch is still feasible.  Passing a
# BranchSwitcher makes the tracer swap to the limit or solvability equation
# that actually bounds the feasible set whenever an event changes sign.

# %%
followed = trace_seeds(s2, [s2.lift(s.z, s1) for s in seeds], switcher_factory=BranchSwitcher)
fig, ax = plt.subplots(figsize=(6, 5))
for c in raw:
    P = polyline(s2, c)
    ax.plot(P[:, 0], P[:, 1], lw=1, label=f"branch curve {c.label['curve']}")
for c in followed:
    P = polyline(s2, c)
    ax.plot(P[:, 0], P[:, 1], "k--", lw=1.5, label="feasibility boundary")
ax.set_xlabel("Q3 (p.u.)")
ax.set_ylabel("P3 (p.u.)")
ax.legend()
save(fig, "03_disconnected.png")
