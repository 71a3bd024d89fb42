# %% [markdown]
# # Limit corners on the IEEE 14-bus system
#
# With voltage limits [0.9, 1.1] on every load bus, the feasible region in the
# (P6, P14) plane is bounded partly by voltage limits and partly by the
# solvability boundary.  Where one kind of segment meets the other the curve
# has a corner.  The solvability boundary alone, traced with the slack rows
# dropped, must enclose the feasible region.

# %%
import numpy as np

from feasbound import Binding, BranchSwitcher, builtin_case, find_seeds, plane_system, RadiusPolicy
from feasbound.tracer import trace_seeds

from _common import plt, polyline, save

B = Binding.parse
case = builtin_case("case14", vlimits=(0.9, 1.1), neutralize_transformers=True)
plane = [B("6:P"), B("14:P")]
start = (case.bus(6).p_inj, case.bus(14).p_inj)


def trace(limits, policy=None, switcher=None, restarts=8):
    s1 = plane_system(case, plane, {}, start, limits=limits)
    s2 = s1.with_free((0, 1))
    seeds = find_seeds(s1, restarts)
    return s2, trace_seeds(s2, [s2.lift(s.z, s1) for s in seeds], policy, switcher_factory=switcher)


sb, beta = trace(True, switcher=BranchSwitcher)
sg, gamma = trace(False, RadiusPolicy(a_max=0.05, r_max=0.05), restarts=1)

# %% [markdown]
# Which buses are at a limit along the feasibility curve?

# %%
c = beta[0]
tags = [";".join(f"{k}:{f.value}" for k, f in sorted(s.flags.items()) if f.value != "Interior") or "solvability"
        for s in c.steps]
runs = [tags[0]] + [t for a, t in zip(tags, tags[1:]) if t != a]
print("segments along the curve:", " -> ".join(runs))

fig, ax = plt.subplots(figsize=(6, 5))
for c in gamma:
    P = polyline(sg, c)
    ax.plot(P[:, 0], P[:, 1], "C1-", lw=1, label="solvability boundary")
for c in beta:
    P = polyline(sb, c)
    ax.plot(P[:, 0], P[:, 1], "k-", lw=1.5, label="feasibility boundary")
ax.set_xlabel("P6 (p.u.)")
ax.set_ylabel("P14 (p.u.)")
ax.legend()
save(fig, "05_ieee14.png")
