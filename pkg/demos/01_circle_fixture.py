# %% [markdown]
# # Spherical continuation on a circle
#
# The unit circle z1^2 + z2^2 = 1 is the simplest closed curve there is, and
# its exact geometry makes every property of the tracer checkable: each point
# should sit on the circle, consecutive points should be one sphere radius
# apart, and the radius rule should settle where the curvature radius is 1.

# %%
import numpy as np

from feasbound import RadiusPolicy, TraceSettings, adapt_radius, trace_curve
from feasbound.tracer import circle_system

from _common import plt, save

circle = circle_system(1.0)
curve = trace_curve(circle, np.array([1.0, 0.0]), RadiusPolicy(a_max=0.2),
                    TraceSettings(box=((-2, 2), (-2, 2))))
P = curve.points
print(curve.termination.value, len(curve), "points")
print("max radial error", np.max(np.abs(np.linalg.norm(P, axis=1) - 1)))

# %% [markdown]
# The sphere radius is a smooth function of the local curvature radius tau.
# On this circle tau stays near 1, so every step uses about the same radius.

# %%
pol = RadiusPolicy(a_max=0.2)
taus = np.linspace(0, 5, 200)
print("radii used:", sorted({round(s.radius_used, 4) for s in curve.steps[1:]}))

fig, (a, b) = plt.subplots(1, 2, figsize=(9, 4))
a.plot(P[:, 0], P[:, 1], "o-", ms=3)
a.set_aspect("equal")
a.set_title("traced points")
b.plot(taus, [adapt_radius(pol, t) for t in taus])
b.set_xlabel("tau")
b.set_ylabel("sphere radius")
b.set_title("radius rule")
save(fig, "01_circle.png")
