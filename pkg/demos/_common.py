"""Small plotting helpers shared by the demo scripts."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from feasbound import Termination  # noqa: E402

OUT = Path(__file__).parent / "out"


def polyline(sys2, curve):
    P = np.array([sys2.full_params(z)[:2] for z in curve.points])
    if curve.termination is Termination.CLOSED_LOOP:
        P = np.vstack([P, P[:1]])
    return P


def save(fig, name):
    OUT.mkdir(exist_ok=True)
    fig.savefig(OUT / name, dpi=120, bbox_inches="tight")
    plt.close(fig)
    print(f"wrote {OUT / name}")
