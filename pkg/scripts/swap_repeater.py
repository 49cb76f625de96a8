"""Heralded swap between two stored links: fidelity, gap times and tomography."""

import numpy as np

from _common import finish, parser, pyplot
from maqm import runner

if __name__ == "__main__":
    ap = parser(__doc__, "out/repeater")
    ap.add_argument("--shots", type=int, default=10000)
    args = ap.parse_args()
    b = runner.run_scenario(runner.load_config({"kind": "repeater", "seed": args.seed, "shots": args.shots}))
    out = finish(b, args.out)
    plt = None if args.no_plot else pyplot()
    if plt:
        rows = b.tables["shots"]
        ok = [r for r in rows if r["success"]]
        fig, ax = plt.subplots(1, 2, figsize=(8, 3.2))
        ax[0].hist(np.array([r["gap_time"] for r in rows]) * 1e6, bins=60)
        ax[0].set(xlabel="gap between heralds (us)", ylabel="shots")
        ax[1].plot([r["gap_time"] * 1e6 for r in ok], [r["fidelity"] for r in ok], ".")
        ax[1].axhline(0.5, ls=":", c="k")
        ax[1].set(xlabel="gap (us)", ylabel="swapped fidelity")
        fig.tight_layout()
        fig.savefig(out / "repeater.png", dpi=150)
