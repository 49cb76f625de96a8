"""Storage lifetime across the 5x5 grid and link fidelity against storage time."""

import numpy as np

from _common import finish, parser, pyplot
from maqm import runner

if __name__ == "__main__":
    args = parser(__doc__, "out/lifetime").parse_args()
    b = runner.run_scenario(runner.load_config({"kind": "lifetime", "seed": args.seed}))
    out = finish(b, args.out)
    plt = None if args.no_plot else pyplot()
    if plt:
        cells = b.tables["cells"]
        tau = np.full((5, 5), np.nan)
        for r in cells:
            tau[r["y"] - 1, r["x"] - 1] = (r["tau_fit"] or np.nan) * 1e3
        fig, ax = plt.subplots(1, 2, figsize=(8, 3.4))
        im = ax[0].imshow(tau, origin="lower", extent=(0.5, 5.5, 0.5, 5.5))
        fig.colorbar(im, ax=ax[0], label="fitted lifetime (ms)")
        ax[0].set(xlabel="x", ylabel="y")
        fid = b.tables["fidelity"]
        ax[1].plot([r["storage_time"] * 1e3 for r in fid], [r["fidelity"] for r in fid], "o-")
        ax[1].axhline(0.5, ls=":", c="k")
        ax[1].set(xlabel="storage time (ms)", ylabel="link fidelity")
        fig.tight_layout()
        fig.savefig(out / "lifetime.png", dpi=150)
