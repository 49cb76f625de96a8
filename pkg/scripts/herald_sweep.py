"""Cross-correlation g_c and the implied fidelity bound against pair rate."""

from _common import finish, parser, pyplot
from maqm import runner

if __name__ == "__main__":
    args = parser(__doc__, "out/herald_sweep").parse_args()
    cfg = runner.load_config({"kind": "herald-stats", "seed": args.seed})
    grid = [2, 5, 10, 15, 20, 25, 30, 40, 60]
    b = runner.sweep(cfg, "source.target_g_c", grid)
    out = finish(b, args.out)
    plt = None if args.no_plot else pyplot()
    if plt:
        rows = [r for r in b.tables["sweep"] if r["status"] == "ok"]
        fig, ax = plt.subplots(1, 2, figsize=(8, 3.2))
        ax[0].plot([r["chi"] for r in rows], [r["g_c"] for r in rows], "o-")
        ax[0].set(xlabel="chi", ylabel="g_c", xscale="log", yscale="log")
        ax[1].plot([r["g_c"] for r in rows], [r["fidelity_bound"] for r in rows], "o-")
        ax[1].set(xlabel="g_c", ylabel="fidelity bound")
        fig.tight_layout()
        fig.savefig(out / "herald_sweep.png", dpi=150)
