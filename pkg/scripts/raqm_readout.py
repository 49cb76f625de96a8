"""Random-access storage of two qubits in one ensemble, both read orders."""

from _common import finish, parser, pyplot
from maqm import runner

if __name__ == "__main__":
    args = parser(__doc__, "out/raqm").parse_args()
    b = runner.run_scenario(runner.load_config({"kind": "raqm", "seed": args.seed}))
    out = finish(b, args.out)
    plt = None if args.no_plot else pyplot()
    if plt:
        rows = b.tables["raqm"]
        labels = [f"{r['state']} {r['order']}" for r in rows]
        x = range(len(rows))
        fig, ax = plt.subplots(figsize=(8, 3.2))
        ax.bar([i - 0.2 for i in x], [r["fidelity_q1"] for r in rows], 0.4, label="qubit 1")
        ax.bar([i + 0.2 for i in x], [r["fidelity_q2"] for r in rows], 0.4, label="qubit 2")
        ax.axhline(2 / 3, ls=":", c="k")
        ax.set_xticks(list(x), labels, rotation=60, fontsize=7)
        ax.set(ylim=(0.5, 1.0), ylabel="fidelity")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "raqm.png", dpi=150)
