import argparse
import json
from pathlib import Path

from maqm import runner


def parser(doc: str, default_out: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=doc)
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=0)
    ap.add_argument("--out", default=default_out)
    ap.add_argument("--no-plot", action="store_true")
    return ap


def finish(bundle: runner.Bundle, out: str) -> Path:
    out = Path(out)
    runner.write_bundle(bundle, out)
    print(json.dumps(bundle.summary, indent=2, default=str))
    print(f"wrote {out}")
    return out


def pyplot():
    try:
        import matplotlib
    except ImportError:
        print("matplotlib not installed, skipping figure")
        return None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt
