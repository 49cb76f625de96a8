"""Regenerate the shipped default calibration file."""

import argparse
import json
from pathlib import Path

from maqm.calibration import DEFAULT_PATH, write_defaults

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "maqm" / "data" / DEFAULT_PATH))
    args = ap.parse_args()
    data = write_defaults(args.out)
    print(json.dumps(data["values"], indent=2))
    print(f"wrote {args.out}")
