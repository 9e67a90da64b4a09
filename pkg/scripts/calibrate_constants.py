"""Measure the two normalization constants and write the versioned constants file.

Run once; afterwards the acceptance suite only checks consistency against the frozen values.
    python scripts/calibrate_constants.py [--check]
"""
import argparse
import json
import sys

from higher_aps.index_pipeline import calibrate_constants, constants_path, load_constants

VERSION = "1"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true", help="re-measure and compare with the frozen file")
    args = ap.parse_args()
    measured = calibrate_constants()
    if args.check:
        frozen = load_constants()["constants"]
        same = all(frozen[k] == v for k, v in measured.items())
        print(json.dumps(measured, indent=2, sort_keys=True))
        print("reproduces frozen constants exactly" if same else "MISMATCH with frozen constants")
        sys.exit(0 if same else 1)
    payload = {"version": VERSION, "constants": measured}
    path = constants_path()
    with open(str(path), "w") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
