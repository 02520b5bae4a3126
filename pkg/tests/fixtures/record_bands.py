"""Record the ratio bands to bands.json.  Run once; later runs compare against it.

    python3 tests/fixtures/record_bands.py
"""
import json
import pathlib
import sys

HERE = pathlib.Path(__file__).parent
sys.path.insert(0, str(HERE.parent))

from band_measures import all_bands  # noqa: E402

VERSION = 1

if __name__ == "__main__":
    out = HERE / "bands.json"
    if out.exists() and "--force" not in sys.argv:
        sys.exit(f"{out} exists; pass --force to overwrite")
    out.write_text(json.dumps({"version": VERSION, "bands": all_bands()}, indent=2) + "\n")
    print(f"wrote {out}")
