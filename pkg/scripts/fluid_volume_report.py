import argparse
import csv
from pathlib import Path

import numpy as np

from octfluid.helpers.constants import CLASS_NAMES, FOREGROUND_CLASSES
from octfluid.helpers.planner import load_manifest
from octfluid.pipeline.volume import LabelVolume, read_volume


FIELDNAMES = ["name", "h", "w", "scans", "irf_voxels", "srf_voxels", "ped_voxels", "fluid_fraction", "label_file"]


def count_fluid_voxels(label_path: Path) -> tuple:
    """Voxel count per fluid class of one label volume, plus its dims."""
    volume = read_volume(label_path)
    if not isinstance(volume, LabelVolume):
        raise ValueError(f"{label_path} is not a label volume")
    counts = np.bincount(volume.classes.reshape(-1), minlength=len(CLASS_NAMES))
    return {CLASS_NAMES[c].lower(): int(counts[c]) for c in FOREGROUND_CLASSES}, volume.dims


def main() -> None:
    parser = argparse.ArgumentParser(description="Count IRF/SRF/PED voxels for every label volume of a manifest")
    parser.add_argument("--manifest", dest="manifest", default=str(Path("data", "synthetic", "manifest.tsv")), help="Manifest of image/label pairs (defaults to data/synthetic/manifest.tsv)")
    parser.add_argument("--out", dest="out", default="fluid_volumes.csv", help="Output CSV filename (defaults to fluid_volumes.csv in CWD)")
    args = parser.parse_args()

    manifest = Path(args.manifest)
    if not manifest.exists():
        raise FileNotFoundError(f"Manifest not found: {manifest}")

    rows = []
    for _, label_path in load_manifest(manifest):
        counts, (h, w, scans) = count_fluid_voxels(label_path)
        total = h * w * scans
        rows.append({
            "name": label_path.stem,
            "h": h,
            "w": w,
            "scans": scans,
            "irf_voxels": counts["irf"],
            "srf_voxels": counts["srf"],
            "ped_voxels": counts["ped"],
            "fluid_fraction": f"{sum(counts.values()) / total:.6f}",
            "label_file": str(label_path),
        })

    with open(args.out, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=FIELDNAMES)
        writer.writeheader()
        writer.writerows(rows)

    print(f"Wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
