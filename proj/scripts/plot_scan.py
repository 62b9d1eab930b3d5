#!/usr/bin/env python3
# Copyright 2026 The Pathmark Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Plot a scan CSV written by `pathmark scan`, on a log count axis."""

import argparse
import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", type=Path)
    ap.add_argument("-o", "--output", type=Path, help="image path (default: <csv stem>.png)")
    args = ap.parse_args()

    with args.csv.open(newline="") as f:
        rows = list(csv.DictReader(f))
    x = [float(r["detuning_ghz"]) for r in rows]
    counts = [max(int(r["counts"]), 1) for r in rows]

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.semilogy(x, counts, ".", ms=3, label="counts")

    report = args.csv.with_suffix(".json")
    if report.exists():
        peaks = json.loads(report.read_text())["peaks"]
        for e in peaks["entries"]:
            if e["present"]:
                ax.axvline(e["frequency_ghz"], color="tab:red", lw=0.6, alpha=0.6)
                ax.annotate(e["eom"], (e["frequency_ghz"], max(counts)), ha="center", va="bottom")

    ax.set_xlabel("etalon detuning (GHz)")
    ax.set_ylabel("counts per point")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(args.output or args.csv.with_suffix(".png"), dpi=150)


if __name__ == "__main__":
    main()
