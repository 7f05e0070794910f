"""MSD curve containers and the CSV serialization used by every command.

All curve files share one schema: a header row ``iteration,msd_linear,msd_db,
flag`` followed by one row per iteration.  Floats are written with ``repr``
(shortest round-trip form), which makes outputs byte-stable across runs and
worker counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = "iteration,msd_linear,msd_db,flag"


def to_db(linear: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(linear)


@dataclass
class MsdCurve:
    """One per-iteration network MSD curve (simulated average or theoretical)."""

    msd: np.ndarray
    flag: str = "sim"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.msd = np.asarray(self.msd, dtype=float)

    @property
    def msd_db(self) -> np.ndarray:
        return to_db(self.msd)

    @property
    def final_db(self) -> float:
        return float(self.msd_db[-1])

    def write_csv(self, path) -> None:
        rows = [CSV_HEADER]
        db = self.msd_db
        for i, (lin, d) in enumerate(zip(self.msd, db)):
            rows.append(f"{i},{repr(float(lin))},{repr(float(d))},{self.flag}")
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(rows) + "\n")

    @classmethod
    def read_csv(cls, path) -> "MsdCurve":
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if lines[0] != CSV_HEADER:
            raise ValueError(f"unexpected header in {path}: {lines[0]!r}")
        msd = []
        flag = "sim"
        for ln in lines[1:]:
            _, lin, _, flag = ln.split(",")
            msd.append(float(lin))
        return cls(msd=np.array(msd), flag=flag)


def write_steady_state_csv(path, entries) -> None:
    """Rows of (variant, mu, tau, steady-state linear MSD)."""
    rows = ["variant,mu,tau,msd_linear,msd_db"]
    for variant, mu, tau, lin in entries:
        db = float(to_db(np.array(lin)))
        rows.append(f"{variant},{repr(float(mu))},{repr(float(tau))},"
                    f"{repr(float(lin))},{repr(db)}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(rows) + "\n")


def write_manifest(path, entries, experiment_meta) -> None:
    """JSON manifest mapping each emitted file to (variant, mu, tau, kind)."""
    doc = {"experiment": experiment_meta, "files": entries}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_gnuplot_script(path, csv_files, title) -> None:
    """Emit a minimal gnuplot script overlaying the dB columns of the curves."""
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        "set xlabel 'iteration'",
        "set ylabel 'MSD (dB)'",
        "set key outside",
    ]
    plots = [f"'{name}' using 1:3 every ::1 with lines title '{name}'"
             for name in csv_files]
    lines.append("plot " + ", \\\n     ".join(plots))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
