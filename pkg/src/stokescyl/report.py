"""Report emission: CSV and JSON tables, plot scripts and rendered figures.

Every file carries the config hash and the seed.  Output is byte-stable for a
fixed configuration: floats are written with ``repr``, JSON keys are sorted
and PNG metadata is stripped.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np


def config_hash(config: dict) -> str:
    """Short SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


class Reporter:
    """Writes the artifacts of one experiment into ``directory``."""

    def __init__(self, directory, chash: str, seed: int, figures: bool = True):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash, self.seed, self.figures = chash, int(seed), figures
        self.written = []

    def path(self, name):
        return self.dir / name

    def csv(self, name, header, rows):
        """RFC-4180 table with ``config_hash`` and ``seed`` appended to each row."""
        p = self.path(name)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(list(header) + ["config_hash", "seed"])
            for row in rows:
                w.writerow([_cell(v) for v in row] + [self.hash, self.seed])
        self.written.append(p)
        return p

    def json(self, name, obj):
        p = self.path(name)
        payload = {"config_hash": self.hash, "seed": self.seed, **_jsonable(obj)}
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2, ensure_ascii=False)
            fh.write("\n")
        self.written.append(p)
        return p

    def plot_script(self, name, csv_name, x, ys, logx=False, logy=False, group=None, title=""):
        """Emit a standalone matplotlib script that plots columns of ``csv_name``."""
        script = PLOT_TEMPLATE.format(
            hash=self.hash,
            seed=self.seed,
            csv=csv_name,
            x=x,
            ys=list(ys),
            group=repr(group),
            logx=logx,
            logy=logy,
            title=title,
            png=Path(name).with_suffix(".png").name,
        )
        p = self.path(name)
        p.write_text(script, encoding="utf-8")
        self.written.append(p)
        return p

    def figure(self, name, draw):
        """Render ``draw(ax)`` to a PNG with the Agg backend; no-op if figures are off."""
        if not self.figures:
            return None
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
        draw(ax)
        ax.set_title(f"{ax.get_title()}  [{self.hash}, seed {self.seed}]", fontsize=8)
        fig.tight_layout()
        p = self.path(name)
        fig.savefig(p, metadata={"Software": None})
        plt.close(fig)
        self.written.append(p)
        return p


PLOT_TEMPLATE = '''"""Plot {csv} (config {hash}, seed {seed})."""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

X, YS, GROUP = "{x}", {ys}, {group}

with open("{csv}", newline="") as fh:
    rows = list(csv.DictReader(fh))
series = defaultdict(list)
for row in rows:
    series[row[GROUP] if GROUP else ""].append(row)
fig, ax = plt.subplots(figsize=(6, 4))
for key, items in sorted(series.items()):
    for y in YS:
        xs = [float(r[X]) for r in items]
        vs = [float(r[y]) for r in items]
        label = f"{{y}} {{key}}".strip()
        ax.plot(xs, vs, marker=".", label=label)
if {logx}:
    ax.set_xscale("log")
if {logy}:
    ax.set_yscale("log")
ax.set_xlabel(X)
ax.set_title("{title}")
ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "{png}")
'''
