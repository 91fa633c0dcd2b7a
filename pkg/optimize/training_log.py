"""
Training Log - memory of the optimization run
Stores per-step loss rows with timestamps in a CSV file and answers summary queries
"""

import csv
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np

logger = logging.getLogger(__name__)

COLUMNS = [
    "step", "total", "rgb", "bce", "sparse", "eikonal",
    "n_rays", "n_off", "n_on", "epsilon", "alpha", "beta", "lr_scale", "seconds", "timestamp",
]

LOSS_TERMS = ["total", "rgb", "bce", "sparse", "eikonal"]


class TrainingLog:
    """
    Append-only store of training rows.

    Without a path the rows live in memory only; with a path every row is also
    appended to the CSV so an interrupted run keeps its history.
    """

    def __init__(self, path: Optional[str] = None, resume: bool = False):
        self.path = path
        self.rows: List[Dict[str, Any]] = []
        if path is None:
            return
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        if resume and os.path.isfile(path):
            self.rows = read_log(path)
            logger.info(f"[TRAIN] Resuming log {path} with {len(self.rows)} rows")
        else:
            with open(path, "w", newline="") as fh:
                csv.DictWriter(fh, fieldnames=COLUMNS).writeheader()

    def record(self, step: int, values: Dict[str, Any]) -> Dict[str, Any]:
        """Store one training row"""
        row = {key: values.get(key) for key in COLUMNS}
        row["step"] = int(step)
        row["timestamp"] = datetime.now().isoformat()
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", newline="") as fh:
                csv.DictWriter(fh, fieldnames=COLUMNS).writerow(row)
        return row

    def __len__(self) -> int:
        return len(self.rows)

    def get_recent(self, limit: int = 10) -> List[Dict[str, Any]]:
        return self.rows[-limit:]

    def losses(self, term: str = "total") -> np.ndarray:
        if term not in LOSS_TERMS:
            raise KeyError(f"unknown loss term '{term}'")
        return np.array([float(r[term]) for r in self.rows], dtype=np.float64)

    def summary(self, last: int = 50) -> Dict[str, Any]:
        """Mean of the last rows per loss term, plus first/last total."""
        if not self.rows:
            return {"rows": 0}
        recent = self.rows[-last:]
        stats: Dict[str, Any] = {"rows": len(self.rows), "first_step": self.rows[0]["step"],
                                 "last_step": self.rows[-1]["step"]}
        for term in LOSS_TERMS:
            stats[f"mean_{term}"] = float(np.mean([float(r[term]) for r in recent]))
        stats["first_total"] = float(self.rows[0]["total"])
        stats["last_total"] = float(self.rows[-1]["total"])
        stats["mean_off_fraction"] = float(np.mean([float(r["n_off"]) / max(float(r["n_rays"]), 1.0) for r in recent]))
        return stats


def read_log(path: str) -> List[Dict[str, Any]]:
    """Rows of a training CSV with numeric columns parsed."""
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row: Dict[str, Any] = {}
            for key, value in raw.items():
                if key == "timestamp" or value in (None, ""):
                    row[key] = value if value != "" else None
                elif key in ("step", "n_rays", "n_off", "n_on"):
                    row[key] = int(float(value))
                else:
                    row[key] = float(value)
            rows.append(row)
    return rows
