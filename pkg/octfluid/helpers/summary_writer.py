#!/usr/bin/env python3
"""
CSV summary writer for per-volume metrics, loss logs and voxel counts.

Rows are dicts; the column order is fixed by ``columns`` (or by the first
row's keys when no columns are given).
"""

import csv
import os
from typing import Any, Dict, List, Optional, Sequence


class SummaryWriter:
    """
    Accumulates rows and writes them to one CSV file.
    """

    def __init__(self, output_dir: str, columns: Optional[Sequence[str]] = None):
        """
        Args:
            output_dir: Directory the CSV is written to
            columns: Column order; unknown keys in later rows are rejected
        """
        self.output_dir = output_dir
        self.columns: Optional[List[str]] = list(columns) if columns else None
        self.rows: List[Dict[str, Any]] = []

    def add(self, **row):
        """Record one row; floats are written with 6 significant decimals."""
        if self.columns is None:
            self.columns = list(row)
        extra = set(row) - set(self.columns)
        if extra:
            raise ValueError(f"unexpected summary columns: {sorted(extra)}")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    @staticmethod
    def _format(value):
        if isinstance(value, float):
            return f"{value:.6f}"
        return value

    def write_csv(self, filename: str = "summary.csv") -> Optional[str]:
        """
        Write accumulated rows; nothing is written when there are none.

        Returns:
            Path of the CSV, or None when empty.
        """
        if not self.rows:
            return None
        os.makedirs(self.output_dir, exist_ok=True)
        target_path = os.path.join(self.output_dir, filename)
        with open(target_path, mode="w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=self.columns)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({key: self._format(row.get(key, "")) for key in self.columns})
        return target_path
