"""Error summaries for trained networks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np


@dataclass
class EvalReport:
    target_names: List[str]
    mae: np.ndarray
    relative_mae: np.ndarray
    predictions: np.ndarray
    targets: np.ndarray
    normalizers: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.targets.shape[0]

    def summary(self) -> dict:
        return {"rows": self.n_rows,
                "mae": dict(zip(self.target_names, map(float, self.mae))),
                "relative_mae": dict(zip(self.target_names, map(float, self.relative_mae))),
                "mae_overall": float(np.mean(self.mae)),
                "relative_mae_overall": float(np.mean(self.relative_mae))}

    def per_sample_rows(self):
        for r in range(self.n_rows):
            row = [r, self.normalizers[r]]
            for j in range(self.targets.shape[1]):
                t, p = self.targets[r, j], self.predictions[r, j]
                row += [t, p, abs(p - t), abs(p - t) / self.normalizers[r]]
            yield row

    def write_errors(self, path: str) -> None:
        """One row per sample: target, prediction, absolute and relative error per column."""
        header = ["row", "normalizer"]
        for name in self.target_names:
            header += [f"{name}_target", f"{name}_pred", f"{name}_abs_err", f"{name}_rel_err"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in self.per_sample_rows():
                w.writerow([row[0]] + [format(v, ".17g") for v in row[1:]])


def evaluate(predictions, targets, normalizers=None, target_names: Optional[Sequence[str]] = None) -> EvalReport:
    P = np.asarray(predictions, dtype=float)
    T = np.asarray(targets, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if T.ndim == 1:
        T = T[:, None]
    if P.shape != T.shape or T.shape[0] == 0:
        raise ValueError(f"prediction shape {P.shape} does not match target shape {T.shape}")
    z = np.ones(T.shape[0]) if normalizers is None else np.asarray(normalizers, dtype=float)
    if z.shape != (T.shape[0],) or np.any(z <= 0):
        raise ValueError("normalizers must be positive, one per row")
    names = list(target_names) if target_names is not None else [f"y{j}" for j in range(T.shape[1])]
    err = np.abs(P - T)
    return EvalReport(names, err.mean(axis=0), np.abs(P / z[:, None] - T / z[:, None]).mean(axis=0),
                      P, T, z)
