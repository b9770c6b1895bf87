"""Per-iteration convergence history."""
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

CSV_COLUMNS = ("iter", "energy", "res_l2", "res_dual", "subspace_err_l2",
               "subspace_err_bhat", "rate_est", "step")


@dataclass(frozen=True)
class IterationRow:
    iter: int
    energy: float
    res_l2: float
    res_dual: float
    subspace_err_l2: Optional[float] = None
    subspace_err_bhat: Optional[float] = None
    rate_est: Optional[float] = None
    step: Optional[float] = None
    # J(Phi) - J(Psi) evaluated without cancellation; not part of the CSV schema
    energy_excess: Optional[float] = None


@dataclass
class ConvergenceRecord:
    rows: list = field(default_factory=list)
    status: str = "running"
    message: str = ""
    inner_statuses: list = field(default_factory=list)

    def append(self, row):
        if row.iter != len(self.rows):
            raise ValueError(f"row index {row.iter} breaks contiguity (expected {len(self.rows)})")
        if not np.isfinite(row.energy):
            raise ValueError("non-finite energy in record")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        """Column as a float array; missing values become NaN."""
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.rows], dtype=float)

    @property
    def errors(self):
        return self.column("subspace_err_l2")

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def iterations(self):
        return len(self.rows)


def row_from_mapping(values):
    names = {f.name: f.type for f in fields(IterationRow)}
    kwargs = {}
    for key, raw in values.items():
        if key not in names:
            continue
        if raw is None or raw == "":
            kwargs[key] = None
        elif key == "iter":
            kwargs[key] = int(raw)
        else:
            kwargs[key] = float(raw)
    return IterationRow(**kwargs)
