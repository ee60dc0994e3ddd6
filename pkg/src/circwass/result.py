"""Small value types returned by the solvers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


@dataclass(frozen=True)
class LossValue:
    """A transport cost and which solver produced it.

    ``alpha_star`` is the optimising shift for the circular closed forms
    (median of the prefix differences, or the cut offset for convex costs).
    """

    value: float
    solver_tag: str
    alpha_star: Optional[float] = None
    info: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __float__(self) -> float:
        return float(self.value)

    def to_dict(self) -> dict[str, Any]:
        out = {"value": self.value, "solver": self.solver_tag}
        if self.alpha_star is not None:
            out["alpha_star"] = self.alpha_star
        return out


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """``flows[i, j]``: mass moved from source bin ``i`` to target bin ``j``."""

    flows: np.ndarray

    @property
    def total(self) -> float:
        return float(self.flows.sum())

    def row_sums(self) -> np.ndarray:
        return self.flows.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.flows.sum(axis=0)

    def cost(self, D) -> float:
        return float(np.sum(np.asarray(D) * self.flows))

    def to_json(self) -> str:
        return json.dumps(self.flows.tolist())

    @classmethod
    def from_json(cls, text: str) -> "TransportPlan":
        return cls(np.asarray(json.loads(text), dtype=float))
