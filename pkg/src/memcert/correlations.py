"""Bell-test statistics: counts, probability tables, post-selection, CHSH.

Tables are indexed ``p[x, y, a, b]`` with settings ``x, y in {0, 1}`` and
outcomes ``0, 1`` plus, for three-outcome tables, index 2 for a no-click.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

NOCLICK = 2
OUTCOME_LABELS = ("0", "1", "nc")
PHASES = ("input", "output")


class DataError(ValueError):
    """Malformed or unusable measurement data."""


@dataclass(frozen=True, eq=False)
class CountsTable:
    phase: str
    counts: np.ndarray = field(repr=False)
    # True when only conclusive events were recorded, so no-click rates are unknown
    postselected: bool = False

    def __post_init__(self):
        if self.phase not in PHASES:
            raise DataError(f"phase must be one of {PHASES}, got {self.phase!r}")
        c = np.array(self.counts)
        if c.shape != (2, 2, 3, 3):
            raise DataError(f"counts must have shape (2, 2, 3, 3), got {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            if np.any(c != np.round(c)):
                raise DataError("counts must be integers")
            c = c.astype(np.int64)
        if np.any(c < 0):
            raise DataError("counts must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=(2, 3))

    @property
    def has_noclicks(self) -> bool:
        return bool(self.counts[:, :, NOCLICK, :].any() or self.counts[:, :, :, NOCLICK].any())

    def to_json(self) -> dict:
        out = {"phase": self.phase, "counts": {}}
        if self.postselected:
            out["postselected"] = True
        for x in range(2):
            for y in range(2):
                cell = {}
                for a in range(3):
                    for b in range(3):
                        n = int(self.counts[x, y, a, b])
                        if n:
                            cell[f"{OUTCOME_LABELS[a]},{OUTCOME_LABELS[b]}"] = n
                out["counts"][f"{x},{y}"] = cell
        return out

    @classmethod
    def from_json(cls, doc: Mapping) -> "CountsTable":
        if not isinstance(doc, Mapping):
            raise DataError("counts document must be a JSON object")
        for key in ("phase", "counts"):
            if key not in doc:
                raise DataError(f"missing key {key!r}")
        counts = np.zeros((2, 2, 3, 3), dtype=np.int64)
        if not isinstance(doc["counts"], Mapping):
            raise DataError("'counts' must be an object keyed 'x,y'")
        for setting, cell in doc["counts"].items():
            try:
                x, y = (int(s) for s in setting.split(","))
                if x not in (0, 1) or y not in (0, 1):
                    raise ValueError
            except ValueError:
                raise DataError(f"bad setting key {setting!r} in 'counts'") from None
            if not isinstance(cell, Mapping):
                raise DataError(f"counts[{setting!r}] must be an object")
            for outcome, n in cell.items():
                parts = outcome.split(",")
                if len(parts) != 2 or any(p not in OUTCOME_LABELS for p in parts):
                    raise DataError(f"bad outcome key {outcome!r} in counts[{setting!r}]")
                if isinstance(n, bool) or not isinstance(n, int) or n < 0:
                    raise DataError(f"counts[{setting!r}][{outcome!r}] must be a nonnegative integer")
                a, b = (OUTCOME_LABELS.index(p) for p in parts)
                counts[x, y, a, b] += n
        post = doc.get("postselected", False)
        if not isinstance(post, bool):
            raise DataError("'postselected' must be a boolean")
        return cls(doc["phase"], counts, post)

    @classmethod
    def load(cls, path, phase: str | None = None) -> "CountsTable":
        """Read a counts file.

        The file holds either one table or an object ``{"input": ..., "output": ...}``;
        in the latter case ``phase`` selects the table.
        """
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON ({exc})") from None
        if isinstance(doc, Mapping) and "counts" not in doc and phase in doc:
            doc = doc[phase]
        table = cls.from_json(doc)
        if phase is not None and table.phase != phase:
            raise DataError(f"{path}: expected phase {phase!r}, file has {table.phase!r}")
        return table


@dataclass(frozen=True, eq=False)
class Correlations:
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 4 or p.shape[:2] != (2, 2) or p.shape[2] != p.shape[3] or p.shape[2] not in (2, 3):
            raise DataError(f"probability table must have shape (2, 2, k, k) with k in (2, 3), got {p.shape}")
        if np.any(p < -1e-12):
            raise DataError("probabilities must be nonnegative")
        sums = p.sum(axis=(2, 3))
        if np.any(np.abs(sums - 1) > 1e-9):
            raise DataError("each setting pair must be normalized")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n_outcomes(self) -> int:
        return self.p.shape[2]

    @property
    def has_noclick(self) -> bool:
        return self.n_outcomes == 3

    def mix(self, other: "Correlations", alpha: float) -> "Correlations":
        return Correlations(alpha * self.p + (1 - alpha) * other.p)


@dataclass(frozen=True)
class ChshScore:
    value: float
    post_selected: bool = False

    def __post_init__(self):
        if abs(self.value) > 4 + 1e-9:
            raise DataError(f"CHSH value {self.value} outside [-4, 4]")


def correlations_from_counts(c: CountsTable) -> Correlations:
    tot = c.totals()
    if np.any(tot == 0):
        x, y = np.argwhere(tot == 0)[0]
        raise DataError(f"no counts recorded for setting pair x={x}, y={y}")
    return Correlations(c.counts / tot[:, :, None, None])


def bin_noclicks(p: Correlations, party: str, outcome: int = 0) -> Correlations:
    """Assign one party's no-click events to a fixed outcome (a local relabelling)."""
    if not p.has_noclick:
        return p
    q = np.array(p.p)
    if party == "a":
        q[:, :, outcome, :] += q[:, :, NOCLICK, :]
        q[:, :, NOCLICK, :] = 0
    elif party == "b":
        q[:, :, :, outcome] += q[:, :, :, NOCLICK]
        q[:, :, :, NOCLICK] = 0
    else:
        raise ValueError("party must be 'a' or 'b'")
    return Correlations(q)


def post_select(p: Correlations) -> Correlations:
    """Discard rounds with a no-click on either side and renormalize."""
    if not p.has_noclick:
        return p
    q = p.p[:, :, :2, :2]
    mass = q.sum(axis=(2, 3))
    if np.any(mass <= 0):
        x, y = np.argwhere(mass <= 0)[0]
        raise DataError(f"no conclusive events for setting pair x={x}, y={y}")
    return Correlations(q / mass[:, :, None, None])


def correlators(p: Correlations) -> np.ndarray:
    if p.has_noclick:
        raise DataError("correlators need a two-outcome table; post-select first")
    sign = np.array([[1, -1], [-1, 1]])
    return np.einsum("xyab,ab->xy", p.p, sign)


def chsh(p: Correlations, post_selected: bool = False) -> ChshScore:
    e = correlators(p)
    return ChshScore(float(e[0, 0] + e[0, 1] + e[1, 0] - e[1, 1]), post_selected)


def conditional_detection(p: Correlations) -> float:
    """min over settings of P(b conclusive | a conclusive)."""
    if not p.has_noclick:
        raise DataError("conditional detection needs a three-outcome table")
    a_click = p.p[:, :, :2, :].sum(axis=(2, 3))
    both = p.p[:, :, :2, :2].sum(axis=(2, 3))
    if np.any(a_click <= 0):
        raise DataError("party A never registers a conclusive outcome for some setting")
    return float(np.min(both / a_click))


def signaling_diagnostic(p: Correlations) -> float:
    """Largest change of a party's marginal when the other party's setting changes."""
    pa = p.p.sum(axis=3)  # [x, y, a]
    pb = p.p.sum(axis=2)  # [x, y, b]
    da = np.abs(pa[:, 0, :] - pa[:, 1, :]).max()
    db = np.abs(pb[0, :, :] - pb[1, :, :]).max()
    return float(max(da, db))


TSIRELSON = 2 * math.sqrt(2)
