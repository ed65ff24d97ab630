"""Forward model: source state, memory channel and (lossy) POVMs to Bell-test statistics.

Outcome index 2 is the no-click outcome.  When the memory is a trace
non-increasing map, the discarded branch shows up as a no-click on B.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channels import I2, X, Z, ChannelError, KrausChannel, apply_matrix
from .correlations import NOCLICK, OUTCOME_LABELS, CountsTable, Correlations, DataError
from .qcore import TOL, DensityOperator, dagger, is_psd

POVM_TOL = 1e-10
LOSS_MODES = ("state_independent", "setting_dependent")


@dataclass(frozen=True, eq=False)
class Povm:
    """Three-outcome POVM: elements for outcomes 0, 1 and no-click."""

    elements: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)

    def __post_init__(self):
        els = [np.array(e, dtype=complex) for e in self.elements]
        if len(els) == 2:
            els.append(np.zeros_like(els[0]))
        if len(els) != 3:
            raise ValueError("a POVM has elements for outcomes 0, 1 and no-click")
        d = els[0].shape[0]
        for e in els:
            if e.shape != (d, d) or not is_psd(e, POVM_TOL):
                raise ValueError("POVM elements must be PSD matrices of equal size")
            e.setflags(write=False)
        if np.abs(sum(els) - np.eye(d)).max() > POVM_TOL:
            raise ValueError("POVM elements must sum to the identity")
        object.__setattr__(self, "elements", tuple(els))

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    @property
    def efficient(self) -> bool:
        return bool(np.abs(self.elements[NOCLICK]).max() <= POVM_TOL)


def projective(observable: np.ndarray) -> Povm:
    """Two-outcome POVM from a +-1 valued observable; outcome 0 is +1."""
    d = observable.shape[0]
    return Povm(((np.eye(d) + observable) / 2, (np.eye(d) - observable) / 2))


def optimal_chsh_povms() -> tuple[list[Povm], list[Povm]]:
    """Measurements reaching 2*sqrt(2) on Phi+: A in {Z, X}, B in {(Z+X)/sqrt2, (Z-X)/sqrt2}."""
    a = [projective(Z), projective(X)]
    b = [projective((Z + X) / np.sqrt(2)), projective((Z - X) / np.sqrt(2))]
    return a, b


def lossy_povm(base: Povm, efficiency: float, mode: str = "state_independent",
               outcome_efficiency: Optional[Sequence[float]] = None) -> Povm:
    """Add detector losses to a two-outcome POVM.

    ``state_independent`` scales both outcomes by ``efficiency`` so the no-click
    element is ``(1 - efficiency) I``.  ``setting_dependent`` applies per-outcome
    efficiencies (``outcome_efficiency``, defaulting to ``(efficiency, 1)``); the
    click probability then depends on the measured state.
    """
    if not 0 <= efficiency <= 1:
        raise ValueError("efficiency must lie in [0, 1]")
    e0, e1, enc = base.elements
    if mode == "state_independent":
        etas = (efficiency, efficiency)
    elif mode == "setting_dependent":
        etas = tuple(outcome_efficiency) if outcome_efficiency is not None else (efficiency, 1.0)
    else:
        raise ValueError(f"mode must be one of {LOSS_MODES}")
    m0, m1 = etas[0] * e0, etas[1] * e1
    return Povm((m0, m1, enc + (e0 - m0) + (e1 - m1)))


def filter_povm(base: Povm, r: np.ndarray) -> Povm:
    """Filter ``r`` (``r^dag r <= I``) followed by an efficient measurement."""
    r = np.asarray(r, dtype=complex)
    if not is_psd(np.eye(r.shape[1]) - dagger(r) @ r, POVM_TOL):
        raise ValueError("filter must satisfy r^dag r <= I")
    e0, e1, enc = base.elements
    if not base.efficient:
        raise ValueError("filter_povm needs an efficient base measurement")
    return Povm((dagger(r) @ e0 @ r, dagger(r) @ e1 @ r, np.eye(r.shape[1]) - dagger(r) @ r))


@dataclass(frozen=True, eq=False)
class ExperimentModel:
    source: DensityOperator
    povms_a: tuple[Povm, Povm]
    povms_b: tuple[Povm, Povm]
    memory: Optional[KrausChannel] = None

    def __post_init__(self):
        if len(self.source.dims) != 2:
            raise ChannelError("source must be bipartite")
        if not self.source.normalized:
            raise DataError("source state must be normalized")
        da, db = self.source.dims
        if len(self.povms_a) != 2 or len(self.povms_b) != 2:
            raise ValueError("two measurement settings per party")
        if any(p.dim != da for p in self.povms_a):
            raise ChannelError(f"A's POVMs must act on dimension {da}")
        db_out = db
        if self.memory is not None:
            if self.memory.in_dim != db:
                raise ChannelError(f"memory expects dimension {self.memory.in_dim}, source B has {db}")
            db_out = self.memory.out_dim
        if any(p.dim != db_out for p in self.povms_b):
            raise ChannelError(f"B's POVMs must act on dimension {db_out}")

    def bypass(self, povms_b: Optional[tuple[Povm, Povm]] = None) -> "ExperimentModel":
        """The same experiment with the memory skipped."""
        return ExperimentModel(self.source, self.povms_a, povms_b or self.povms_b, None)


def exact_correlations(m: ExperimentModel) -> Correlations:
    rho = m.source.matrix
    da, db = m.source.dims
    if m.memory is not None:
        lost = np.eye(db) - m.memory.kraus_sum()
        rho_out = apply_matrix(m.memory, rho, (da, db), 1)
    else:
        lost = np.zeros((db, db))
        rho_out = rho
    p = np.zeros((2, 2, 3, 3))
    for x, pa in enumerate(m.povms_a):
        for y, pb in enumerate(m.povms_b):
            for a, ea in enumerate(pa.elements):
                for b, eb in enumerate(pb.elements):
                    p[x, y, a, b] = np.real(np.trace(rho_out @ np.kron(ea, eb)))
                p[x, y, a, NOCLICK] += np.real(np.trace(rho @ np.kron(ea, lost)))
    p = np.clip(p, 0.0, None)
    p /= p.sum(axis=(2, 3), keepdims=True)
    return Correlations(p)


def sample_counts(m: ExperimentModel, shots_per_setting: int, seed, phase: str = "output") -> CountsTable:
    """Multinomial counts per setting pair.

    Draws use numpy's PCG64 generator; each setting pair gets its own stream
    spawned from ``SeedSequence(seed)``, in row-major (x, y) order.
    """
    if shots_per_setting < 1:
        raise ValueError("shots_per_setting must be at least 1")
    p = exact_correlations(m).p
    streams = np.random.SeedSequence(seed).spawn(4)
    counts = np.zeros((2, 2, 3, 3), dtype=np.int64)
    for k, (x, y) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        rng = np.random.Generator(np.random.PCG64(streams[k]))
        cell = p[x, y].reshape(-1)
        counts[x, y] = rng.multinomial(shots_per_setting, cell / cell.sum()).reshape(3, 3)
    return CountsTable(phase, counts)


def expected_counts(m: ExperimentModel, shots_per_setting: int, phase: str = "output") -> CountsTable:
    """Counts rounded from the exact table; a noiseless stand-in for sampled data."""
    p = exact_correlations(m).p
    return CountsTable(phase, np.rint(p * shots_per_setting).astype(np.int64))


# -- JSON model files -------------------------------------------------------

def _matrix_to_json(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _matrix_from_json(doc, where: str) -> np.ndarray:
    try:
        arr = np.array(doc, dtype=float)
    except (TypeError, ValueError):
        raise DataError(f"{where}: matrix must be nested arrays of [re, im] pairs") from None
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise DataError(f"{where}: expected a square matrix of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def _povm_to_json(p: Povm) -> dict:
    return {lab: _matrix_to_json(e) for lab, e in zip(OUTCOME_LABELS, p.elements)}


def _povm_from_json(doc, where: str) -> Povm:
    if not isinstance(doc, dict):
        raise DataError(f"{where}: POVM must be an object keyed '0', '1', 'nc'")
    for key in doc:
        if key not in OUTCOME_LABELS:
            raise DataError(f"{where}: unknown POVM outcome key {key!r}")
    for key in ("0", "1"):
        if key not in doc:
            raise DataError(f"{where}: missing POVM element {key!r}")
    els = [_matrix_from_json(doc[k], f"{where}[{k!r}]") for k in ("0", "1")]
    els.append(_matrix_from_json(doc["nc"], f"{where}['nc']") if "nc" in doc else np.zeros_like(els[0]))
    try:
        return Povm(tuple(els))
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from None


def model_to_json(m: ExperimentModel) -> dict:
    doc = {
        "source": {"dims": list(m.source.dims), "matrix": _matrix_to_json(m.source.matrix)},
        "povms_a": [_povm_to_json(p) for p in m.povms_a],
        "povms_b": [_povm_to_json(p) for p in m.povms_b],
    }
    if m.memory is not None:
        doc["memory"] = {"in_dim": m.memory.in_dim, "out_dim": m.memory.out_dim,
                         "kraus": [_matrix_to_json(k) for k in m.memory.kraus_ops]}
    return doc


def model_from_json(doc) -> ExperimentModel:
    if not isinstance(doc, dict):
        raise DataError("model must be a JSON object")
    for key in ("source", "povms_a", "povms_b"):
        if key not in doc:
            raise DataError(f"missing key {key!r}")
    src = doc["source"]
    if not isinstance(src, dict) or "dims" not in src or "matrix" not in src:
        raise DataError("'source' needs 'dims' and 'matrix'")
    try:
        source = DensityOperator(tuple(src["dims"]), _matrix_from_json(src["matrix"], "source.matrix"))
    except ValueError as exc:
        raise DataError(f"source: {exc}") from None
    povms = {}
    for key in ("povms_a", "povms_b"):
        if not isinstance(doc[key], list) or len(doc[key]) != 2:
            raise DataError(f"{key!r} must list two POVMs")
        povms[key] = tuple(_povm_from_json(p, f"{key}[{i}]") for i, p in enumerate(doc[key]))
    memory = None
    if doc.get("memory") is not None:
        mem = doc["memory"]
        if not isinstance(mem, dict) or "kraus" not in mem:
            raise DataError("'memory' needs a 'kraus' list")
        ops = []
        for i, k in enumerate(mem["kraus"]):
            arr = np.array(k, dtype=float)
            if arr.ndim != 3 or arr.shape[2] != 2:
                raise DataError(f"memory.kraus[{i}]: expected a matrix of [re, im] pairs")
            ops.append(arr[..., 0] + 1j * arr[..., 1])
        in_dim = int(mem.get("in_dim", ops[0].shape[1]))
        out_dim = int(mem.get("out_dim", ops[0].shape[0]))
        try:
            memory = KrausChannel(in_dim, out_dim, tuple(ops))
        except ValueError as exc:
            raise DataError(f"memory: {exc}") from None
    try:
        return ExperimentModel(source, povms["povms_a"], povms["povms_b"], memory)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def load_model(path) -> ExperimentModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
    return model_from_json(doc)


def ideal_model(memory: Optional[KrausChannel] = None) -> ExperimentModel:
    """Phi+ source with the optimal CHSH measurements."""
    from .qcore import phi_plus

    a, b = optimal_chsh_povms()
    return ExperimentModel(phi_plus().density(), tuple(a), tuple(b), memory)
