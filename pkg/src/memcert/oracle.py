"""Explicit constructions and brute-force searches used as ground truth.

* optimal attacks: the state/filter pairs and channels that saturate the
  closed-form bounds;
* ``theta_estimate``: the best Choi fidelity of ``Lambda o E o V`` found by a
  search over extremal qubit channels ``Lambda`` and ``V``;
* ``soundness_probe``: simulate a realization, certify it, and compare the
  certified bound with what the memory can actually achieve.

Channels are handled through their 4x4 Pauli transfer matrices
``R_ij = tr(sigma_i E(sigma_j)) / 2``, which compose by matrix product and
also describe trace non-increasing maps.  For such a map the normalized Choi
fidelity with ``Phi+`` is ``tr(R) / (4 R_00)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from . import selftest
from .channels import (
    PAULIS, ChannelError, ExtremalChannelParams, KrausChannel, amplitude_damping, choi_fidelity,
    choi_matrix, compose, extremal_channel, identity_channel,
)
from .correlations import post_select, chsh
from .qcore import DensityOperator, PureState, dagger, ket, partial_trace_matrix, schmidt_decompose
from .simulate import ExperimentModel, expected_counts, optimal_chsh_povms, sample_counts

log = logging.getLogger(__name__)

RANGE_TOL = 1e-9


class OracleError(ValueError):
    pass


# -- optimal constructions --------------------------------------------------

def phi_lambda(lam: float) -> PureState:
    """``sqrt(lam)|00> + sqrt(1-lam)|11>``."""
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    return PureState((2, 2), math.sqrt(lam) * ket("00") + math.sqrt(1 - lam) * ket("11"))


def filter_k_lambda(lam: float) -> KrausChannel:
    """Filter taking ``Phi+`` to ``Phi_lam`` (after normalization)."""
    if not 0.5 <= lam <= 1:
        raise ValueError("filter needs lambda in [1/2, 1]")
    return KrausChannel(2, 2, (np.diag([1.0, math.sqrt((1 - lam) / lam)]),))


def filter_success(lam: float) -> float:
    return (1 + (1 - lam) / lam) / 2


def lemma2_x(f_i: float, p_i: float) -> float:
    f, p = f_i, p_i
    num = 4 * f**2 * p**2 - 4 * f * p**2 + 4 * math.sqrt(max(f - f**2, 0.0)) * (p - p**2) - p**2 + 2 * p
    den = 4 * f**2 * p**2 - 4 * f * p**2 + p**2 - 4 * p + 4
    if abs(den) < 1e-12:
        # f = 1/2, p = 1: the state is |00> and the filter weight on |0> is the success probability
        return p
    return num / den


def lemma2_attack(f_i: float, p_i: float) -> tuple[PureState, KrausChannel]:
    """Source and filter reaching conditional fidelity ``f_i`` with probability ``p_i``
    from the least entangled state allowed (Schmidt weight ``lambda_i(f_i, p_i)``)."""
    if not 0 < p_i <= 1 or not 0 <= f_i <= 1:
        raise ValueError("need f_i in [0, 1] and p_i in (0, 1]")
    if f_i < 0.5:
        # |11> with a scaled rotation keeping |<1|U|1>|^2 = 2 f_i
        th = math.acos(math.sqrt(2 * f_i))
        u = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        return PureState((2, 2), ket("11")), KrausChannel(2, 2, (math.sqrt(p_i) * u,))
    lam = selftest.lambda_i(f_i, p_i)
    x = lemma2_x(f_i, p_i)
    if x < -RANGE_TOL or x > 1 + RANGE_TOL:
        raise OracleError(f"filter parameter X = {x} outside [0, 1] at f_i={f_i}, p_i={p_i}")
    x = min(max(x, 0.0), 1.0)
    return phi_lambda(lam), KrausChannel(2, 2, (np.diag([math.sqrt(x), 1.0]),))


def result1_xi(f_o: float, lam: float) -> float:
    return 1 - (math.sqrt(2 * f_o) - math.sqrt(lam)) ** 2 / (1 - lam) if lam < 1 else 1.0


def result1_optimal_channel(f_o: float, lam: float) -> KrausChannel:
    """Amplitude-damping memory that meets output fidelity ``f_o`` on ``Phi_lam``
    with the smallest possible Choi fidelity."""
    if f_o < 0.5 - RANGE_TOL or lam < 0.5 - RANGE_TOL or lam > 1 / (2 * f_o) + RANGE_TOL:
        raise OracleError(f"(f_o={f_o}, lambda={lam}) outside 1/2 <= lambda <= 1/(2 f_o)")
    xi = result1_xi(f_o, lam)
    if xi < -RANGE_TOL or xi > 1 + RANGE_TOL:
        raise OracleError(f"damping parameter {xi} outside [0, 1]")
    return amplitude_damping(min(max(xi, 0.0), 1.0))


def result1_choi(f_o: float, lam: float) -> np.ndarray:
    """Closed-form Choi state of the optimal memory."""
    c = (math.sqrt(2 * f_o) - math.sqrt(lam)) / (2 * math.sqrt(1 - lam))
    s = np.zeros((4, 4))
    s[0, 0] = 0.5
    s[0, 3] = s[3, 0] = c
    s[2, 2] = 0.5 - 2 * c * c
    s[3, 3] = 2 * c * c
    return s


def theta_upper_bound_damping(xi: float) -> float:
    return (2 - xi + 2 * math.sqrt(1 - xi)) / 4


# -- Pauli transfer matrices ------------------------------------------------

def ptm(k: KrausChannel) -> np.ndarray:
    if k.in_dim != 2 or k.out_dim != 2:
        raise ChannelError("Pauli transfer matrix needs a qubit channel")
    return np.array([[0.5 * np.real(np.trace(pi @ k(pj))) for pj in PAULIS] for pi in PAULIS])


def ptm_fidelity(r: np.ndarray) -> np.ndarray:
    """Normalized Choi fidelity with Phi+ of (batched) transfer matrices."""
    return np.trace(r, axis1=-2, axis2=-1) / (4 * r[..., 0, 0])


def _extremal_ptm(u, rv_left, rv_right) -> np.ndarray:
    """Batched transfer matrices of extremal channels.

    Angles are ``a = (pi/2) sin^2(u[...,0])`` and likewise for b; rotations are
    given as rotation vectors.
    """
    a = 0.5 * np.pi * np.sin(u[..., 0]) ** 2
    b = 0.5 * np.pi * np.sin(u[..., 1]) ** 2
    ca, cb = np.cos(a) ** 2, np.cos(b) ** 2
    rl = Rotation.from_rotvec(rv_left.reshape(-1, 3)).as_matrix()
    rr = Rotation.from_rotvec(rv_right.reshape(-1, 3)).as_matrix()
    d = np.stack([np.cos(a - b), np.cos(a + b), ca + cb - 1], axis=-1).reshape(-1, 3)
    m = np.einsum("nij,nj,njk->nik", rl, d, rr)
    out = np.zeros((m.shape[0], 4, 4))
    out[:, 0, 0] = 1
    out[:, 1:, 0] = (ca - cb).reshape(-1, 1) * rl[:, :, 2]
    out[:, 1:, 1:] = m
    return out


def _filter_ptm(w, rv) -> np.ndarray:
    """Batched transfer matrices of ``rho -> K rho K^dag`` with ``K = diag(1, s) W``."""
    s = np.sin(w.reshape(-1)) ** 2
    f = np.zeros((s.size, 4, 4))
    f[:, 0, 0] = f[:, 3, 3] = (1 + s * s) / 2
    f[:, 0, 3] = f[:, 3, 0] = (1 - s * s) / 2
    f[:, 1, 1] = f[:, 2, 2] = s
    rot = np.zeros_like(f)
    rot[:, 0, 0] = 1
    rot[:, 1:, 1:] = Rotation.from_rotvec(rv.reshape(-1, 3)).as_matrix()
    return f @ rot


N_CHANNEL = 8
N_FILTER = 4
FILTER_SIDES = (None, "injection", "extraction")


def _split(x: np.ndarray, filter_side):
    x = np.atleast_2d(x)
    lam = (x[:, 0:2], x[:, 2:5], x[:, 5:8])
    v = (x[:, 8:10], x[:, 10:13], x[:, 13:16])
    filt = (x[:, 16], x[:, 17:20]) if filter_side else None
    return lam, v, filt


def _objective(x: np.ndarray, r_mem: np.ndarray, filter_side) -> np.ndarray:
    lam, v, filt = _split(x, filter_side)
    r_lam, r_v = _extremal_ptm(*lam), _extremal_ptm(*v)
    if filter_side is None:
        r = r_lam @ r_mem @ r_v
    elif filter_side == "injection":
        r = r_lam @ r_mem @ r_v @ _filter_ptm(*filt)
    else:
        r = r_lam @ _filter_ptm(*filt) @ r_mem @ r_v
    with np.errstate(divide="ignore", invalid="ignore"):
        val = ptm_fidelity(r)
    return np.where(r[:, 0, 0] > 1e-12, val, 0.0)


def params_to_channels(x: np.ndarray) -> tuple[ExtremalChannelParams, ExtremalChannelParams]:
    """Extremal channel parameters (extraction, injection) for one search point."""
    out = []
    for off in (0, 8):
        a = 0.5 * np.pi * np.sin(x[off]) ** 2
        b = 0.5 * np.pi * np.sin(x[off + 1]) ** 2
        rl = Rotation.from_rotvec(x[off + 2: off + 5]).as_matrix()
        rr = Rotation.from_rotvec(x[off + 5: off + 8]).as_matrix()
        out.append(ExtremalChannelParams(a, b, rl, rr))
    return out[0], out[1]


@dataclass
class ThetaResult:
    value: float
    params: np.ndarray
    seed: int
    restarts: int

    def channels(self) -> tuple[KrausChannel, KrausChannel]:
        lam, v = params_to_channels(self.params)
        return extremal_channel(lam), extremal_channel(v)


def theta_search(memory: KrausChannel, restarts: int = 200, seed: int = 0,
                 filter_side: Optional[str] = None, refine: int = 8) -> ThetaResult:
    """Best Choi fidelity of ``Lambda o memory o V`` over extremal qubit channels.

    ``restarts`` random points (uniform angles, Haar rotations) are scored in
    one batch; the best ``refine`` of them are polished with L-BFGS-B and the
    winner once more with Nelder-Mead.  With ``filter_side`` a single-Kraus filter is added before
    the memory ("injection") or after it ("extraction").
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    if filter_side not in FILTER_SIDES:
        raise ValueError(f"filter_side must be one of {FILTER_SIDES}")
    r_mem = ptm(memory)
    rng = np.random.default_rng(seed)
    n = restarts
    cols = []
    for _ in range(2):
        cols.append(np.arcsin(np.sqrt(rng.uniform(size=(n, 2)))))
        cols.append(Rotation.random(n, random_state=rng).as_rotvec())
        cols.append(Rotation.random(n, random_state=rng).as_rotvec())
    if filter_side:
        cols.append(np.arcsin(np.sqrt(rng.uniform(size=(n, 1)))))
        cols.append(Rotation.random(n, random_state=rng).as_rotvec())
    x0 = np.hstack(cols)
    vals = _objective(x0, r_mem, filter_side)
    order = np.argsort(-vals)[: max(1, min(refine, n))]
    best_x, best_v = x0[order[0]], float(vals[order[0]])
    loss = lambda x: -float(_objective(x, r_mem, filter_side)[0])
    for k in order:
        res = minimize(loss, x0[k], method="L-BFGS-B",
                       options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-10})
        if -res.fun > best_v:
            best_x, best_v = res.x, -res.fun
    res = minimize(loss, best_x, method="Nelder-Mead",
                   options={"maxiter": 2000, "xatol": 1e-10, "fatol": 1e-14})
    if -res.fun > best_v:
        best_x, best_v = res.x, -res.fun
    return ThetaResult(best_v, np.asarray(best_x), seed, restarts)


def theta_estimate(memory: KrausChannel, restarts: int = 200, seed: int = 0,
                   filter_side: Optional[str] = None) -> float:
    """Lower estimate of the best Choi fidelity reachable with deterministic
    extremal injection and extraction maps (plus an optional filter)."""
    return theta_search(memory, restarts, seed, filter_side).value


def theta_upper_bound(memory: KrausChannel) -> float:
    """``(1 + ||M||_1) / 4`` for a trace-preserving qubit memory with linear part M."""
    r = ptm(memory)
    if np.abs(r[0] - [1, 0, 0, 0]).max() > 1e-10:
        raise ChannelError("upper bound needs a trace-preserving memory")
    return float((1 + np.linalg.svd(r[1:, 1:], compute_uv=False).sum()) / 4)


# -- Schmidt-form decomposition ----------------------------------------------

def decompose_lemma0(rho: DensityOperator) -> tuple[np.ndarray, float, KrausChannel]:
    """Write a qubit-by-d state as ``(u x Xi)[Phi_lam]`` with ``lam >= 1/2``."""
    if len(rho.dims) != 2 or rho.dims[0] != 2:
        raise ValueError("state must be bipartite with a qubit first")
    if not rho.normalized:
        raise ValueError("state must be normalized")
    d = rho.dims[1]
    w, v = np.linalg.eigh(rho.matrix)
    keep = w > 1e-12
    w, v = w[keep], v[:, keep]
    r = max(len(w), 1 if d > 1 else 2)  # need d * r >= 2 for two orthogonal vectors
    psi = np.zeros((2 * d, r), dtype=complex)
    psi[:, : len(w)] = v * np.sqrt(w)
    s, left, right = schmidt_decompose(PureState((2, d * r), psi.reshape(-1) / np.linalg.norm(psi)))
    s = np.concatenate([s, np.zeros(2 - len(s))]) if len(s) < 2 else s[:2]
    u = np.array(left[:, :2]) if left.shape[1] >= 2 else None
    xi0 = right[:, 0]
    if s[1] > 1e-12:
        xi1 = right[:, 1]
    else:
        # any unit vector orthogonal to xi0 will do
        q, _ = np.linalg.qr(np.column_stack([xi0, np.eye(d * r)]))
        xi1 = q[:, 1]
        xi1 = xi1 - (np.conj(xi0) @ xi1) * xi0
        xi1 /= np.linalg.norm(xi1)
    if u is None or u.shape[1] < 2:
        a0 = left[:, 0]
        a1 = np.array([-np.conj(a0[1]), np.conj(a0[0])])
        u = np.column_stack([a0, a1])
    iso = np.column_stack([xi0, xi1]).reshape(d, r, 2)
    kraus = tuple(iso[:, k, :] for k in range(r))
    lam = float(s[0] ** 2)
    return u, lam, KrausChannel(2, d, kraus)


def reconstruct_lemma0(u: np.ndarray, lam: float, xi: KrausChannel) -> np.ndarray:
    from .channels import apply_matrix

    phi = phi_lambda(min(lam, 1.0)).projector
    phi = np.kron(u, np.eye(2)) @ phi @ dagger(np.kron(u, np.eye(2)))
    return apply_matrix(xi, phi, (2, 2), 1)


# -- end-to-end soundness --------------------------------------------------

@dataclass(frozen=True, eq=False)
class Realization:
    """Source, memory and per-phase extraction maps for a simulated experiment."""

    state: DensityOperator
    memory: KrausChannel
    extraction_i: KrausChannel = field(default_factory=identity_channel)
    extraction_o: KrausChannel = field(default_factory=identity_channel)
    label: str = ""

    def __post_init__(self):
        db = self.state.dims[1]
        if self.state.dims[0] != 2:
            raise ChannelError("A must be a qubit")
        if self.memory.in_dim != db or self.extraction_i.in_dim != db:
            raise ChannelError("memory and input extraction must accept B's system")
        if self.extraction_o.in_dim != self.memory.out_dim:
            raise ChannelError("output extraction must accept the memory output")
        if self.extraction_i.out_dim != 2 or self.extraction_o.out_dim != 2:
            raise ChannelError("extraction maps must output a qubit")

    def models(self) -> tuple[ExperimentModel, ExperimentModel]:
        a, b = optimal_chsh_povms()
        mi = ExperimentModel(self.state, tuple(a), tuple(b), self.extraction_i)
        mo = ExperimentModel(self.state, tuple(a), tuple(b), compose(self.extraction_o, self.memory))
        return mi, mo

    @property
    def deterministic(self) -> bool:
        return self.memory.trace_preserving and self.extraction_i.trace_preserving \
            and self.extraction_o.trace_preserving


@dataclass
class SoundnessReport:
    label: str
    achieved: dict
    certified: dict
    margin: dict
    sound: bool


SCENARIO_FILTER = {"S1": None, "S2": "injection", "S3": "extraction"}


def soundness_probe(r: Realization, restarts: int = 200, seed: int = 0,
                    shots: Optional[int] = None, tol: float = 1e-6) -> SoundnessReport:
    """Simulate both Bell tests, certify under every applicable scenario, and
    compare each certified fidelity with the best fidelity found for the memory.

    ``shots=None`` uses noiseless counts (exact table at 10^12 rounds), so the
    comparison is free of sampling fluctuations.
    """
    from .selftest import CertifyConfig, certify

    mi, mo = r.models()
    if shots is None:
        ci, co = expected_counts(mi, 10**12, "input"), expected_counts(mo, 10**12, "output")
    else:
        ci, co = sample_counts(mi, shots, seed, "input"), sample_counts(mo, shots, seed + 1, "output")
    scenarios = ["S1", "S2", "S3"] if r.deterministic else ["S2", "S3"]
    if r.memory.in_dim != 2 or r.memory.out_dim != 2:
        raise ChannelError("soundness probe compares against a qubit memory")
    achieved, certified, margin = {}, {}, {}
    for sc in scenarios:
        cfg = CertifyConfig(sc, "none", "wfs", "wfs")
        rep = certify(ci, co, cfg)
        certified[sc] = rep.fidelity_bound
        achieved[sc] = float(theta_estimate(r.memory, restarts, seed, SCENARIO_FILTER[sc]))
        margin[sc] = achieved[sc] - certified[sc]
    sound = all(m >= -tol for m in margin.values())
    return SoundnessReport(r.label, achieved, certified, margin, sound)


def random_realization(seed: int) -> Realization:
    """Seeded near-ideal realization, so that the certified bounds are not trivial.

    Memory families cycle with the seed: amplitude damping, depolarizing, a
    unitary undone by the output extraction, a near-identity extremal map, a
    heralding filter, and a lossy output extraction.
    """
    from .channels import depolarizing, unitary_channel
    from .qcore import random_density

    rng = np.random.default_rng(seed)
    kinds = ["damping", "depolarizing", "unitary", "extremal", "filter", "lossy"]
    kind = kinds[seed % len(kinds)]
    lam = float(rng.uniform(0.5, 0.55))
    noise = float(rng.uniform(0, 0.02))
    rho = (1 - noise) * phi_lambda(lam).projector + noise * random_density((2, 2), rng).matrix
    state = DensityOperator((2, 2), rho)
    ext_o = identity_channel()
    if kind == "damping":
        mem = amplitude_damping(float(rng.uniform(0, 0.1)))
    elif kind == "depolarizing":
        mem = depolarizing(float(rng.uniform(0, 0.05)))
    elif kind == "unitary":
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        mem = unitary_channel(q)
        ext_o = unitary_channel(dagger(q))
    elif kind == "extremal":
        mem = extremal_channel(ExtremalChannelParams(
            float(rng.uniform(0, 0.15)), float(rng.uniform(0, 0.15)), np.eye(3), np.eye(3)))
    elif kind == "filter":
        mem = filter_k_lambda(float(rng.uniform(0.5, 0.6)))
    else:
        mem = amplitude_damping(float(rng.uniform(0, 0.05)))
        ext_o = KrausChannel(2, 2, (math.sqrt(float(rng.uniform(0.2, 0.9))) * np.eye(2),))
    return Realization(state, mem, extraction_o=ext_o, label=f"{kind}-{seed}")
