"""Quantum channels: Kraus and Choi forms, qubit Bloch-affine form, extremal qubit maps.

Conventions
-----------
Choi state of a map E is ``(id (x) E)[Phi+]`` with the reference system first,
so a trace-preserving map on a d-dimensional input has a unit-trace Choi
state whose reference marginal is ``I/d``.

Bloch vectors use ``v_i = tr(rho sigma_i)`` with the standard Pauli matrices,
so that ``Phi+ = (II + XX - YY + ZZ)/4``.  A qubit channel acts as
``v -> a + M v``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qcore import TOL, DensityOperator, StateError, dagger, eigh, partial_trace_matrix

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)

KRAUS_CUTOFF = 1e-10


class ChannelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Completely positive, trace non-increasing map given by Kraus operators."""

    in_dim: int
    out_dim: int
    kraus_ops: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        ops = []
        for k in self.kraus_ops:
            k = np.array(k, dtype=complex)
            if k.shape != (self.out_dim, self.in_dim):
                raise ChannelError(f"Kraus operator shape {k.shape} != ({self.out_dim}, {self.in_dim})")
            k.setflags(write=False)
            ops.append(k)
        if not ops:
            ops = [np.zeros((self.out_dim, self.in_dim), dtype=complex)]
        object.__setattr__(self, "kraus_ops", tuple(ops))
        gap = np.linalg.eigvalsh(np.eye(self.in_dim) - self.kraus_sum())[0]
        if gap < -TOL.positivity:
            raise ChannelError("Kraus operators are trace increasing")

    def kraus_sum(self) -> np.ndarray:
        return sum(dagger(k) @ k for k in self.kraus_ops)

    @property
    def trace_preserving(self) -> bool:
        return bool(np.all(np.abs(self.kraus_sum() - np.eye(self.in_dim)) <= TOL.positivity))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ dagger(k) for k in self.kraus_ops)


@dataclass(frozen=True, eq=False)
class ChoiState:
    in_dim: int
    out_dim: int
    state: DensityOperator

    @property
    def matrix(self) -> np.ndarray:
        return self.state.matrix

    @property
    def trace_preserving(self) -> bool:
        marg = partial_trace_matrix(self.matrix, (self.in_dim, self.out_dim), [0])
        return bool(np.all(np.abs(marg - np.eye(self.in_dim) / self.in_dim) <= TOL.positivity))


@dataclass(frozen=True)
class AffineQubitChannel:
    translation: np.ndarray
    linear: np.ndarray

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.translation + self.linear @ v


@dataclass(frozen=True)
class ExtremalChannelParams:
    """Angles ``a, b`` in [0, pi/2] and rotations ``R, R'`` of an extremal qubit channel."""

    a: float
    b: float
    rot_left: np.ndarray
    rot_right: np.ndarray

    def __post_init__(self):
        for r in (self.rot_left, self.rot_right):
            r = np.asarray(r)
            if np.abs(r @ r.T - np.eye(3)).max() > 1e-10 or abs(np.linalg.det(r) - 1) > 1e-10:
                raise ChannelError("rotation matrices must be proper orthogonal")


def identity_channel(dim: int = 2) -> KrausChannel:
    return KrausChannel(dim, dim, (np.eye(dim),))


def unitary_channel(u: np.ndarray) -> KrausChannel:
    u = np.asarray(u, dtype=complex)
    return KrausChannel(u.shape[1], u.shape[0], (u,))


def amplitude_damping(xi: float) -> KrausChannel:
    """Decay |1> -> |0> with probability ``xi``."""
    k0 = np.array([[0, np.sqrt(xi)], [0, 0]])
    k1 = np.array([[1, 0], [0, np.sqrt(1 - xi)]])
    return KrausChannel(2, 2, (k0, k1))


def depolarizing(p: float, dim: int = 2) -> KrausChannel:
    """``rho -> (1-p) rho + p tr(rho) I/d``; ``p = 1`` is the fully depolarizing map."""
    ops = [np.sqrt(1 - p) * np.eye(dim)] if p < 1 else []
    for i in range(dim):
        for j in range(dim):
            e = np.zeros((dim, dim))
            e[i, j] = 1
            ops.append(np.sqrt(p / dim) * e)
    return KrausChannel(dim, dim, tuple(ops))


def choi_matrix(k: KrausChannel) -> np.ndarray:
    d = k.in_dim
    omega = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    rho = np.outer(omega, omega.conj())
    return apply_matrix(k, rho, (d, d), 1)


def choi_of(k: KrausChannel) -> ChoiState:
    return ChoiState(k.in_dim, k.out_dim, DensityOperator((k.in_dim, k.out_dim), choi_matrix(k)))


def kraus_of_choi(choi, in_dim: int | None = None, out_dim: int | None = None) -> KrausChannel:
    """Minimal Kraus set from a Choi state (eigenvalues below 1e-10 dropped)."""
    if isinstance(choi, ChoiState):
        in_dim, out_dim, m = choi.in_dim, choi.out_dim, choi.matrix
    else:
        m = np.asarray(choi)
    w, v = eigh(m)
    if w[0] < -TOL.positivity:
        raise ChannelError(f"Choi matrix not positive (min eigenvalue {w[0]:.3e})")
    ops = []
    for lam, vec in zip(w, v.T):
        if lam > KRAUS_CUTOFF:
            # vec = sum_ij K_ji |i>|j> / sqrt(d)
            ops.append(np.sqrt(lam * in_dim) * vec.reshape(in_dim, out_dim).T)
    return KrausChannel(in_dim, out_dim, tuple(ops))


def apply_matrix(k: KrausChannel, rho: np.ndarray, dims: Sequence[int], subsystem: int) -> np.ndarray:
    dims = list(dims)
    if dims[subsystem] != k.in_dim:
        raise ChannelError(f"subsystem {subsystem} has dim {dims[subsystem]}, channel expects {k.in_dim}")
    left = int(np.prod(dims[:subsystem]))
    right = int(np.prod(dims[subsystem + 1:]))
    out = 0
    for kr in k.kraus_ops:
        full = np.kron(np.kron(np.eye(left), kr), np.eye(right))
        out = out + full @ rho @ dagger(full)
    return out


def apply(k: KrausChannel, rho: DensityOperator, subsystem: int) -> DensityOperator:
    m = apply_matrix(k, rho.matrix, rho.dims, subsystem)
    dims = list(rho.dims)
    dims[subsystem] = k.out_dim
    return DensityOperator(tuple(dims), m)


def compose(outer: KrausChannel, inner: KrausChannel) -> KrausChannel:
    """The map ``outer o inner`` (inner acts first)."""
    if inner.out_dim != outer.in_dim:
        raise ChannelError(f"cannot compose: inner outputs {inner.out_dim}, outer expects {outer.in_dim}")
    ops = [a @ b for a in outer.kraus_ops for b in inner.kraus_ops]
    return KrausChannel(inner.in_dim, outer.out_dim, tuple(ops))


def conjugate(k: KrausChannel) -> KrausChannel:
    return KrausChannel(k.in_dim, k.out_dim, tuple(np.conj(op) for op in k.kraus_ops))


def transpose_map(k: KrausChannel) -> KrausChannel:
    return KrausChannel(k.out_dim, k.in_dim, tuple(op.T for op in k.kraus_ops))


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    return np.array([np.real(np.trace(rho @ p)) for p in PAULIS[1:]])


def bloch_state(v: Sequence[float]) -> np.ndarray:
    return 0.5 * (I2 + sum(c * p for c, p in zip(v, PAULIS[1:])))


def affine_of(k: KrausChannel) -> AffineQubitChannel:
    if k.in_dim != 2 or k.out_dim != 2:
        raise ChannelError("affine representation needs a qubit-to-qubit channel")
    if not k.trace_preserving:
        raise ChannelError("affine representation needs a trace-preserving channel")
    a = 0.5 * np.array([np.real(np.trace(p @ k(I2))) for p in PAULIS[1:]])
    m = 0.5 * np.array([[np.real(np.trace(pi @ k(pj))) for pj in PAULIS[1:]] for pi in PAULIS[1:]])
    return AffineQubitChannel(a, m)


def choi_of_affine(a: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Choi matrix of ``v -> a + M v`` (need not be positive)."""
    signs = (1, 1, -1, 1)
    out = np.kron(I2, I2 + sum(c * p for c, p in zip(a, PAULIS[1:])))
    for j in range(3):
        image = sum(m[i, j] * PAULIS[i + 1] for i in range(3))
        out = out + signs[j + 1] * np.kron(PAULIS[j + 1], image)
    return out / 4


def extremal_affine(p: ExtremalChannelParams) -> AffineQubitChannel:
    ca, cb = np.cos(p.a) ** 2, np.cos(p.b) ** 2
    d = np.diag([np.cos(p.a - p.b), np.cos(p.a + p.b), ca + cb - 1])
    r = np.asarray(p.rot_left)
    return AffineQubitChannel((ca - cb) * r[:, 2], r @ d @ np.asarray(p.rot_right))


def extremal_channel(p: ExtremalChannelParams) -> KrausChannel:
    aff = extremal_affine(p)
    return kraus_of_choi(choi_of_affine(aff.translation, aff.linear), 2, 2)


def choi_fidelity(k: KrausChannel) -> float:
    """Overlap of the normalized Choi state with the ideal identity Choi state."""
    c = choi_matrix(k)
    d = k.in_dim
    if k.out_dim != d:
        raise ChannelError("Choi fidelity needs equal input and output dimension")
    omega = np.eye(d).reshape(-1) / np.sqrt(d)
    tr = np.real(np.trace(c))
    if tr <= 0:
        raise StateError("map annihilates the maximally entangled state")
    return float(np.real(omega @ c @ omega) / tr)


def choi_distance(a: KrausChannel, b: KrausChannel) -> float:
    return float(np.abs(choi_matrix(a) - choi_matrix(b)).max())
