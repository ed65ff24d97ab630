"""Dense linear algebra and quantum-state primitives.

Everything here works on small dense complex matrices (total dimension at
most 64).  States are immutable; operations return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-10
    positivity: float = 1e-10
    unit_trace: float = 1e-10
    unit_norm: float = 1e-12


TOL = Tolerances()


class StateError(ValueError):
    """Raised when a matrix or vector violates a state invariant."""


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def is_hermitian(m: np.ndarray, tol: float = TOL.hermitian) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and bool(np.all(np.abs(m - dagger(m)) <= tol))


def min_eigenvalue(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (m + dagger(m)))[0])


def is_psd(m: np.ndarray, tol: float = TOL.positivity) -> bool:
    return is_hermitian(m, max(tol, TOL.hermitian)) and min_eigenvalue(m) >= -tol


def eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    h = 0.5 * (m + dagger(m))
    return np.linalg.eigh(h)


def sqrtm_psd(m: np.ndarray, tol: float = TOL.positivity) -> np.ndarray:
    """Square root of a PSD matrix; eigenvalues in [-tol, 0) are clamped."""
    w, v = eigh(m)
    if w[0] < -tol:
        raise StateError(f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ dagger(v)


def ket(bits: str, dim: int = 2) -> np.ndarray:
    """Computational basis vector, e.g. ``ket("01")``."""
    return reduce(np.kron, [np.eye(dim, dtype=complex)[int(b)] for b in bits])


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive operator with trace at most one on a tensor-product space.

    Sub-normalized operators are allowed; they represent the surviving branch
    of a probabilistic map.  ``normalized`` tells the two apart.
    """

    dims: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", m)
        n = int(np.prod(dims))
        if m.shape != (n, n):
            raise StateError(f"matrix shape {m.shape} does not match dims {dims}")
        if not is_hermitian(m):
            raise StateError("density operator must be Hermitian")
        if min_eigenvalue(m) < -TOL.positivity:
            raise StateError("density operator must be positive semidefinite")
        tr = self.trace
        if tr < -TOL.unit_trace or tr > 1 + TOL.unit_trace:
            raise StateError(f"trace {tr} outside [0, 1]")

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @property
    def normalized(self) -> bool:
        return abs(self.trace - 1.0) <= TOL.unit_trace

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def normalize(self) -> "DensityOperator":
        tr = self.trace
        if tr <= 0:
            raise StateError("cannot normalize a zero operator")
        return DensityOperator(self.dims, self.matrix / tr)

    def expectation(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(self.matrix @ op)))

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> "DensityOperator":
        n = int(np.prod(dims))
        return cls(tuple(dims), np.eye(n) / n)


@dataclass(frozen=True, eq=False)
class PureState:
    dims: tuple[int, ...]
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        v = np.array(self.amplitudes, dtype=complex).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", v)
        if v.size != int(np.prod(dims)):
            raise StateError(f"{v.size} amplitudes do not match dims {dims}")
        if abs(np.linalg.norm(v) - 1.0) > TOL.unit_norm:
            raise StateError("pure state must have unit norm")

    def density(self) -> DensityOperator:
        return DensityOperator(self.dims, np.outer(self.amplitudes, np.conj(self.amplitudes)))

    @property
    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, np.conj(self.amplitudes))


def phi_plus() -> PureState:
    """The maximally entangled two-qubit state (|00> + |11>)/sqrt(2)."""
    return PureState((2, 2), (ket("00") + ket("11")) / np.sqrt(2))


def _as_density(x) -> DensityOperator:
    return x.density() if isinstance(x, PureState) else x


def tensor(a, b) -> DensityOperator:
    a, b = _as_density(a), _as_density(b)
    return DensityOperator(a.dims + b.dims, np.kron(a.matrix, b.matrix))


def partial_trace_matrix(m: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Partial trace of a raw matrix, keeping subsystems ``keep`` in order."""
    dims = list(dims)
    keep = sorted(set(keep))
    n = len(dims)
    if any(k < 0 or k >= n for k in keep):
        raise ValueError(f"subsystem indices {keep} out of range for {n} subsystems")
    t = np.asarray(m).reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # trace pairs from the highest index down so axis numbers stay valid
    for count, i in enumerate(sorted(traced, reverse=True)):
        nleft = n - count
        t = np.trace(t, axis1=i, axis2=i + nleft)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(d, d)


def partial_trace(rho, keep: Iterable[int]) -> DensityOperator:
    rho = _as_density(rho)
    keep = sorted(set(keep))
    m = partial_trace_matrix(rho.matrix, rho.dims, keep)
    return DensityOperator(tuple(rho.dims[k] for k in keep), m)


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity F = (tr|sqrt(rho) sqrt(sigma)|)^2 of normalized states.

    Either argument may be a PureState, in which case F = <psi|rho|psi>.
    """
    if isinstance(sigma, PureState) and not isinstance(rho, PureState):
        rho, sigma = sigma, rho
    if isinstance(rho, PureState):
        other = _as_density(sigma)
        if rho.dims != other.dims:
            raise ValueError(f"dimension mismatch {rho.dims} vs {other.dims}")
        if not other.normalized:
            raise StateError("fidelity requires normalized states")
        v = rho.amplitudes
        return float(np.clip(np.real(np.conj(v) @ other.matrix @ v), 0.0, 1.0))
    if rho.dims != sigma.dims:
        raise ValueError(f"dimension mismatch {rho.dims} vs {sigma.dims}")
    if not (rho.normalized and sigma.normalized):
        raise StateError("fidelity requires normalized states")
    s = sqrtm_psd(rho.matrix)
    inner = s @ sigma.matrix @ s
    w = np.clip(np.linalg.eigvalsh(0.5 * (inner + dagger(inner))), 0.0, None)
    return float(np.clip(np.sum(np.sqrt(w)) ** 2, 0.0, 1.0))


def schmidt_decompose(psi: PureState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Schmidt decomposition of a bipartite pure state.

    Returns ``(coefficients, left, right)`` with coefficients descending and
    ``psi = sum_k c_k left[:, k] (x) right[:, k]``.
    """
    if len(psi.dims) != 2:
        raise ValueError("Schmidt decomposition needs a bipartite state")
    da, db = psi.dims
    u, s, vh = np.linalg.svd(psi.amplitudes.reshape(da, db))
    return s, u[:, : len(s)], vh[: len(s)].T


def random_density(dims: Sequence[int], rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    """Random mixed state from a Ginibre matrix (Hilbert-Schmidt measure when rank is full)."""
    n = int(np.prod(dims))
    k = rank or n
    g = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    m = g @ dagger(g)
    return DensityOperator(tuple(dims), m / np.real(np.trace(m)))


def random_pure(dims: Sequence[int], rng: np.random.Generator) -> PureState:
    n = int(np.prod(dims))
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return PureState(tuple(dims), v / np.linalg.norm(v))
