"""Small dense Hermitian semidefinite programs.

The solver handles problems over a Hermitian variable ``sigma`` on a
bipartite space ``[in_dim, out_dim]``::

    min/max  tr(C sigma) + c_aux * aux
    s.t.     tr(A_k sigma)  = b_k
             tr(G_j sigma) >= h_j
             tr_out(sigma) <= B + aux * B_slope      (operator inequality)
             sigma >= 0,  aux >= 0

``aux`` is an optional nonnegative scalar that may shift the operator bound;
it is what lets the input-state program optimize over the Schmidt weight.

Internally the Hermitian blocks are embedded as real symmetric matrices of
doubled size and the whole problem is brought into the standard primal form
``min <C, X> s.t. <A_i, X> = b_i, X >= 0`` with one block-diagonal PSD
variable.  It is solved with an infeasible primal-dual interior point method
(HKM direction, Mehrotra predictor-corrector).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .qcore import dagger, ket, partial_trace_matrix

PHI_PLUS = np.outer(ket("00") + ket("11"), ket("00") + ket("11")) / 2

OPTIMAL_TOL = 1e-7
# degenerate problems (no strictly feasible point) can stall just above OPTIMAL_TOL
INACCURATE_TOL = 1e-5


class SdpError(RuntimeError):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


def embed(h: np.ndarray) -> np.ndarray:
    """Real symmetric embedding ``[[Re, -Im], [Im, Re]]`` of a Hermitian matrix."""
    h = np.asarray(h, dtype=complex)
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


def unembed(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed`, projecting onto the embedded subspace."""
    n = x.shape[0] // 2
    x11, x12, x21, x22 = x[:n, :n], x[:n, n:], x[n:, :n], x[n:, n:]
    return 0.5 * (x11 + x22) + 0.5j * (x21 - x12)


def hermitian_basis(m: int) -> list[np.ndarray]:
    """Trace-orthonormal basis of the m x m Hermitian matrices."""
    basis = []
    for k in range(m):
        e = np.zeros((m, m), dtype=complex)
        e[k, k] = 1
        basis.append(e)
    for k in range(m):
        for l in range(k + 1, m):
            e = np.zeros((m, m), dtype=complex)
            e[k, l] = e[l, k] = 1 / math.sqrt(2)
            basis.append(e)
            e = np.zeros((m, m), dtype=complex)
            e[k, l], e[l, k] = 1j / math.sqrt(2), -1j / math.sqrt(2)
            basis.append(e)
    return basis


@dataclass
class SdpProblem:
    in_dim: int
    out_dim: int
    objective: np.ndarray
    sense: str = "min"
    equalities: list = field(default_factory=list)
    inequalities: list = field(default_factory=list)
    operator_bound: Optional[np.ndarray] = None
    bound_slope: Optional[np.ndarray] = None
    aux_objective: float = 0.0

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        n = self.in_dim * self.out_dim
        mats = [self.objective] + [a for a, _ in self.equalities] + [g for g, _ in self.inequalities]
        for m in mats:
            m = np.asarray(m)
            if m.shape != (n, n) or np.abs(m - dagger(m)).max() > 1e-12:
                raise ValueError("constraint and objective matrices must be Hermitian of size in_dim*out_dim")
        for m in (self.operator_bound, self.bound_slope):
            if m is not None and np.abs(np.asarray(m) - dagger(np.asarray(m))).max() > 1e-12:
                raise ValueError("operator bound must be Hermitian")
        if self.bound_slope is not None and self.operator_bound is None:
            raise ValueError("bound_slope needs an operator_bound")

    @property
    def dim(self) -> int:
        return self.in_dim * self.out_dim

    @property
    def has_aux(self) -> bool:
        return self.bound_slope is not None or self.aux_objective != 0.0


@dataclass
class SdpSolution:
    sigma: np.ndarray
    aux: float
    primal_value: float
    dual_value: float
    equality_residual: float
    inequality_residual: float
    min_eigenvalue: float
    slack_min_eigenvalue: float
    dual_min_eigenvalue: float
    status: str
    iterations: int
    violation: float = 0.0

    @property
    def gap(self) -> float:
        return abs(self.primal_value - self.dual_value)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def usable(self) -> bool:
        """Optimal, or stalled on a degenerate problem with small residuals."""
        return self.status in ("optimal", "inaccurate")


class _StandardForm:
    """Block layout of the real standard-form problem."""

    def __init__(self, p: SdpProblem, phase1: bool = False):
        self.p = p
        self.phase1 = phase1
        n = p.dim
        m = p.in_dim
        self.sizes = [2 * n]
        self.has_z = p.operator_bound is not None
        if self.has_z:
            self.sizes.append(2 * m)
        self.has_aux = p.has_aux
        nscal = len(p.inequalities) + int(self.has_aux) + int(phase1)
        self.sizes += [1] * nscal
        self.offsets = np.cumsum([0] + self.sizes)
        self.N = int(self.offsets[-1])
        idx = 1 + int(self.has_z)
        self.aux_block = idx if self.has_aux else None
        idx += int(self.has_aux)
        self.tau_block = idx if phase1 else None
        idx += int(phase1)
        self.slack_blocks = list(range(idx, idx + len(p.inequalities)))

        rows, rhs = [], []
        for a, b in p.equalities:
            rows.append({0: embed(a) / 2})
            rhs.append(float(b))
        for j, (g, h) in enumerate(p.inequalities):
            r = {0: embed(g) / 2, self.slack_blocks[j]: -np.eye(1)}
            if phase1:
                r[self.tau_block] = np.eye(1)
            rows.append(r)
            rhs.append(float(h))
        if self.has_z:
            bound = np.asarray(p.operator_bound, dtype=complex)
            slope = None if p.bound_slope is None else np.asarray(p.bound_slope, dtype=complex)
            eye_out = np.eye(p.out_dim)
            for e in hermitian_basis(m):
                r = {0: embed(np.kron(e, eye_out)) / 2, 1: embed(e) / 2}
                if slope is not None:
                    r[self.aux_block] = -np.real(np.trace(e @ slope)) * np.eye(1)
                if phase1:
                    r[self.tau_block] = -np.real(np.trace(e)) * np.eye(1)
                rows.append(r)
                rhs.append(float(np.real(np.trace(e @ bound))))
        self.A = np.array([self._assemble(r) for r in rows]) if rows else np.zeros((0, self.N, self.N))
        self.b = np.array(rhs)

        if phase1:
            obj = {self.tau_block: np.eye(1)}
        else:
            sign = 1.0 if p.sense == "min" else -1.0
            obj = {0: sign * embed(p.objective) / 2}
            if self.has_aux:
                obj[self.aux_block] = sign * p.aux_objective * np.eye(1)
        self.C = self._assemble(obj)

    def _assemble(self, blocks: dict) -> np.ndarray:
        out = np.zeros((self.N, self.N))
        for k, mat in blocks.items():
            o = self.offsets[k]
            s = self.sizes[k]
            out[o:o + s, o:o + s] = mat
        return out

    def block(self, x: np.ndarray, k: int) -> np.ndarray:
        o = self.offsets[k]
        s = self.sizes[k]
        return x[o:o + s, o:o + s]


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    try:
        lc = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    li = np.linalg.inv(lc)
    w = np.linalg.eigvalsh(li @ dx @ li.T)
    return math.inf if w[0] >= 0 else -1.0 / w[0]


def _ipm(C, A, b, tol=1e-9, max_iter=100):
    N = C.shape[0]
    m = len(b)
    scale = 1.0 + max(np.abs(b).max(initial=0), np.abs(C).max())
    X = np.eye(N) * scale
    S = np.eye(N) * scale
    y = np.zeros(m)
    eye = np.eye(N)

    def op(Z):
        return np.einsum("kij,ij->k", A, Z)

    def adj(v):
        return np.einsum("k,kij->ij", v, A)

    best = None
    nb, nc = 1 + np.linalg.norm(b), 1 + np.linalg.norm(C)
    for it in range(1, max_iter + 1):
        rp = b - op(X)
        Rd = C - adj(y) - S
        mu = np.sum(X * S) / N
        pobj, dobj = np.sum(C * X), b @ y
        err = max(np.linalg.norm(rp) / nb, np.linalg.norm(Rd) / nc,
                  abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj)))
        if best is None or err < best[0]:
            best = (err, X.copy(), y.copy(), S.copy(), it)
        if err < tol:
            break
        if not np.isfinite(err) or np.abs(X).max() > 1e12 or np.abs(y).max() > 1e12:
            break
        try:
            Sinv = np.linalg.inv(S)
        except np.linalg.LinAlgError:
            break
        Sinv = 0.5 * (Sinv + Sinv.T)
        AX = A @ X
        ASi = A @ Sinv
        M = np.einsum("iab,jba->ij", AX, ASi)
        try:
            cf = np.linalg.cholesky(M + 1e-14 * np.eye(m) * max(1.0, np.trace(M) / max(m, 1)))
            solve = lambda r: np.linalg.solve(cf.T, np.linalg.solve(cf, r))
        except np.linalg.LinAlgError:
            solve = lambda r: np.linalg.lstsq(M, r, rcond=None)[0]

        def direction(Rc):
            rhs = rp - op((Rc - X @ Rd) @ Sinv)
            dy = solve(rhs)
            dS = Rd - adj(dy)
            dX = (Rc - X @ dS) @ Sinv
            return 0.5 * (dX + dX.T), dy, dS

        XS = X @ S
        dXp, dyp, dSp = direction(-XS)
        ap = min(1.0, _max_step(X, dXp))
        ad = min(1.0, _max_step(S, dSp))
        mu_aff = np.sum((X + ap * dXp) * (S + ad * dSp)) / N
        sig = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        Rc = sig * mu * eye - XS - dXp @ dSp
        dX, dy, dS = direction(Rc)
        gamma = 0.95 if err > 1e-6 else 0.99
        ap = min(1.0, gamma * _max_step(X, dX))
        ad = min(1.0, gamma * _max_step(S, dS))
        X = X + ap * dX
        X = 0.5 * (X + X.T)
        y = y + ad * dy
        S = S + ad * dS
        S = 0.5 * (S + S.T)
    return best


def solve(p: SdpProblem, tol: float = 1e-9, max_iter: int = 100) -> SdpSolution:
    """Solve ``p``; the returned status is one of optimal, max_iter, infeasible."""
    sf = _StandardForm(p)
    err, X, y, S, it = _ipm(sf.C, sf.A, sf.b, tol=tol, max_iter=max_iter)
    sol = _extract(p, sf, X, y, S, it)
    if not sol.usable:
        # decide between infeasibility and numerical trouble
        ph = _StandardForm(p, phase1=True)
        _, X1, _, _, _ = _ipm(ph.C, ph.A, ph.b, tol=tol, max_iter=max_iter)
        tau = float(ph.block(X1, ph.tau_block)[0, 0])
        if tau > 1e-6:
            sol.status = "infeasible"
    return sol


def _extract(p: SdpProblem, sf: _StandardForm, X, y, S, it) -> SdpSolution:
    sigma = unembed(sf.block(X, 0))
    sigma = 0.5 * (sigma + dagger(sigma))
    aux = float(sf.block(X, sf.aux_block)[0, 0]) if sf.has_aux else 0.0
    val = float(np.real(np.trace(p.objective @ sigma))) + p.aux_objective * aux
    dual = float(sf.b @ y)
    if p.sense == "max":
        dual = -dual
    eq = max([abs(np.real(np.trace(a @ sigma)) - b) for a, b in p.equalities], default=0.0)
    ineq = max([max(0.0, h - np.real(np.trace(g @ sigma))) for g, h in p.inequalities], default=0.0)
    min_eig = float(np.linalg.eigvalsh(sigma)[0])
    slack = math.inf
    if p.operator_bound is not None:
        bound = np.asarray(p.operator_bound, dtype=complex)
        if p.bound_slope is not None:
            bound = bound + aux * np.asarray(p.bound_slope)
        marg = partial_trace_matrix(sigma, (p.in_dim, p.out_dim), [0])
        slack = float(np.linalg.eigvalsh(bound - marg)[0])
    dual_eig = float(np.linalg.eigvalsh(S)[0])
    # worst violation across feasibility, positivity, duality gap and dual residual
    violation = max(
        eq, ineq, -min_eig, -slack if math.isfinite(slack) else 0.0, -dual_eig,
        abs(val - dual) / (1 + abs(val)),
        np.linalg.norm(sf.C - np.einsum("k,kij->ij", y, sf.A) - S) / (1 + np.linalg.norm(sf.C)),
    )
    if violation <= OPTIMAL_TOL:
        status = "optimal"
    elif violation <= INACCURATE_TOL:
        status = "inaccurate"
    else:
        status = "max_iter"
    return SdpSolution(
        sigma=sigma, aux=aux, primal_value=val, dual_value=dual,
        equality_residual=float(eq), inequality_residual=float(ineq),
        min_eigenvalue=min_eig, slack_min_eigenvalue=slack, dual_min_eigenvalue=dual_eig,
        status=status, iterations=it, violation=float(violation),
    )


def _require(sol: SdpSolution, what: str) -> SdpSolution:
    if not sol.usable:
        raise SdpError(
            f"{what}: solver returned {sol.status} (eq {sol.equality_residual:.2e}, "
            f"ineq {sol.inequality_residual:.2e}, gap {sol.gap:.2e})", sol)
    return sol


def filter_a(weights) -> np.ndarray:
    """``diag(weights) (x) I`` on two qubits."""
    return np.kron(np.diag(np.asarray(weights, dtype=float)), np.eye(2))


def filter_b(weights) -> np.ndarray:
    return np.kron(np.eye(2), np.diag(np.asarray(weights, dtype=float)))


# Input-state program: largest Schmidt weight compatible with (f_i, p_i).

def lambda_max_problem(f_i: float, p_i: float) -> SdpProblem:
    return SdpProblem(
        2, 2, np.zeros((4, 4)), sense="max",
        equalities=[(np.eye(4), p_i), (PHI_PLUS, f_i * p_i)],
        operator_bound=np.diag([0.0, 1.0]), bound_slope=np.diag([1.0, -1.0]),
        aux_objective=1.0,
    )


def lambda_max_sdp(f_i: float, p_i: float) -> float:
    if f_i < 0.5:
        return 1.0
    if f_i >= 1.0:
        # tr(sigma Phi+) = tr(sigma) forces sigma = p_i Phi+, whose marginal is p_i I/2;
        # the feasible set has no interior, so evaluate the reduced program directly
        return 1.0 - 0.5 * p_i
    sol = _require(solve(lambda_max_problem(f_i, p_i)), "lambda_max")
    return sol.primal_value


def lambda_closed_form(f_i: float, p_i: float) -> float:
    if f_i < 0.5:
        return 1.0
    return 1.0 - (0.5 - math.sqrt(f_i * (1 - f_i))) * p_i


# Memory program: smallest Choi fidelity given the output-state fidelity.

def g_problem(f_o: float, lam: float) -> SdpProblem:
    t = filter_a([math.sqrt(2 * lam), math.sqrt(2 * (1 - lam))])
    eqs = [(np.kron(e, np.eye(2)), float(np.real(np.trace(e)) / 2)) for e in hermitian_basis(2)]
    return SdpProblem(2, 2, PHI_PLUS, sense="min", equalities=eqs, inequalities=[(t @ PHI_PLUS @ t, f_o)])


def g_closed_form(f_o: float, lam: float) -> float:
    if lam >= 1:
        raise ValueError("closed form needs lambda < 1")
    return ((math.sqrt(2 * f_o) - (math.sqrt(lam) - math.sqrt(1 - lam))) / (2 * math.sqrt(1 - lam))) ** 2


def g_sdp(f_o: float, lam: float) -> float:
    if f_o < 0.5 or lam < 0.5 - 1e-12 or lam > 1 / (2 * f_o) + 1e-12:
        raise ValueError(f"(f_o={f_o}, lambda={lam}) outside 1/2 <= lambda <= 1/(2 f_o), f_o >= 1/2")
    return _require(solve(g_problem(f_o, lam)), "G").primal_value


# Heralded-memory programs: range of the success weight B.

def b_problem(f_o: float, p_o: float, t: float, sense: str) -> SdpProblem:
    ta = filter_a([1.0, math.sqrt(t)])
    tb = filter_b([1.0, math.sqrt(t)])
    return SdpProblem(
        2, 2, tb @ tb, sense=sense,
        inequalities=[(ta @ PHI_PLUS @ ta, (1 + t) / 2 * f_o * p_o), (ta @ ta, (1 + t) / 2 * p_o)],
        operator_bound=np.eye(2) / 2,
    )


def _b_sdp(f_o, p_o, t, sense):
    if not (0 <= t <= 1):
        raise ValueError("t must lie in [0, 1]")
    sol = solve(b_problem(f_o, p_o, t, sense))
    if sol.status == "infeasible":
        raise SdpError(f"B_{sense}: constraints infeasible for f_o={f_o}, p_o={p_o}, t={t}", sol)
    return _require(sol, f"B_{sense}").primal_value


def b_max_sdp(f_o: float, p_o: float, t: float) -> float:
    return _b_sdp(f_o, p_o, t, "max")


def b_min_sdp(f_o: float, p_o: float, t: float) -> float:
    return _b_sdp(f_o, p_o, t, "min")


@dataclass
class DualCertificate:
    operator: np.ndarray
    min_eigenvalue: float
    coefficients: dict
    bound: float
    sdp_value: float

    @property
    def psd(self) -> bool:
        return self.min_eigenvalue >= -1e-10

    @property
    def matches(self) -> bool:
        return abs(self.bound - self.sdp_value) <= 1e-6


def verify_dual_T(f_i: float, p_i: float, sdp_value: float | None = None) -> DualCertificate:
    """Check the analytic dual operator of the input-state program.

    ``T = A (x) I + c I + d |Phi+><Phi+|`` with ``A = |1><1|``; positivity of T
    gives ``lambda <= 1 + c p_i + d f_i p_i``.
    """
    if f_i < 0.5:
        raise ValueError("certificate defined for f_i >= 1/2")
    if f_i >= 1:
        # c and d diverge; the bound is the limit 1 - p_i / 2
        c = d = math.inf
        op = np.full((4, 4), np.nan)
        bound = 1 - 0.5 * p_i
        min_eig = 0.0
    else:
        s = math.sqrt(f_i * (1 - f_i))
        c = (f_i - 1 + s) / (2 * (1 - f_i))
        d = (1 - 2 * f_i) / (2 * s) if s > 0 else 0.0
        op = np.kron(np.diag([0.0, 1.0]), np.eye(2)) + c * np.eye(4) + d * PHI_PLUS
        min_eig = float(np.linalg.eigvalsh(op)[0])
        bound = 1 + c * p_i + d * f_i * p_i
    if sdp_value is None:
        sdp_value = lambda_max_sdp(f_i, p_i)
    cert = DualCertificate(op, min_eig, {"c": c, "d": d}, bound, sdp_value)
    if not cert.psd:
        raise SdpError(f"dual operator T not PSD at f_i={f_i} (min eigenvalue {min_eig:.3e})")
    return cert


def verify_dual_W(f_o: float, lam: float, sdp_value: float | None = None) -> DualCertificate:
    """Check ``W = Phi+ - a T Phi+ T + b |0><0| (x) I`` for the memory program.

    With ``a >= 0`` positivity of W gives ``tr(sigma Phi+) >= a f_o - b/2``.
    """
    if f_o < 0.5 or lam < 0.5:
        raise ValueError("certificate defined for f_o >= 1/2 and lambda >= 1/2")
    r = math.sqrt(2 * f_o) - (math.sqrt(lam) - math.sqrt(1 - lam))
    a = r / (2 * math.sqrt(2 * f_o) * (1 - lam))
    b = r / (2 * (1 - lam)) * (math.sqrt(lam) - math.sqrt(1 - lam))
    t = filter_a([math.sqrt(2 * lam), math.sqrt(2 * (1 - lam))])
    op = PHI_PLUS - a * t @ PHI_PLUS @ t + b * np.kron(np.diag([1.0, 0.0]), np.eye(2))
    min_eig = float(np.linalg.eigvalsh(op)[0])
    if sdp_value is None:
        sdp_value = g_sdp(f_o, lam)
    cert = DualCertificate(op, min_eig, {"a": a, "b": b}, a * f_o - b / 2, sdp_value)
    if not cert.psd:
        raise SdpError(f"dual operator W not PSD at f_o={f_o}, lambda={lam} (min eigenvalue {min_eig:.3e})")
    if a < 0:
        raise SdpError(f"coefficient a={a} negative; bound invalid")
    return cert
