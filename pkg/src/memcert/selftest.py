"""Certification bounds for a qubit memory from CHSH data.

Three settings are covered:

* ``S1`` deterministic memory and deterministic injection/extraction maps,
  bounded from the CHSH scores with and without the memory;
* ``S2`` heralded memory assessed from the memory-output test alone, with a
  probabilistic injection map;
* ``S3`` heralded memory with both tests, deterministic injection and
  probabilistic extraction; the bounds come out of a one-dimensional
  minimization over small SDPs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import sdp
from .correlations import (
    ChshScore, CountsTable, DataError, bin_noclicks, chsh, conditional_detection,
    correlations_from_counts, post_select, signaling_diagnostic,
)

log = logging.getLogger(__name__)

S_STAR = (16 + 14 * math.sqrt(2)) / 17
TSIRELSON = 2 * math.sqrt(2)
SCENARIOS = ("S1", "S2", "S3")
ASSUMPTIONS = ("none", "sfs", "wfs")
SIGNALING_WARN = 1e-2
T_GRID_POINTS = 33
T_TOL = 1e-6


def singlet_fidelity_raw(S: float) -> float:
    """Affine self-testing bound f(S), unclamped."""
    return 0.5 * (1 + (S - S_STAR) / (TSIRELSON - S_STAR))


def singlet_fidelity_bound(S: float) -> float:
    """Lower bound on the Bell-state fidelity certified by a CHSH score S."""
    if not -4 <= S <= 4:
        raise ValueError(f"CHSH score {S} outside [-4, 4]")
    return min(1.0, max(0.0, singlet_fidelity_raw(S)))


def lambda_i(f_i: float, p_i: float = 1.0) -> float:
    """Largest Schmidt weight of the stored state compatible with (f_i, p_i)."""
    return sdp.lambda_closed_form(f_i, p_i)


def g_bound(f_o: float, lam: float) -> float:
    """Smallest memory Choi fidelity given output fidelity f_o and Schmidt weight lam."""
    return sdp.g_closed_form(f_o, lam)


def scenario1_bound(f_i: float, f_o: float) -> float:
    """Choi-fidelity bound for a deterministic memory; 0 when f_o <= 1/2."""
    if f_o <= 0.5 + 1e-12:
        return 0.0
    lam = lambda_i(f_i, 1.0)
    if lam >= 1 / (2 * f_o):
        return (f_o + math.sqrt(2 * f_o - 1)) / 2
    return g_bound(f_o, lam)


def scenario2_bound(f_o: float, p_o: float) -> tuple[float, float]:
    return f_o, p_o / 2


def t_interval(f_i: float, p_i: float) -> tuple[float, float]:
    lam = lambda_i(f_i, p_i)
    return (1 - lam) / lam, 1.0


def _safe(fn, *args) -> float:
    try:
        return fn(*args)
    except sdp.SdpError as exc:
        if exc.solution is not None and exc.solution.status == "infeasible":
            return math.inf
        raise


def _minimize_on_interval(fn, lo: float, hi: float) -> tuple[float, float]:
    """Grid search followed by golden-section refinement; returns (t, value)."""
    if hi - lo <= T_TOL:
        return hi, fn(hi)
    ts = np.linspace(lo, hi, T_GRID_POINTS)
    vals = np.array([fn(t) for t in ts])
    k = int(np.argmin(vals))
    if not np.isfinite(vals[k]):
        return hi, math.inf
    a = ts[max(k - 1, 0)]
    b = ts[min(k + 1, len(ts) - 1)]
    best_t, best_v = ts[k], vals[k]
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > T_TOL:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fn(d)
    for t, v in ((c, fc), (d, fd)):
        if v < best_v:
            best_t, best_v = t, v
    return float(best_t), float(best_v)


def fmin_pmin(f_i: float, f_o: float, p_i: float, p_o: float) -> dict:
    """Scenario-3 minimizations, with the minimizing t for each quantity."""
    lo, hi = t_interval(f_i, p_i)
    if f_o * p_o <= 0:
        f_val, f_t = 0.0, hi
    else:
        def fid(t):
            bmax = _safe(sdp.b_max_sdp, f_o, p_o, t)
            return math.inf if not math.isfinite(bmax) else (1 + t) * f_o * p_o / (2 * bmax)
        f_t, f_val = _minimize_on_interval(fid, lo, hi)
    p_t, p_val = _minimize_on_interval(lambda t: _safe(sdp.b_min_sdp, f_o, p_o, t), lo, hi)
    if not (math.isfinite(f_val) and math.isfinite(p_val)):
        raise DataError("inputs are inconsistent: no admissible Schmidt weight for the observed values")
    return {"fidelity": min(1.0, f_val), "success": min(1.0, max(0.0, p_val)),
            "t_fidelity": f_t, "t_success": p_t, "t_interval": (lo, hi)}


@dataclass(frozen=True)
class ScenarioInputs:
    f_i: float
    f_o: float
    p_i: float = 1.0
    p_o: float = 1.0
    scenario: str = "S1"
    assumptions: dict = field(default_factory=lambda: {"a": "none", "b_in": "none", "b_out": "none"})

    def __post_init__(self):
        for name in ("f_i", "f_o", "p_i", "p_o"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.scenario == "S1" and (self.p_i != 1 or self.p_o != 1):
            raise ValueError("scenario S1 is the deterministic setting: p_i = p_o = 1")


def scenario3_bound(inputs: ScenarioInputs) -> tuple[float, float]:
    r = fmin_pmin(inputs.f_i, inputs.f_o, inputs.p_i, inputs.p_o)
    return r["fidelity"], r["success"]


@dataclass
class CertificationReport:
    scenario: str
    assumptions: dict
    s_i: Optional[ChshScore]
    s_o: ChshScore
    f_i: Optional[float]
    f_o: float
    lambda_i: Optional[float]
    p_i: Optional[float]
    p_o: Optional[float]
    fidelity_bound: float
    success_bound: Optional[float]
    signaling: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.fidelity_bound <= 1:
            raise ValueError("fidelity bound outside [0, 1]")
        if self.success_bound is not None and not 0 <= self.success_bound <= 1:
            raise ValueError("success bound outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CertificationReport":
        d = dict(d)
        for k in ("s_i", "s_o"):
            if d.get(k) is not None:
                d[k] = ChshScore(**d[k])
        return cls(**d)


@dataclass(frozen=True)
class CertifyConfig:
    scenario: str = "S2"
    assume_a: str = "none"
    assume_b_in: str = "none"
    assume_b_out: str = "none"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        for v in (self.assume_a, self.assume_b_in, self.assume_b_out):
            if v not in ASSUMPTIONS:
                raise ValueError(f"assumption must be one of {ASSUMPTIONS}, got {v!r}")


def _phase_statistics(table: CountsTable, assume_a: str, assume_b: str, warnings: list, label: str):
    """Reduce one phase to (score, f, p, signaling); p is None when unknown."""
    p = correlations_from_counts(table)
    sig = signaling_diagnostic(p)
    # allow five standard deviations of sampling noise on top of the fixed threshold
    noise = 5 / math.sqrt(max(int(table.totals().min()), 1))
    if sig > max(SIGNALING_WARN, noise):
        warnings.append(f"{label}: marginals vary with the remote setting by {sig:.3g}")
    if assume_a == "none":
        p = bin_noclicks(p, "a")
    if assume_b == "none":
        p = bin_noclicks(p, "b")
    if table.postselected:
        p_cond = None
    elif assume_b == "wfs" and p.has_noclick:
        p_cond = conditional_detection(p)
    else:
        # no B-side losses, SFS (filter is the identity), or losses binned into outcome 0
        p_cond = 1.0
    post = p.has_noclick or table.postselected
    score = chsh(post_select(p), post_selected=post)
    return score, singlet_fidelity_bound(score.value), p_cond, sig


def certify(counts_i: Optional[CountsTable], counts_o: CountsTable, config: CertifyConfig) -> CertificationReport:
    """Counts -> correlations -> post-selection -> CHSH -> f(S) -> scenario bound."""
    warnings: list[str] = []
    if counts_o is None:
        raise DataError("memory-output counts are required")
    if counts_o.phase != "output":
        raise DataError("second table must be the output phase")
    if config.scenario in ("S1", "S3") and counts_i is None:
        raise DataError(f"scenario {config.scenario} needs input-phase counts")
    if counts_i is not None and counts_i.phase != "input":
        raise DataError("first table must be the input phase")

    s_o, f_o, p_o, sig_o = _phase_statistics(counts_o, config.assume_a, config.assume_b_out, warnings, "output")
    s_i = f_i = p_i = lam = None
    signaling = {"output": sig_o}
    if counts_i is not None:
        s_i, f_i, p_i, sig_i = _phase_statistics(counts_i, config.assume_a, config.assume_b_in, warnings, "input")
        signaling["input"] = sig_i

    details: dict = {}
    success: Optional[float]
    if config.scenario == "S1":
        if config.assume_b_in == "wfs" or config.assume_b_out == "wfs":
            warnings.append("scenario S1 assumes deterministic B-side filters; WFS post-selection "
                            "is treated as lossless")
        lam = lambda_i(f_i, 1.0)
        if f_o <= 0.5 + 1e-12:
            warnings.append("output fidelity bound f_o <= 1/2: outside the proven domain, no certification")
        fidelity = scenario1_bound(f_i, f_o)
        success = 1.0
    elif config.scenario == "S2":
        fidelity, success = f_o, None
        if p_o is None:
            warnings.append("conditional detection unavailable: only post-selected data recorded, "
                            "no success-probability bound")
        else:
            success = scenario2_bound(f_o, p_o)[1]
        if f_i is not None:
            lam = lambda_i(f_i, 1.0 if p_i is None else p_i)
    else:
        if p_i is None:
            warnings.append("input conditional detection unavailable; using p_i = 0 (conservative)")
            p_i = 0.0
        if p_o is None:
            warnings.append("output conditional detection unavailable; using p_o = 0, bounds are trivial")
            p_o_eff = 0.0
        else:
            p_o_eff = p_o
        lam = lambda_i(f_i, p_i)
        r = fmin_pmin(f_i, f_o, p_i, p_o_eff)
        fidelity, success = r["fidelity"], r["success"]
        details = {"t_fidelity": r["t_fidelity"], "t_success": r["t_success"], "t_interval": list(r["t_interval"])}

    for w in warnings:
        log.warning(w)
    return CertificationReport(
        scenario=config.scenario,
        assumptions={"a": config.assume_a, "b_in": config.assume_b_in, "b_out": config.assume_b_out},
        s_i=s_i, s_o=s_o, f_i=f_i, f_o=f_o, lambda_i=lam, p_i=p_i, p_o=p_o,
        fidelity_bound=float(max(0.0, min(1.0, fidelity))),
        success_bound=None if success is None else float(success),
        signaling=signaling, warnings=warnings, details=details,
    )
