"""Decay and gain envelopes along a switching signal.

Along a signal, the Lyapunov value of the active mode obeys

    V(t) <= psi1(t) * V(0) + (gamma1(|v|_[0,t]) + gamma2(|y|_[0,t])) * psi2(t)

where ``psi1`` accumulates the per-mode decay and the jump factors ``mu``
and ``psi2`` the discounted gain of every past segment. For class members
``psi1(t) <= exp(c1 - c2 t)`` and ``psi2(t) <= psi2_bar``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .certificate import FrequencyBudget, evaluate
from .model import SignalError, SwitchedSystemModel, SwitchingSignal, count


class NoDecayError(ValueError):
    """The certificate is not satisfied, so no decay rate exists."""


def _traversal(model: SwitchedSystemModel, signal: SwitchingSignal, t: float):
    """Modes, durations on ]0, t] and ln mu of every switch up to t."""
    if not (0.0 < t <= signal.horizon):
        raise SignalError(f"t={t} outside ]0, {signal.horizon}]")
    k = signal.segment_of(t)
    idx = signal.indices[: k + 1]
    inst = signal.instants[: k + 1]
    dur = [inst[i + 1] - inst[i] for i in range(k)] + [t - inst[k]]
    lmu = []
    for i in range(k):
        e = (idx[i], idx[i + 1])
        if e not in model.log_mu:
            raise SignalError(f"no mu for traversed switch {e}")
        lmu.append(model.log_mu[e])
    lam = [model.lam(p) for p in idx]
    return lam, dur, lmu


def log_psi1(model: SwitchedSystemModel, signal: SwitchingSignal, t: float) -> float:
    lam, dur, lmu = _traversal(model, signal, t)
    return -sum(l * d for l, d in zip(lam, dur)) + sum(lmu)


def psi1(model: SwitchedSystemModel, signal: SwitchingSignal, t: float) -> float:
    return math.exp(log_psi1(model, signal, t))


def psi1_exponent_regrouped(model: SwitchedSystemModel, signal: SwitchingSignal, t: float) -> float:
    """ln psi1(t) regrouped by mode class and edge class, from interval counts."""
    c = count(signal, 0.0, t)
    by = model.by_id
    out = 0.0
    for p in model.P_S:
        out -= abs(by[p].lam) * c.T_p.get(p, 0.0)
    for p in model.P_U:
        out += abs(by[p].lam) * c.T_p.get(p, 0.0)
    for e in model.E_minus:
        out -= abs(model.log_mu[e]) * c.N_pq.get(e, 0)
    for e in model.E_plus:
        out += abs(model.log_mu[e]) * c.N_pq.get(e, 0)
    for e, n in c.N_pq.items():
        if e not in model.log_mu:
            raise SignalError(f"no mu for traversed switch {e}")
    return out


def _log_gain(lam: float, d: float) -> float:
    """log of (1 - exp(-lam d)) / lam, for d > 0 and either sign of lam."""
    a = abs(lam)
    return max(0.0, -lam * d) + math.log(-math.expm1(-a * d)) - math.log(a)


def psi2(model: SwitchedSystemModel, signal: SwitchingSignal, t: float, literal: bool = True) -> float:
    """Accumulated gain factor, summed segment by segment.

    With ``literal=True`` the tail of segment ``i`` collects the jump factors
    of the switches after ``tau_{i+1}`` only; ``literal=False`` also applies
    the factor of the switch at ``tau_{i+1}`` itself, which is what the
    Lyapunov comparison actually produces.
    """
    lam, dur, lmu = _traversal(model, signal, t)
    n = len(lam) - 1
    terms = []
    for i in range(n + 1):
        if dur[i] <= 0.0:
            continue
        tail = -sum(lam[j] * dur[j] for j in range(i + 1, n + 1))
        first = i if not literal else i + 1
        tail += sum(lmu[j] for j in range(first, n))
        terms.append(tail + _log_gain(lam[i], dur[i]))
    if not terms:
        return 0.0
    return float(math.exp(logsumexp(terms)))


# ------------------------------------------------------------------ grids

def _locate(signal: SwitchingSignal, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > signal.horizon):
        raise SignalError("evaluation times outside [0, horizon]")
    return np.searchsorted(signal.times, times, side="right") - 1


def _lam_lmu(model, signal):
    lam = np.array([model.lam(p) for p in signal.indices])
    lmu = np.array([model.log_mu[(p, q)] for p, q in zip(signal.indices[:-1], signal.indices[1:])])
    return lam, lmu


def log_psi1_grid(model: SwitchedSystemModel, signal: SwitchingSignal, times, left: bool = False):
    """ln psi1 on many times at once; ``left=True`` gives left limits."""
    lam, lmu = _lam_lmu(model, signal)
    tau = signal.times
    d = np.diff(tau)
    # exponent right after each switch
    at_switch = np.concatenate([[0.0], np.cumsum(-lam[:-1] * d + lmu)])
    times = np.asarray(times, dtype=float)
    k = _locate(signal, times)
    if left:
        # a time sitting on a switch belongs to the previous segment
        on = (k > 0) & (tau[np.maximum(k, 0)] == times)
        k = np.where(on, k - 1, k)
    return at_switch[k] - lam[k] * (times - tau[k])


def psi2_grid(model: SwitchedSystemModel, signal: SwitchingSignal, times, literal: bool = True):
    """psi2 on many times via the segment recursion (independent of :func:`psi2`)."""
    lam, lmu = _lam_lmu(model, signal)
    tau = signal.times
    d = np.diff(tau)
    n1 = len(tau)
    # carried[k]: contribution of segments < k, evaluated at tau_k
    carried = np.zeros(n1)
    for k in range(1, n1):
        g = -np.expm1(-lam[k - 1] * d[k - 1]) / lam[k - 1]
        prev = math.exp(-lam[k - 1] * d[k - 1]) * carried[k - 1]
        if literal:
            carried[k] = g + math.exp(lmu[k - 1]) * prev
        else:
            carried[k] = math.exp(lmu[k - 1]) * (g + prev)
    times = np.asarray(times, dtype=float)
    k = _locate(signal, times)
    u = times - tau[k]
    return np.exp(-lam[k] * u) * carried[k] - np.expm1(-lam[k] * u) / lam[k]


def geometric_sum(signal: SwitchingSignal, t: float, rate: float) -> float:
    """sum over switching instants tau_i <= t (tau_0 included) of exp(-rate (t - tau_i))."""
    tau = signal.times[signal.times <= t]
    return float(np.exp(-rate * (t - tau)).sum())


# ------------------------------------------------------------------ constants

@dataclass(frozen=True)
class ProofConstants:
    c_prime: float
    c1: float
    c2: float
    c_dprime: float
    cbar1: float
    cbar2: float
    ctilde1: float
    ctilde2: float
    psi2_bar: float
    boundary: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def constants(model: SwitchedSystemModel, budget: FrequencyBudget) -> ProofConstants:
    """Decay intercept/slope and the uniform gain bound for a feasible budget.

    ``c_prime`` collects the offsets lost to the floors and integer slacks of
    the budget. ``c1`` adds the two end effects of a finite window: the mode
    active at its left end is not counted as an activation (worst case an
    unstable mode for its full ``Delta``), and the last stable stay may be cut
    short (worst case ``delta``). ``c2`` is minus the certificate lhs.
    """
    b = budget.resolve(model)
    rep = evaluate(model, b)
    if not rep.feasible:
        raise NoDecayError(f"certificate lhs = {rep.lhs} >= 0; no decay constant exists")
    by, lmu = model.by_id, model.log_mu
    offsets = (
        sum(abs(by[p].lam) * b.rho_tilde_U[p] * by[p].Delta for p in model.P_U)
        + sum(abs(lmu[e]) * b.rho_tilde_plus[e] for e in model.E_plus)
        + sum(abs(by[p].lam) * by[p].delta for p in model.P_S)
        + sum(abs(lmu[e]) for e in model.E_minus)
    )
    c_prime = offsets + rep.stable + rep.e_minus
    boundary = max((abs(by[p].lam) * by[p].Delta for p in model.P_U), default=0.0) + max(
        (abs(by[p].lam) * by[p].delta for p in model.P_S), default=0.0
    )
    c1 = c_prime + boundary
    c2 = -rep.lhs
    jump_up = max([0.0] + [v for v in lmu.values()])
    jump_down = max([0.0] + [-v for v in lmu.values()])
    ctilde1, cbar1 = c1 + jump_up, c1 + jump_down
    geo = 1.0 + 1.0 / math.expm1(c2 * model.delta_min)
    psi2_bar = sum(1.0 / abs(by[p].lam) for p in model.P_S) * math.exp(ctilde1) * (1.0 + geo) + sum(
        1.0 / abs(by[p].lam) for p in model.P_U
    ) * math.exp(cbar1) * geo
    return ProofConstants(c_prime, c1, c2, c_prime, cbar1, c2, ctilde1, c2, psi2_bar, boundary)


def decay_check(
    model: SwitchedSystemModel,
    signal: SwitchingSignal,
    budget: FrequencyBudget,
    grid: float = 0.1,
    consts: ProofConstants | None = None,
) -> tuple[bool, float]:
    """Check psi1(t) <= exp(c1 - c2 t) at every switch (both one-sided
    limits) and on a ``grid``-spaced time grid; return (ok, worst log-margin)."""
    consts = consts or constants(model, budget)
    T = signal.horizon
    ts = np.concatenate([np.arange(grid, T, grid), signal.times[1:], [T]])
    ts = ts[(ts > 0) & (ts <= T)]
    bound = consts.c1 - consts.c2 * ts
    right = log_psi1_grid(model, signal, ts) - bound
    left = log_psi1_grid(model, signal, ts, left=True) - bound
    worst = float(max(right.max(initial=-np.inf), left.max(initial=-np.inf)))
    return worst <= 1e-12, worst


def envelope(consts: ProofConstants, V0: float, gamma1_of_vnorm, gamma2_of_ynorm, t):
    """exp(c1 - c2 t) V0 + (gamma1 + gamma2) psi2_bar; vectorises over arrays."""
    g1 = np.asarray(gamma1_of_vnorm, dtype=float)
    g2 = np.asarray(gamma2_of_ynorm, dtype=float)
    if V0 < 0 or np.any(g1 < 0) or np.any(g2 < 0):
        raise ValueError("V0 and gamma values must be non-negative")
    t = np.asarray(t, dtype=float)
    out = np.exp(consts.c1 - consts.c2 * t) * V0 + (g1 + g2) * consts.psi2_bar
    return float(out) if out.ndim == 0 else out


def envelope_exact(model, signal, V0: float, gamma1_of_vnorm, gamma2_of_ynorm, t):
    """Same estimate with the signal's own psi1(t) and gain factor psi2(t)."""
    g = np.asarray(gamma1_of_vnorm, dtype=float) + np.asarray(gamma2_of_ynorm, dtype=float)
    t = np.asarray(t, dtype=float)
    p1 = np.exp(log_psi1_grid(model, signal, np.atleast_1d(t)))
    p2 = psi2_grid(model, signal, np.atleast_1d(t), literal=False)
    out = p1 * V0 + g * p2
    return float(out[0]) if t.ndim == 0 else out


@dataclass
class EnvelopeReport:
    t: np.ndarray
    psi1: np.ndarray
    decay_bound: np.ndarray
    psi2: np.ndarray
    psi2_bar: float
    envelope: np.ndarray
    V: np.ndarray
    exact: np.ndarray
    dominated: bool
    worst_margin: float
    exact_dominated: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "psi1", "decay_bound", "psi2", "V", "envelope", "ok"])
        ok = self.V <= self.envelope * (1 + 1e-9) + 1e-12
        for row in zip(self.t, self.psi1, self.decay_bound, self.psi2, self.V, self.envelope, ok):
            w.writerow([repr(float(x)) for x in row[:-1]] + [int(row[-1])])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "samples": int(len(self.t)),
            "dominated": bool(self.dominated),
            "worst_margin": float(self.worst_margin),
            "psi2_bar": float(self.psi2_bar),
            "exact_dominated": bool(self.exact_dominated),
            "max_psi2": float(self.psi2.max(initial=0.0)),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def envelope_report(
    model: SwitchedSystemModel,
    consts: ProofConstants,
    signal: SwitchingSignal,
    t,
    V,
    gamma1_of_vnorm,
    gamma2_of_ynorm,
) -> EnvelopeReport:
    """Compare sampled Lyapunov values ``V`` against both envelopes.

    ``t`` must start at 0 so that ``V[0]`` is the initial value.
    """
    t = np.asarray(t, dtype=float)
    V = np.asarray(V, dtype=float)
    g1 = np.asarray(gamma1_of_vnorm, dtype=float)
    g2 = np.asarray(gamma2_of_ynorm, dtype=float)
    if t[0] != 0.0:
        raise ValueError("samples must start at t = 0")
    V0 = float(V[0])
    p1 = np.exp(log_psi1_grid(model, signal, t))
    p2 = psi2_grid(model, signal, t, literal=True)
    env = envelope(consts, V0, g1, g2, t)
    exact = envelope_exact(model, signal, V0, g1, g2, t)
    margin = V - env
    rtol = 1e-9
    dominated = bool(np.all(V <= env * (1 + rtol) + 1e-12))
    exact_ok = bool(np.all(V <= exact * (1 + 1e-6) + 1e-9))
    return EnvelopeReport(
        t, p1, np.exp(consts.c1 - consts.c2 * t), p2, consts.psi2_bar, env, V, exact,
        dominated, float(margin.max()), exact_ok,
    )
