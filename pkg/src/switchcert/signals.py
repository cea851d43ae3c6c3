"""Membership checks, random generation and exhaustive enumeration of
switching signals under dwell-time and frequency-budget restrictions.

Counting constraints only depend on which switches an interval ]s, t]
contains, i.e. on the pair of segments holding s and t. With segments
``k = 0..n`` (segment ``k`` starts at ``tau_k``; the last one ends at the
horizon, exclusive) the pair ``(a, b)``, ``a <= b``, stands for every
interval containing exactly the switches ``a+1 .. b``. All checks run over
these O(n^2) pairs.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _kernels
from ._kernels import FLOOR_TOL, KIND_FREE, KIND_LOWER, KIND_UPPER
from .certificate import FrequencyBudget
from .model import SignalError, SwitchedSystemModel, SwitchingSignal

log = logging.getLogger(__name__)

# slack for dwell-time comparisons of accumulated float instants
TIME_TOL = 1e-9

CONSTRAINTS = ("edge", "dwell", "eq4a", "eq5", "eq6", "eq7", "eq8", "eq4b", "eq4c")


@dataclass(frozen=True)
class Violation:
    constraint: str
    interval: tuple[float, float]
    observed: float
    required: float
    detail: str = ""


@dataclass(frozen=True)
class MembershipReport:
    admissible: bool
    in_class: bool
    violations: tuple[Violation, ...] = ()

    def to_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "in_class": self.in_class,
            "violations": [
                {
                    "constraint": v.constraint,
                    "interval": list(v.interval),
                    "observed": v.observed,
                    "required": v.required,
                    "detail": v.detail,
                }
                for v in self.violations
            ],
        }


class GenerationError(RuntimeError):
    def __init__(self, msg: str, deepest: SwitchingSignal | None = None):
        super().__init__(msg)
        self.deepest = deepest


class EnumerationLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorPolicy:
    lookahead: int = 2
    max_backtrack: int = 16
    max_restarts: int = 64
    dwell_rule: Literal["uniform", "min", "max"] = "uniform"
    initial: int | None = None

    def __post_init__(self):
        if self.dwell_rule not in ("uniform", "min", "max"):
            raise ValueError(f"unknown dwell_rule {self.dwell_rule!r}")
        if self.lookahead < 0 or self.max_backtrack < 0 or self.max_restarts < 1:
            raise ValueError("lookahead, max_backtrack must be >= 0 and max_restarts >= 1")


# ------------------------------------------------------------------ columns

@dataclass
class _Columns:
    """Constraint table: one column per subsystem, then one per edge."""

    col_p: dict[int, int]
    col_e: dict[tuple[int, int], int]
    rho: np.ndarray
    off: np.ndarray
    kind: np.ndarray
    names: list[str] = field(default_factory=list)
    labels: list[object] = field(default_factory=list)

    @property
    def width(self) -> int:
        return len(self.rho)

    def row_delta(self, prev: int, q: int) -> list[int]:
        cols = [self.col_p[q]]
        e = self.col_e.get((prev, q))
        if e is not None:
            cols.append(e)
        return cols


def _columns(model: SwitchedSystemModel, budget: FrequencyBudget | None) -> _Columns:
    P, E = model.P, [e.key for e in model.edges]
    K = len(P) + len(E)
    rho, off = np.zeros(K), np.zeros(K)
    kind = np.full(K, KIND_FREE, dtype=np.int8)
    names, labels = [""] * K, [None] * K
    col_p = {p: i for i, p in enumerate(P)}
    col_e = {e: len(P) + i for i, e in enumerate(E)}
    for p, j in col_p.items():
        labels[j] = p
    for e, j in col_e.items():
        labels[j] = e
    if budget is not None:
        b = budget.resolve(model)
        for p in model.P_S:
            j = col_p[p]
            rho[j], kind[j], names[j] = b.rho_S[p], KIND_LOWER, "eq5"
        for p in model.P_U:
            j = col_p[p]
            rho[j], off[j], kind[j], names[j] = b.rho_U[p], b.rho_tilde_U[p], KIND_UPPER, "eq6"
        for e in model.E_minus:
            j = col_e[e]
            rho[j], kind[j], names[j] = b.rho_minus[e], KIND_LOWER, "eq7"
        for e in model.E_plus:
            j = col_e[e]
            rho[j], off[j], kind[j], names[j] = b.rho_plus[e], b.rho_tilde_plus[e], KIND_UPPER, "eq8"
    return _Columns(col_p, col_e, rho, off, kind, names, labels)


def _cumulative(cols: _Columns, indices) -> np.ndarray:
    C = np.zeros((len(indices), cols.width), dtype=np.int64)
    for k in range(1, len(indices)):
        C[k] = C[k - 1]
        for j in cols.row_delta(indices[k - 1], indices[k]):
            C[k, j] += 1
    return C


# ------------------------------------------------------------------ checks

def validate_admissible(model: SwitchedSystemModel, signal: SwitchingSignal) -> MembershipReport:
    by = model.by_id
    unknown = sorted(set(signal.indices) - set(by))
    if unknown:
        raise SignalError(f"signal uses unknown subsystem ids {unknown}")
    viol = []
    inst, idx = signal.instants, signal.indices
    for i in range(len(idx) - 1):
        p, q = idx[i], idx[i + 1]
        if (p, q) not in model.mu:
            viol.append(Violation("edge", (inst[i], inst[i + 1]), 0, 1, f"switch {p}->{q} not in E(P)"))
        d = inst[i + 1] - inst[i]
        lo, hi = by[p].delta, by[p].Delta
        if d < lo - TIME_TOL or d > hi + TIME_TOL:
            viol.append(Violation("dwell", (inst[i], inst[i + 1]), d, lo if d < lo else hi,
                                  f"dwell on {p} outside [{lo}, {hi}]"))
    last = signal.horizon - inst[-1]
    if last > by[idx[-1]].Delta + TIME_TOL:
        viol.append(Violation("dwell", (inst[-1], signal.horizon), last, by[idx[-1]].Delta,
                              f"final dwell on {idx[-1]} exceeds Delta"))
    ok = not viol
    return MembershipReport(ok, False, tuple(viol))


def _eq4a_violations(model: SwitchedSystemModel, signal: SwitchingSignal) -> list[Violation]:
    """Switch-count bounds from Delta_max / delta_min on every segment pair.

    Lower: N >= floor((t-s)/Delta_max); the sup of t-s over the pair is
    ``end_b - tau_a`` and is not attained. Upper: N <= ceil((t-s)/delta_min);
    the inf of t-s is ``tau_b - tau_{a+1}``, also not attained.
    """
    tau = signal.times
    ends = signal.segment_ends
    n1 = len(tau)
    a = np.arange(n1)
    N = a[None, :] - a[:, None]
    pair = N >= 0
    Dmax, dmin = model.Delta_max, model.delta_min
    sup = ends[None, :] - tau[:, None]
    max_floor = np.ceil(sup / Dmax - FLOOR_TOL) - 1
    low_bad = pair & (max_floor > N)
    inf = np.where(N > 0, tau[None, :] - np.append(tau[1:], np.inf)[:, None], 0.0)
    min_ceil = np.where(N > 0, np.floor(inf / dmin + FLOOR_TOL) + 1, 0)
    up_bad = pair & (N > 0) & (N > min_ceil)
    out = []
    for i, j in zip(*np.nonzero(low_bad)):
        out.append(Violation("eq4a", (float(tau[i]), float(ends[j])), int(N[i, j]), int(max_floor[i, j]),
                             "too few switches for Delta_max"))
    for i, j in zip(*np.nonzero(up_bad)):
        out.append(Violation("eq4a", (float(tau[i + 1]), float(tau[j])), int(N[i, j]), int(min_ceil[i, j]),
                             "too many switches for delta_min"))
    return out


def validate_class(
    model: SwitchedSystemModel, budget: FrequencyBudget, signal: SwitchingSignal
) -> MembershipReport:
    adm = validate_admissible(model, signal)
    if not adm.admissible:
        return adm
    cols = _columns(model, budget)
    C = _cumulative(cols, signal.indices)
    tau, n1 = signal.times, len(signal.indices)
    viol = _eq4a_violations(model, signal)

    bad = _kernels.window_violations(C, cols.rho, cols.off, cols.kind)
    for a, b, j in zip(*np.nonzero(bad)):
        N = b - a
        cnt = int(C[b, j] - C[a, j])
        fl = math.floor(cols.rho[j] * N + FLOOR_TOL)
        req = fl if cols.kind[j] == KIND_LOWER else int(cols.off[j]) + fl
        viol.append(Violation(cols.names[j], (float(tau[a]), float(tau[b])), cnt, req,
                              f"{cols.labels[j]} over {N} switches"))

    # conservation: every switch lands in some P column and, being admissible,
    # in some edge column (E_zero included)
    nP = len(cols.col_p)
    Np = C[:, :nP].sum(axis=1)
    Ne = C[:, nP:].sum(axis=1)
    k = np.arange(n1)
    for name, tot in (("eq4b", Np), ("eq4c", Ne)):
        mism = np.nonzero(tot != k)[0]
        for b in mism:
            viol.append(Violation(name, (0.0, float(tau[b])), int(tot[b]), int(b), "count identity"))
    return MembershipReport(True, not viol, tuple(viol))


# ------------------------------------------------------------------ generation

class _Prefix:
    """Index sequence plus its cumulative constraint counts, grown in place."""

    def __init__(self, cols: _Columns, capacity: int = 64):
        self.cols = cols
        self.C = np.zeros((capacity, cols.width), dtype=np.int64)
        self.idx: list[int] = []

    def push(self, q: int) -> bool:
        """Append ``q``; return whether all windows ending at it hold."""
        n = len(self.idx)
        if n == self.C.shape[0]:
            self.C = np.concatenate([self.C, np.zeros_like(self.C)])
        if n == 0:
            self.C[0] = 0
            self.idx.append(q)
            return True
        self.C[n] = self.C[n - 1]
        for j in self.cols.row_delta(self.idx[-1], q):
            self.C[n, j] += 1
        self.idx.append(q)
        c = self.cols
        return _kernels.last_window_violation(self.C[: n + 1], n, c.rho, c.off, c.kind) < 0

    def pop(self) -> None:
        self.idx.pop()

    def extendable(self, succ: dict, depth: int) -> bool:
        if depth <= 0 or not succ[self.idx[-1]]:
            # an absorbing mode ends the prefix instead of dead-ending it
            return True
        for q in succ[self.idx[-1]]:
            ok = self.push(q) and self.extendable(succ, depth - 1)
            self.pop()
            if ok:
                return True
        return False

    def admits(self, q: int, succ: dict, lookahead: int) -> bool:
        """Whether ``q`` can be appended with ``lookahead`` more switches after it."""
        ok = self.push(q) and self.extendable(succ, lookahead)
        self.pop()
        return ok


def _draw_dwell(rng: np.random.Generator, lo: float, hi: float, rule: str) -> float:
    if rule == "min":
        return lo
    if rule == "max":
        return hi
    return float(rng.uniform(lo, hi))


def generate(
    model: SwitchedSystemModel,
    budget: FrequencyBudget,
    horizon: float,
    seed: int,
    policy: GeneratorPolicy | None = None,
) -> SwitchingSignal:
    """Random member of the budget's signal class on ``[0, horizon]``.

    Each next subsystem is drawn uniformly among the successors whose switch
    keeps every window constraint satisfied and leaves ``lookahead`` further
    switches possible. Dead ends backtrack; too many backtracks restart the
    attempt with a fresh stream derived from ``seed``.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    policy = policy or GeneratorPolicy()
    cols = _columns(model, budget)
    deepest: SwitchingSignal | None = None
    for restart in range(policy.max_restarts):
        rng = np.random.default_rng([seed, restart])
        sig, reached = _attempt(model, cols, horizon, rng, policy)
        if sig is not None:
            return sig
        if reached is not None and (deepest is None or reached.n_switches > deepest.n_switches):
            deepest = reached
    raise GenerationError(
        f"no signal found after {policy.max_restarts} restarts; the budget may be too tight "
        f"for the edge structure (deepest prefix: "
        f"{deepest.n_switches if deepest else 0} switches)",
        deepest,
    )


def _attempt(model, cols, horizon, rng, policy):
    by, succ = model.by_id, model.successors
    prefix = _Prefix(cols)
    Dmax = model.Delta_max

    def depth(q, start):
        # never look further ahead than the horizon could require
        rest = horizon - start - by[q].Delta
        need = 0 if rest <= 0 else math.ceil(rest / Dmax - TIME_TOL)
        return min(policy.lookahead, need)

    roots = [policy.initial] if policy.initial is not None else list(model.P)
    roots = [roots[i] for i in rng.permutation(len(roots))]

    # each frame: [index, start, dwell, untried alternatives]
    frames: list[list] = []
    root_alts = [q for q in roots if prefix.admits(q, succ, depth(q, 0.0))]
    if not root_alts:
        return None, None

    def open_frame(q, start, alts):
        prefix.push(q)
        s = by[q]
        frames.append([q, start, _draw_dwell(rng, s.delta, s.Delta, policy.dwell_rule), alts])

    open_frame(root_alts[0], 0.0, root_alts[1:])
    backtracks = 0
    best = None

    def snapshot(h):
        return SwitchingSignal(tuple(f[1] for f in frames), tuple(f[0] for f in frames), h)

    while True:
        q, start, dwell, _ = frames[-1]
        t_next = start + dwell
        if t_next >= horizon:
            return snapshot(horizon), None
        if not succ[q]:
            # absorbing mode: the prefix cannot outlive its maximum dwell
            cap = min(horizon, start + by[q].Delta)
            log.warning("subsystem %s has no outgoing edge; horizon capped at %s", q, cap)
            return snapshot(cap), None
        cands = [succ[q][i] for i in rng.permutation(len(succ[q]))]
        ok = [c for c in cands if prefix.admits(c, succ, depth(c, t_next))]
        if ok:
            open_frame(ok[0], t_next, ok[1:])
            continue
        if start + by[q].Delta >= horizon:
            # no admissible switch, but the current dwell can stretch to the end
            return snapshot(horizon), None
        if best is None or len(frames) > best.n_switches + 1:
            best = snapshot(t_next)
        # dead end: unwind to the nearest frame with an untried alternative
        while True:
            backtracks += 1
            if backtracks > policy.max_backtrack:
                return None, best
            _, fstart, _, alts = frames.pop()
            prefix.pop()
            if alts:
                open_frame(alts[0], fstart, alts[1:])
                break
            if not frames:
                return None, best


# ------------------------------------------------------------------ enumeration

def enumerate_small(
    model: SwitchedSystemModel,
    budget: FrequencyBudget,
    max_switches: int,
    dwell_grid: int,
    limit: int = 500_000,
) -> list[SwitchingSignal]:
    """Every class member with at most ``max_switches`` switches whose dwell
    times (the last, incomplete one included) lie on a ``dwell_grid``-point
    grid over each ``[delta_p, Delta_p]``."""
    if not (0 <= max_switches <= 8) or dwell_grid < 1:
        raise ValueError("need 0 <= max_switches <= 8 and dwell_grid >= 1")
    cols = _columns(model, budget)
    succ = model.successors
    grids = {s.index: np.linspace(s.delta, s.Delta, dwell_grid) for s in model.subsystems}
    prefix = _Prefix(cols)
    sequences: list[tuple[int, ...]] = []

    def walk():
        sequences.append(tuple(prefix.idx))
        if len(prefix.idx) > max_switches:
            return
        for q in succ[prefix.idx[-1]]:
            if prefix.push(q):
                walk()
            prefix.pop()

    for p in model.P:
        prefix.push(p)
        walk()
        prefix.pop()

    total = sum(dwell_grid ** len(s) for s in sequences)
    if total > limit:
        raise EnumerationLimitExceeded(f"{total} candidate signals exceed the limit of {limit}")

    out = []
    for seq in sequences:
        for dwells in itertools.product(*(grids[p] for p in seq)):
            sig = SwitchingSignal.from_dwells(seq, dwells)
            if not _eq4a_violations(model, sig):
                out.append(sig)
    return out
