"""Switched-system specifications, switching signals and interval counting."""

from __future__ import annotations

import bisect
import csv
import enum
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

# |ln mu| below this is treated as mu == 1
ZERO_TOL = 1e-12

Edge = tuple[int, int]


class ModelError(ValueError):
    pass


class SignalError(ValueError):
    pass


class StabilityClass(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class SubsystemSpec:
    """One mode of the switched system.

    ``lam`` is the decay rate of the mode's Lyapunov-like function: positive
    for stable modes, negative for unstable ones. ``delta``/``Delta`` are the
    admissible minimum and maximum dwell times.
    """

    index: int
    lam: float
    delta: float
    Delta: float
    stability: StabilityClass | None = None

    def __post_init__(self):
        if int(self.index) != self.index or self.index < 1:
            raise ModelError(f"subsystem id must be a positive integer, got {self.index!r}")
        if not math.isfinite(self.lam) or self.lam == 0:
            raise ModelError(f"subsystem {self.index}: lambda must be finite and nonzero")
        if not (0 < self.delta <= self.Delta) or not math.isfinite(self.Delta):
            raise ModelError(
                f"subsystem {self.index}: need 0 < delta <= Delta, got [{self.delta}, {self.Delta}]"
            )
        implied = StabilityClass.STABLE if self.lam > 0 else StabilityClass.UNSTABLE
        if self.stability is None:
            object.__setattr__(self, "stability", implied)
        elif StabilityClass(self.stability) is not implied:
            raise ModelError(
                f"subsystem {self.index}: class {self.stability} inconsistent with lambda={self.lam}"
            )
        else:
            object.__setattr__(self, "stability", StabilityClass(self.stability))

    @property
    def stable(self) -> bool:
        return self.stability is StabilityClass.STABLE


@dataclass(frozen=True)
class TransitionSpec:
    source: int
    target: int
    mu: float

    def __post_init__(self):
        if self.source == self.target:
            raise ModelError(f"self-loop ({self.source},{self.target}) is not a switch")
        if not (self.mu > 0) or not math.isfinite(self.mu):
            raise ModelError(f"edge ({self.source},{self.target}): mu must be positive, got {self.mu}")

    @property
    def key(self) -> Edge:
        return (self.source, self.target)

    @property
    def log_mu(self) -> float:
        return math.log(self.mu)


@dataclass(frozen=True)
class SwitchedSystemModel:
    subsystems: tuple[SubsystemSpec, ...]
    edges: tuple[TransitionSpec, ...]
    zero_tol: float = ZERO_TOL

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(sorted(self.subsystems, key=lambda s: s.index)))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: e.key)))
        if not self.subsystems:
            raise ModelError("model needs at least one subsystem")
        ids = [s.index for s in self.subsystems]
        if len(set(ids)) != len(ids):
            raise ModelError(f"duplicate subsystem ids in {ids}")
        keys = [e.key for e in self.edges]
        if len(set(keys)) != len(keys):
            raise ModelError("duplicate edges")
        known = set(ids)
        for e in self.edges:
            if e.source not in known or e.target not in known:
                raise ModelError(f"edge {e.key} references an unknown subsystem")

    @classmethod
    def build(cls, subsystems: Iterable[tuple], edges: Mapping[Edge, float] | Iterable[tuple]):
        """Convenience constructor from ``(id, lam, delta, Delta)`` rows and
        ``{(p, q): mu}`` (or ``(p, q, mu)`` rows)."""
        subs = tuple(SubsystemSpec(*row) for row in subsystems)
        if isinstance(edges, Mapping):
            rows = [(p, q, mu) for (p, q), mu in edges.items()]
        else:
            rows = list(edges)
        return cls(subs, tuple(TransitionSpec(*r) for r in rows))

    @cached_property
    def by_id(self) -> dict[int, SubsystemSpec]:
        return {s.index: s for s in self.subsystems}

    @cached_property
    def mu(self) -> dict[Edge, float]:
        return {e.key: e.mu for e in self.edges}

    @cached_property
    def log_mu(self) -> dict[Edge, float]:
        return {e.key: e.log_mu for e in self.edges}

    @property
    def P(self) -> tuple[int, ...]:
        return tuple(s.index for s in self.subsystems)

    @cached_property
    def P_S(self) -> tuple[int, ...]:
        return tuple(s.index for s in self.subsystems if s.stable)

    @cached_property
    def P_U(self) -> tuple[int, ...]:
        return tuple(s.index for s in self.subsystems if not s.stable)

    @cached_property
    def _edge_classes(self) -> tuple[tuple[Edge, ...], tuple[Edge, ...], tuple[Edge, ...]]:
        return classify_edges(self)

    @property
    def E_minus(self) -> tuple[Edge, ...]:
        return self._edge_classes[0]

    @property
    def E_plus(self) -> tuple[Edge, ...]:
        return self._edge_classes[1]

    @property
    def E_zero(self) -> tuple[Edge, ...]:
        return self._edge_classes[2]

    @cached_property
    def successors(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {p: [] for p in self.P}
        for p, q in self.mu:
            out[p].append(q)
        return {p: tuple(qs) for p, qs in out.items()}

    @property
    def delta_min(self) -> float:
        return min(s.delta for s in self.subsystems)

    @property
    def Delta_max(self) -> float:
        return max(s.Delta for s in self.subsystems)

    def lam(self, p: int) -> float:
        return self.by_id[p].lam


def classify_edges(model: SwitchedSystemModel):
    """Split E(P) into (E_minus, E_plus, E_zero) by the sign of ln mu."""
    minus, plus, zero = [], [], []
    for e in model.edges:
        lm = e.log_mu
        if abs(lm) <= model.zero_tol:
            zero.append(e.key)
        elif lm < 0:
            minus.append(e.key)
        else:
            plus.append(e.key)
    return tuple(minus), tuple(plus), tuple(zero)


@dataclass(frozen=True)
class SwitchingSignal:
    """Finite prefix of a right-continuous piecewise-constant switching signal.

    ``instants[0]`` must be 0; the active index on ``[instants[i],
    instants[i+1])`` is ``indices[i]`` and the last index stays active up to
    ``horizon``.
    """

    instants: tuple[float, ...]
    indices: tuple[int, ...]
    horizon: float

    def __post_init__(self):
        inst = tuple(float(t) for t in self.instants)
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "instants", inst)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "horizon", float(self.horizon))
        if len(inst) != len(idx) or not inst:
            raise SignalError("instants and indices must be nonempty and of equal length")
        if inst[0] != 0.0:
            raise SignalError(f"first instant must be 0, got {inst[0]}")
        for k in range(1, len(inst)):
            if not inst[k] > inst[k - 1]:
                raise SignalError(f"instants not strictly increasing at position {k}")
            if idx[k] == idx[k - 1]:
                raise SignalError(f"consecutive indices equal at position {k}; not a switch")
        if not math.isfinite(self.horizon) or self.horizon < inst[-1]:
            raise SignalError(f"horizon {self.horizon} precedes last instant {inst[-1]}")

    @classmethod
    def constant(cls, index: int, horizon: float) -> "SwitchingSignal":
        return cls((0.0,), (index,), horizon)

    @classmethod
    def from_dwells(cls, indices, dwells, horizon: float | None = None) -> "SwitchingSignal":
        """Build from the active indices and the completed dwell times of all
        but the last segment. Without ``horizon`` the prefix ends at the last
        switching instant."""
        indices = list(indices)
        dwells = list(dwells)
        if len(dwells) not in (len(indices) - 1, len(indices)):
            raise SignalError("need one dwell per segment (the last one optional)")
        instants = [0.0]
        for d in dwells[: len(indices) - 1]:
            instants.append(instants[-1] + float(d))
        if horizon is None:
            horizon = instants[-1] + (float(dwells[-1]) if len(dwells) == len(indices) else 0.0)
        return cls(tuple(instants), tuple(indices), horizon)

    @property
    def n_switches(self) -> int:
        return len(self.instants) - 1

    @cached_property
    def times(self) -> np.ndarray:
        a = np.asarray(self.instants, dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def segment_ends(self) -> np.ndarray:
        """Right endpoint of every segment, the last one being the horizon."""
        a = np.append(self.times[1:], self.horizon)
        a.flags.writeable = False
        return a

    def segment_of(self, t: float) -> int:
        return bisect.bisect_right(self.instants, t) - 1

    def __call__(self, t: float) -> int:
        return active_index(self, t)

    # CSV: a "# horizon=" comment line, then the (instant, index) table.
    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# horizon={self.horizon!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["instant", "index"])
        for t, p in zip(self.instants, self.indices):
            w.writerow([repr(t), p])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SwitchingSignal":
        lines = text.splitlines()
        horizon = None
        body = []
        for line in lines:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key.strip() == "horizon":
                    horizon = float(val)
            elif line.strip():
                body.append(line)
        rows = list(csv.reader(body))
        if not rows or [c.strip() for c in rows[0]] != ["instant", "index"]:
            raise SignalError("signal CSV needs an 'instant,index' header row")
        inst = [float(r[0]) for r in rows[1:]]
        idx = [int(r[1]) for r in rows[1:]]
        if horizon is None:
            horizon = inst[-1] if inst else 0.0
        return cls(tuple(inst), tuple(idx), horizon)

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "SwitchingSignal":
        return cls.from_csv(Path(path).read_text())


@dataclass(frozen=True)
class CountingResult:
    N: int
    N_p: dict[int, int] = field(default_factory=dict)
    N_pq: dict[Edge, int] = field(default_factory=dict)
    T_p: dict[int, float] = field(default_factory=dict)


def active_index(signal: SwitchingSignal, t: float) -> int:
    if not (0.0 <= t <= signal.horizon):
        raise SignalError(f"t={t} outside [0, {signal.horizon}]")
    return signal.indices[signal.segment_of(t)]


def count(signal: SwitchingSignal, s: float, t: float) -> CountingResult:
    """Switch counts and activation durations on the interval ]s, t]."""
    if not (0.0 <= s < t <= signal.horizon):
        raise SignalError(f"need 0 <= s < t <= horizon, got s={s}, t={t}, horizon={signal.horizon}")
    inst, idx = signal.instants, signal.indices
    # switches i >= 1 with s < tau_i <= t
    lo = max(bisect.bisect_right(inst, s), 1)
    hi = bisect.bisect_right(inst, t)
    N_p = {p: 0 for p in set(idx)}
    N_pq: dict[Edge, int] = {}
    for i in range(lo, hi):
        N_p[idx[i]] += 1
        e = (idx[i - 1], idx[i])
        N_pq[e] = N_pq.get(e, 0) + 1
    T_p = {p: 0.0 for p in N_p}
    first = signal.segment_of(s)
    for k in range(first, hi):
        a = max(inst[k], s)
        b = min(inst[k + 1] if k + 1 < len(inst) else signal.horizon, t)
        if b > a:
            T_p[idx[k]] += b - a
    return CountingResult(hi - lo, N_p, N_pq, T_p)
