"""Simulation of the switched dynamics and audits of the Lyapunov data."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .model import Edge, SwitchedSystemModel, SwitchingSignal

DIVERGENCE_GUARD = 1e9


class SimulationDiverged(RuntimeError):
    def __init__(self, msg: str, run_id=None, time: float | None = None):
        super().__init__(msg)
        self.run_id = run_id
        self.time = time


class DynamicsFamily:
    """Per-subsystem vector fields ``f_p(x, v)`` and output maps ``h_p(x)``.

    Callables must broadcast over leading axes: ``x`` has shape ``(..., d)``,
    ``v`` shape ``(..., m)``; ``f`` returns ``(..., d)`` and ``h`` returns
    ``(..., k)``.
    """

    def __init__(self, fields: Mapping[int, tuple[Callable, Callable]], state_dim: int, input_dim: int):
        self.fields = dict(fields)
        self.state_dim = state_dim
        self.input_dim = input_dim
        x0, v0 = np.zeros((1, state_dim)), np.zeros((1, input_dim))
        for p, (f, h) in self.fields.items():
            if np.any(np.asarray(f(x0, v0)) != 0) or np.any(np.asarray(h(x0)) != 0):
                raise ValueError(f"subsystem {p}: need f(0, 0) = 0 and h(0) = 0")
        self.output_dim = np.asarray(next(iter(self.fields.values()))[1](x0)).shape[-1]

    def rhs(self, p: int, x, v):
        return self.fields[p][0](x, v)

    def output(self, p: int, x):
        return self.fields[p][1](x)


class SinusoidalFamily(DynamicsFamily):
    """Two-state family with sinusoidal coupling and a scalar input:

        f_p(x, v) = (a1 x1 + b1 sin(x1 - x2) + c1 v,
                     a2 x2 + b2 sin(x2 - x1) + c2 v),   h_p(x) = x1 - x2

    ``a``, ``b``, ``c`` map subsystem ids to coefficient pairs.
    """

    def __init__(self, a: Mapping[int, tuple], b: Mapping[int, tuple], c: Mapping[int, tuple]):
        self.ids = tuple(sorted(a))
        if set(b) != set(self.ids) or set(c) != set(self.ids):
            raise ValueError("coefficient tables must cover the same subsystems")
        self.A = np.array([a[p] for p in self.ids], dtype=float)
        self.B = np.array([b[p] for p in self.ids], dtype=float)
        self.C = np.array([c[p] for p in self.ids], dtype=float)
        self.row = {p: i for i, p in enumerate(self.ids)}

        def make(i):
            def f(x, v):
                x = np.asarray(x, dtype=float)
                u = np.asarray(v, dtype=float)[..., 0]
                s = np.sin(x[..., 0] - x[..., 1])
                return np.stack(
                    [
                        self.A[i, 0] * x[..., 0] + self.B[i, 0] * s + self.C[i, 0] * u,
                        self.A[i, 1] * x[..., 1] - self.B[i, 1] * s + self.C[i, 1] * u,
                    ],
                    axis=-1,
                )

            return f

        def h(x):
            x = np.asarray(x, dtype=float)
            return (x[..., 0] - x[..., 1])[..., None]

        super().__init__({p: (make(i), h) for i, p in enumerate(self.ids)}, 2, 1)


@dataclass(frozen=True)
class QuadraticLyapunov:
    """V_p(x) = 0.5 * sum_k w_pk x_k^2 with positive diagonal weights."""

    weights: Mapping[int, tuple[float, ...]]

    def __post_init__(self):
        for p, w in self.weights.items():
            if min(w) <= 0:
                raise ValueError(f"subsystem {p}: weights must be positive")

    def w(self, p: int) -> np.ndarray:
        return np.asarray(self.weights[p], dtype=float)

    def value(self, p: int, x):
        return 0.5 * np.sum(self.w(p) * np.square(x), axis=-1)

    def gradient(self, p: int, x):
        return self.w(p) * np.asarray(x)

    def alpha_upper(self, r):
        return 0.5 * max(max(w) for w in self.weights.values()) * np.square(r)

    def alpha_lower(self, r):
        return 0.5 * min(min(w) for w in self.weights.values()) * np.square(r)


def lyapunov_eval(L: QuadraticLyapunov, p: int, x) -> float:
    if p not in L.weights:
        raise KeyError(f"no Lyapunov weights for subsystem {p}")
    return float(L.value(p, np.asarray(x, dtype=float)))


def mu_from_quadratic(L: QuadraticLyapunov, edge: Edge) -> float:
    """Smallest mu with V_q <= mu V_p: the largest weight ratio."""
    p, q = edge
    return float(np.max(L.w(q) / L.w(p)))


# ------------------------------------------------------------------ inputs

class PiecewiseConstantInput:
    """Input held constant on ``[k hold, (k+1) hold)``; the last value persists."""

    def __init__(self, values, hold: float):
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[0] == 1 and np.asarray(values).ndim == 1:
            self.values = self.values.T
        self.hold = float(hold)

    @classmethod
    def uniform(cls, rng: np.random.Generator, low: float, high: float, horizon: float, hold: float, dim: int = 1):
        n = int(np.ceil(horizon / hold)) + 1
        return cls(rng.uniform(low, high, size=(n, dim)), hold)

    def __call__(self, t):
        k = np.minimum((np.asarray(t) / self.hold + 1e-9).astype(int), len(self.values) - 1)
        return self.values[k]


def zero_input(dim: int = 1):
    return lambda t: np.zeros(np.shape(t) + (dim,))


# ------------------------------------------------------------------ integration

@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    V: np.ndarray | None
    sup_v: np.ndarray
    sup_y: np.ndarray

    @property
    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=1)

    def to_csv(self) -> str:
        d, k = self.x.shape[1], self.y.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(k)]
                   + ["sigma", "V", "sup_v", "sup_y"])
        V = self.V if self.V is not None else np.full(len(self.t), np.nan)
        for i in range(len(self.t)):
            w.writerow([repr(float(self.t[i]))] + [repr(float(c)) for c in self.x[i]]
                       + [repr(float(c)) for c in self.y[i]]
                       + [int(self.sigma[i]), repr(float(V[i])), repr(float(self.sup_v[i])),
                          repr(float(self.sup_y[i]))])
        return buf.getvalue()


def time_grid(signal: SwitchingSignal, dt: float) -> np.ndarray:
    """Uniform grid k*dt on [0, horizon] merged with every switching instant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    T = signal.horizon
    grid = np.arange(int(np.floor(T / dt + 1e-9)) + 1) * dt
    grid = grid[grid < T]
    inst = signal.times
    # drop grid points that nearly coincide with an instant; keep the instant
    near = np.min(np.abs(grid[:, None] - inst[None, :]), axis=1) < 1e-9 * max(1.0, T)
    return np.unique(np.concatenate([grid[~near], inst, [T]]))


def integrate_batch(
    family: DynamicsFamily,
    signal: SwitchingSignal,
    inputs,
    x0,
    dt: float,
    lyapunov: QuadraticLyapunov | None = None,
    guard: float = DIVERGENCE_GUARD,
    run_ids=None,
) -> list[Trajectory]:
    """Fixed-step RK4 for several initial states under one signal.

    Steps never straddle a switching instant. Each input is sampled at the
    start of every step and held over it. ``inputs`` is one callable per
    initial state (or a single callable shared by all).
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    nb = x0.shape[0]
    if callable(inputs):
        inputs = [inputs] * nb
    if len(inputs) != nb:
        raise ValueError("need one input per initial state")
    t = time_grid(signal, dt)
    k = np.searchsorted(signal.times, t, side="right") - 1
    sigma = np.asarray(signal.indices)[k]
    h = np.diff(t)
    v = np.stack([np.asarray(u(t), dtype=float).reshape(len(t), -1) for u in inputs])  # (B, n, m)

    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(family, SinusoidalFamily):
            modes = np.array([family.row[p] for p in sigma[:-1]], dtype=np.int64)
            X = _kernels.rk4_sinus(x0, family.A, family.B, family.C, modes, h,
                                   np.ascontiguousarray(v[:, :-1, 0]))
        else:
            X = _rk4_generic(family, x0, sigma[:-1], h, v[:, :-1, :])

    out = []
    for i in range(nb):
        xi = X[:, i, :]
        bad = ~np.isfinite(xi).all(axis=1) | (np.linalg.norm(xi, axis=1) > guard)
        rid = run_ids[i] if run_ids is not None else i
        if bad.any():
            j = int(np.argmax(bad))
            raise SimulationDiverged(f"run {rid}: state left the guard at t={t[j]:.6g}", rid, float(t[j]))
        y = np.empty((len(t), family.output_dim))
        V = np.empty(len(t)) if lyapunov is not None else None
        for p in np.unique(sigma):
            m = sigma == p
            y[m] = family.output(int(p), xi[m])
            if V is not None:
                V[m] = lyapunov.value(int(p), xi[m])
        sup_v = np.maximum.accumulate(np.linalg.norm(v[i], axis=1))
        sup_y = np.maximum.accumulate(np.linalg.norm(y, axis=1))
        out.append(Trajectory(t, xi.copy(), y, sigma, v[i], V, sup_v, sup_y))
    return out


def integrate(family, signal, input, x0, dt: float = 0.01, lyapunov=None, guard: float = DIVERGENCE_GUARD):
    return integrate_batch(family, signal, [input], [x0], dt, lyapunov, guard)[0]


def _rk4_generic(family, x0, modes, steps, v):
    x = x0.copy()
    out = np.empty((len(steps) + 1,) + x.shape)
    out[0] = x
    for k in range(len(steps)):
        p, hk, u = int(modes[k]), steps[k], v[:, k, :]
        k1 = family.rhs(p, x, u)
        k2 = family.rhs(p, x + 0.5 * hk * k1, u)
        k3 = family.rhs(p, x + 0.5 * hk * k2, u)
        k4 = family.rhs(p, x + hk * k3, u)
        x = x + (hk / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = x
    return out


# ------------------------------------------------------------------ audits

@dataclass(frozen=True)
class AuditReport:
    worst: dict[int, float]
    argmax: dict[int, tuple[np.ndarray, np.ndarray]]
    samples: int

    @property
    def ok(self) -> bool:
        return all(m <= 0 for m in self.worst.values())


def _samples(state_box, input_box, n, seed, d, m):
    rng = np.random.default_rng(seed)
    lo, hi = state_box
    ilo, ihi = input_box
    xi = rng.uniform(lo, hi, size=(n, d))
    eta = rng.uniform(ilo, ihi, size=(n, m))
    return xi, eta


def _base_margin(family, L, lam, p, xi, eta):
    """grad V . f + lam V, before the gamma terms."""
    dV = np.sum(L.gradient(p, xi) * family.rhs(p, xi, eta), axis=-1)
    return dV + lam * L.value(p, xi)


def dissipation_audit(
    family: DynamicsFamily,
    L: QuadraticLyapunov,
    model: SwitchedSystemModel,
    gamma1_coeff: float,
    gamma2_coeff: float,
    state_box=(-5.0, 5.0),
    input_box=(-0.5, 0.5),
    count: int = 100_000,
    seed: int = 0,
    lam: Mapping[int, float] | None = None,
) -> AuditReport:
    """Largest sampled value of grad V_p . f_p + lam_p V_p - k1 |eta|^2 - k2 |h_p|^2.

    A positive value is a concrete counterexample for the supplied gains; a
    non-positive one is sampling evidence only.
    """
    xi, eta = _samples(state_box, input_box, count, seed, family.state_dim, family.input_dim)
    worst, argmax = {}, {}
    en = np.sum(eta ** 2, axis=-1)
    for p in model.P:
        lp = lam[p] if lam and p in lam else model.lam(p)
        hy = np.sum(np.square(family.output(p, xi)), axis=-1)
        m = _base_margin(family, L, lp, p, xi, eta) - gamma1_coeff * en - gamma2_coeff * hy
        i = int(np.argmax(m))
        worst[p] = float(m[i])
        argmax[p] = (xi[i], eta[i])
    return AuditReport(worst, argmax, count)


def calibrate_gammas(
    family: DynamicsFamily,
    L: QuadraticLyapunov,
    model: SwitchedSystemModel,
    state_box=(-5.0, 5.0),
    input_box=(-0.5, 0.5),
    count: int = 100_000,
    seed: int = 0,
    safety: float = 2.0,
) -> tuple[float, float]:
    """Quadratic gains k1, k2 (gamma_i(r) = k_i r^2) from samples.

    k2 is the smallest output gain that absorbs the input-free margins, k1
    the smallest input gain that absorbs what remains; both are then scaled
    by ``safety``.
    """
    xi, eta = _samples(state_box, input_box, count, seed, family.state_dim, family.input_dim)
    zero = np.zeros_like(eta)
    k2 = 0.0
    for p in model.P:
        base = _base_margin(family, L, model.lam(p), p, xi, zero)
        hy = np.sum(np.square(family.output(p, xi)), axis=-1)
        pos = base > 0
        if np.any(pos & (hy < 1e-12)):
            raise ValueError(f"subsystem {p}: positive margin with zero output; no quadratic gain fits")
        if pos.any():
            k2 = max(k2, float(np.max(base[pos] / hy[pos])))
    k1 = 0.0
    en = np.sum(eta ** 2, axis=-1)
    for p in model.P:
        hy = np.sum(np.square(family.output(p, xi)), axis=-1)
        rest = _base_margin(family, L, model.lam(p), p, xi, eta) - k2 * hy
        pos = rest > 0
        if np.any(pos & (en < 1e-12)):
            raise ValueError(f"subsystem {p}: positive margin with zero input")
        if pos.any():
            k1 = max(k1, float(np.max(rest[pos] / en[pos])))
    return safety * k1, safety * k2
