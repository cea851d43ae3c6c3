"""Frequency budgets and the dwell-time stability certificate.

The certificate is the linear inequality

    -(stable + e_minus) / Delta_max + (unstable + e_plus) / delta_min < 0

with ``stable = sum |lam_p| rho_S_p delta_p`` over stable modes,
``unstable = sum |lam_p| rho_U_p Delta_p`` over unstable modes and the edge
terms ``sum |ln mu_pq| rho_pq`` over decreasing / increasing edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

from .model import Edge, SwitchedSystemModel

# lhs must be below -STRICT_TOL to count as feasible
STRICT_TOL = 1e-12
# rho values must stay in [0, 1[; the search backs off from 1 by this much
RHO_OPEN_EPS = 1e-9


class BudgetError(ValueError):
    pass


class ConditionError(ValueError):
    """The model does not satisfy the hypotheses of a sufficient condition."""


@dataclass(frozen=True)
class FrequencyBudget:
    rho_S: dict[int, float] = field(default_factory=dict)
    rho_U: dict[int, float] = field(default_factory=dict)
    rho_minus: dict[Edge, float] = field(default_factory=dict)
    rho_plus: dict[Edge, float] = field(default_factory=dict)
    rho_tilde_U: dict[int, int] = field(default_factory=dict)
    rho_tilde_plus: dict[Edge, int] = field(default_factory=dict)

    def check(self) -> None:
        """Range and group-sum invariants (independent of any model)."""
        for name in ("rho_S", "rho_U", "rho_minus", "rho_plus"):
            for k, v in getattr(self, name).items():
                if not (0.0 <= v < 1.0):
                    raise BudgetError(f"{name}[{k}] = {v} outside [0, 1[")
        for name in ("rho_tilde_U", "rho_tilde_plus"):
            for k, v in getattr(self, name).items():
                if int(v) != v or v < 1:
                    raise BudgetError(f"{name}[{k}] = {v} must be a positive integer")
        if sum(self.rho_S.values()) > 1.0 + 1e-12:
            raise BudgetError("sum of rho_S exceeds 1")
        if sum(self.rho_U.values()) >= 1.0:
            raise BudgetError("sum of rho_U must be < 1")
        if sum(self.rho_minus.values()) > 1.0 + 1e-12:
            raise BudgetError("sum of rho_minus exceeds 1")
        if sum(self.rho_plus.values()) > 1.0 + 1e-12:
            raise BudgetError("sum of rho_plus exceeds 1")

    def resolve(self, model: SwitchedSystemModel) -> "FrequencyBudget":
        """Return a copy keyed exactly by the model's partitions.

        Keys outside their partition raise; absent keys default to rho = 0
        and rho_tilde = 1.
        """
        parts = {
            "rho_S": (model.P_S, 0.0),
            "rho_U": (model.P_U, 0.0),
            "rho_minus": (model.E_minus, 0.0),
            "rho_plus": (model.E_plus, 0.0),
            "rho_tilde_U": (model.P_U, 1),
            "rho_tilde_plus": (model.E_plus, 1),
        }
        out = {}
        for name, (keys, default) in parts.items():
            given = getattr(self, name)
            extra = set(given) - set(keys)
            if extra:
                raise BudgetError(f"{name} has keys {sorted(extra)} not in the matching model partition")
            out[name] = {k: given.get(k, default) for k in keys}
        b = FrequencyBudget(**out)
        b.check()
        return b

    def to_dict(self) -> dict:
        def ek(e):
            return f"{e[0]}->{e[1]}"

        return {
            "rho_S": {str(k): v for k, v in self.rho_S.items()},
            "rho_U": {str(k): v for k, v in self.rho_U.items()},
            "rho_minus": {ek(k): v for k, v in self.rho_minus.items()},
            "rho_plus": {ek(k): v for k, v in self.rho_plus.items()},
            "rho_tilde_U": {str(k): int(v) for k, v in self.rho_tilde_U.items()},
            "rho_tilde_plus": {ek(k): int(v) for k, v in self.rho_tilde_plus.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyBudget":
        def ek(s: str) -> Edge:
            p, _, q = s.partition("->")
            return (int(p), int(q))

        return cls(
            rho_S={int(k): float(v) for k, v in d.get("rho_S", {}).items()},
            rho_U={int(k): float(v) for k, v in d.get("rho_U", {}).items()},
            rho_minus={ek(k): float(v) for k, v in d.get("rho_minus", {}).items()},
            rho_plus={ek(k): float(v) for k, v in d.get("rho_plus", {}).items()},
            rho_tilde_U={int(k): int(v) for k, v in d.get("rho_tilde_U", {}).items()},
            rho_tilde_plus={ek(k): int(v) for k, v in d.get("rho_tilde_plus", {}).items()},
        )


@dataclass(frozen=True)
class CertificateReport:
    lhs: float
    feasible: bool
    delta_min: float
    Delta_max: float
    stable: float
    e_minus: float
    unstable: float
    e_plus: float

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "feasible": self.feasible,
            "terms": {
                "stable": self.stable,
                "e_minus": self.e_minus,
                "unstable": self.unstable,
                "e_plus": self.e_plus,
            },
            "delta_min": self.delta_min,
            "Delta_max": self.Delta_max,
        }


def _coefficients(model: SwitchedSystemModel):
    """Per-variable weights of the four sums (before the 1/Delta_max, 1/delta_min scaling)."""
    by = model.by_id
    return (
        {p: abs(by[p].lam) * by[p].delta for p in model.P_S},
        {e: abs(model.log_mu[e]) for e in model.E_minus},
        {p: abs(by[p].lam) * by[p].Delta for p in model.P_U},
        {e: abs(model.log_mu[e]) for e in model.E_plus},
    )


def evaluate(model: SwitchedSystemModel, budget: FrequencyBudget) -> CertificateReport:
    b = budget.resolve(model)
    cs, cm, cu, cp = _coefficients(model)
    stable = sum(cs[p] * b.rho_S[p] for p in cs)
    e_minus = sum(cm[e] * b.rho_minus[e] for e in cm)
    unstable = sum(cu[p] * b.rho_U[p] for p in cu)
    e_plus = sum(cp[e] * b.rho_plus[e] for e in cp)
    dmin, Dmax = model.delta_min, model.Delta_max
    lhs = -(stable + e_minus) / Dmax + (unstable + e_plus) / dmin
    return CertificateReport(lhs, lhs < -STRICT_TOL, dmin, Dmax, stable, e_minus, unstable, e_plus)


@dataclass(frozen=True)
class BudgetSearchResult:
    feasible: bool
    min_lhs: float
    budget: FrequencyBudget | None
    report: CertificateReport | None


def _fill_group(coeffs: dict, floors: dict, cap: float) -> dict:
    """Maximise sum(coeff * rho) over floors <= rho <= 1, sum(rho) <= cap.

    Largest coefficients are raised first; equal coefficients share the
    remaining capacity evenly (water filling).
    """
    vals = {k: floors.get(k, 0.0) for k in coeffs}
    room = cap - sum(vals.values())
    if room < -1e-12:
        raise BudgetError(f"floors {floors} exceed group cap {cap}")
    levels = sorted({c for c in coeffs.values() if c > 0}, reverse=True)
    for c in levels:
        if room <= 0:
            break
        tied = [k for k in coeffs if coeffs[k] == c]
        while room > 1e-15:
            open_ = [k for k in tied if vals[k] < 1.0]
            if not open_:
                break
            share = room / len(open_)
            for k in open_:
                inc = min(share, 1.0 - vals[k])
                vals[k] += inc
                room -= inc
    return vals


def search_budget(
    model: SwitchedSystemModel,
    floors: FrequencyBudget | None = None,
    margin: float = 0.0,
) -> BudgetSearchResult:
    """Minimise the certificate lhs over the budget polytope.

    The objective is linear and the feasible set a product of capped
    simplices, so the optimum is the extremal vertex: decay-side variables as
    large as the caps allow, growth-side variables at their floors.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    floors = (floors or FrequencyBudget()).resolve(model)
    cs, cm, cu, cp = _coefficients(model)
    rho_S = _fill_group(cs, floors.rho_S, 1.0)
    rho_minus = _fill_group(cm, floors.rho_minus, 1.0)
    rho_U = dict(floors.rho_U)
    rho_plus = dict(floors.rho_plus)
    if sum(rho_U.values()) >= 1.0:
        raise BudgetError("rho_U floors must sum to < 1")
    if sum(rho_plus.values()) > 1.0 + 1e-12:
        raise BudgetError("rho_plus floors exceed 1")

    dmin, Dmax = model.delta_min, model.Delta_max
    min_lhs = -(
        sum(cs[p] * rho_S[p] for p in cs) + sum(cm[e] * rho_minus[e] for e in cm)
    ) / Dmax + (sum(cu[p] * rho_U[p] for p in cu) + sum(cp[e] * rho_plus[e] for e in cp)) / dmin

    def shrink(d):
        return {k: min(v, 1.0 - RHO_OPEN_EPS) for k, v in d.items()}

    budget = replace(floors, rho_S=shrink(rho_S), rho_minus=shrink(rho_minus))
    report = evaluate(model, budget)
    if report.feasible and report.lhs <= -margin:
        return BudgetSearchResult(True, min_lhs, budget, report)
    return BudgetSearchResult(False, min_lhs, None, report)


def sufficient_condition(
    model: SwitchedSystemModel,
    which: Literal["I", "II", "III"],
    rho_prime: float,
    rho_double_prime: float,
) -> tuple[bool, FrequencyBudget | None]:
    """Closed-form sufficient conditions with two shared budget values.

    ``rho_prime`` goes to every unstable mode and increasing edge,
    ``rho_double_prime`` to every stable mode and decreasing edge.
    """
    if not (0.0 <= rho_prime < 1.0 and 0.0 <= rho_double_prime < 1.0):
        raise ValueError("rho', rho'' must lie in [0, 1[")
    rp, rpp = rho_prime, rho_double_prime
    by = model.by_id
    nS, nU = len(model.P_S), len(model.P_U)
    nEm, nEp = len(model.E_minus), len(model.E_plus)
    dmin, Dmax = model.delta_min, model.Delta_max

    if which == "I":
        if nEm or nEp:
            raise ConditionError("condition I needs a common Lyapunov function (all mu = 1)")
        caps = nU * rp < 1 and nS * rpp <= 1
        grow = sum(abs(by[p].lam) * by[p].Delta for p in model.P_U)
        decay = sum(abs(by[p].lam) * by[p].delta for p in model.P_S)
    elif which == "II":
        caps = nU * rp < 1 and nEp * rp <= 1 and nS * rpp <= 1 and nEm * rpp <= 1
        grow = sum(abs(by[p].lam) * by[p].Delta for p in model.P_U)
        grow += sum(abs(model.log_mu[e]) for e in model.E_plus)
        decay = sum(abs(by[p].lam) * by[p].delta for p in model.P_S)
        decay += sum(abs(model.log_mu[e]) for e in model.E_minus)
    elif which == "III":
        _check_homogeneous(model)
        caps = nS * rpp <= 1 and nU * rp < 1 and nEm * rpp <= 1 and nEp * rp <= 1
        lam_s = abs(by[model.P_S[0]].lam) if nS else 0.0
        lam_u = abs(by[model.P_U[0]].lam) if nU else 0.0
        lmu_p = abs(model.log_mu[model.E_plus[0]]) if nEp else 0.0
        lmu_m = abs(model.log_mu[model.E_minus[0]]) if nEm else 0.0
        delta, Delta = model.subsystems[0].delta, model.subsystems[0].Delta
        grow = lam_u * Delta * nU + lmu_p * nEp
        decay = lam_s * delta * nS + lmu_m * nEm
    else:
        raise ValueError(f"unknown condition {which!r}")

    # ratio < delta_min / Delta_max, cross-multiplied and held to the same
    # strictness as evaluate()
    ok = caps and (rp * grow / dmin - rpp * decay / Dmax) < -STRICT_TOL
    if not ok:
        return False, None
    budget = FrequencyBudget(
        rho_S={p: rpp for p in model.P_S},
        rho_U={p: rp for p in model.P_U},
        rho_minus={e: rpp for e in model.E_minus},
        rho_plus={e: rp for e in model.E_plus},
    ).resolve(model)
    report = evaluate(model, budget)
    assert report.feasible, f"condition {which} held but lhs = {report.lhs}"
    return True, budget


def _check_homogeneous(model: SwitchedSystemModel) -> None:
    def same(vals):
        vals = list(vals)
        return all(math.isclose(v, vals[0], rel_tol=1e-12, abs_tol=0) for v in vals)

    by = model.by_id
    if not same(by[p].lam for p in model.P_S) or not same(by[p].lam for p in model.P_U):
        raise ConditionError("condition III needs a common rate on stable and on unstable modes")
    if not same(model.mu[e] for e in model.E_plus) or not same(model.mu[e] for e in model.E_minus):
        raise ConditionError("condition III needs common mu on increasing and on decreasing edges")
    if not same(s.delta for s in model.subsystems) or not same(s.Delta for s in model.subsystems):
        raise ConditionError("condition III needs common dwell bounds on all modes")
