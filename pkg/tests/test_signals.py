import itertools
import logging

import numpy as np
import pytest

from switchcert.certificate import FrequencyBudget
from switchcert.model import SignalError, SwitchedSystemModel, SwitchingSignal, count
from switchcert.signals import (
    EnumerationLimitExceeded,
    GenerationError,
    GeneratorPolicy,
    enumerate_small,
    generate,
    validate_admissible,
    validate_class,
)

from oracles import class_oracle


def random_walk(model, n, seed):
    """Admissible signal: random edges, dwells uniform in each window."""
    rng = np.random.default_rng(seed)
    by, succ = model.by_id, model.successors
    idx = [int(rng.choice(model.P))]
    for _ in range(n):
        idx.append(int(rng.choice(succ[idx[-1]])))
    dw = [rng.uniform(by[p].delta, by[p].Delta) for p in idx]
    return SwitchingSignal.from_dwells(idx, dw)


def names(report):
    return {v.constraint for v in report.violations}


class TestAdmissible:
    def test_missing_edge(self, sec4):
        m, _ = sec4
        s = SwitchingSignal.from_dwells([3, 1], [1.6, 1.0])
        r = validate_admissible(m, s)
        assert not r.admissible and names(r) == {"edge"}

    def test_short_dwell(self, sec4):
        m, _ = sec4
        r = validate_admissible(m, SwitchingSignal.from_dwells([1, 2], [0.5, 1.0]))
        assert names(r) == {"dwell"}

    def test_single_stay(self, sec4):
        m, _ = sec4
        assert validate_admissible(m, SwitchingSignal.constant(1, 2.0)).admissible
        assert not validate_admissible(m, SwitchingSignal.constant(1, 2.5)).admissible

    def test_final_dwell_lower_bound_not_enforced(self, sec4):
        m, _ = sec4
        assert validate_admissible(m, SwitchingSignal.from_dwells([1, 2], [1.5, 0.1])).admissible

    def test_unknown_id(self, sec4):
        m, _ = sec4
        with pytest.raises(SignalError):
            validate_admissible(m, SwitchingSignal.constant(9, 1.0))

    def test_class_short_circuits(self, sec4):
        m, b = sec4
        r = validate_class(m, b, SwitchingSignal.from_dwells([3, 1], [1.6, 1.0]))
        assert not r.admissible and not r.in_class


class TestClass:
    def test_late_unstable_excursion_breaks_stable_floor(self, sec4):
        # 1,2 alternation then 2 -> 3 -> 4 -> 1: the window of the three switches
        # into 3, 4, 1 holds no activation of 2 although floor(0.45 * 3) = 1
        m, b = sec4
        idx = [1, 2] * 5 + [3, 4, 1, 2]
        dw = [1.5, 1.2] * 5 + [1.7, 1.3, 1.5, 1.2]
        s = SwitchingSignal.from_dwells(idx, dw)
        assert validate_admissible(m, s).admissible
        r = validate_class(m, b, s)
        assert not r.in_class and "eq5" in names(r)
        assert names(r) == class_oracle(m, b, s)

    def test_initial_excursion_allowed(self, sec4):
        m, b = sec4
        s = SwitchingSignal.from_dwells([3, 4, 1, 2, 1, 2, 1, 2], [1.6, 1.3, 1.5, 1.2, 1.5, 1.2, 1.5, 1.0])
        assert validate_class(m, b, s).in_class

    def test_unstable_count_window(self):
        rows = [(1, 1.0, 1, 2), (2, 1.0, 1, 2), (3, -1.0, 1, 2)]
        edges = {(p, q): 1.0 for p in (1, 2, 3) for q in (1, 2, 3) if p != q}
        m = SwitchedSystemModel.build(rows, edges)
        b = FrequencyBudget(rho_U={3: 0.1})
        idx = [1, 3, 1, 2, 3, 2, 1, 3, 2, 1, 2]
        s = SwitchingSignal.from_dwells(idx, [1.5] * len(idx))
        r = validate_class(m, b, s)
        assert count(s, 0, s.horizon).N_p[3] == 3
        eq6 = [v for v in r.violations if v.constraint == "eq6"]
        assert eq6 and max(v.observed for v in eq6) == 3

    def test_isolated_unstable_activation(self):
        rows = [(1, 1.0, 1, 2), (3, -1.0, 1, 2)]
        m = SwitchedSystemModel.build(rows, {(1, 3): 1.0, (3, 1): 1.0})
        b = FrequencyBudget(rho_U={3: 0.0}, rho_tilde_U={3: 1})
        once = SwitchingSignal.from_dwells([1, 3, 1], [1.5, 1.5, 1.0])
        twice = SwitchingSignal.from_dwells([1, 3, 1, 3], [1.5, 1.5, 1.5, 1.0])
        assert validate_class(m, b, once).in_class
        assert "eq6" in names(validate_class(m, b, twice))

    @pytest.mark.parametrize("seed", range(40))
    def test_agrees_with_oracle(self, sec4, seed):
        m, b = sec4
        s = random_walk(m, 8 + seed % 7, seed)
        r = validate_class(m, b, s)
        assert names(r) == class_oracle(m, b, s)

    @pytest.mark.parametrize("seed", range(20))
    def test_dwell_implies_eq4a(self, cfg, seed):
        for name in ("sec4", "ex33"):
            m = cfg[name].build_model()
            r = validate_class(m, FrequencyBudget(), random_walk(m, 12, seed))
            assert r.admissible and "eq4a" not in names(r)

    def test_dense_interval_sampling(self, sec4):
        # random (s, t) inside every segment pair find exactly the pair-wise verdicts
        m, b = sec4
        rng = np.random.default_rng(5)
        bres = b.resolve(m)
        for seed in range(10):
            s = random_walk(m, 10, seed)
            rep = {v for v in names(validate_class(m, b, s)) if v in ("eq5", "eq6", "eq7", "eq8")}
            starts, ends = s.times, s.segment_ends
            dense = set()
            for ia in range(len(starts)):
                for ib in range(ia, len(starts)):
                    for _ in range(10):
                        lo = rng.uniform(starts[ia], ends[ia])
                        hi = rng.uniform(max(lo, starts[ib]), ends[ib])
                        if hi <= lo:
                            continue
                        c = count(s, lo, hi)
                        for p in m.P_S:
                            if c.N_p.get(p, 0) < np.floor(bres.rho_S[p] * c.N + 1e-9):
                                dense.add("eq5")
                        for p in m.P_U:
                            if c.N_p.get(p, 0) > bres.rho_tilde_U[p] + np.floor(bres.rho_U[p] * c.N + 1e-9):
                                dense.add("eq6")
                        for e in m.E_plus:
                            if c.N_pq.get(e, 0) > bres.rho_tilde_plus[e] + np.floor(bres.rho_plus[e] * c.N + 1e-9):
                                dense.add("eq8")
            assert dense == rep

    def test_report_dict(self, sec4):
        m, b = sec4
        d = validate_class(m, b, SwitchingSignal.from_dwells([3, 1], [1.6, 1.0])).to_dict()
        assert d["admissible"] is False and d["violations"][0]["constraint"] == "edge"


class TestGenerate:
    @pytest.mark.parametrize("seed", range(10))
    def test_sec4_members(self, cfg, sec4, seed):
        m, b = sec4
        s = generate(m, b, 25.0, seed, cfg["sec4"].build_policy())
        assert s.horizon == 25.0 and validate_class(m, b, s).in_class

    def test_deterministic(self, sec4):
        m, b = sec4
        assert generate(m, b, 25.0, 11) == generate(m, b, 25.0, 11)
        assert generate(m, b, 25.0, 11) != generate(m, b, 25.0, 12)

    @pytest.mark.parametrize("rule", ["min", "max"])
    def test_dwell_rules(self, sec4, rule):
        m, b = sec4
        s = generate(m, b, 20.0, 1, GeneratorPolicy(dwell_rule=rule))
        d = np.diff(s.times)
        ref = [m.by_id[p].delta if rule == "min" else m.by_id[p].Delta for p in s.indices[:-1]]
        assert np.allclose(d, ref) and validate_class(m, b, s).in_class

    def test_ex32_window_caps(self, ex32):
        m, b = ex32
        for seed in range(30):
            s = generate(m, b, 10.0, seed)
            assert validate_class(m, b, s).in_class

    def test_ex32_long_horizon_fails(self, ex32):
        m, b = ex32
        with pytest.raises(GenerationError) as info:
            generate(m, b, 25.0, 0, GeneratorPolicy(max_restarts=4))
        assert info.value.deepest is not None

    def test_absorbing_mode_caps_horizon(self, caplog):
        m = SwitchedSystemModel.build([(1, 1.0, 1, 2)], {})
        with caplog.at_level(logging.WARNING):
            s = generate(m, FrequencyBudget(), 10.0, 0)
        assert s.n_switches == 0 and s.horizon == 2.0
        assert "no outgoing edge" in caplog.text

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            GeneratorPolicy(dwell_rule="median")
        with pytest.raises(ValueError):
            GeneratorPolicy(max_restarts=0)


class TestEnumerate:
    def test_ex31_alternates(self, ex31):
        m, b = ex31
        out = enumerate_small(m, b, 2, 2)
        assert out
        for s in out:
            assert all(p != q for p, q in zip(s.indices, s.indices[1:]))
            assert set(zip(s.indices, s.indices[1:])) <= {(1, 2), (2, 1)}

    def test_sec4_no_missing_edge(self, sec4):
        m, b = sec4
        for s in enumerate_small(m, b, 4, 1):
            assert (3, 1) not in set(zip(s.indices, s.indices[1:]))

    def test_members_only(self, sec4):
        m, b = sec4
        out = enumerate_small(m, b, 4, 2)
        assert out and all(validate_class(m, b, s).in_class for s in out)

    def test_limit(self, cfg):
        c = cfg["ex33"]
        with pytest.raises(EnumerationLimitExceeded):
            enumerate_small(c.build_model(), c.build_budget(), 6, 3, limit=1000)

    def test_bounds(self, ex31):
        m, b = ex31
        with pytest.raises(ValueError):
            enumerate_small(m, b, 9, 2)

    def test_matches_filtered_full_enumeration(self, sec4):
        m, b = sec4
        got = enumerate_small(m, b, 5, 2)
        grids = {s.index: np.linspace(s.delta, s.Delta, 2) for s in m.subsystems}
        full, rejected = set(), 0

        def walk(idx):
            nonlocal rejected
            for dw in itertools.product(*(grids[p] for p in idx)):
                sig = SwitchingSignal.from_dwells(idx, dw)
                if validate_class(m, b, sig).in_class:
                    full.add(sig)
                else:
                    rejected += 1
            if len(idx) <= 5:
                for q in m.successors[idx[-1]]:
                    walk(idx + [q])

        for p in m.P:
            walk([p])
        assert set(got) == full and rejected > 0

    def test_ex32_class_is_short(self, ex32):
        m, b = ex32
        out = enumerate_small(m, b, 8, 1)
        assert max(s.n_switches for s in out) == 4
