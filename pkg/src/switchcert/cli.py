"""``switchcert`` command line.

Exit codes: 0 success, 1 infeasible or failed check, 2 unreadable config.
``--config`` takes a path or the name of a bundled config (sec4, ex31,
ex32, ex33).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bounds, sim
from .certificate import BudgetError, FrequencyBudget, evaluate, search_budget
from .config import BUNDLED, ConfigError, ProjectConfig, bundled_config, load_config
from .model import SwitchingSignal
from .signals import GenerationError, generate, validate_class

log = logging.getLogger("switchcert")

EXIT_OK, EXIT_FAIL, EXIT_PARSE = 0, 1, 2

# expected certificate values for the bundled configs
REFERENCE_LHS = {"sec4": (-0.0069, 5e-4)}
BOUND_SURROGATE = 50.0


def _workers() -> int:
    raw = os.environ.get("SWITCHCERT_THREADS", "")
    try:
        n = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        log.warning("ignoring SWITCHCERT_THREADS=%r", raw)
        n = os.cpu_count() or 1
    return max(1, n)


def _pmap(fn, items):
    items = list(items)
    n = min(_workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


def _load(ref: str) -> ProjectConfig:
    if not Path(ref).exists() and ref in BUNDLED:
        return bundled_config(ref)
    return load_config(ref)


def _outdir(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)] if n else []


# ------------------------------------------------------------------ commands

def cmd_check(cfg: ProjectConfig, out: Path | None = None) -> int:
    rep = evaluate(cfg.build_model(), cfg.build_budget())
    text = json.dumps(rep.to_dict(), indent=2)
    print(text)
    if out:
        (out / "certificate.json").write_text(text + "\n")
    return EXIT_OK if rep.feasible else EXIT_FAIL


def cmd_find_rho(cfg: ProjectConfig, floors: FrequencyBudget | None, out: Path | None = None) -> int:
    model = cfg.build_model()
    res = search_budget(model, floors)
    if not res.feasible:
        print(f"infeasible: smallest attainable lhs = {res.min_lhs:.6g} (needs < 0)", file=sys.stderr)
        return EXIT_FAIL
    text = cfg.with_budget(res.budget).dumps()
    print(text, end="")
    if out:
        (out / "config.json").write_text(text)
    return EXIT_OK


def _generate_one(args):
    model, budget, horizon, policy, seed = args
    sig = generate(model, budget, horizon, seed, policy)
    return sig, validate_class(model, budget, sig)


def generate_signals(cfg: ProjectConfig, n: int, seed: int):
    model, budget, policy = cfg.build_model(), cfg.build_budget(), cfg.build_policy()
    jobs = [(model, budget, cfg.generator.horizon, policy, s) for s in _seeds(seed, n)]
    return _pmap(_generate_one, jobs)


def cmd_gen(cfg: ProjectConfig, n: int, out: Path | None, seed: int = 0) -> int:
    if n < 0:
        raise ValueError("--n must be >= 0")
    try:
        results = generate_signals(cfg, n, seed)
    except GenerationError as e:
        print(f"generation failed: {e}", file=sys.stderr)
        return EXIT_FAIL
    bad = [i for i, (_, r) in enumerate(results) if not r.in_class]
    for i, (sig, rep) in enumerate(results):
        if out:
            sig.save(out / f"signal_{i:03d}.csv")
            (out / f"signal_{i:03d}.membership.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    print(f"{n - len(bad)}/{n} signals in class")
    if bad:
        print(f"signals outside the class: {bad}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _gains(cfg: ProjectConfig, family, L, model) -> tuple[float, float]:
    if cfg.gamma is not None:
        return cfg.gamma.k1, cfg.gamma.k2
    s = cfg.simulation
    k1, k2 = sim.calibrate_gammas(family, L, model, (s.x0_box[0], s.x0_box[1]),
                                  (s.input_range[0], s.input_range[1]), seed=s.seed)
    log.info("calibrated gains k1=%g k2=%g", k1, k2)
    return k1, k2


def simulate_runs(cfg: ProjectConfig, signals: list[SwitchingSignal], n_initial: int | None = None, out: Path | None = None):
    """Integrate every signal from sampled initial states and inputs; returns a summary dict."""
    s = cfg.simulation
    if s is None:
        raise ConfigError("config has no simulation block")
    model, budget = cfg.build_model(), cfg.build_budget()
    family, L = cfg.build_family(), cfg.build_lyapunov()
    k1, k2 = _gains(cfg, family, L, model)
    consts = bounds.constants(model, budget)
    n_initial = s.n_initial if n_initial is None else n_initial

    def run(i):
        sig = signals[i]
        ok_decay, decay_margin = bounds.decay_check(model, sig, budget, consts=consts)
        rng = np.random.default_rng([s.seed, i])
        x0 = rng.uniform(s.x0_box[0], s.x0_box[1], size=(n_initial, family.state_dim))
        inputs = [sim.PiecewiseConstantInput.uniform(rng, s.input_range[0], s.input_range[1], sig.horizon, s.dt,
                                                     family.input_dim) for _ in range(n_initial)]
        trs = sim.integrate_batch(family, sig, inputs, x0, s.dt, L, run_ids=[f"s{i:03d}_x{j:02d}" for j in range(n_initial)])
        rows = []
        for j, tr in enumerate(trs):
            rep = bounds.envelope_report(model, consts, sig, tr.t, tr.V, k1 * tr.sup_v ** 2, k2 * tr.sup_y ** 2)
            rows.append((j, tr, rep))
        return i, ok_decay, decay_margin, rows

    results = _pmap(run, range(len(signals)))
    runs, norms = [], []
    for i, ok_decay, decay_margin, rows in results:
        for j, tr, rep in rows:
            rid = f"s{i:03d}_x{j:02d}"
            if out:
                (out / f"traj_{rid}.csv").write_text(tr.to_csv())
                (out / f"envelope_{rid}.csv").write_text(rep.to_csv())
            norms.append((rid, tr.t, tr.norm))
            runs.append({
                "run": rid,
                "max_norm": float(tr.norm.max()),
                "decay_ok": bool(ok_decay),
                "decay_margin": decay_margin,
                **rep.summary(),
            })
    if out:
        with open(out / "norms.csv", "w") as f:
            f.write("run,t,norm\n")
            for rid, t, nx in norms:
                for a, b in zip(t, nx):
                    f.write(f"{rid},{float(a)!r},{float(b)!r}\n")
    summary = {
        "gains": {"k1": k1, "k2": k2},
        "constants": consts.to_dict(),
        "runs": runs,
        "all_dominated": all(r["dominated"] for r in runs),
        "all_decay_ok": all(r["decay_ok"] for r in runs),
        "max_norm": max((r["max_norm"] for r in runs), default=0.0),
    }
    if out:
        (out / "simulation.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_simulate(cfg: ProjectConfig, signals_dir: str | None, n: int, out: Path | None, seed: int = 0) -> int:
    try:
        if signals_dir:
            files = sorted(Path(signals_dir).glob("signal_*.csv"))
            signals = [SwitchingSignal.load(f) for f in files]
        else:
            signals = [sig for sig, _ in generate_signals(cfg, n, seed)]
        summary = simulate_runs(cfg, signals, out=out)
    except sim.SimulationDiverged as e:
        print(f"run {e.run_id} diverged: {e}", file=sys.stderr)
        return EXIT_FAIL
    except GenerationError as e:
        print(f"generation failed: {e}", file=sys.stderr)
        return EXIT_FAIL
    print(f"{len(summary['runs'])} runs, max |x| = {summary['max_norm']:.4g}, "
          f"envelope dominated: {summary['all_dominated']}, decay bound holds: {summary['all_decay_ok']}")
    return EXIT_OK if summary["all_dominated"] and summary["all_decay_ok"] else EXIT_FAIL


def cmd_reproduce_paper(out: Path | None = None, seed: int = 0) -> int:
    rows, failed = [], False
    for name in ("ex31", "ex32", "ex33", "sec4"):
        cfg = bundled_config(name)
        model = cfg.build_model()
        t0 = time.perf_counter()
        rep = evaluate(model, cfg.build_budget())
        ms = (time.perf_counter() - t0) * 1e3
        if name in REFERENCE_LHS:
            target, tol = REFERENCE_LHS[name]
            ok = abs(rep.lhs - target) <= tol and rep.feasible
            expect = f"{target} +/- {tol}"
        else:
            ok, expect = rep.feasible, "< 0"
        failed |= not ok
        rows.append((name, len(model.P), len(model.edges), rep.lhs, expect, ok, ms))
    print(f"{'config':<6} {'|P|':>4} {'|E|':>4} {'lhs':>12}  {'expected':<16} {'result':<6} {'ms':>6}")
    for name, nP, nE, lhs, expect, ok, ms in rows:
        print(f"{name:<6} {nP:>4} {nE:>4} {lhs:>12.6f}  {expect:<16} {'PASS' if ok else 'FAIL':<6} {ms:>6.3f}")

    cfg = bundled_config("sec4")
    try:
        signals = [sig for sig, _ in generate_signals(cfg, 3, seed)]
        summary = simulate_runs(cfg, signals, n_initial=3, out=out)
        ok = summary["all_dominated"] and summary["all_decay_ok"] and summary["max_norm"] < BOUND_SURROGATE
        detail = (f"max |x| = {summary['max_norm']:.4g}, envelope dominated: {summary['all_dominated']}, "
                  f"decay bound: {summary['all_decay_ok']}")
    except (GenerationError, sim.SimulationDiverged) as e:
        ok, detail = False, str(e)
    failed |= not ok
    print(f"sec4 simulation (3 signals x 3 initial states): {'PASS' if ok else 'FAIL'} ({detail})")
    if out:
        (out / "reproduce.json").write_text(json.dumps(
            [{"config": r[0], "subsystems": r[1], "edges": r[2], "lhs": r[3], "expected": r[4], "pass": r[5]}
             for r in rows], indent=2) + "\n")
    return EXIT_FAIL if failed else EXIT_OK


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="switchcert", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="config path or bundled name")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        return p

    common(sub.add_parser("check", help="evaluate the certificate inequality"))
    p = common(sub.add_parser("find-rho", help="search for a feasible frequency budget"))
    p.add_argument("--floors", help="JSON budget whose values act as lower bounds")
    p = common(sub.add_parser("gen", help="generate signals in the stabilizing class"))
    p.add_argument("--n", type=int, default=10)
    p = common(sub.add_parser("simulate", help="simulate trajectories and check the envelope"))
    p.add_argument("--n", type=int, default=10, help="signals to generate when --signals is absent")
    p.add_argument("--signals", help="directory of signal_*.csv files")
    common(sub.add_parser("reproduce-paper", help="check the bundled examples"), config=False)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = _outdir(args.out)
    try:
        if args.command == "reproduce-paper":
            return cmd_reproduce_paper(out, args.seed)
        cfg = _load(args.config)
        if args.command == "check":
            return cmd_check(cfg, out)
        if args.command == "find-rho":
            floors = None
            if args.floors:
                floors = FrequencyBudget.from_dict(json.loads(Path(args.floors).read_text()))
            return cmd_find_rho(cfg, floors, out)
        if args.command == "gen":
            return cmd_gen(cfg, args.n, out, args.seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.signals, args.n, out, args.seed)
    except (ConfigError, json.JSONDecodeError, FileNotFoundError, BudgetError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
