import os
import subprocess
import sys

import numpy as np
import pytest

from switchcert import _kernels
from switchcert.signals import _columns, _cumulative

from test_signals import random_walk


def tables(model, budget, seed, n=14):
    cols = _columns(model, budget)
    s = random_walk(model, n, seed)
    return _cumulative(cols, s.indices), cols


@pytest.mark.parametrize("seed", range(15))
def test_window_backends_agree(cfg, seed):
    c = cfg["sec4"] if seed % 2 else cfg["ex32"]
    C, cols = tables(c.build_model(), c.build_budget(), seed)
    impls = _kernels.implementations("window_violations")
    outs = [f(C, cols.rho, cols.off, cols.kind) for f in impls.values()]
    for o in outs[1:]:
        assert np.array_equal(o, outs[0])
    last = _kernels.implementations("last_window_violation")
    for b in range(C.shape[0]):
        got = {name: f(C[: b + 1], b, cols.rho, cols.off, cols.kind) for name, f in last.items()}
        assert len(set(got.values())) == 1
        # consistent with the full table
        first = np.nonzero(outs[0][:b, b, :].any(axis=0))[0]
        assert got["numpy"] == (int(first[0]) if first.size else -1)


def test_numpy_fallback_flag():
    env = dict(os.environ, SWITCHCERT_DISABLE_NUMBA="1")
    code = ("from switchcert import _kernels, validate_class\n"
            "from switchcert.config import bundled_config\n"
            "from switchcert.signals import generate\n"
            "c = bundled_config('sec4'); m, b = c.build_model(), c.build_budget()\n"
            "s = generate(m, b, 25.0, 3, c.build_policy())\n"
            "print(_kernels.BACKEND, validate_class(m, b, s).in_class, s.to_csv().__hash__() is not None)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True", "True"]


def test_backends_generate_identically(cfg):
    env = dict(os.environ, SWITCHCERT_DISABLE_NUMBA="1")
    code = ("from switchcert.config import bundled_config\n"
            "from switchcert.signals import generate\n"
            "c = bundled_config('sec4')\n"
            "print(generate(c.build_model(), c.build_budget(), 25.0, 5, c.build_policy()).to_csv(), end='')")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    from switchcert.signals import generate

    c = cfg["sec4"]
    assert out.stdout == generate(c.build_model(), c.build_budget(), 25.0, 5, c.build_policy()).to_csv()
