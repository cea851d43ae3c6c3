"""Hot loops: sliding-window count constraints and batched RK4.

Every kernel exists twice, a numba ``@njit`` version and a pure-numpy one.
Set ``SWITCHCERT_DISABLE_NUMBA=1`` to force the numpy path; it is also used
when numba cannot be imported. Both paths must return identical results.

Window constraints work on cumulative switch counts: ``C[k, j]`` is the
number of switches among the first ``k`` that fall in column ``j`` (one
column per subsystem, one per edge). The window of switches ``a+1 .. b``
has ``N = b - a`` and counts ``C[b] - C[a]``. Column kinds:

    0  unconstrained
    1  lower bound   count >= floor(rho * N)
    2  upper bound   count <= offset + floor(rho * N)
"""

import os

import numpy as np

# rho * N landing a hair below an integer still floors to that integer
FLOOR_TOL = 1e-9

KIND_FREE, KIND_LOWER, KIND_UPPER = 0, 1, 2

_disabled = os.environ.get("SWITCHCERT_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
try:
    if _disabled:
        raise ImportError
    import numba
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy path

def np_last_window_violation(C, b, rho, off, kind):
    """Lowest column violated by a window ending at switch ``b``, or -1."""
    if b == 0:
        return -1
    counts = C[b][None, :] - C[:b]
    N = (b - np.arange(b))[:, None].astype(np.float64)
    fl = np.floor(rho[None, :] * N + FLOOR_TOL)
    bad = ((kind == KIND_LOWER)[None, :] & (counts < fl)) | (
        (kind == KIND_UPPER)[None, :] & (counts > off[None, :] + fl)
    )
    cols = np.nonzero(bad.any(axis=0))[0]
    return int(cols[0]) if cols.size else -1


def np_window_violations(C, rho, off, kind):
    """Boolean array ``V[a, b, j]``: window ``a+1..b`` breaks column ``j``."""
    n1 = C.shape[0]
    counts = C[None, :, :] - C[:, None, :]
    a = np.arange(n1)
    N = (a[None, :] - a[:, None]).astype(np.float64)
    fl = np.floor(rho[None, None, :] * N[:, :, None] + FLOOR_TOL)
    bad = ((kind == KIND_LOWER) & (counts < fl)) | ((kind == KIND_UPPER) & (counts > off + fl))
    bad &= (N > 0)[:, :, None]
    return bad


def _np_sinus_rhs(x, a, b, c, v):
    d = x[:, 0] - x[:, 1]
    s = np.sin(d)
    out = np.empty_like(x)
    out[:, 0] = a[0] * x[:, 0] + b[0] * s + c[0] * v
    out[:, 1] = a[1] * x[:, 1] - b[1] * s + c[1] * v
    return out


def np_rk4_sinus(x0, A, B, Cc, modes, steps, v):
    """Batched RK4 for the two-state sinusoidally coupled family.

    ``modes[k]`` is the row of the coefficient tables active on step ``k``,
    ``steps[k]`` its length and ``v[:, k]`` the (held) scalar input of every
    batch member. Returns states of shape ``(len(steps) + 1, batch, 2)``.
    """
    nsteps = steps.shape[0]
    out = np.empty((nsteps + 1,) + x0.shape)
    x = x0.astype(np.float64).copy()
    out[0] = x
    for k in range(nsteps):
        m, h, u = modes[k], steps[k], v[:, k]
        a, b, c = A[m], B[m], Cc[m]
        k1 = _np_sinus_rhs(x, a, b, c, u)
        k2 = _np_sinus_rhs(x + 0.5 * h * k1, a, b, c, u)
        k3 = _np_sinus_rhs(x + 0.5 * h * k2, a, b, c, u)
        k4 = _np_sinus_rhs(x + h * k3, a, b, c, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
    return out


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def nb_last_window_violation(C, b, rho, off, kind):
        K = C.shape[1]
        for j in range(K):
            kj = kind[j]
            if kj == KIND_FREE:
                continue
            for a in range(b - 1, -1, -1):
                N = b - a
                cnt = C[b, j] - C[a, j]
                fl = np.floor(rho[j] * N + FLOOR_TOL)
                if kj == KIND_LOWER and cnt < fl:
                    return j
                if kj == KIND_UPPER and cnt > off[j] + fl:
                    return j
        return -1

    @njit
    def nb_window_violations(C, rho, off, kind):
        n1, K = C.shape
        bad = np.zeros((n1, n1, K), dtype=np.bool_)
        for a in range(n1):
            for b in range(a + 1, n1):
                N = b - a
                for j in range(K):
                    kj = kind[j]
                    if kj == KIND_FREE:
                        continue
                    cnt = C[b, j] - C[a, j]
                    fl = np.floor(rho[j] * N + FLOOR_TOL)
                    if kj == KIND_LOWER:
                        bad[a, b, j] = cnt < fl
                    else:
                        bad[a, b, j] = cnt > off[j] + fl
        return bad

    @njit
    def nb_rk4_sinus(x0, A, B, Cc, modes, steps, v):
        nsteps = steps.shape[0]
        nb = x0.shape[0]
        out = np.empty((nsteps + 1, nb, 2))
        for i in range(nb):
            x1 = x0[i, 0]
            x2 = x0[i, 1]
            out[0, i, 0] = x1
            out[0, i, 1] = x2
            for k in range(nsteps):
                m = modes[k]
                h = steps[k]
                u = v[i, k]
                a1, a2 = A[m, 0], A[m, 1]
                b1, b2 = B[m, 0], B[m, 1]
                c1, c2 = Cc[m, 0] * u, Cc[m, 1] * u

                s = np.sin(x1 - x2)
                k1a = a1 * x1 + b1 * s + c1
                k1b = a2 * x2 - b2 * s + c2
                y1 = x1 + 0.5 * h * k1a
                y2 = x2 + 0.5 * h * k1b
                s = np.sin(y1 - y2)
                k2a = a1 * y1 + b1 * s + c1
                k2b = a2 * y2 - b2 * s + c2
                y1 = x1 + 0.5 * h * k2a
                y2 = x2 + 0.5 * h * k2b
                s = np.sin(y1 - y2)
                k3a = a1 * y1 + b1 * s + c1
                k3b = a2 * y2 - b2 * s + c2
                y1 = x1 + h * k3a
                y2 = x2 + h * k3b
                s = np.sin(y1 - y2)
                k4a = a1 * y1 + b1 * s + c1
                k4b = a2 * y2 - b2 * s + c2

                x1 = x1 + (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
                x2 = x2 + (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
                out[k + 1, i, 0] = x1
                out[k + 1, i, 1] = x2
        return out

    last_window_violation = nb_last_window_violation
    window_violations = nb_window_violations
    rk4_sinus = nb_rk4_sinus
else:
    last_window_violation = np_last_window_violation
    window_violations = np_window_violations
    rk4_sinus = np_rk4_sinus


def implementations(name):
    """``{backend: function}`` for a kernel name, for benchmarks and tests."""
    impls = {"numpy": globals()[f"np_{name}"]}
    if HAVE_NUMBA:
        impls["numba"] = globals()[f"nb_{name}"]
    return impls
