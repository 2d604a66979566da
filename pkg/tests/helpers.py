"""Shared builders for test fixtures."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from isomonodromy.core import MatrixLaurentSeries, laurent_mul, winding_number
from isomonodromy.schlesinger import SchlesingerState, StepControl
from isomonodromy.tau import gauge_pivot, transport_gauge_frame

TIGHT = StepControl(rtol=1e-12, atol=1e-14)


def cplx(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_residues(rng, n, p, scale=0.3):
    return scale * cplx(rng, n, p, p)


def random_state(rng, n=3, p=3, scale=0.3, spread=1.0):
    """Poles spread out on a rough triangle, residues of size ``scale``."""
    base = spread * np.exp(2j * np.pi * np.arange(n) / n)
    u = base + 0.1 * spread * cplx(rng, n)
    return SchlesingerState(u, random_residues(rng, n, p, scale))


def commuting_residues(rng, n, p, scale=0.3):
    X = np.eye(p) + 0.3 * cplx(rng, p, p)
    Xi = np.linalg.inv(X)
    return np.array([X @ np.diag(scale * cplx(rng, p)) @ Xi for _ in range(n)])


def n2_closed_form(A1, A2, u_start, u_end):
    """Residue ``A_1`` at ``u_end`` for two poles: conjugation by
    ``sigma^Lambda``, ``sigma = (u2 - u1) / (u2 - u1)(start)``."""
    lam = A1 + A2
    sigma = (u_end[1] - u_end[0]) / (u_start[1] - u_start[0])
    g = expm(np.log(sigma) * lam)
    return g @ A1 @ np.linalg.inv(g)


# ---------------------------------------------------------------------------
# Birkhoff fixtures
# ---------------------------------------------------------------------------

def _det_winding(series: MatrixLaurentSeries, n: int = 512) -> int:
    z = np.exp(2j * np.pi * np.arange(n) / n)
    return winding_number(np.linalg.det(series(z)))


def certified_planted(rng, p, K0, degree=2, scale=0.15, base=0j):
    """``M = U0 (lam - b)^K0 W0`` with ``U0`` invertible on the closed unit
    disc and ``W0`` invertible outside it (including infinity).

    ``U0 = 1 + O(z)`` and ``W0 = 1 + O(1/z)`` are drawn until det U0 has no
    zero in the disc (winding 0 on ``|z| = 1``; ``det U0`` is a polynomial)
    and ``det W0(1/zeta)`` likewise.
    """
    while True:
        U0 = MatrixLaurentSeries(np.concatenate([np.eye(p)[None], scale * cplx(rng, degree, p, p)]),
                                 0, base)
        W0 = MatrixLaurentSeries(np.concatenate([scale * cplx(rng, degree, p, p),
                                                 np.eye(p)[None]]), -degree, base)
        W0_flip = MatrixLaurentSeries(W0.coeffs[::-1], 0, base)  # W0(1/zeta) in zeta
        if _det_winding(U0) == 0 and _det_winding(W0_flip) == 0:
            break
    K0 = np.asarray(K0)
    D = MatrixLaurentSeries.from_dict({int(k): np.diag((K0 == k).astype(float))
                                       for k in set(K0.tolist())}, base)
    return laurent_mul(laurent_mul(U0, D), W0), U0, W0


# ---------------------------------------------------------------------------
# Levelt fixtures
# ---------------------------------------------------------------------------

def random_germ(rng, p, m, resonant=False):
    """Coefficients ``B_0..B_m`` of a germ with spectral radius of ``B_0``
    at most 2; ``resonant`` plants eigenvalues differing by integers."""
    if resonant:
        ev = rng.choice([0.0, 1.0, 2.0], size=p) + 0.3
        ev = ev + 0.0j
    else:
        ev = 2 * (rng.uniform(size=p) - 0.5) + 0.5j * (rng.uniform(size=p) - 0.5)
    S = np.eye(p) + 0.3 * cplx(rng, p, p)
    B0 = S @ np.diag(ev) @ np.linalg.inv(S)
    rest = [0.3 * cplx(rng, p, p) for _ in range(m)]
    return np.array([B0] + rest)


# ---------------------------------------------------------------------------
# gauge fixture with a zero of the pivot
# ---------------------------------------------------------------------------

GAUGE_SEED = 9
GAUGE_POLES = np.array([1.0, 2.0 + 1.0j])
GAUGE_PIVOT = (0, 1)


def gauge_fixture(seed=GAUGE_SEED):
    """Residues ``A_1, A_2`` (2x2) and local frame ``U0`` at an apparent pole 0."""
    rng = np.random.default_rng(seed)
    A = random_residues(rng, 2, 2)
    U0 = np.eye(2) + 0.3 * rng.normal(size=(2, 2))
    return GAUGE_POLES.copy(), A, U0


def pivot_zero(u, A, U0, pivot=GAUGE_PIVOT, ctrl=TIGHT):
    """Newton iteration in ``u_1`` for a zero of the pivot ``g``."""
    def g_at(z):
        target = np.array([z, u[1]])
        a, U = transport_gauge_frame(u, A, U0, target, ctrl)
        return gauge_pivot(target, a, U, pivot)

    z = complex(u[0])
    for _ in range(40):
        g = g_at(z)
        if abs(g) < 1e-13:
            break
        h = 1e-6
        z -= g / ((g_at(z + h) - g_at(z - h)) / (2 * h))
    return z
