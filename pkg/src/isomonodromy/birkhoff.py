"""Birkhoff factorization of matrix loops and the related gauge reductions.

A loop ``M(lam)`` invertible on the circle ``|lam - b| = 1`` is written as

    M = U (lam - b)^K W,

``U`` holomorphic and invertible on the closed unit disc, ``W`` holomorphic
and invertible outside it (infinity included), and ``K`` an integer vector
sorted in descending order. ``K`` is unique.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (DEFAULT_TOL, MatrixLaurentSeries, Tolerance, as_matrix, laurent_mul,
                   laurent_split, mat_inverse, op_norm, winding_number)
from .errors import (DegeneratePivotError, InputError, NonConvergenceError, NumericFailure)

INNER_RADIUS = 0.5
OUTER_RADIUS = 2.0
N_SAMPLES = 256


def _circle(base: complex, radius: float, n: int = N_SAMPLES) -> np.ndarray:
    return base + radius * np.exp(2j * np.pi * np.arange(n) / n)


def _annulus_points(base: complex, r: float, R: float, n: int = N_SAMPLES) -> np.ndarray:
    return np.concatenate([_circle(base, r, n), _circle(base, 1.0, n), _circle(base, R, n)])


# ---------------------------------------------------------------------------
# near-identity factorization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NearIdentityFactorization:
    U: MatrixLaurentSeries
    W: MatrixLaurentSeries
    residual: float
    ratios: list
    iterations: int

    def __iter__(self):
        return iter((self.U, self.W))


def _inverse_minus_series(w: MatrixLaurentSeries, lowest: int) -> MatrixLaurentSeries:
    """``(1 + w)^{-1}`` for ``w`` with only negative degrees, down to ``lowest``."""
    p = w.shape[0]
    depth = -lowest
    out = np.zeros((depth + 1, p, p), complex)  # out[k] is the coefficient of z^{-k}
    out[0] = np.eye(p)
    wc = [w.coeff(-j) for j in range(depth + 1)]
    for k in range(1, depth + 1):
        acc = np.zeros((p, p), complex)
        for j in range(1, k + 1):
            acc -= wc[j] @ out[k - j]
        out[k] = acc
    return MatrixLaurentSeries(out[::-1], lowest, w.base)


def factor_near_identity(B: MatrixLaurentSeries, max_iter: int = 200,
                         tol: Tolerance = DEFAULT_TOL, *, r: float = INNER_RADIUS,
                         R: float = OUTER_RADIUS, truncation: int = 64
                         ) -> NearIdentityFactorization:
    """Factor ``I + B = U W`` for small ``B`` by the Laurent projection series.

    ``w = sum_n (-pr_minus B)^n 1`` is summed term by term, then
    ``U = 1 + B_+ + (B w)_+`` and ``W = (1 + w)^{-1}``. Negative degrees are
    kept down to ``-truncation`` and positive degrees up to ``truncation``.

    Raises
    ------
    InputError
        If the annulus norm of ``B`` is not below ``0.5``.
    NonConvergenceError
        If the terms do not decay below ``tol`` within ``max_iter`` steps.
    """
    if B.shape[0] != B.shape[1]:
        raise InputError("B must be square")
    norm_b = B.annulus_norm(r, R)
    if not norm_b < 0.5:
        raise InputError(f"annulus norm of B is {norm_b:.3g}; factor_near_identity needs < 0.5")
    p = B.shape[0]
    base = B.base
    lo, hi = -truncation, truncation
    one = MatrixLaurentSeries.identity(p, base)
    b_plus, b_minus = laurent_split(B)
    term = -b_minus
    w = term
    ratios = []
    prev = term.annulus_norm(r, R)
    stop = max(1e-3 * tol.abs, 1e-18)
    it = 1
    while prev > stop:
        if it >= max_iter:
            raise NonConvergenceError("near-identity series did not converge",
                                      ratios[-1] if ratios else None)
        nxt = -laurent_split(laurent_mul(B, term).window(lo, hi))[1]
        cur = nxt.annulus_norm(r, R)
        ratios.append(cur / prev if prev > 0 else 0.0)
        term, prev = nxt, cur
        w = w + term
        it += 1
    w = w.window(lo, -1) if w.min_degree < 0 else MatrixLaurentSeries.zeros((p, p), base)
    u = b_plus + laurent_split(laurent_mul(B, w).window(lo, hi))[0]
    U = (one + u).trim()
    W = _inverse_minus_series(w, lo).trim(1e-300)
    pts = _annulus_points(base, r, R)
    diff = U(pts) @ W(pts) - np.eye(p) - B(pts)
    residual = float(np.abs(diff).max())
    return NearIdentityFactorization(U, W, residual, ratios, it)


# ---------------------------------------------------------------------------
# column reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BirkhoffFactorization:
    """``M = U (lam - b)^K W`` with diagnostics."""

    U: MatrixLaurentSeries
    K: np.ndarray
    W: MatrixLaurentSeries
    base_point: complex
    residual: float = np.nan
    winding: int | None = None
    min_det_U_inside: float = np.nan
    min_det_W_outside: float = np.nan

    def reconstruct(self, lam) -> np.ndarray:
        lam = np.asarray(lam, complex)
        z = lam - self.base_point
        d = z[..., None] ** self.K
        return (self.U(lam) * d[..., None, :]) @ self.W(lam)


def _poly_coeffs(M: MatrixLaurentSeries) -> tuple[list[np.ndarray], int]:
    """Coefficients of ``M z^m`` (a polynomial) and the shift ``m``."""
    shift = max(0, -M.min_degree)
    p = M.shape[0]
    deg = M.max_degree + shift
    coeffs = [M.coeff(k - shift).copy() for k in range(deg + 1)]
    return coeffs if coeffs else [np.zeros((p, p), complex)], shift


class _Reducer:
    """Working state ``P = L z^K W`` with ``L`` a polynomial stored by column."""

    def __init__(self, coeffs: list[np.ndarray], tol: Tolerance):
        self.p = coeffs[0].shape[0]
        # L[j] has shape (deg_j + 1, p): coefficient vectors of column j
        self.L = [np.array([c[:, j] for c in coeffs]) for j in range(self.p)]
        self.K = np.zeros(self.p, int)
        self.W: dict[int, np.ndarray] = {0: np.eye(self.p, dtype=complex)}
        self.scale = max(float(max(np.abs(c).max() for c in coeffs)), 1e-300)
        self.tol = tol
        self.zero_thr = tol.rel * self.scale

    # -- helpers ----------------------------------------------------------
    def value_at_zero(self) -> np.ndarray:
        return np.column_stack([col[0] for col in self.L])

    def _left_multiply_W(self, factor: dict[int, np.ndarray]) -> None:
        out: dict[int, np.ndarray] = {}
        for a, fa in factor.items():
            for b, wb in self.W.items():
                out[a + b] = out.get(a + b, 0) + fa @ wb
        self.W = out

    def _resort(self) -> None:
        perm = np.argsort(-self.K, kind="stable")
        if np.all(perm == np.arange(self.p)):
            return
        self.L = [self.L[j] for j in perm]
        self.K = self.K[perm]
        self.W = {k: w[perm] for k, w in self.W.items()}

    def _divide_column_by_z(self, j: int) -> None:
        col = self.L[j]
        if np.abs(col[0]).max() > 1e-8 * self.scale:
            raise NumericFailure(f"column {j} does not vanish at the base point after "
                                 f"elimination (|L_j(0)| = {np.abs(col[0]).max():.3e})")
        self.L[j] = col[1:] if len(col) > 1 else np.zeros((1, self.p), complex)
        self.K[j] += 1

    # -- reduction at the base point -------------------------------------
    def reduce_at_zero(self, max_steps: int = 10_000) -> None:
        for _ in range(max_steps):
            l0 = self.value_at_zero()
            norms = np.linalg.norm(l0, axis=0)
            # first dependent column in K order
            dep = None
            for j in range(self.p):
                if norms[j] <= self.zero_thr:
                    dep, s = j, np.zeros(j, complex)
                    break
                cols = l0[:, :j + 1] / norms[:j + 1]
                sv = np.linalg.svd(cols, compute_uv=False)
                if sv[-1] <= 1e-9:
                    coef, *_ = np.linalg.lstsq(l0[:, :j], l0[:, j], rcond=None)
                    dep, s = j, coef
                    break
            if dep is None:
                return
            j = dep
            # column op: L_j <- L_j - sum_a s_a L_a ; W <- (1 + sum s_a z^{k_j - k_a} E_{a j}) W
            new = self.L[j].copy()
            factor: dict[int, np.ndarray] = {0: np.eye(self.p, dtype=complex)}
            for a in range(j):
                if s[a] == 0:
                    continue
                la = self.L[a]
                n = max(len(new), len(la))
                grown = np.zeros((n, self.p), complex)
                grown[:len(new)] = new
                grown[:len(la)] -= s[a] * la
                new = grown
                d = int(self.K[j] - self.K[a])
                e = factor.setdefault(d, np.zeros((self.p, self.p), complex))
                e[a, j] += s[a]
            self.L[j] = new
            self._divide_column_by_z(j)
            self._left_multiply_W(factor)
            self._resort()
        raise NumericFailure("column reduction did not terminate")

    # -- zeros of det L inside the unit disc -----------------------------
    def matrix_coeffs(self) -> list[np.ndarray]:
        deg = max(len(c) for c in self.L)
        out = []
        for k in range(deg):
            out.append(np.column_stack([c[k] if k < len(c) else np.zeros(self.p, complex)
                                        for c in self.L]))
        return out

    def evaluate(self, z: complex) -> np.ndarray:
        return sum(c * z ** k for k, c in enumerate(self.matrix_coeffs()))

    def inner_zeros(self) -> np.ndarray:
        coeffs = self.matrix_coeffs()
        while len(coeffs) > 1 and np.abs(coeffs[-1]).max() == 0:
            coeffs.pop()
        d = len(coeffs) - 1
        if d == 0:
            return np.zeros(0, complex)
        p = self.p
        A = np.zeros((d * p, d * p), complex)
        Bm = np.eye(d * p, dtype=complex)
        A[:-p, p:] = np.eye((d - 1) * p)
        for k in range(d):
            A[-p:, k * p:(k + 1) * p] = -coeffs[k]
        Bm[-p:, -p:] = coeffs[d]
        ev = scipy.linalg.eigvals(A, Bm)
        ev = ev[np.isfinite(ev)]
        return ev[(np.abs(ev) < 1.0) & (np.abs(ev) > 1e-12)]

    def move_zero(self, c: complex) -> None:
        """Send a zero ``c`` of ``det L`` (``0 < |c| < 1``) to the base point."""
        _, s, vh = np.linalg.svd(self.evaluate(c))
        v = vh[-1].conj()
        support = np.abs(v) > 1e-8 * np.abs(v).max()
        kmin = self.K[support].min()
        cand = np.nonzero(support & (self.K == kmin))[0]
        j = int(cand[np.argmax(np.abs(v[cand]))])
        # column op L_j <- L v / v_j
        new = np.zeros((max(len(x) for x in self.L), self.p), complex)
        for a in range(self.p):
            if not support[a]:
                continue
            coef = v[a] / v[j]
            new[:len(self.L[a])] += coef * self.L[a]
        # synthetic division of the column by (z - c), then multiply by z
        deg = len(new) - 1
        q = np.zeros((deg, self.p), complex)
        acc = new[deg].copy()
        for k in range(deg - 1, -1, -1):
            q[k] = acc
            acc = new[k] + c * acc
        if np.abs(acc).max() > 1e-7 * self.scale:
            raise NumericFailure(f"zero at {c:.6g} is not resolved (remainder {np.abs(acc).max():.3e})")
        self.L[j] = np.vstack([np.zeros((1, self.p), complex), q])
        # W <- diag(1 - c/z at j) (1 - sum_{a != j} (v_a/v_j) z^{k_j - k_a} E_{a j}) W
        elim: dict[int, np.ndarray] = {0: np.eye(self.p, dtype=complex)}
        for a in range(self.p):
            if a == j or not support[a]:
                continue
            d = int(self.K[j] - self.K[a])
            e = elim.setdefault(d, np.zeros((self.p, self.p), complex))
            e[a, j] -= v[a] / v[j]
        self._left_multiply_W(elim)
        diag = {0: np.eye(self.p, dtype=complex), -1: np.zeros((self.p, self.p), complex)}
        diag[-1][j, j] = -c
        self._left_multiply_W(diag)

    # -- output -------------------------------------------------------------
    def as_series(self, base: complex, shift: int):
        coeffs = self.matrix_coeffs()
        U = MatrixLaurentSeries(np.array(coeffs), 0, base)
        lo, hi = min(self.W), max(self.W)
        wc = np.zeros((hi - lo + 1, self.p, self.p), complex)
        for k, m in self.W.items():
            wc[k - lo] = m
        W = MatrixLaurentSeries(wc, lo, base)
        return U, self.K - shift, W


def _product_coeffs(U: MatrixLaurentSeries, K: np.ndarray, W: MatrixLaurentSeries,
                    lo: int, hi: int) -> np.ndarray:
    """Coefficients of ``U z^K W`` on degrees ``lo..hi``."""
    p = len(K)
    out = np.zeros((hi - lo + 1, p, p), complex)
    for a in range(U.min_degree, U.max_degree + 1):
        ua = U.coeff(a)
        for b in range(W.min_degree, W.max_degree + 1):
            wb = W.coeff(b)
            for l in range(p):
                out[a + K[l] + b - lo] += np.outer(ua[:, l], wb[l])
    return out


def _polish(M: MatrixLaurentSeries, U: MatrixLaurentSeries, K: np.ndarray,
            W: MatrixLaurentSeries, steps: int = 3):
    """Newton refinement of ``M = U z^K W`` on the coefficients.

    The degree windows of ``U`` and ``W`` stay fixed and the linearized
    correction ``dU z^K W + U z^K dW = M - U z^K W`` is solved in the least
    squares sense. Repeated zero moves amplify rounding, this removes it.
    """
    p = len(K)
    lo = min(M.min_degree, U.min_degree + int(K.min()) + W.min_degree)
    hi = max(M.max_degree, U.max_degree + int(K.max()) + W.max_degree)
    target = M.window(lo, hi).coeffs
    u_deg = range(U.min_degree, U.max_degree + 1)
    w_deg = range(W.min_degree, W.max_degree + 1)
    best = np.abs(target - _product_coeffs(U, K, W, lo, hi)).max()
    for _ in range(steps):
        E = target - _product_coeffs(U, K, W, lo, hi)
        cols = []
        for a in u_deg:
            for i in range(p):
                for l in range(p):
                    col = np.zeros_like(E)
                    for b in w_deg:
                        col[a + K[l] + b - lo, i, :] += W.coeff(b)[l]
                    cols.append(col.ravel())
        for b in w_deg:
            for l in range(p):
                for j in range(p):
                    col = np.zeros_like(E)
                    for a in u_deg:
                        col[a + K[l] + b - lo, :, j] += U.coeff(a)[:, l]
                    cols.append(col.ravel())
        x, *_ = np.linalg.lstsq(np.array(cols).T, E.ravel(), rcond=None)
        nu = len(u_deg) * p * p
        U1 = MatrixLaurentSeries(U.coeffs + x[:nu].reshape(-1, p, p), U.min_degree, U.base)
        W1 = MatrixLaurentSeries(W.coeffs + x[nu:].reshape(-1, p, p), W.min_degree, W.base)
        err = np.abs(target - _product_coeffs(U1, K, W1, lo, hi)).max()
        if not err < 0.5 * best:
            break
        U, W, best = U1, W1, err
    return U, W


def factor_column_reduction(M: MatrixLaurentSeries, b: complex | None = None,
                            tol: Tolerance = DEFAULT_TOL, *, r: float = INNER_RADIUS,
                            R: float = OUTER_RADIUS, n_samples: int = N_SAMPLES,
                            max_zero_moves: int = 1000) -> BirkhoffFactorization:
    """Birkhoff factorization of a Laurent polynomial loop by column reduction.

    The polynomial ``P = M z^m`` (``z = lam - b``) is reduced at ``z = 0`` by
    eliminating dependent columns of ``L(0)`` and dividing them by ``z``.
    Zeros of ``det L`` inside the unit disc are moved to ``z = 0`` one at a
    time with an elementary column operation and a factor ``z / (z - c)``,
    so the working degree never grows. A final Newton step on the
    coefficients removes the rounding amplified by the zero moves.

    Raises
    ------
    InputError
        If ``det M`` vanishes on the unit circle, or ``b`` disagrees with the
        series base point.
    NumericFailure
        If an elimination leaves a non-vanishing remainder.
    """
    if b is None:
        b = M.base
    if complex(b) != M.base:
        raise InputError(f"base point {b} differs from the series base {M.base}")
    if M.shape[0] != M.shape[1]:
        raise InputError("M must be square")
    mid = _circle(M.base, 1.0, max(n_samples, 1024))
    dets = np.linalg.det(M(mid))
    if np.abs(dets).min() <= 1e-12 * max(np.abs(dets).max(), 1e-300):
        raise InputError("det M vanishes on the unit circle around the base point")
    wind = winding_number(dets)

    coeffs, shift = _poly_coeffs(M)
    red = _Reducer(coeffs, tol)
    red.reduce_at_zero()
    for _ in range(max_zero_moves):
        zeros = red.inner_zeros()
        if len(zeros) == 0:
            break
        red.move_zero(complex(zeros[np.argmax(np.abs(zeros))]))
        red.reduce_at_zero()
    else:
        raise NumericFailure("too many zeros of det M inside the unit disc")
    U, K, W = red.as_series(M.base, shift)
    U, W = _polish(M, U.trim(), K, W.trim())

    pts = _annulus_points(M.base, r, R, n_samples)
    fac = BirkhoffFactorization(U, K, W, M.base)
    target = M(pts)
    residual = float(np.abs(fac.reconstruct(pts) - target).max()
                     / max(1.0, np.abs(target).max()))
    inside = np.concatenate([[M.base], _circle(M.base, r, n_samples), mid])
    outside = np.concatenate([mid, _circle(M.base, R, n_samples)])
    det_u = float(np.abs(np.linalg.det(U(inside))).min())
    det_w = min(float(np.abs(np.linalg.det(W(outside))).min()),
                float(abs(np.linalg.det(W.coeff(0)))))
    return BirkhoffFactorization(U, K, W, M.base, residual, wind, det_u, det_w)


# ---------------------------------------------------------------------------
# Gamma-reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GammaReduction:
    Gamma: MatrixLaurentSeries
    Ustar: MatrixLaurentSeries
    K: np.ndarray

    def __iter__(self):
        return iter((self.Gamma, self.Ustar))


def _block_values(K: np.ndarray) -> tuple[list[int], list[slice]]:
    values, slices, start = [], [], 0
    for j in range(1, len(K) + 1):
        if j == len(K) or K[j] != K[start]:
            values.append(int(K[start]))
            slices.append(slice(start, j))
            start = j
    return values, slices


def gamma_reduce(V: MatrixLaurentSeries, K, tol: Tolerance = DEFAULT_TOL) -> GammaReduction:
    """Find ``Gamma`` (polynomial in ``1/lam``) with ``Gamma lam^K V = U* lam^K``.

    ``Gamma`` is block lower-triangular with identity diagonal blocks, the
    blocks being the runs of equal entries of ``K``. The last two blocks are
    merged repeatedly: with gap ``m`` between them, the lower-left part ``C`` of
    ``V`` is cancelled to order ``m`` by ``R = sum_j R_j lam^j`` solving
    ``C_j + R_0 A_j + ... + R_j A_0 = 0``.

    Raises
    ------
    InputError
        If ``V`` has negative degrees, ``K`` is not non-increasing, or a
        leading principal minor of ``V(0)`` at a block boundary vanishes.
    """
    K = np.asarray(K, int).ravel()
    p = V.shape[0]
    if V.shape != (p, p) or len(K) != p:
        raise InputError("V must be square with len(K) rows")
    if V.min_degree < 0:
        raise InputError("V must be holomorphic at 0 (min_degree >= 0)")
    if np.any(np.diff(K) > 0):
        raise InputError("K must be sorted in descending order")
    V = V.window(0, V.max_degree)
    v0 = V.coeff(0)
    scale = max(1.0, op_norm(v0))
    values, slices = _block_values(K)
    for sl in slices[:-1]:
        n = sl.stop
        smin = np.linalg.svd(v0[:n, :n], compute_uv=False)[-1]
        if smin <= tol.threshold(scale):
            raise InputError(f"leading principal minor of size {n} of V(0) vanishes "
                             f"(smallest singular value {smin:.3e})")

    Gamma = MatrixLaurentSeries.identity(p, V.base)
    cur = K.copy()
    while len(values) > 1:
        m = values[-2] - values[-1]
        top = slice(0, slices[-1].start)
        bot = slices[-1]
        A = V.block(top, top)
        Bb = V.block(top, bot)
        C = V.block(bot, top)
        D = V.block(bot, bot)
        a0inv = mat_inverse(A.coeff(0), Tolerance(abs=tol.abs, rel=tol.rel))
        Rj = []
        for j in range(m):
            acc = C.coeff(j).copy()
            for i in range(j):
                acc += Rj[i] @ A.coeff(j - i)
            Rj.append(-acc @ a0inv)
        Rs = MatrixLaurentSeries(np.array(Rj), 0, V.base)
        lower = (C + laurent_mul(Rs, A)).window(0, max(C.max_degree, m - 1 + A.max_degree))
        if np.abs(lower.coeffs[:m]).max(initial=0.0) > 1e-9 * max(1.0, lower.max_abs()):
            raise NumericFailure("block elimination left low-order terms")
        new_lower = lower.shift(-m).window(0, lower.max_degree - m) \
            if lower.max_degree >= m else MatrixLaurentSeries.zeros(C.shape, V.base)
        new_upper = Bb.shift(m)
        new_d = D + laurent_mul(Rs, Bb)
        hi = max(A.max_degree, new_upper.max_degree, new_lower.max_degree, new_d.max_degree)
        coeffs = np.zeros((hi + 1, p, p), complex)
        for blk, rs, cs in ((A, top, top), (new_upper, top, bot),
                            (new_lower, bot, top), (new_d, bot, bot)):
            w = blk.window(0, hi).coeffs
            coeffs[:, rs, cs] = w
        V = MatrixLaurentSeries(coeffs, 0, V.base)
        # merge: K' lowers the upper blocks by m
        new_K = cur.copy()
        new_K[top] -= m
        # Gamma step = lam^{K'} [[1, 0], [R lam^{-m}, 1]] lam^{-K'}
        step_c = np.zeros((m, p, p), complex)
        step_c[:, bot, top] = np.array(Rj)
        step = MatrixLaurentSeries(step_c, -m, V.base).diag_conjugate(new_K, new_K)
        step = step + MatrixLaurentSeries.identity(p, V.base)
        Gamma = laurent_mul(step, Gamma).trim()
        cur = new_K
        values, slices = _block_values(cur)
    return GammaReduction(Gamma, V.trim(), K)


# ---------------------------------------------------------------------------
# gauge step
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaugeStepResult:
    Gamma1: MatrixLaurentSeries
    new_residues: list
    K1: np.ndarray
    pivot: tuple[int, int]
    g_value: complex
    nilpotency_residual: float
    trace_change: int  # tr(K1^2) - tr(K^2), exact integer


def gauge_step(residues, u, U0, g: complex, pivot: tuple[int, int], K,
               tol: Tolerance = DEFAULT_TOL) -> GaugeStepResult:
    """Elementary rational gauge transformation at the pole ``lam = 0``.

    ``residues`` are ``A_0, A_1, ..., A_N`` with ``A_0`` at ``lam = 0`` and
    ``A_i`` at ``u_i`` (``u`` lists ``u_1..u_N``). With
    ``N = U0 E_{beta alpha} U0^{-1}`` the gauge is ``Gamma1 = 1 - N / (g lam)``,
    the residues become ``(1 - N/(g u_i)) A_i (1 + N/(g u_i))`` and
    ``A_0 + sum_i (A_i - A1_i)``, and ``K`` loses one at ``alpha`` and gains
    one at ``beta``. Indices are zero-based.

    Raises
    ------
    DegeneratePivotError
        If ``|g|`` is at or below ``tol.abs``.
    """
    res = np.array(residues, dtype=complex)
    u = np.array(u, dtype=complex).ravel()
    if res.ndim != 3 or len(res) != len(u) + 1:
        raise InputError("residues must be A_0..A_N with len(u) == N")
    if np.any(u == 0):
        raise InputError("poles u_i must be nonzero")
    alpha, beta = (int(x) for x in pivot)
    p = res.shape[1]
    if alpha == beta or not (0 <= alpha < p and 0 <= beta < p):
        raise InputError("pivot must be two distinct indices in range")
    K = np.asarray(K, int).ravel()
    if len(K) != p:
        raise InputError("K must have one entry per row")
    if not abs(g) > tol.abs:
        raise DegeneratePivotError("gauge pivot vanishes", g)
    U0 = as_matrix(U0, square=True, name="U0")
    E = np.zeros((p, p), complex)
    E[beta, alpha] = 1.0
    Nab = U0 @ E @ mat_inverse(U0, tol)
    nil = float(np.abs(Nab @ Nab).max() / max(1.0, np.abs(Nab).max() ** 2))
    if nil > 1e-12:
        raise NumericFailure(f"N_ab is not nilpotent to 1e-12 (residual {nil:.3e})")
    new = [None]
    for ui, a in zip(u, res[1:]):
        left = np.eye(p) - Nab / (g * ui)
        right = np.eye(p) + Nab / (g * ui)
        new.append(left @ a @ right)
    new[0] = res[0] + sum(a - b for a, b in zip(res[1:], new[1:]))
    K1 = K.copy()
    K1[alpha] -= 1
    K1[beta] += 1
    gamma = MatrixLaurentSeries(np.array([-Nab / g, np.eye(p, dtype=complex)]), -1)
    return GaugeStepResult(gamma, new, K1, (alpha, beta), complex(g), nil,
                           int(K1 @ K1 - K @ K))
