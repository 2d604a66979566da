"""Formal fundamental solutions at a Fuchsian point.

For ``lam dY/dlam = B0(lam) Y`` with ``B0`` holomorphic, a formal solution
``Y = C^{-1} U(lam) lam^R lam^N`` is built order by order. ``R`` is diagonal
with eigenvalue blocks ordered by decreasing real part, ``N = N0 + N1 + ...``
with ``[R, N_k] = k N_k``, and ``U = 1 + U_1 lam + U_2 lam^2 + ...``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (DEFAULT_TOL, MatrixLaurentSeries, Tolerance, as_matrix, cluster_values,
                   eigen_order, mat_inverse, op_norm)
from .errors import InputError, NumericFailure

RESONANCE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FuchsLocalData:
    """Germ ``B0(lam) = sum_k B_k lam^k`` and the truncation order ``m``."""

    B: MatrixLaurentSeries
    order: int

    def __post_init__(self):
        if not isinstance(self.B, MatrixLaurentSeries):
            object.__setattr__(self, "B", MatrixLaurentSeries(np.asarray(self.B, complex)))
        if self.B.min_degree != 0:
            raise InputError("B0 must be a power series (min_degree 0)")
        rows, cols = self.B.shape
        if rows != cols:
            raise InputError("B0 must be square")
        if int(self.order) < 0:
            raise InputError("order must be non-negative")
        object.__setattr__(self, "order", int(self.order))

    @classmethod
    def from_coeffs(cls, coeffs, order: int) -> "FuchsLocalData":
        return cls(MatrixLaurentSeries(np.asarray(coeffs, complex), 0), order)

    @property
    def dim(self) -> int:
        return self.B.shape[0]


@dataclass(frozen=True, eq=False)
class JordanForm:
    C: np.ndarray
    R: np.ndarray
    N0: np.ndarray
    rho: np.ndarray          # one eigenvalue per block
    sizes: tuple[int, ...]   # block sizes

    def block_of(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.sizes)), self.sizes)


@dataclass(frozen=True, eq=False)
class FormalSolution:
    R: np.ndarray
    N0: np.ndarray
    U_coeffs: list
    N_parts: list
    C: np.ndarray
    rho: np.ndarray
    sizes: tuple[int, ...]

    @property
    def order(self) -> int:
        return len(self.U_coeffs)

    def U(self) -> MatrixLaurentSeries:
        p = self.R.shape[0]
        return MatrixLaurentSeries(np.array([np.eye(p)] + list(self.U_coeffs)), 0)


def _null_basis(m: np.ndarray, thr: float) -> np.ndarray:
    _, s, vh = np.linalg.svd(m)
    rank = int(np.sum(s > thr))
    return vh[rank:].conj().T


def _orth(m: np.ndarray, thr: float = 1e-12) -> np.ndarray:
    if m.size == 0:
        return m
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    return u[:, s > thr * max(1.0, s[0] if s.size else 0.0)]


def _jordan_chains(T: np.ndarray, thr: float) -> list[np.ndarray]:
    """Jordan chains of a (numerically) nilpotent ``T``.

    Returns a list of matrices whose columns ``b_1..b_j`` satisfy
    ``T b_1 = 0`` and ``T b_{l+1} = b_l``.
    """
    m = T.shape[0]
    kernels = [np.zeros((m, 0), complex)]
    power = np.eye(m, dtype=complex)
    while kernels[-1].shape[1] < m:
        power = power @ T
        k = _null_basis(power, thr)
        if k.shape[1] <= kernels[-1].shape[1]:
            raise NumericFailure("nilpotent staircase stalled")
        kernels.append(k)
    depth = len(kernels) - 1
    dims = [k.shape[1] for k in kernels]
    n_at_least = [0] + [dims[j] - dims[j - 1] for j in range(1, depth + 1)] + [0]
    chains: list[tuple[int, np.ndarray]] = []
    for j in range(depth, 0, -1):
        need = n_at_least[j] - n_at_least[j + 1]
        if need <= 0:
            continue
        avoid = [kernels[j - 1]]
        for level, top in chains:
            avoid.append(np.linalg.matrix_power(T, level - j) @ top[:, None])
        w = _orth(np.hstack(avoid)) if avoid else np.zeros((m, 0))
        proj = kernels[j] - w @ (w.conj().T @ kernels[j])
        _, s, vh = np.linalg.svd(proj, full_matrices=False)
        if len(s) < need or s[need - 1] <= thr:
            raise NumericFailure("cannot complete Jordan chains")
        for c in range(need):
            v = kernels[j] @ vh[c].conj()
            chains.append((j, v / np.linalg.norm(v)))
    out = []
    for level, top in chains:
        cols = [top]
        for _ in range(level - 1):
            cols.append(T @ cols[-1])
        out.append(np.column_stack(cols[::-1]))
    return out


def _snap_resonances(rho: list[complex], resonance_tol: float) -> list[complex]:
    """Make block values whose differences are numerically integral differ by
    exact integers (each class shares one fitted anchor)."""
    rho = list(rho)
    n = len(rho)
    assigned = [False] * n
    for i in range(n):
        if assigned[i]:
            continue
        members = [(i, 0)]
        assigned[i] = True
        for j in range(i + 1, n):
            d = rho[i] - rho[j]
            k = round(d.real)
            if not assigned[j] and abs(d - k) < resonance_tol:
                members.append((j, k))
                assigned[j] = True
        if len(members) > 1:
            anchor = np.mean([rho[j] + k for j, k in members])
            for j, k in members:
                rho[j] = complex(anchor - k)
    return rho


def jordan_order(B00, tol: Tolerance = DEFAULT_TOL, cluster: float | None = None,
                 resonance_tol: float = RESONANCE_TOL) -> JordanForm:
    """Ordered Jordan form ``C B00 C^{-1} = R + N0``.

    Eigenvalues are clustered (``cluster`` radius, default
    ``1e-5 * max(1, |B00|)``) and each cluster becomes one block with value
    the cluster mean. Blocks are ordered by descending real part, then by
    descending imaginary part. Inside a block ``N0`` carries the Jordan chains
    as superdiagonal ones. Block values whose differences lie within
    ``resonance_tol`` of an integer are adjusted to differ by that integer.

    Raises
    ------
    NumericFailure
        If a cluster's generalized eigenspace or chain structure cannot be
        resolved at the requested tolerance.
    """
    b = as_matrix(B00, square=True, name="B00")
    p = b.shape[0]
    scale = max(1.0, op_norm(b))
    radius = cluster if cluster is not None else 1e-5 * scale
    w = np.linalg.eigvals(b)
    groups = cluster_values(list(w), radius)
    means = [complex(np.mean(w[g])) for g in groups]
    order = eigen_order(means, tol=tol.threshold(scale))
    thr = max(tol.rel * scale, 1e3 * np.finfo(float).eps * scale)
    columns, rho, sizes = [], [], []
    for idx in order:
        r = means[idx]
        m = len(groups[idx])
        shifted = b - r * np.eye(p)
        _, s, vh = np.linalg.svd(np.linalg.matrix_power(shifted, m))
        q = vh[p - m:].conj().T
        small = s[p - m]
        big = s[p - m - 1] if m < p else scale ** m
        if not small <= 1e-6 * big:
            raise NumericFailure(f"generalized eigenspace of cluster rho={r:.6g} "
                                 f"(size {m}) is not resolved")
        t = q.conj().T @ shifted @ q
        if np.abs(shifted @ q - q @ t).max() > 1e-6 * scale:
            raise NumericFailure(f"cluster rho={r:.6g} is not invariant")
        try:
            chains = _jordan_chains(t, thr)
        except NumericFailure as exc:
            raise NumericFailure(f"Jordan chains for cluster rho={r:.6g} (size {m}): {exc}") from exc
        for ch in chains:
            columns.append(q @ ch)
        rho.append(r)
        sizes.append(m)
    rho = _snap_resonances(rho, resonance_tol)
    x = np.hstack(columns) if columns else np.zeros((0, 0), complex)
    c = mat_inverse(x, Tolerance(abs=1e-14, rel=1e-13))
    R = np.diag(np.repeat(rho, sizes)).astype(complex)
    N0 = np.zeros((p, p), complex)
    pos = 0
    for ch_cols in columns:
        k = ch_cols.shape[1]
        for l in range(k - 1):
            N0[pos + l, pos + l + 1] = 1.0
        pos += k
    resid = np.abs(c @ b @ x - R - N0).max()
    if resid > 1e-8 * scale:
        raise NumericFailure(f"Jordan form residual {resid:.3e} too large; clusters "
                             f"{[complex(r) for r in rho]}")
    return JordanForm(c, R, N0, np.array(rho), tuple(sizes))


def formal_solution(data: FuchsLocalData, tol: Tolerance = DEFAULT_TOL,
                    resonance_tol: float = RESONANCE_TOL) -> FormalSolution:
    """Coefficients ``U_1..U_m`` and ``N_1..N_m`` of the formal solution.

    Works in the frame where ``B0(0) = R + N0``. Block ``(i, j)`` of order
    ``k`` lies in the ``ad_R`` eigenspace ``a = rho_i - rho_j``; when
    ``|a - k| < resonance_tol`` the block goes to ``N_k`` and ``U_k`` vanishes
    there, otherwise a Sylvester equation is solved for ``U_k``.
    """
    jf = jordan_order(data.B.coeff(0), tol, resonance_tol=resonance_tol)
    c, cinv = jf.C, mat_inverse(jf.C, Tolerance(abs=1e-14, rel=1e-13))
    m = data.order
    bt = [c @ data.B.coeff(k) @ cinv for k in range(m + 1)]
    bounds = np.concatenate([[0], np.cumsum(jf.sizes)])
    blocks = [slice(bounds[i], bounds[i + 1]) for i in range(len(jf.sizes))]
    U = [np.eye(c.shape[0], dtype=complex)]
    Ns = [jf.N0]
    for k in range(1, m + 1):
        rhs = bt[k].copy()
        for i in range(1, k):
            rhs += bt[k - i] @ U[i] - U[i] @ Ns[k - i]
        uk = np.zeros_like(rhs)
        nk = np.zeros_like(rhs)
        for bi, si in enumerate(blocks):
            for bj, sj in enumerate(blocks):
                a = jf.rho[bi] - jf.rho[bj]
                q = rhs[si, sj]
                if abs(a - k) < resonance_tol:
                    nk[si, sj] = q
                    continue
                ni = jf.N0[si, si]
                nj = jf.N0[sj, sj]
                lhs = (k - a) * np.eye(ni.shape[0]) - ni
                uk[si, sj] = scipy.linalg.solve_sylvester(lhs, nj, q)
        U.append(uk)
        Ns.append(nk)
    return FormalSolution(jf.R, jf.N0, U[1:], Ns[1:], c, jf.rho, jf.sizes)


def ode_residual(data: FuchsLocalData, sol: FormalSolution) -> float:
    """Largest coefficient defect of ``lam U' + U (R + N(lam)) - B(lam) U``.

    ``B`` is conjugated into the solution's frame and
    ``N(lam) = N0 + sum_k N_k lam^k``. Orders ``1..m`` are checked.
    """
    c = sol.C
    cinv = np.linalg.inv(c)
    m = sol.order
    bt = [c @ data.B.coeff(k) @ cinv for k in range(m + 1)]
    U = [np.eye(c.shape[0], dtype=complex)] + list(sol.U_coeffs)
    Ns = [sol.N0] + list(sol.N_parts)
    worst = 0.0
    for k in range(1, m + 1):
        d = k * U[k] + U[k] @ sol.R
        for i in range(k + 1):
            d = d + U[i] @ Ns[k - i] - bt[k - i] @ U[i]
        worst = max(worst, float(np.abs(d).max()))
    return worst


def nilpotent_monodromy(data: FuchsLocalData, tol: float = 1e-10) -> np.ndarray:
    """``exp(2 pi i B0(0))`` for nilpotent ``B0(0)`` by the finite power series."""
    b = data.B.coeff(0)
    p = b.shape[0]
    scale = max(1.0, op_norm(b))
    if p and op_norm(np.linalg.matrix_power(b, p)) > tol * scale ** p:
        raise InputError("B0(0) is not nilpotent")
    x = 2j * np.pi * b
    out = np.eye(p, dtype=complex)
    term = np.eye(p, dtype=complex)
    for k in range(1, p):
        term = term @ x / k
        out = out + term
    return out
