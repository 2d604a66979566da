"""Dense complex linear algebra and matrix Laurent-series arithmetic.

Matrices are plain ``numpy`` arrays of dtype ``complex128``; the helpers here
add the validation and the conventions (eigenvalue ordering, tolerances) the
rest of the package relies on.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import InputError, NumericFailure, SingularMatrixError

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Tolerance:
    """Absolute/relative tolerance pair used by every numerical decision."""

    abs: float = 1e-12
    rel: float = 1e-10

    def __post_init__(self):
        if self.abs < 0 or self.rel < 0:
            raise InputError("tolerances must be non-negative")
        if self.abs == 0 and self.rel == 0:
            raise InputError("abs and rel tolerance cannot both be zero")

    def threshold(self, scale: float) -> float:
        return self.abs + self.rel * scale


DEFAULT_TOL = Tolerance()


def as_matrix(a, *, square: bool = False, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-d complex array."""
    m = np.array(a, dtype=complex)
    if m.ndim != 2:
        raise InputError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise InputError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} has non-finite entries")
    return m


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a, name="left factor")
    b = as_matrix(b, name="right factor")
    if a.shape[1] != b.shape[0]:
        raise InputError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def mat_inverse(a, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Inverse by LU with partial pivoting.

    Raises :class:`SingularMatrixError` when the smallest pivot is below
    ``tol.threshold(max |a_ij|)``.
    """
    a = as_matrix(a, square=True)
    n = a.shape[0]
    if n == 0:
        return a.copy()
    with warnings.catch_warnings():
        # exact singularity is reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    smallest = float(pivots.min())
    if smallest <= tol.threshold(float(np.abs(a).max())):
        raise SingularMatrixError("matrix is singular within tolerance", smallest)
    return scipy.linalg.lu_solve((lu, piv), np.eye(n, dtype=complex), check_finite=False)


def op_norm(a) -> float:
    """Spectral (operator 2-) norm."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def eigen_order(values: Sequence[complex], tol: float = 0.0) -> list[int]:
    """Indices sorting ``values`` by descending real part, then imaginary part.

    Real parts closer than ``tol`` count as tied.
    """
    values = [complex(v) for v in values]

    def cmp(i, j):
        a, b = values[i], values[j]
        if abs(a.real - b.real) > tol:
            return -1 if a.real > b.real else 1
        if a.imag != b.imag:
            return -1 if a.imag > b.imag else 1
        return 0

    return sorted(range(len(values)), key=functools.cmp_to_key(cmp))


def cluster_values(values: Sequence[complex], radius: float) -> list[list[int]]:
    """Group indices of numerically coincident values (single linkage)."""
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= radius:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray | None
    defective: bool


def eigen_decompose(a, tol: Tolerance = DEFAULT_TOL,
                    cluster: float | None = None) -> EigenDecomposition:
    """Sorted eigen-decomposition with a defectiveness test.

    Eigenvalues are returned by descending real part, ties broken by descending
    imaginary part. For a defective matrix only the eigenvalues are returned
    (``vectors`` is ``None``) and ``defective`` is set.
    """
    a = as_matrix(a, square=True)
    n = a.shape[0]
    if n == 0:
        return EigenDecomposition(np.zeros(0, complex), np.zeros((0, 0), complex), False)
    try:
        w, v = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericFailure(f"eigenvalue iteration did not converge: {exc}") from exc
    scale = max(1.0, op_norm(a))
    radius = cluster if cluster is not None else 1e-5 * scale
    defective = False
    for group in cluster_values(list(w), radius):
        m = len(group)
        if m == 1:
            continue
        rho = np.mean(w[group])
        s = np.linalg.svd(a - rho * np.eye(n), compute_uv=False)
        nullity = int(np.sum(s <= max(tol.threshold(scale), 1e3 * EPS * scale)))
        if nullity < m:
            defective = True
            break
    order = eigen_order(list(w), tol=tol.threshold(scale))
    w = w[order]
    if defective:
        return EigenDecomposition(w, None, True)
    v = v[:, order]
    return EigenDecomposition(w, v, False)


def winding_number(values: np.ndarray) -> int:
    """Winding number around 0 of the closed curve sampled by ``values``.

    Consecutive samples must be close enough that the phase change between them
    is below pi; the curve is closed from the last sample back to the first.
    """
    z = np.asarray(values, dtype=complex)
    if np.any(z == 0):
        raise InputError("curve passes through the origin")
    dphi = np.angle(np.roll(z, -1) / z)
    total = dphi.sum() / (2 * np.pi)
    k = int(round(total))
    if abs(total - k) > 1e-6:
        raise NumericFailure(f"winding number not integral ({total:.6f}); refine sampling")
    return k


# ---------------------------------------------------------------------------
# Matrix Laurent series
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MatrixLaurentSeries:
    """Finite window ``sum_k C_k (lambda - base)^k``, ``k = min_degree, ...``.

    ``coeffs`` has shape ``(L, rows, cols)``. The window is explicit: nothing
    outside it is assumed, and truncation only happens when requested.
    """

    coeffs: np.ndarray
    min_degree: int = 0
    base: complex = 0j

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 3 or len(c) == 0:
            raise InputError(f"coefficients must have shape (L, rows, cols), L >= 1, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InputError("series coefficients have non-finite entries")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "min_degree", int(self.min_degree))
        object.__setattr__(self, "base", complex(self.base))

    # construction --------------------------------------------------------
    @classmethod
    def from_dict(cls, terms: Mapping[int, np.ndarray], base: complex = 0j,
                  shape: tuple[int, int] | None = None) -> "MatrixLaurentSeries":
        if not terms:
            if shape is None:
                raise InputError("empty series needs an explicit shape")
            return cls(np.zeros((1,) + tuple(shape), complex), 0, base)
        lo, hi = min(terms), max(terms)
        first = as_matrix(next(iter(terms.values())))
        c = np.zeros((hi - lo + 1,) + first.shape, complex)
        for k, m in terms.items():
            c[k - lo] = as_matrix(m)
        return cls(c, lo, base)

    @classmethod
    def constant(cls, m, base: complex = 0j) -> "MatrixLaurentSeries":
        return cls(as_matrix(m)[None], 0, base)

    @classmethod
    def identity(cls, p: int, base: complex = 0j) -> "MatrixLaurentSeries":
        return cls.constant(np.eye(p), base)

    @classmethod
    def zeros(cls, shape: tuple[int, int], base: complex = 0j) -> "MatrixLaurentSeries":
        return cls(np.zeros((1,) + tuple(shape), complex), 0, base)

    # basic properties ----------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape[1:]

    @property
    def max_degree(self) -> int:
        return self.min_degree + len(self.coeffs) - 1

    @property
    def degrees(self) -> range:
        return range(self.min_degree, self.max_degree + 1)

    def coeff(self, k: int) -> np.ndarray:
        if self.min_degree <= k <= self.max_degree:
            return self.coeffs[k - self.min_degree]
        return np.zeros(self.shape, complex)

    def items(self) -> Iterable[tuple[int, np.ndarray]]:
        return zip(self.degrees, self.coeffs)

    def __repr__(self) -> str:
        return (f"MatrixLaurentSeries(shape={self.shape}, degrees=[{self.min_degree}, "
                f"{self.max_degree}], base={self.base})")

    # evaluation ----------------------------------------------------------
    def __call__(self, lam) -> np.ndarray:
        """Evaluate at ``lam`` (scalar or 1-d array of points)."""
        lam = np.asarray(lam, dtype=complex)
        z = lam - self.base
        powers = z[..., None] ** np.arange(len(self.coeffs))
        shift = z ** self.min_degree
        out = np.einsum("...k,kij->...ij", powers, self.coeffs)
        return out * shift[..., None, None]

    # window manipulation -------------------------------------------------
    def window(self, lo: int, hi: int) -> "MatrixLaurentSeries":
        """Re-express on the window ``[lo, hi]``, dropping or zero-padding."""
        if hi < lo:
            raise InputError("empty window")
        c = np.zeros((hi - lo + 1,) + self.shape, complex)
        for k, m in self.items():
            if lo <= k <= hi:
                c[k - lo] = m
        return MatrixLaurentSeries(c, lo, self.base)

    def trim(self, atol: float = 0.0) -> "MatrixLaurentSeries":
        """Drop leading/trailing coefficients with max-abs entry ``<= atol``."""
        mags = np.abs(self.coeffs).reshape(len(self.coeffs), -1).max(axis=1) \
            if self.coeffs.size else np.zeros(len(self.coeffs))
        keep = np.nonzero(mags > atol)[0]
        if len(keep) == 0:
            return MatrixLaurentSeries.zeros(self.shape, self.base)
        a, b = keep[0], keep[-1]
        return MatrixLaurentSeries(self.coeffs[a:b + 1], self.min_degree + a, self.base)

    def shift(self, k: int) -> "MatrixLaurentSeries":
        """Multiply by ``(lambda - base)^k``."""
        return MatrixLaurentSeries(self.coeffs, self.min_degree + k, self.base)

    def diag_conjugate(self, left: Sequence[int], right: Sequence[int]) -> "MatrixLaurentSeries":
        """``z^{diag(left)} M z^{-diag(right)}`` with ``z = lambda - base``.

        Entry ``(i, j)`` is shifted in degree by ``left[i] - right[j]``.
        """
        left = np.asarray(left, int)
        right = np.asarray(right, int)
        shifts = left[:, None] - right[None, :]
        lo = self.min_degree + int(shifts.min())
        hi = self.max_degree + int(shifts.max())
        c = np.zeros((hi - lo + 1,) + self.shape, complex)
        rows, cols = self.shape
        for i in range(rows):
            for j in range(cols):
                s = shifts[i, j]
                start = self.min_degree + s - lo
                c[start:start + len(self.coeffs), i, j] = self.coeffs[:, i, j]
        return MatrixLaurentSeries(c, lo, self.base)

    def block(self, rows, cols) -> "MatrixLaurentSeries":
        return MatrixLaurentSeries(self.coeffs[:, rows][:, :, cols], self.min_degree, self.base)

    # arithmetic ----------------------------------------------------------
    def _check_compatible(self, other: "MatrixLaurentSeries"):
        if not isinstance(other, MatrixLaurentSeries):
            raise InputError("operand is not a MatrixLaurentSeries")
        if self.base != other.base:
            raise InputError(f"base point mismatch: {self.base} vs {other.base}")

    def __add__(self, other: "MatrixLaurentSeries") -> "MatrixLaurentSeries":
        self._check_compatible(other)
        if self.shape != other.shape:
            raise InputError(f"shape mismatch: {self.shape} vs {other.shape}")
        lo = min(self.min_degree, other.min_degree)
        hi = max(self.max_degree, other.max_degree)
        a = self.window(lo, hi).coeffs
        b = other.window(lo, hi).coeffs
        return MatrixLaurentSeries(a + b, lo, self.base)

    def __neg__(self) -> "MatrixLaurentSeries":
        return MatrixLaurentSeries(-self.coeffs, self.min_degree, self.base)

    def __sub__(self, other: "MatrixLaurentSeries") -> "MatrixLaurentSeries":
        return self + (-other)

    def scale(self, c: complex) -> "MatrixLaurentSeries":
        return MatrixLaurentSeries(c * self.coeffs, self.min_degree, self.base)

    def __matmul__(self, other: "MatrixLaurentSeries") -> "MatrixLaurentSeries":
        return laurent_mul(self, other)

    def left(self, m: np.ndarray) -> "MatrixLaurentSeries":
        """Constant matrix times series."""
        return MatrixLaurentSeries(np.einsum("ij,kjl->kil", m, self.coeffs),
                                   self.min_degree, self.base)

    def right(self, m: np.ndarray) -> "MatrixLaurentSeries":
        """Series times constant matrix."""
        return MatrixLaurentSeries(np.einsum("kij,jl->kil", self.coeffs, m),
                                   self.min_degree, self.base)

    # norms ---------------------------------------------------------------
    def annulus_norm(self, r: float, R: float) -> float:
        """``sum_k |C_k| max(r^k, R^k)``: an upper bound for the sup of the
        operator norm on ``r <= |lambda - base| <= R`` (Wiener-type norm)."""
        total = 0.0
        for k, m in self.items():
            total += op_norm(m) * max(r ** k, R ** k)
        return total

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max()) if self.coeffs.size else 0.0


def laurent_mul(a: MatrixLaurentSeries, b: MatrixLaurentSeries) -> MatrixLaurentSeries:
    """Cauchy product over the combined window (exact for Laurent polynomials)."""
    a._check_compatible(b)
    if a.shape[1] != b.shape[0]:
        raise InputError(f"dimension mismatch: {a.shape} @ {b.shape}")
    la, lb = len(a.coeffs), len(b.coeffs)
    out = np.zeros((la + lb - 1, a.shape[0], b.shape[1]), complex)
    for i in range(la):
        out[i:i + lb] += np.einsum("ij,kjl->kil", a.coeffs[i], b.coeffs)
    return MatrixLaurentSeries(out, a.min_degree + b.min_degree, a.base)


def laurent_split(a: MatrixLaurentSeries) -> tuple[MatrixLaurentSeries, MatrixLaurentSeries]:
    """Split into degrees ``>= 0`` (plus) and ``< 0`` (minus)."""
    zero = MatrixLaurentSeries.zeros(a.shape, a.base)
    if a.min_degree >= 0:
        return a, zero
    if a.max_degree < 0:
        return zero, a
    plus = a.window(0, a.max_degree)
    minus = a.window(a.min_degree, -1)
    return plus, minus


def spectrum_distance(a: Sequence[complex], b: Sequence[complex]) -> float:
    """Largest displacement under the optimal matching of two eigenvalue multisets."""
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(a, complex)
    b = np.asarray(b, complex)
    if a.shape != b.shape:
        raise InputError("spectra of different sizes")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())
