"""Schlesinger flow, continuation along polyline paths, and monodromy.

A Fuchsian system on the trivial rank-``p`` bundle is

    dY/dlam = sum_i A_i / (lam - u_i) Y,

and the residues ``A_i(u)`` are moved by

    dA_i = sum_{j != i} [A_j, A_i] / (u_j - u_i) (du_j - du_i),

which keeps every monodromy matrix in a fixed conjugacy class.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import eigen_decompose, spectrum_distance
from .errors import InputError, NearCollisionError, PoleOfSolution
from .integrate import GuardTripped, IntegrationStats, dopri5


def _as_residues(residues) -> np.ndarray:
    arr = np.array(residues, dtype=complex)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise InputError(f"residues must be a list of square matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("residues have non-finite entries")
    return arr


def _as_point(u, name: str = "u") -> np.ndarray:
    arr = np.array(u, dtype=complex).ravel()
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


def min_gap(u: np.ndarray) -> float:
    """Smallest pairwise distance between the coordinates of ``u``."""
    u = np.asarray(u, complex)
    if len(u) < 2:
        return np.inf
    d = np.abs(u[:, None] - u[None, :])
    d[np.diag_indices(len(u))] = np.inf
    return float(d.min())


@dataclass(frozen=True, eq=False)
class FuchsianSystem:
    """Poles ``u_1..u_N`` and residues ``A_1..A_N``; the residue at infinity is
    ``-sum A_i``."""

    poles: np.ndarray
    residues: np.ndarray

    def __post_init__(self):
        poles = _as_point(self.poles, "poles")
        residues = _as_residues(self.residues)
        if len(poles) != len(residues):
            raise InputError(f"{len(poles)} poles but {len(residues)} residues")
        if len(poles) > 1 and min_gap(poles) == 0:
            raise InputError("poles must be pairwise distinct")
        poles.setflags(write=False)
        residues.setflags(write=False)
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "residues", residues)

    @property
    def dim(self) -> int:
        return self.residues.shape[1]

    @property
    def n_poles(self) -> int:
        return len(self.poles)

    @property
    def residue_at_infinity(self) -> np.ndarray:
        return -self.residues.sum(axis=0)

    def __call__(self, lam: complex) -> np.ndarray:
        """Coefficient matrix ``A(lam)``."""
        w = 1.0 / (lam - self.poles)
        return np.einsum("i,ijk->jk", w, self.residues)


@dataclass(frozen=True, eq=False)
class DeformationPath:
    """Polyline in configuration space; each vertex is a point of C^N."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=complex)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or len(v) == 0:
            raise InputError("path needs at least one vertex of shape (N,)")
        if not np.all(np.isfinite(v)):
            raise InputError("path vertices have non-finite entries")
        for k, pt in enumerate(v):
            if len(pt) > 1 and min_gap(pt) == 0:
                raise InputError(f"path vertex {k} lies on the diagonal")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def segment(cls, start, end) -> "DeformationPath":
        return cls(np.array([start, end], dtype=complex))

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]

    @property
    def n_segments(self) -> int:
        return len(self.vertices) - 1

    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)

    @property
    def length(self) -> float:
        return float(self.segment_lengths().sum())

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=2).max())

    def default_eps(self) -> float:
        scale = self.diameter
        if scale == 0:
            scale = max(1.0, float(np.abs(self.vertices).max()))
        return 1e-6 * scale

    def __add__(self, other: "DeformationPath") -> "DeformationPath":
        """Concatenation; ``other`` must start where ``self`` ends."""
        if not np.allclose(self.end, other.start, rtol=0, atol=1e-14):
            raise InputError("paths do not connect")
        return DeformationPath(np.vstack([self.vertices, other.vertices[1:]]))

    def reversed(self) -> "DeformationPath":
        return DeformationPath(self.vertices[::-1])

    def segment_min_gaps(self) -> np.ndarray:
        """Minimum over each straight segment of the smallest pole gap.

        For a pair ``(i, j)`` the gap ``|d0 + t dd|`` is a quadratic in ``t``
        minimized in closed form and clipped to ``[0, 1]``.
        """
        v = self.vertices
        n = v.shape[1]
        if n < 2:
            return np.full(max(self.n_segments, 1), np.inf)
        iu, ju = np.triu_indices(n, 1)
        if self.n_segments == 0:
            return np.array([min_gap(v[0])])
        out = np.empty(self.n_segments)
        for k in range(self.n_segments):
            d0 = v[k, iu] - v[k, ju]
            dd = (v[k + 1, iu] - v[k + 1, ju]) - d0
            denom = np.abs(dd) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(denom > 0, -np.real(d0 * np.conj(dd)) / denom, 0.0)
            t = np.clip(t, 0.0, 1.0)
            out[k] = float(np.abs(d0 + t * dd).min())
        return out

    def check(self, eps: float | None = None) -> float:
        """Raise :class:`NearCollisionError` if the path comes within ``eps``
        of the diagonal; return the smallest gap."""
        eps = self.default_eps() if eps is None else eps
        gaps = self.segment_min_gaps()
        k = int(np.argmin(gaps))
        if gaps[k] <= eps:
            raise NearCollisionError(f"segment {k} of the path approaches the diagonal",
                                     float(gaps[k]))
        return float(gaps[k])


@dataclass(frozen=True)
class StepControl:
    """Integrator settings. ``max_step`` is measured in arclength."""

    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = np.inf
    blow_up: float = 1e8
    eps_diag: float | None = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise InputError("rtol and atol must be positive")
        if not self.max_step > 0:
            raise InputError("max_step must be positive")
        if not self.blow_up > 0:
            raise InputError("blow_up threshold must be positive")


@dataclass(frozen=True)
class ConservationReport:
    """Drift of the first integrals between the two ends of a continuation."""

    sum_drift: float
    eigen_drift: np.ndarray
    trace_drift: float
    arclength: float
    accepted_steps: int
    rejected_steps: int

    @property
    def max_eigen_drift(self) -> float:
        return float(self.eigen_drift.max()) if self.eigen_drift.size else 0.0

    def as_dict(self) -> dict:
        return {
            "sum_drift": self.sum_drift,
            "eigen_drift": [float(x) for x in self.eigen_drift],
            "max_eigen_drift": self.max_eigen_drift,
            "trace_drift": self.trace_drift,
            "arclength": self.arclength,
            "accepted_steps": self.accepted_steps,
            "rejected_steps": self.rejected_steps,
        }


@dataclass(frozen=True, eq=False)
class SchlesingerState:
    """Point ``u`` of configuration space together with residues ``A_i(u)``."""

    u: np.ndarray
    residues: np.ndarray
    conservation: ConservationReport | None = None

    def __post_init__(self):
        u = _as_point(self.u)
        residues = _as_residues(self.residues)
        if len(u) != len(residues):
            raise InputError(f"{len(u)} poles but {len(residues)} residues")
        u.setflags(write=False)
        residues.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "residues", residues)

    @classmethod
    def from_system(cls, system: FuchsianSystem) -> "SchlesingerState":
        return cls(system.poles, system.residues)

    @property
    def system(self) -> FuchsianSystem:
        return FuchsianSystem(self.u, self.residues)

    @property
    def dim(self) -> int:
        return self.residues.shape[1]

    @property
    def sum_residues(self) -> np.ndarray:
        return self.residues.sum(axis=0)

    @property
    def traces(self) -> np.ndarray:
        """``tr(A_i^k)`` for ``k = 1..p``, shape ``(N, p)``."""
        n, p, _ = self.residues.shape
        out = np.empty((n, p), complex)
        for i, a in enumerate(self.residues):
            power = np.eye(p, dtype=complex)
            for k in range(p):
                power = power @ a
                out[i, k] = np.trace(power)
        return out

    def spectra(self) -> list[np.ndarray]:
        return [eigen_decompose(a).values for a in self.residues]


def schlesinger_rhs(u: np.ndarray, residues: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Directional derivative of the residues; no validation (hot path)."""
    n = len(u)
    out = np.zeros_like(residues)
    for i in range(n):
        ai = residues[i]
        for j in range(i + 1, n):
            w = direction[j] - direction[i]
            if w == 0:
                continue
            aj = residues[j]
            c = (aj @ ai - ai @ aj) * (w / (u[j] - u[i]))
            out[i] += c
            out[j] -= c
    return out


def vector_field(state: SchlesingerState, direction, eps_diag: float = 0.0) -> np.ndarray:
    """Derivative of ``(A_1, ..., A_N)`` along the tangent vector ``direction``.

    Returns an array of shape ``(N, p, p)``. Linear in ``direction``.
    """
    d = _as_point(direction, "direction")
    if len(d) != len(state.u):
        raise InputError(f"direction has {len(d)} components, expected {len(state.u)}")
    gap = min_gap(state.u)
    if gap <= eps_diag or gap == 0:
        raise NearCollisionError("poles collide", gap)
    return schlesinger_rhs(state.u, state.residues, d)


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------

AuxField = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
Observer = Callable[[float, np.ndarray, np.ndarray, np.ndarray], None]


@dataclass
class FlowResult:
    residues: np.ndarray
    aux: np.ndarray
    stats: IntegrationStats
    arclength: float


def flow(u_start, residues, path: DeformationPath, ctrl: StepControl = StepControl(), *,
         aux: AuxField | None = None, aux0=None, observer: Observer | None = None,
         arclength0: float = 0.0, trace_len: int = 400) -> FlowResult:
    """Integrate the Schlesinger flow jointly with optional auxiliary fields.

    ``aux(u, A, du, z)`` returns ``dz/ds`` for extra state ``z`` carried along
    (log tau, a gauge matrix, ...). ``observer(arclength, u, A, z)`` sees every
    accepted step. On blow-up the raised :class:`PoleOfSolution` carries the
    last accepted steps as ``(arclength, u, unit_tangent, y)`` tuples, ``y``
    being the flattened residues followed by ``z``.
    """
    residues = _as_residues(residues)
    u_start = _as_point(u_start)
    if path.vertices.shape[1] != len(u_start):
        raise InputError("path dimension does not match the number of poles")
    if not np.allclose(path.start, u_start, rtol=0, atol=1e-12 * max(1.0, np.abs(u_start).max())):
        raise InputError("path does not start at the state's pole configuration")
    eps = ctrl.eps_diag if ctrl.eps_diag is not None else path.default_eps()
    path.check(eps)

    n, p, _ = residues.shape
    na = n * p * p
    z0 = np.zeros(0, complex) if aux0 is None else np.array(aux0, dtype=complex).ravel()
    y = np.concatenate([residues.ravel(), z0])
    stats = IntegrationStats()
    arclength = arclength0
    trace: collections.deque = collections.deque(maxlen=trace_len)
    lengths = path.segment_lengths()
    for k in range(path.n_segments):
        v0 = path.vertices[k]
        d = path.vertices[k + 1] - v0
        seg_len = lengths[k]
        if seg_len == 0:
            continue

        def rhs(s, yy, v0=v0, d=d):
            uu = v0 + s * d
            a = yy[:na].reshape(n, p, p)
            da = schlesinger_rhs(uu, a, d).ravel()
            if aux is None:
                return da
            return np.concatenate([da, np.asarray(aux(uu, a, d, yy[na:]), complex).ravel()])

        def guard(yy):
            return float(np.abs(yy[:na]).max()) > ctrl.blow_up

        def obs(s, yy, v0=v0, d=d, base=arclength, seg_len=seg_len):
            trace.append((base + s * seg_len, v0 + s * d, d / seg_len, yy.copy()))
            if observer is not None:
                observer(base + s * seg_len, v0 + s * d, yy[:na].reshape(n, p, p), yy[na:])

        try:
            y, st = dopri5(rhs, 0.0, 1.0, y, rtol=ctrl.rtol, atol=ctrl.atol,
                           max_step=ctrl.max_step / seg_len, guard=guard, observer=obs)
        except GuardTripped as hit:
            s = hit.t
            raise PoleOfSolution("residues exceeded the blow-up threshold",
                                 arclength + s * seg_len, u=v0 + s * d,
                                 parameter=(k, s), trace=list(trace)) from None
        stats.merge(st)
        arclength += seg_len
    return FlowResult(y[:na].reshape(n, p, p), y[na:], stats, arclength)


def conservation_report(start: SchlesingerState, end_residues: np.ndarray,
                        stats: IntegrationStats, arclength: float) -> ConservationReport:
    end = SchlesingerState(start.u, end_residues)  # only residues are used
    sum_drift = float(np.linalg.norm(end.sum_residues - start.sum_residues, 2))
    eig = np.array([spectrum_distance(a, b) for a, b in zip(start.spectra(), end.spectra())])
    trace_drift = float(np.abs(end.traces - start.traces).max()) if start.residues.size else 0.0
    return ConservationReport(sum_drift, eig, trace_drift, arclength,
                              stats.accepted, stats.rejected)


def continue_along(initial: SchlesingerState, path: DeformationPath,
                   step_ctrl: StepControl = StepControl()) -> SchlesingerState:
    """Continue the residues along ``path``.

    Returns the state at the path end, carrying a :class:`ConservationReport`.

    Raises
    ------
    PoleOfSolution
        If the residues blow up (a pole of the meromorphic solution).
    NearCollisionError
        If the path approaches the diagonal.
    StiffnessError
        On step-size underflow.
    """
    res = flow(initial.u, initial.residues, path, step_ctrl)
    report = conservation_report(initial, res.residues, res.stats, res.arclength)
    return SchlesingerState(path.end, res.residues, report)


# ---------------------------------------------------------------------------
# monodromy
# ---------------------------------------------------------------------------

def polygon_winding(loop: np.ndarray, point: complex) -> float:
    """Winding number of the closed polyline ``loop`` around ``point``."""
    z = np.asarray(loop, complex) - point
    return float(np.angle(z[1:] / z[:-1]).sum() / (2 * np.pi))


def _point_segment_distance(a: complex, b: complex, x: complex) -> float:
    d = b - a
    if d == 0:
        return abs(x - a)
    t = min(1.0, max(0.0, ((x - a) * np.conj(d)).real / abs(d) ** 2))
    return abs(a + t * d - x)


@dataclass(frozen=True, eq=False)
class MonodromyResult:
    """Monodromy ``G`` with continuation acting as ``Y -> Y G``.

    For concatenated loops (first ``g1`` then ``g2``) the matrices compose as
    ``G(g1 g2) = G(g2) @ G(g1)``.
    """

    matrix: np.ndarray
    windings: np.ndarray
    det_expected: complex
    det_residual: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return eigen_decompose(self.matrix).values


def circle_loop(center: complex, radius: float, n: int = 64, start_angle: float = 0.0) -> np.ndarray:
    """Closed polygon with ``n`` sides, counter-clockwise."""
    ang = start_angle + 2 * np.pi * np.arange(n + 1) / n
    pts = center + radius * np.exp(1j * ang)
    pts[-1] = pts[0]
    return pts


def monodromy(system: FuchsianSystem, base: complex, loop: Sequence[complex],
              step_ctrl: StepControl = StepControl()) -> MonodromyResult:
    """Monodromy of ``dY/dlam = A(lam) Y`` around a closed polyline.

    ``Y(base) = I`` and the result is ``Y`` at the end of the loop.
    """
    loop = np.array(loop, dtype=complex).ravel()
    if len(loop) < 3:
        raise InputError("loop needs at least three waypoints")
    scale = max(1.0, float(np.abs(loop).max()))
    if abs(loop[0] - base) > 1e-12 * scale or abs(loop[-1] - base) > 1e-12 * scale:
        raise InputError("loop must start and end at the base point")
    eps = step_ctrl.eps_diag if step_ctrl.eps_diag is not None else 1e-6 * scale
    for k in range(len(loop) - 1):
        for i, u in enumerate(system.poles):
            dist = _point_segment_distance(loop[k], loop[k + 1], u)
            if dist <= eps:
                raise NearCollisionError(f"loop segment {k} passes near pole {i}", dist)
    p = system.dim
    y = np.eye(p, dtype=complex).ravel()
    for k in range(len(loop) - 1):
        a, d = loop[k], loop[k + 1] - loop[k]
        seg = abs(d)
        if seg == 0:
            continue

        def rhs(s, yy, a=a, d=d):
            return (system(a + s * d) @ yy.reshape(p, p) * d).ravel()

        y, _ = dopri5(rhs, 0.0, 1.0, y, rtol=step_ctrl.rtol, atol=step_ctrl.atol,
                      max_step=step_ctrl.max_step / seg)
    g = y.reshape(p, p)
    windings = np.array([polygon_winding(loop, u) for u in system.poles])
    expected = np.exp(2j * np.pi * sum(w * np.trace(a)
                                       for w, a in zip(windings, system.residues)))
    det_res = float(abs(np.linalg.det(g) - expected) / max(1.0, abs(expected)))
    return MonodromyResult(g, windings, complex(expected), det_res)


@dataclass(frozen=True)
class IsomonodromyReport:
    start_eigenvalues: list
    end_eigenvalues: list
    drift: np.ndarray
    conservation: ConservationReport

    @property
    def max_drift(self) -> float:
        return float(self.drift.max()) if self.drift.size else 0.0


def local_monodromies(state: SchlesingerState, offsets: np.ndarray | None = None,
                      step_ctrl: StepControl = StepControl()) -> list[MonodromyResult]:
    """Monodromy around each pole along ``u_i + offsets``.

    By default the loop is a 64-gon of radius ``0.3 * min_gap``.
    """
    system = state.system
    if offsets is None:
        r = 0.3 * min_gap(state.u) if state.u.size > 1 else 1.0
        offsets = circle_loop(0.0, r)
    offsets = np.asarray(offsets, complex)
    out = []
    for u in state.u:
        loop = u + offsets
        out.append(monodromy(system, loop[0], loop, step_ctrl))
    return out


def isomonodromy_check(initial: SchlesingerState, path: DeformationPath,
                       loop_offsets: np.ndarray | None = None,
                       step_ctrl: StepControl = StepControl()) -> IsomonodromyReport:
    """Compare local monodromy spectra at the two ends of a Schlesinger path.

    ``loop_offsets`` are waypoints relative to each pole, so the loops move
    with the poles. The default is fixed from the starting configuration.
    """
    if loop_offsets is None:
        r = 0.3 * min(min_gap(initial.u), min_gap(path.end)) if initial.u.size > 1 else 1.0
        loop_offsets = circle_loop(0.0, r)
    end = continue_along(initial, path, step_ctrl)
    m0 = local_monodromies(initial, loop_offsets, step_ctrl)
    m1 = local_monodromies(end, loop_offsets, step_ctrl)
    ev0 = [m.eigenvalues for m in m0]
    ev1 = [m.eigenvalues for m in m1]
    drift = np.array([spectrum_distance(a, b) for a, b in zip(ev0, ev1)])
    return IsomonodromyReport(ev0, ev1, drift, end.conservation)
