"""The isomonodromic 1-form, log tau by path integration, and genus-1 data.

For residues ``A_i(u)`` moving by the Schlesinger flow the 1-form

    omega = 1/2 sum_i sum_{j != i} tr(A_i A_j) / (u_i - u_j) (du_i - du_j)

is closed, so ``log tau = int omega`` is defined on homotopy classes of paths.
``log tau`` rather than ``tau`` is the primitive quantity: it never overflows
near a pole of ``tau`` and its branch is fixed by the path. The normalization
is ``tau(base) = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import mat_inverse
from .errors import InputError, NearCollisionError, PoleOfSolution
from .frobenius import FrobeniusFrame, SpecialInit, eta_gradient_fd
from .schlesinger import (DeformationPath, SchlesingerState, StepControl, _as_point,
                          _as_residues, flow, min_gap)


def _pair_traces(residues: np.ndarray) -> np.ndarray:
    t = np.einsum("iab,jba->ij", residues, residues)
    return 0.5 * (t + t.T)


def omega_coefficients(u: np.ndarray, residues: np.ndarray) -> np.ndarray:
    """Coefficients of ``omega``; no validation (hot path)."""
    n = len(u)
    t = _pair_traces(residues)
    c = np.zeros((n, n), complex)
    iu, ju = np.triu_indices(n, 1)
    c[iu, ju] = t[iu, ju] / (u[iu] - u[ju])
    c[ju, iu] = -c[iu, ju]
    return c.sum(axis=1)


def omega_at(state: SchlesingerState, eps_diag: float = 0.0) -> np.ndarray:
    """Coefficients ``omega_i`` of ``du_i`` at ``state``.

    The summand is antisymmetric in ``(i, j)`` so ``sum_i omega_i`` vanishes
    up to the rounding of the final summation.

    Raises
    ------
    NearCollisionError
        If two poles are within ``eps_diag`` (or coincide).
    """
    gap = min_gap(state.u)
    if gap <= eps_diag or gap == 0:
        raise NearCollisionError("poles collide", gap)
    return omega_coefficients(state.u, state.residues)


def _omega_aux(u, a, d, _z):
    return [omega_coefficients(u, a) @ d]


# ---------------------------------------------------------------------------
# log tau along paths
# ---------------------------------------------------------------------------

@dataclass
class TauAccumulator:
    """``log tau`` accumulated from ``base``; ``tau(base) = 1``.

    ``samples`` holds ``(arclength, u, log_tau, min_eta)`` for every accepted
    step, ``min_eta`` being ``nan`` when no metric was supplied.
    """

    base: np.ndarray
    log_tau: complex = 0j
    samples: list = field(default_factory=list)
    state: SchlesingerState | None = None
    arclength: float = 0.0

    @property
    def tau(self) -> complex:
        return complex(np.exp(self.log_tau))


def _metric_probe(data: SpecialInit | None, n: complex | None):
    if data is None:
        return None
    c = complex(n) + 0.5
    inv = mat_inverse(data.theta - c * np.eye(data.p))
    Ge = data.G @ data.e

    def min_eta(a):
        return float(np.abs((a @ inv @ data.e) @ Ge).min())
    return min_eta


def tau_along(initial: SchlesingerState, path: DeformationPath,
              step_ctrl: StepControl = StepControl(), *, log_tau0: complex = 0j,
              metric: SpecialInit | None = None, n: complex | None = None,
              arclength0: float = 0.0) -> TauAccumulator:
    """Integrate ``omega`` jointly with the Schlesinger flow along ``path``.

    Parameters
    ----------
    metric, n : optional
        Special initial data whose residues are ``initial``; when given,
        samples record ``min |eta_i|``.

    Raises
    ------
    PoleOfSolution
        If the residues blow up; the trace carries ``log tau`` as the last
        component of each state vector.
    """
    probe = _metric_probe(metric, n)
    acc = TauAccumulator(np.array(initial.u), complex(log_tau0), arclength=arclength0)

    def observe(s, u, a, z):
        acc.samples.append((s, np.array(u), complex(z[0]),
                            probe(a) if probe else np.nan))

    observe(arclength0, initial.u, initial.residues, [log_tau0])
    res = flow(initial.u, initial.residues, path, step_ctrl, aux=_omega_aux,
               aux0=[log_tau0], observer=observe, arclength0=arclength0)
    acc.log_tau = complex(res.aux[0])
    acc.state = SchlesingerState(path.end, res.residues)
    acc.arclength = res.arclength
    return acc


def _shifted_states(initial: SchlesingerState, h: float, step_ctrl: StepControl):
    """States at ``u +- h e_j``, reached by short flows."""
    n = len(initial.u)
    out = []
    for j in range(n):
        d = np.zeros(n, complex)
        d[j] = h
        pair = []
        for sign in (1, -1):
            end = initial.u + sign * d
            res = flow(initial.u, initial.residues, DeformationPath.segment(initial.u, end),
                       step_ctrl)
            pair.append(SchlesingerState(end, res.residues))
        out.append(pair)
    return out


def closedness_residual(initial: SchlesingerState, u_probe=None, h: float = 1e-4,
                        step_ctrl: StepControl = StepControl(rtol=1e-12, atol=1e-14)) -> float:
    """Largest ``|d_j omega_i - d_i omega_j|`` by central differences.

    ``u_probe`` (default: ``initial.u``) is first reached along a straight
    segment; the shifted states are reached from there by short flows.
    """
    state = initial
    if u_probe is not None:
        u_probe = _as_point(u_probe, "u_probe")
        if not np.array_equal(u_probe, initial.u):
            res = flow(initial.u, initial.residues,
                       DeformationPath.segment(initial.u, u_probe), step_ctrl)
            state = SchlesingerState(u_probe, res.residues)
    n = len(state.u)
    jac = np.zeros((n, n), complex)  # [i, j] = d_j omega_i
    for j, (plus, minus) in enumerate(_shifted_states(state, h, step_ctrl)):
        jac[:, j] = (omega_at(plus) - omega_at(minus)) / (2 * h)
    return float(np.abs(jac - jac.T).max()) if n else 0.0


def commuting_log_tau(u_start, u_end, residues) -> complex:
    """Closed form ``sum_{i<j} tr(A_i A_j) [log(u_i - u_j)]`` for constant
    (pairwise commuting) residues, continued along the straight segment."""
    u0 = _as_point(u_start)
    u1 = _as_point(u_end)
    residues = _as_residues(residues)
    t = _pair_traces(residues)
    iu, ju = np.triu_indices(len(u0), 1)
    d0 = u0[iu] - u0[ju]
    d1 = u1[iu] - u1[ju]
    # log of the ratio is continuous along the segment unless it crosses 0
    return complex((t[iu, ju] * np.log(d1 / d0)).sum())


# ---------------------------------------------------------------------------
# R-matrix and the genus-1 potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RMatrixExpansion:
    """Coefficients ``R_1..R_m`` of the formal solution at ``z = 0``."""

    R_coeffs: list
    U_diag: np.ndarray
    V: np.ndarray

    @property
    def order(self) -> int:
        return len(self.R_coeffs)

    def recursion_residual(self) -> float:
        """``max_k |k R_k + [U, R_{k+1}] - V R_k|`` over ``k = 1..m-1``."""
        U = np.diag(self.U_diag)
        worst = 0.0
        for k in range(1, self.order):
            r, r1 = self.R_coeffs[k - 1], self.R_coeffs[k]
            defect = k * r + U @ r1 - r1 @ U - self.V @ r
            worst = max(worst, float(np.abs(defect).max()))
        return worst


def r_matrix(frame: FrobeniusFrame, order: int) -> RMatrixExpansion:
    """Solve the recursion for ``R_1..R_order`` from ``V`` and ``u``.

    Off-diagonal parts come from ``[U, R_{k+1}] = (V - k) R_k`` and diagonal
    parts from ``(k + 1) R_{k+1}^{ii} = sum_j V_ij R_{k+1}^{ji}``.
    """
    if order < 1:
        raise InputError("order must be at least 1")
    u = frame.u
    V = np.array(frame.V, dtype=complex)
    N = len(u)
    du = u[:, None] - u[None, :]
    off = ~np.eye(N, dtype=bool)
    diag = np.diag_indices(N)
    coeffs = []
    rhs = V.copy()  # (V - k) R_k with R_0 = 1
    for k in range(order):
        r = np.zeros((N, N), complex)
        r[off] = rhs[off] / du[off]
        r[diag] = np.einsum("ij,ji->i", V, r) / (k + 1)
        coeffs.append(r)
        rhs = (V - (k + 1) * np.eye(N)) @ r
    return RMatrixExpansion(coeffs, u.copy(), V)


@dataclass(frozen=True)
class Genus1Gradient:
    """``dF1`` and the two cross-checks against ``omega``.

    ``dlog_eta`` is ``d log(eta_1 ... eta_N)`` by central differences along
    the flow when a step was given, otherwise from the closed-form
    ``eta_ij``.
    """

    dF: np.ndarray
    omega: np.ndarray
    omega_from_R: np.ndarray
    dlog_eta: np.ndarray
    R1_diag: np.ndarray

    @property
    def identity_residual(self) -> float:
        """``max |-48 dF - 24 omega - d log(eta_1 ... eta_N)|``."""
        return float(np.abs(-48 * self.dF - 24 * self.omega - self.dlog_eta).max())

    @property
    def omega_residual(self) -> float:
        return float(np.abs(self.omega - self.omega_from_R).max())


def genus1_gradient(frame: FrobeniusFrame, data: SpecialInit | None = None,
                    h: float | None = None,
                    step_ctrl: StepControl = StepControl(rtol=1e-12, atol=1e-14)
                    ) -> Genus1Gradient:
    """Coefficients of ``dF1 = 1/2 sum R_1^{ii} du_i - 1/48 d log(eta_1...eta_N)``.

    ``dF1`` itself uses the closed-form ``eta_ij``. With ``data`` and ``h``
    the comparison term ``d log(eta_1 ... eta_N)`` is instead taken by
    central differences of the evolved metric, so the identity check does
    not reuse the formula it is checking.
    """
    R1 = r_matrix(frame, 1).R_coeffs[0]
    r1 = np.diag(R1).copy()
    dlog_closed = (frame.eta_jac / frame.eta[:, None]).sum(axis=0)
    dF = 0.5 * r1 - dlog_closed / 48
    omega = omega_coefficients(frame.u, frame.residues)
    if h is not None:
        if data is None:
            raise InputError("finite differences need the special initial data")
        fd = eta_gradient_fd(frame, data, h, step_ctrl)
        dlog = (fd / frame.eta[:, None]).sum(axis=0)
    else:
        dlog = dlog_closed
    return Genus1Gradient(dF, omega, -r1, dlog, r1)


# ---------------------------------------------------------------------------
# pole scans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Crossing:
    """A pole of the Schlesinger solution met by a scan.

    ``residue`` is the least-squares estimate of ``lim (s - s*) d log tau/ds``
    and ``contour_residue`` the increment of ``log tau`` around a small
    circle in the complexified arclength, divided by ``2 pi i``.
    """

    arclength: float
    u: np.ndarray
    residue: complex
    contour_residue: complex
    detour_radius: float

    @property
    def nearest_integer(self) -> int:
        return int(np.rint(self.contour_residue.real))

    @property
    def integer_distance(self) -> float:
        return float(abs(self.contour_residue - self.nearest_integer))

    def as_dict(self) -> dict:
        return {"arclength": self.arclength,
                "residue": [self.residue.real, self.residue.imag],
                "contour_residue": [self.contour_residue.real, self.contour_residue.imag],
                "nearest_integer": self.nearest_integer,
                "integer_distance": self.integer_distance,
                "detour_radius": self.detour_radius}


@dataclass
class PoleScan:
    """Rows ``(s, re log tau, im log tau, min_eta, crossing)``; crossing rows
    sit at the refined pole location and carry ``nan`` values."""

    rows: list
    crossings: list

    COLUMNS = ("s", "re_logtau", "im_logtau", "min_eta", "crossing")


def _fit_residue(s: np.ndarray, w: np.ndarray, origin: float):
    """Fit ``w = r / (s - s*) + c`` by linear least squares.

    Multiplying through by ``x = s - origin`` gives ``w x = (r - c b) + b w + c x``
    with ``b = s* - origin``, linear in its three unknowns. Returns ``(r, s*)``.
    """
    x = np.asarray(s, float) - origin
    w = np.asarray(w, complex)
    M = np.column_stack([np.ones_like(w), w, x.astype(complex)])
    scale = np.abs(M).max(axis=0)
    sol, *_ = np.linalg.lstsq(M / scale, w * x, rcond=None)
    alpha, b, c = sol / scale
    return complex(alpha + c * b), origin + float(b.real)


def _arclength_point(path: DeformationPath, sigma: complex):
    """Point at (possibly complex) arclength ``sigma`` along ``path``; the
    segment is chosen by the real part."""
    lengths = path.segment_lengths()
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    k = int(np.clip(np.searchsorted(cum, sigma.real, side="right") - 1, 0, len(lengths) - 1))
    while lengths[k] == 0 and k > 0:
        k -= 1
    d = (path.vertices[k + 1] - path.vertices[k]) / lengths[k]
    return path.vertices[k] + (sigma - cum[k]) * d


def _advance(state, log_tau, path, s_from: complex, s_to: complex, step_ctrl):
    """Flow ``(A, log tau)`` from arclength ``s_from`` to ``s_to`` along ``path``.

    Real parts select the segment; complex arclengths leave the real path
    along the straight complex line through it.
    """
    lengths = path.segment_lengths()
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    pts = [_arclength_point(path, s_from)]
    if s_from.imag == 0 and s_to.imag == 0:
        lo, hi = sorted((s_from.real, s_to.real))
        inner = [c for c in cum[1:-1] if lo < c < hi]
        if s_to.real < s_from.real:
            inner = inner[::-1]
        pts += [_arclength_point(path, complex(c)) for c in inner]
    pts.append(_arclength_point(path, s_to))
    sub = DeformationPath(np.array(pts))
    res = flow(state.u, state.residues, sub, step_ctrl, aux=_omega_aux, aux0=[log_tau],
               arclength0=s_from.real)
    return SchlesingerState(sub.end, res.residues), complex(res.aux[0])


def _dlogtau_ds(state: SchlesingerState, path: DeformationPath, s: float) -> complex:
    tangent = _arclength_point(path, complex(s + 1)) - _arclength_point(path, complex(s))
    return complex(omega_coefficients(state.u, state.residues) @ tangent)


def _approach(state, log_tau, path, s_cur: float, s_hit: float, reach: float,
              step_ctrl, decades: int = 3, per_decade: int = 4):
    """Sample ``d log tau/ds`` at ``s_hit - reach q^k`` towards the pole.

    Stops at the first blow-up. Returns the sample arrays and the last
    regular state reached.
    """
    ss, ws = [], []
    n_pts = decades * per_decade + 1
    for k in range(n_pts):
        s = s_hit - reach * 10.0 ** (-k / per_decade)
        if s <= s_cur:
            continue
        try:
            state, log_tau = _advance(state, log_tau, path, complex(s_cur), complex(s), step_ctrl)
        except PoleOfSolution:
            break
        s_cur = s
        ss.append(s)
        ws.append(_dlogtau_ds(state, path, s))
    return np.array(ss), np.array(ws, complex)


def _polyline(center: complex, radius: float, a0: float, a1: float, n: int) -> np.ndarray:
    return center + radius * np.exp(1j * np.linspace(a0, a1, n + 1))


def scan_poles(initial: SchlesingerState, segment: DeformationPath, samples: int,
               step_ctrl: StepControl = StepControl(), *,
               metric: SpecialInit | None = None, n: complex | None = None,
               detour_radius: float = 0.05, circle_sides: int = 64) -> PoleScan:
    """Sample ``log tau`` at ``samples`` equally spaced arclengths along ``segment``.

    When the residues blow up, the pole location ``s*`` is refined by a
    least-squares fit of ``d log tau/ds``; the scan then measures the
    ``log tau`` increment around a circle of radius ``rho`` in the complexified
    arclength, steps over the pole along the upper half of that circle, and
    carries on. ``rho`` is ``detour_radius`` capped at half the distance to
    the last regular sample; samples inside the detour are skipped.
    """
    if samples < 2:
        raise InputError("samples must be at least 2")
    if not np.allclose(segment.start, initial.u, rtol=0, atol=1e-12):
        raise InputError("segment must start at the initial configuration")
    segment.check(step_ctrl.eps_diag if step_ctrl.eps_diag is not None else None)
    probe = _metric_probe(metric, n)
    targets = np.linspace(0.0, segment.length, samples)

    state, log_tau, s_cur = initial, 0j, 0.0
    rows: list = []
    crossings: list[Crossing] = []

    def emit(s, st, lt):
        rows.append((float(s), lt.real, lt.imag,
                     probe(st.residues) if probe else np.nan, 0))

    emit(0.0, state, log_tau)
    k = 1
    while k < len(targets):
        target = targets[k]
        try:
            state, log_tau = _advance(state, log_tau, segment, complex(s_cur),
                                      complex(target), step_ctrl)
        except PoleOfSolution as hit:
            s_hit = hit.arclength
        else:
            s_cur = target
            emit(target, state, log_tau)
            k += 1
            continue
        reach = min(detour_radius, 0.5 * (s_hit - s_cur))
        ss, ws = _approach(state, log_tau, segment, s_cur, s_hit, reach, step_ctrl)
        if len(ss) < 4:
            raise PoleOfSolution("cannot resolve the pole from the last sample",
                                 s_hit, u=_arclength_point(segment, complex(s_hit)))
        r_fit, s_star = _fit_residue(ss, ws, s_hit)
        rho = max(reach, 20 * abs(s_star - s_hit))
        if not s_cur < s_star - rho:
            raise PoleOfSolution("pole too close to the previous sample for a detour",
                                 s_hit, u=_arclength_point(segment, complex(s_hit)))
        state, log_tau = _advance(state, log_tau, segment, complex(s_cur),
                                  complex(s_star - rho), step_ctrl)
        u_star = _arclength_point(segment, complex(s_star))
        tangent = _arclength_point(segment, complex(s_star + 1)) - u_star
        circle = DeformationPath(u_star[None, :] + np.outer(
            _polyline(0, rho, np.pi, 3 * np.pi, circle_sides), tangent))
        res = flow(state.u, state.residues, circle, step_ctrl, aux=_omega_aux, aux0=[log_tau])
        contour = (complex(res.aux[0]) - log_tau) / (2j * np.pi)
        # step over the pole along the upper half circle
        half = DeformationPath(u_star[None, :] + np.outer(
            _polyline(0, rho, np.pi, 0.0, circle_sides // 2), tangent))
        res = flow(state.u, state.residues, half, step_ctrl, aux=_omega_aux, aux0=[log_tau])
        state = SchlesingerState(half.end, res.residues)
        log_tau = complex(res.aux[0])
        crossings.append(Crossing(float(s_star), u_star, r_fit, contour, float(rho)))
        rows.append((float(s_star), np.nan, np.nan, np.nan, 1))
        s_cur = s_star + rho
        while k < len(targets) and targets[k] <= s_cur:
            k += 1
    return PoleScan(rows, crossings)


# ---------------------------------------------------------------------------
# gauge step at an apparent pole
# ---------------------------------------------------------------------------

def gauge_pivot(u, residues, U0, pivot: tuple[int, int]) -> complex:
    """Pivot entry ``g = (U0^{-1} A(0) U0)_{alpha beta}`` for a pole at ``0``.

    ``residues`` are ``A_1..A_N`` at ``u_1..u_N``; the residue at ``0`` is
    zero, so ``A(0) = -sum_i A_i / u_i`` is the first Taylor coefficient
    of the local solution ``U0 + lam A(0) U0 + ...``.
    """
    u = np.asarray(u, complex)
    a0 = -np.einsum("i,ijk->jk", 1 / u, np.asarray(residues, complex))
    G = mat_inverse(U0) @ a0 @ U0
    return complex(G[pivot[0], pivot[1]])


def _gauge_aux(p):
    def aux(u, a, d, z):
        U0 = z.reshape(p, p)
        return (np.einsum("i,ijk->jk", d / u, a) @ U0).ravel()
    return aux


def transport_gauge_frame(u, residues, U0, target,
                          step_ctrl: StepControl = StepControl(rtol=1e-12, atol=1e-14)):
    """Move ``(A_1..A_N, U0)`` to ``target`` with a fixed apparent pole at 0.

    ``U0`` follows ``d U0 = sum_i A_i / u_i du_i U0``. Returns
    ``(residues, U0)`` at ``target``.
    """
    u = _as_point(u)
    residues = _as_residues(residues)
    p = residues.shape[1]
    path = DeformationPath(np.array([np.concatenate([[0], u]),
                                     np.concatenate([[0], _as_point(target, "target")])]))
    full = np.concatenate([np.zeros((1, p, p), complex), residues])
    aux = _gauge_aux(p)
    res = flow(path.start, full, path, step_ctrl,
               aux=lambda uu, a, d, z: aux(uu[1:], a[1:], d[1:], z),
               aux0=np.asarray(U0, complex).ravel())
    return res.residues[1:], res.aux.reshape(p, p)


@dataclass(frozen=True)
class GaugeShiftReport:
    omega_before: np.ndarray
    omega_after: np.ndarray
    dlog_g: np.ndarray
    g: complex

    @property
    def residual(self) -> float:
        """``max |omega1 - omega - d log g|`` over the moving poles."""
        return float(np.abs(self.omega_after - self.omega_before - self.dlog_g).max())


def gauge_shift_check(u, residues, U0, pivot: tuple[int, int], K=None, h: float = 1e-4,
                      step_ctrl: StepControl = StepControl(rtol=1e-12, atol=1e-14)
                      ) -> GaugeShiftReport:
    """Compare ``omega`` before and after one gauge step with ``d log g``.

    The system has an apparent pole at ``0`` with zero residue and local
    solution ``U0 (1 + O(lam))``; ``u`` and ``residues`` describe the other
    poles. ``d log g`` is a central difference of ``g`` transported along
    the flow with the pole at ``0`` held fixed.
    """
    from .birkhoff import gauge_step

    u = _as_point(u)
    residues = _as_residues(residues)
    p = residues.shape[1]
    K = np.zeros(p, int) if K is None else np.asarray(K, int)
    g = gauge_pivot(u, residues, U0, pivot)
    full = np.concatenate([np.zeros((1, p, p), complex), residues])
    step = gauge_step(full, u, U0, g, pivot, K)
    poles = np.concatenate([[0], u])
    before = omega_coefficients(poles, full)[1:]
    after = omega_coefficients(poles, np.array(step.new_residues))[1:]
    dlog = np.zeros(len(u), complex)
    for j in range(len(u)):
        d = np.zeros(len(u), complex)
        d[j] = h
        vals = []
        for sign in (1, -1):
            a, U = transport_gauge_frame(u, residues, U0, u + sign * d, step_ctrl)
            vals.append(gauge_pivot(u + sign * d, a, U, pivot))
        dlog[j] = (np.log(vals[0] / vals[1])) / (2 * h)
    return GaugeShiftReport(before, after, dlog, g)
