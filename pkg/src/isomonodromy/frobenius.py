"""Semi-simple Frobenius structures from special initial conditions.

Initial data: a symmetric pairing ``G``, a unit vector ``e``, a
``G``-skew grading operator ``theta`` with ``theta e = (D/2) e``, and a
complete system of ``G``-self-adjoint orthogonal projectors ``P_i``. The
residues ``A_i = P_i (theta - n - 1/2)`` are moved by the Schlesinger flow and
``P_i(u) = A_i(u) (theta - n - 1/2)^{-1}`` recovers projectors at ``u``; the
metric in canonical coordinates is ``eta_i = (P_i e, e)``.

All pairings here are bilinear, ``(a, b) = a^T G b``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_TOL, Tolerance, as_matrix, mat_inverse
from .errors import DegenerateMetricError, InputError
from .schlesinger import DeformationPath, StepControl, flow, min_gap

ADMISSIBLE_GAP = 0.25


@dataclass(frozen=True, eq=False)
class SpecialInit:
    """Pairing, unit vector, grading operator and projectors.

    ``D`` is read off ``theta e = (D/2) e`` at the largest component of ``e``
    when not given.
    """

    G: np.ndarray
    e: np.ndarray
    theta: np.ndarray
    projectors: np.ndarray
    D: complex | None = None

    def __post_init__(self):
        G = as_matrix(self.G, square=True, name="pairing")
        theta = as_matrix(self.theta, square=True, name="theta")
        e = np.array(self.e, dtype=complex).ravel()
        P = np.array(self.projectors, dtype=complex)
        p = G.shape[0]
        if theta.shape != (p, p) or e.shape != (p,):
            raise InputError("pairing, theta and e must share the dimension")
        if P.ndim != 3 or P.shape[1:] != (p, p) or len(P) == 0:
            raise InputError("projectors must be a non-empty list of p x p matrices")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(P))):
            raise InputError("non-finite entries in e or projectors")
        if not np.any(e):
            raise InputError("unit vector e must be nonzero")
        D = self.D
        if D is None:
            k = int(np.argmax(np.abs(e)))
            D = 2 * (theta @ e)[k] / e[k]
        for a in (G, theta, e, P):
            a.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "projectors", P)
        object.__setattr__(self, "D", complex(D))

    @property
    def N(self) -> int:
        return len(self.projectors)

    @property
    def p(self) -> int:
        return self.G.shape[0]

    def pairing(self, a, b) -> complex:
        return complex(np.asarray(a) @ self.G @ np.asarray(b))


@dataclass(frozen=True)
class ValidationReport:
    residuals: dict
    threshold: float

    @property
    def passed(self) -> bool:
        r = self.residuals
        return (all(v <= self.threshold for k, v in r.items() if k != "min_Pe")
                and r["min_Pe"] > self.threshold)

    def failures(self) -> list[str]:
        out = [k for k, v in self.residuals.items() if k != "min_Pe" and v > self.threshold]
        if self.residuals["min_Pe"] <= self.threshold:
            out.append("min_Pe")
        return out


def validate_special_init(data: SpecialInit, tol: Tolerance = DEFAULT_TOL) -> ValidationReport:
    """Residual of each defining condition of a special initial condition."""
    G, th, e, P = data.G, data.theta, data.e, data.projectors
    p = data.p
    scale = max(1.0, float(np.abs(G).max()), float(np.abs(th).max()))
    idem = 0.0
    for i, pi in enumerate(P):
        for j, pj in enumerate(P):
            target = pj if i == j else 0
            idem = max(idem, float(np.abs(pi @ pj - target).max()))
    res = {
        "skew": float(np.abs(th.T @ G + G @ th).max()),
        "eigenvector": float(np.abs(th @ e - 0.5 * data.D * e).max()),
        "idempotence": idem,
        "completeness": float(np.abs(P.sum(axis=0) - np.eye(p)).max()),
        "self_adjoint": max(float(np.abs(pi.T @ G - G @ pi).max()) for pi in P),
        "symmetric_pairing": float(np.abs(G - G.T).max()),
        "min_Pe": min(float(np.linalg.norm(pi @ e)) for pi in P),
    }
    return ValidationReport(res, tol.threshold(scale))


def _check_admissible(data: SpecialInit, n: complex) -> complex:
    c = complex(n) + 0.5
    spec = np.linalg.eigvals(data.theta)
    dist = float(np.abs(spec - c).min()) if spec.size else np.inf
    if dist < ADMISSIBLE_GAP:
        raise InputError(f"n = {n} is resonant: n + 1/2 lies within {ADMISSIBLE_GAP} of "
                         f"spec(theta) = {np.round(spec, 6).tolist()}")
    return c


def choose_n(data: SpecialInit) -> int:
    """First integer in -3..3 with ``n + 1/2`` at distance >= 0.25 from spec(theta)."""
    spec = np.linalg.eigvals(data.theta)
    for n in range(-3, 4):
        if spec.size == 0 or np.abs(spec - (n + 0.5)).min() >= ADMISSIBLE_GAP:
            return n
    raise InputError(f"no admissible n in -3..3 for spec(theta) = {spec.tolist()}")


def residues_from_init(data: SpecialInit, n: complex) -> np.ndarray:
    """``A_i = P_i (theta - n - 1/2)``, shape ``(N, p, p)``."""
    c = _check_admissible(data, n)
    shifted = data.theta - c * np.eye(data.p)
    return np.array([pi @ shifted for pi in data.projectors])


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FrobeniusFrame:
    """Metric data at ``u`` in canonical coordinates."""

    u: np.ndarray
    projectors: np.ndarray
    eta: np.ndarray
    eta_jac: np.ndarray
    V: np.ndarray
    theta_can: np.ndarray
    sqrt_eta: np.ndarray
    residues: np.ndarray
    n: complex
    branch_flips: tuple = ()
    min_eta_along: float = np.nan

    @property
    def N(self) -> int:
        return len(self.u)


def _principal_sqrt(x):
    return np.sqrt(np.asarray(x, complex))


def frame_from_residues(data: SpecialInit, u, residues, n: complex,
                        sqrt_hint=None, branch_flips=(), min_eta_along=np.nan) -> FrobeniusFrame:
    """Assemble a frame from evolved residues ``A_i^{(n)}(u)``."""
    u = np.array(u, dtype=complex).ravel()
    c = complex(n) + 0.5
    inv = mat_inverse(data.theta - c * np.eye(data.p))
    P = np.array([a @ inv for a in residues])
    e, G, th = data.e, data.G, data.theta
    Pe = P @ e                       # (N, p)
    eta = Pe @ (G @ e)
    N = len(u)
    cross = Pe @ G @ th @ Pe.T       # (P_i e, theta P_j e)
    du = u[:, None] - u[None, :]
    off = ~np.eye(N, dtype=bool)
    eta_jac = np.zeros((N, N), complex)
    eta_jac[off] = 2 * cross[off] / du[off]
    eta_jac[np.diag_indices(N)] = -eta_jac.sum(axis=1)
    sq = _principal_sqrt(eta)
    if sqrt_hint is not None:
        hint = np.asarray(sqrt_hint, complex)
        flip = np.abs(sq - hint) > np.abs(sq + hint)
        sq = np.where(flip, -sq, sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta_can = du * eta_jac / (2 * eta[:, None])
        V = du * eta_jac / (2 * sq[:, None] * sq[None, :])
    theta_can[np.diag_indices(N)] = 0
    V[np.diag_indices(N)] = 0
    return FrobeniusFrame(u, P, eta, eta_jac, V, theta_can, sq, np.array(residues), complex(n),
                          tuple(branch_flips), min_eta_along)


def _evolve_frame(data: SpecialInit, u0, residues0, n, path: DeformationPath,
                  step_ctrl: StepControl, sqrt0, eta_floor: float | None,
                  arclength0: float = 0.0) -> FrobeniusFrame:
    c = complex(n) + 0.5
    inv = mat_inverse(data.theta - c * np.eye(data.p))
    Ge = data.G @ data.e
    sqrt0 = np.array(sqrt0, complex)
    track = {"sqrt": sqrt0, "flips": [], "min": np.inf,
             "off": np.abs(sqrt0 - _principal_sqrt(sqrt0 ** 2)) > 0}
    floor = eta_floor

    def observe(s, u, a, _z):
        eta = (a @ inv @ data.e) @ Ge
        small = np.abs(eta)
        k = int(np.argmin(small))
        track["min"] = min(track["min"], float(small[k]))
        if floor is not None and small[k] <= floor:
            raise DegenerateMetricError("metric degenerates", s, k, u=np.array(u))
        sq = _principal_sqrt(eta)
        flip = np.abs(sq - track["sqrt"]) > np.abs(sq + track["sqrt"])
        new = np.where(flip, -sq, sq)
        off = flip  # continued branch differs from the principal one
        for i in np.nonzero(off != track["off"])[0]:
            track["flips"].append((float(s), int(i)))
        track["sqrt"], track["off"] = new, off

    res = flow(u0, residues0, path, step_ctrl, observer=observe, arclength0=arclength0)
    return frame_from_residues(data, path.end, res.residues, n, sqrt_hint=track["sqrt"],
                               branch_flips=tuple(track["flips"]),
                               min_eta_along=track["min"])


def projectors_at(data: SpecialInit, base, path: DeformationPath | None = None,
                  n: complex | None = None, step_ctrl: StepControl = StepControl(),
                  eta_floor: float | None = None) -> FrobeniusFrame:
    """Frame at the end of ``path`` started from ``P_i(base) = P_i``.

    ``sqrt(eta_i)`` starts on the principal branch at ``base`` and is continued
    by nearest value; sign changes relative to the principal branch are logged
    in ``branch_flips`` as ``(arclength, index)``.

    Raises
    ------
    DegenerateMetricError
        If some ``|eta_i|`` drops to ``eta_floor`` along the path
        (default ``1e-8 * max(1, sum |eta_i(base)|)``).
    """
    base = np.array(base, dtype=complex).ravel()
    if len(base) != data.N:
        raise InputError(f"base has {len(base)} coordinates but there are {data.N} projectors")
    if min_gap(base) == 0:
        raise InputError("base point lies on the diagonal")
    if n is None:
        n = choose_n(data)
    residues = residues_from_init(data, n)
    frame0 = frame_from_residues(data, base, residues, n)
    if eta_floor is None:
        eta_floor = 1e-8 * max(1.0, float(np.abs(frame0.eta).sum()))
    if abs(frame0.eta).min() <= eta_floor:
        raise DegenerateMetricError("metric degenerates", 0.0, int(np.argmin(abs(frame0.eta))),
                                    u=base)
    if path is None or path.n_segments == 0:
        return dataclasses.replace(frame0, min_eta_along=float(abs(frame0.eta).min()))
    return _evolve_frame(data, base, residues, n, path, step_ctrl, frame0.sqrt_eta, eta_floor)


def move_frame(frame: FrobeniusFrame, data: SpecialInit, target,
               step_ctrl: StepControl = StepControl()) -> FrobeniusFrame:
    """Continue a frame along the straight segment to ``target``."""
    target = np.array(target, dtype=complex).ravel()
    path = DeformationPath.segment(frame.u, target)
    return _evolve_frame(data, frame.u, frame.residues, frame.n, path, step_ctrl,
                         frame.sqrt_eta, None)


def n_independence_check(data: SpecialInit, path: DeformationPath, n1: complex, n2: complex,
                         step_ctrl: StepControl = StepControl()) -> float:
    """Largest ``|P_i^{(n1)} - P_i^{(n2)}|`` (spectral norm) at the path end."""
    f1 = projectors_at(data, path.start, path, n1, step_ctrl)
    f2 = projectors_at(data, path.start, path, n2, step_ctrl)
    return max(float(np.linalg.norm(a - b, 2)) for a, b in zip(f1.projectors, f2.projectors))


def eta_gradient_fd(frame: FrobeniusFrame, data: SpecialInit, h: float = 1e-4,
                    step_ctrl: StepControl = StepControl()) -> np.ndarray:
    """Central differences ``d eta_i / d u_j`` along the flow (matrix ``[i, j]``)."""
    N = frame.N
    out = np.zeros((N, N), complex)
    for j in range(N):
        d = np.zeros(N, complex)
        d[j] = h
        plus = move_frame(frame, data, frame.u + d, step_ctrl)
        minus = move_frame(frame, data, frame.u - d, step_ctrl)
        out[:, j] = (plus.eta - minus.eta) / (2 * h)
    return out


@dataclass(frozen=True)
class ClassificationReport:
    cond1: float  # min |eta_i|
    cond2: float  # max |e(eta_i)|, e = sum d/du_j, by central differences
    cond3: float  # max |sum_j u_j eta_ij + D eta_i|
    cond4: float  # max Darboux-Egoroff defect
    eta_jac_fd: float  # max |eta_ij - FD d_j eta_i|

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def classification_residuals(frame: FrobeniusFrame, data: SpecialInit, h: float = 1e-4,
                             step_ctrl: StepControl = StepControl()) -> ClassificationReport:
    """Residuals of the four conditions characterizing a Frobenius structure.

    Derivatives are fourth-order central differences of the evolved
    quantities with step ``h``; the closed-form ``eta_ij`` supply the comparison values.
    """
    N = frame.N
    u = frame.u
    eta, ej = frame.eta, frame.eta_jac
    ones = np.full(N, h, complex)
    plus = move_frame(frame, data, u + ones, step_ctrl)
    minus = move_frame(frame, data, u - ones, step_ctrl)
    cond2 = float(np.abs((plus.eta - minus.eta) / (2 * h)).max())
    cond3 = float(np.abs(ej @ u + data.D * eta).max())
    # fourth-order central stencil: rotation coefficients can be large, and
    # the second-order truncation error grows with them
    shifted = []
    for k in range(N):
        d = np.zeros(N, complex)
        d[k] = h
        shifted.append([move_frame(frame, data, u + c * d, step_ctrl) for c in (2, 1, -1, -2)])

    def deriv(k, attr):
        f2, f1, m1, m2 = (getattr(fr, attr) for fr in shifted[k])
        return (8 * (f1 - m1) - (f2 - m2)) / (12 * h)

    fd_eta = np.column_stack([deriv(k, "eta") for k in range(N)])
    jac_err = float(np.abs(fd_eta - ej).max())
    cond4 = 0.0
    for k in range(N):
        dk = deriv(k, "eta_jac")
        for i in range(N):
            for j in range(N):
                if len({i, j, k}) < 3:
                    continue
                rhs = 0.5 * (ej[i, j] * ej[k, j] / eta[j] + ej[j, k] * ej[i, k] / eta[k]
                             + ej[k, i] * ej[j, i] / eta[i])
                cond4 = max(cond4, float(abs(dk[i, j] - rhs)))
    return ClassificationReport(float(np.abs(eta).min()), cond2, cond3, cond4, jac_err)


def second_connection_flatness(frame: FrobeniusFrame, data: SpecialInit, n: complex,
                               lambda_probe: complex, h: float = 1e-4,
                               step_ctrl: StepControl = StepControl()) -> float:
    """Largest curvature component of the connection with residues
    ``P_i(u) (theta - n - 1/2)`` on the ``(u, lam)`` space.

    The connection form is ``sum_i A_i d(lam - u_i) / (lam - u_i)``; the
    ``u``-derivatives of the residues are central differences along the flow;
    the rational factors are differentiated exactly.
    """
    c = _check_admissible(data, n)
    shift = data.theta - c * np.eye(data.p)
    u = frame.u
    N = frame.N
    lam = complex(lambda_probe)
    if np.abs(lam - u).min() <= 1e-6 * max(1.0, float(np.abs(u).max())):
        raise InputError("lambda_probe is too close to a pole")

    def residues_of(fr):
        return np.array([pi @ shift for pi in fr.projectors])

    A = residues_of(frame)
    w = 1.0 / (lam - u)
    om_u = -A * w[:, None, None]
    om_l = (A * w[:, None, None]).sum(axis=0)
    # product rule: only the residues are differenced, 1/(lam - u_i) exactly
    dA = np.zeros((N, N, data.p, data.p), complex)  # d_k A_i
    for k in range(N):
        d = np.zeros(N, complex)
        d[k] = h
        dA[k] = (residues_of(move_frame(frame, data, u + d, step_ctrl))
                 - residues_of(move_frame(frame, data, u - d, step_ctrl))) / (2 * h)
    d_om_u = -dA * w[None, :, None, None]
    d_om_l = (dA * w[None, :, None, None]).sum(axis=1)
    for k in range(N):
        d_om_u[k, k] -= A[k] * w[k] ** 2
        d_om_l[k] += A[k] * w[k] ** 2
    worst = 0.0
    for i in range(N):
        for j in range(i + 1, N):
            F = d_om_u[i, j] - d_om_u[j, i] - (om_u[i] @ om_u[j] - om_u[j] @ om_u[i])
            worst = max(worst, float(np.abs(F).max()))
        dl_om_i = -A[i] * (-1.0 / (lam - u[i]) ** 2)
        F = d_om_l[i] - dl_om_i - (om_u[i] @ om_l - om_l @ om_u[i])
        worst = max(worst, float(np.abs(F).max()))
    return worst


# ---------------------------------------------------------------------------
# random special initial conditions
# ---------------------------------------------------------------------------

def random_special_init(N: int, rng: np.random.Generator, D: complex | None = None,
                        change_basis: bool = True, theta_scale: float = 0.5) -> SpecialInit:
    """Random special initial condition of rank ``N``.

    Built diagonally (``G = diag(g)``, ``P_i = E_ii``, ``e = (1, ..., 1)``) with
    ``theta = G^{-1} S`` for ``S`` antisymmetric and ``S e = (D/2) G e``, then
    moved to a random basis. A nonzero ``D`` forces ``sum g = 0``.
    """
    if N < 1:
        raise InputError("N must be positive")
    if D is None:
        D = complex(rng.normal(), rng.normal()) if N > 1 else 0.0
    D = complex(D)
    while True:
        g = rng.normal(size=N) + 1j * rng.normal(size=N)
        if D != 0:
            g = g - g.mean()
        if np.abs(g).min() > 0.3:
            break
        if N == 1 and D != 0:
            raise InputError("rank one requires D = 0")
    s0 = theta_scale * (rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)))
    s0 = s0 - s0.T
    ones = np.ones(N)
    x = (0.5 * D * g - s0 @ ones) / N
    S = s0 + np.outer(x, ones) - np.outer(ones, x)
    G = np.diag(g)
    theta = np.diag(1 / g) @ S
    P = np.array([np.diag(np.eye(N)[i]) for i in range(N)], dtype=complex)
    e = ones.astype(complex)
    if change_basis:
        while True:
            X = np.eye(N) + 0.3 * (rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)))
            if np.linalg.cond(X) < 20:
                break
        Xi = np.linalg.inv(X)
        G = X.T @ G @ X
        G = 0.5 * (G + G.T)
        theta = Xi @ theta @ X
        P = np.array([Xi @ pi @ X for pi in P])
        e = Xi @ e
    return SpecialInit(G, e, theta, P, D)
