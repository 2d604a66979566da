"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``PASS``/``FAIL`` line (visible with ``-s`` or in the
captured output on failure) and then asserts at the stated tolerance.
"""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from isomonodromy.birkhoff import factor_column_reduction, factor_near_identity, gauge_step
from isomonodromy.core import MatrixLaurentSeries, winding_number
from isomonodromy.frobenius import (classification_residuals, n_independence_check,
                                    projectors_at, random_special_init)
from isomonodromy.levelt import FuchsLocalData, formal_solution, ode_residual
from isomonodromy.schlesinger import (DeformationPath, SchlesingerState, StepControl,
                                      continue_along, isomonodromy_check)
from isomonodromy.tau import (closedness_residual, commuting_log_tau, gauge_shift_check,
                              genus1_gradient, tau_along)

from helpers import (GAUGE_PIVOT, TIGHT, certified_planted, commuting_residues, cplx,
                     gauge_fixture, n2_closed_form, random_germ, random_residues, random_state)

CIRCLE = np.exp(2j * np.pi * np.arange(256) / 256)
U3 = np.array([0.0, 1.0, 0.4 + 0.9j])


def verdict(capsys, n, title, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} [{n:2d}] {title}: {detail}")
    assert ok, detail


def random_path(state, rng, diameter=1.0):
    """Two-segment path from ``state.u`` rescaled to the given diameter."""
    steps = cplx(rng, 2, state.u.size)
    verts = np.vstack([state.u, state.u + steps[0], state.u + steps.sum(axis=0)])
    path = DeformationPath(verts)
    verts = state.u + (verts - state.u) * (diameter / path.diameter)
    return DeformationPath(verts)


def test_01_conservation(capsys):
    sums, eigs = [], []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        state = random_state(rng, 3, 3, spread=1.5)
        path = random_path(state, rng)
        assert path.diameter == pytest.approx(1.0)
        rep = continue_along(state, path, StepControl(rtol=1e-10)).conservation
        sums.append(rep.sum_drift)
        eigs.append(rep.max_eigen_drift)
    ok = max(sums) < 1e-8 and max(eigs) < 1e-7
    verdict(capsys, 1, "conservation", ok,
            f"sum drift {max(sums):.1e} (<1e-8), eigenvalue drift {max(eigs):.1e} (<1e-7)")


def test_02_two_pole_closed_form(capsys):
    rng = np.random.default_rng(21)
    A = random_residues(rng, 2, 2)
    u0 = np.array([0.0, 1.0])
    u1 = np.array([0.2 + 0.1j, 1.7 - 0.4j])
    t0 = time.perf_counter()
    end = continue_along(SchlesingerState(u0, A), DeformationPath.segment(u0, u1))
    elapsed = time.perf_counter() - t0
    err = np.abs(end.residues[0] - n2_closed_form(A[0], A[1], u0, u1)).max()
    # the opposite conjugation direction, for the record
    sigma = (u1[1] - u1[0]) / (u0[1] - u0[0])
    g = expm(-np.log(sigma) * A.sum(axis=0))
    flipped = np.abs(end.residues[0] - g @ A[0] @ np.linalg.inv(g)).max()
    ok = err < 1e-8 and elapsed < 1.0
    verdict(capsys, 2, "two-pole closed form", ok,
            f"error {err:.1e} (<1e-8) in {elapsed:.2f} s; opposite-sign formula off by {flipped:.2f}")


def test_03_isomonodromy(capsys):
    drifts = []
    for seed in range(2):
        rng = np.random.default_rng(30 + seed)
        state = SchlesingerState(U3, random_residues(rng, 3, 2))
        path = DeformationPath([U3, U3 + [0.15, -0.1j, 0.1 + 0.1j], U3 + [0.1, 0.2, -0.15j]])
        drifts.append(isomonodromy_check(state, path).max_drift)
    verdict(capsys, 3, "isomonodromy", max(drifts) < 1e-6,
            f"monodromy eigenvalue drift {max(drifts):.1e} (<1e-6)")


def test_04_closedness(capsys):
    res = [closedness_residual(random_state(np.random.default_rng(40 + s)), h=1e-4)
           for s in range(3)]
    verdict(capsys, 4, "omega closedness", max(res) < 1e-5, f"curl residual {max(res):.1e} (<1e-5)")


def test_05_commuting_tau(capsys):
    errs = []
    for seed in range(3):
        A = commuting_residues(np.random.default_rng(50 + seed), 3, 2)
        end = U3 + [0.2, -0.3j, 0.1 + 0.1j]
        acc = tau_along(SchlesingerState(U3, A), DeformationPath.segment(U3, end), TIGHT)
        ref = commuting_log_tau(U3, end, A)
        errs.append(abs(acc.log_tau - ref) / max(1.0, abs(ref)))
    verdict(capsys, 5, "commuting tau", max(errs) < 1e-8, f"relative error {max(errs):.1e} (<1e-8)")


def test_06_darboux_egoroff(capsys):
    res = []
    for seed in range(3):
        rng = np.random.default_rng(60 + seed)
        data = random_special_init(3, rng)
        path = DeformationPath([U3, U3 + 0.2 * cplx(rng, 3)])
        fr = projectors_at(data, U3, path, step_ctrl=TIGHT)
        res.append(classification_residuals(fr, data, step_ctrl=TIGHT).cond4)
    verdict(capsys, 6, "Darboux-Egoroff", max(res) < 1e-6, f"third-order residual {max(res):.1e} (<1e-6)")


def test_07_n_independence(capsys):
    res = []
    for seed in range(3):
        rng = np.random.default_rng(70 + seed)
        data = random_special_init(3, rng)
        path = DeformationPath([U3, U3 + 0.2 * cplx(rng, 3)])
        res.append(n_independence_check(data, path, -2, 3, TIGHT))
    verdict(capsys, 7, "projector n-independence", max(res) < 1e-8,
            f"projector difference {max(res):.1e} (<1e-8)")


def test_08_birkhoff_planted(capsys):
    hits, worst, windings = 0, 0.0, True
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        p = int(rng.integers(1, 5))
        K0 = np.sort(rng.integers(-2, 3, size=p))[::-1]
        M, _, _ = certified_planted(rng, p, K0, degree=int(rng.integers(1, 4)))
        fac = factor_column_reduction(M)
        hits += np.array_equal(fac.K, K0)
        recon = np.abs(fac.reconstruct(CIRCLE) - M(CIRCLE)).max()
        worst = max(worst, recon / max(1.0, np.abs(M(CIRCLE)).max()), fac.residual)
        windings &= int(fac.K.sum()) == winding_number(np.linalg.det(M(CIRCLE)))
    ok = hits == 50 and worst < 1e-8 and windings
    verdict(capsys, 8, "planted splitting type", ok,
            f"{hits}/50 recovered, residual {worst:.1e} (<1e-8), winding match {windings}")


def test_09_near_identity(capsys):
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(90 + seed)
        p = int(rng.integers(1, 5))
        B = MatrixLaurentSeries(cplx(rng, 7, p, p), -3)
        B = MatrixLaurentSeries(B.coeffs * 0.1 / B.annulus_norm(0.5, 2.0), -3)
        fac = factor_near_identity(B)
        err = np.abs(fac.U(CIRCLE) @ fac.W(CIRCLE) - np.eye(p) - B(CIRCLE)).max()
        worst = max(worst, err)
    verdict(capsys, 9, "near-identity factorization", worst < 1e-10, f"error {worst:.1e} (<1e-10)")


def test_10_levelt(capsys):
    res, comm = 0.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        p = int(rng.integers(1, 5))
        data = FuchsLocalData.from_coeffs(random_germ(rng, p, 6, resonant=seed % 2 == 1), 6)
        sol = formal_solution(data)
        res = max(res, ode_residual(data, sol))
        for k, nk in enumerate(sol.N_parts, start=1):
            comm = max(comm, np.abs(sol.R @ nk - nk @ sol.R - k * nk).max())
    E12 = np.array([[0, 1], [0, 0]], complex)
    sol = formal_solution(FuchsLocalData.from_coeffs([np.diag([1.0, 0.0]), E12], 1))
    exact = np.array_equal(sol.N_parts[0], E12)
    ok = res < 1e-10 and comm < 1e-12 and exact
    verdict(capsys, 10, "Levelt recursion", ok,
            f"ODE residual {res:.1e} (<1e-10), grading {comm:.1e} (<1e-12), resonant E12 exact {exact}")


def test_11_gauge_step(capsys):
    ledger = True
    rng = np.random.default_rng(110)
    for _ in range(20):
        p = int(rng.integers(2, 5))
        K = rng.integers(-3, 4, size=p)
        a, b = rng.choice(p, size=2, replace=False)
        res = list(0.3 * cplx(rng, 3, p, p))
        U0 = np.eye(p) + 0.3 * cplx(rng, p, p)
        out = gauge_step(res, [1.0, 2.0 + 1j], U0, 0.7 + 0.1j, (int(a), int(b)), K)
        ledger &= out.trace_change == 2 - 2 * int(K[a]) + 2 * int(K[b])
    u, A, U0 = gauge_fixture()
    shift = max(gauge_shift_check(u, A, U0, pv).residual for pv in (GAUGE_PIVOT, (1, 0)))
    ok = ledger and shift < 1e-5
    verdict(capsys, 11, "gauge step", ok,
            f"integer trace ledger exact {ledger}, omega shift residual {shift:.1e} (<1e-5)")


def test_12_genus_one(capsys):
    ident, two_route = 0.0, 0.0
    for seed in range(3):
        rng = np.random.default_rng(120 + seed)
        data = random_special_init(3, rng)
        fr = projectors_at(data, U3, DeformationPath([U3, U3 + 0.1 * cplx(rng, 3)]),
                           step_ctrl=TIGHT)
        g = genus1_gradient(fr, data, h=1e-4)
        ident = max(ident, g.identity_residual)
        two_route = max(two_route, g.omega_residual)
    ok = ident < 1e-6 and two_route < 1e-8
    verdict(capsys, 12, "genus-one identity", ok,
            f"identity {ident:.1e} (<1e-6), omega two-route {two_route:.1e} (<1e-8)")
