import numpy as np
import pytest

from isomonodromy.errors import InputError
from isomonodromy.frobenius import (SpecialInit, choose_n, classification_residuals,
                                    n_independence_check, projectors_at, random_special_init,
                                    residues_from_init, second_connection_flatness,
                                    validate_special_init)
from isomonodromy.schlesinger import DeformationPath

from helpers import TIGHT, cplx

BASE = np.array([0.0, 1.0, 0.4 + 0.9j])


def trivial_init(N=3, e=None, G=None):
    P = np.array([np.diag(np.eye(N)[i]) for i in range(N)], complex)
    return SpecialInit(np.eye(N) if G is None else G, np.ones(N) if e is None else e,
                       np.zeros((N, N)), P, 0.0)


@pytest.fixture(scope="module")
def random_frame():
    rng = np.random.default_rng(3)
    data = random_special_init(3, rng)
    path = DeformationPath([BASE, BASE + 0.2 * cplx(rng, 3)])
    return data, path, projectors_at(data, BASE, path, step_ctrl=TIGHT)


# -- validation ---------------------------------------------------------------

def test_trivial_init_passes_exactly():
    rep = validate_special_init(trivial_init())
    assert rep.passed
    assert all(v == 0 for k, v in rep.residuals.items() if k != "min_Pe")


def test_missing_unit_component_fails():
    rep = validate_special_init(trivial_init(e=np.array([1.0, 0, 0])))
    assert not rep.passed
    assert rep.failures() == ["min_Pe"]


@pytest.mark.parametrize("seed", range(5))
def test_random_sampler_passes(seed):
    data = random_special_init(3, np.random.default_rng(seed))
    assert validate_special_init(data).passed


def test_broken_skewness_detected():
    data = random_special_init(3, np.random.default_rng(0))
    bad = SpecialInit(data.G, data.e, data.theta + 0.1 * np.eye(3), data.projectors)
    assert "skew" in validate_special_init(bad).failures()


def test_special_init_validation_errors():
    with pytest.raises(InputError):
        SpecialInit(np.eye(2), np.zeros(2), np.zeros((2, 2)), [np.eye(2)])
    with pytest.raises(InputError):
        SpecialInit(np.eye(2), np.ones(3), np.zeros((2, 2)), [np.eye(2)])


# -- residues -----------------------------------------------------------------

def test_residues_theta_zero():
    data = trivial_init()
    A = residues_from_init(data, -1.5)
    np.testing.assert_array_equal(A, data.projectors)


def test_residues_are_row_slices_and_sum():
    data = random_special_init(3, np.random.default_rng(1), change_basis=False)
    n = choose_n(data)
    A = residues_from_init(data, n)
    shifted = data.theta - (n + 0.5) * np.eye(3)
    for i in range(3):
        np.testing.assert_array_equal(A[i][i], shifted[i])
        assert np.abs(np.delete(A[i], i, axis=0)).max() == 0
    np.testing.assert_array_equal(A.sum(axis=0), shifted)


def test_resonant_n_rejected():
    data = trivial_init()  # spec(theta) = {0}, n = -1/2 is resonant
    with pytest.raises(InputError, match="resonant"):
        residues_from_init(data, -0.5)
    assert choose_n(data) == -3


# -- frames -------------------------------------------------------------------

def test_trivial_path_eta_is_pairing():
    g = np.array([2.0, -1.0 + 1j, 0.5])
    data = trivial_init(G=np.diag(g))
    frame = projectors_at(data, BASE)
    np.testing.assert_allclose(frame.eta, g)
    assert np.abs(frame.eta_jac).max() == 0


def test_frame_invariants(random_frame):
    data, path, fr = random_frame
    P, G = fr.projectors, data.G
    for i in range(3):
        for j in range(3):
            assert np.abs(P[i] @ P[j] - (P[j] if i == j else 0)).max() < 1e-7
        assert np.abs(P[i].T @ G - G @ P[i]).max() < 1e-7
        assert abs(np.trace(P[i] @ data.theta)) < 1e-10
    assert np.abs(P.sum(axis=0) - np.eye(3)).max() < 1e-7
    assert np.abs(fr.eta_jac - fr.eta_jac.T).max() < 1e-9
    assert abs(fr.eta.sum() - data.pairing(data.e, data.e)) < 1e-9
    th = fr.theta_can
    assert np.abs(np.diag(th)).max() == 0
    assert np.abs(th * fr.eta[:, None] + th.T * fr.eta[None, :]).max() < 1e-9
    # Psi with columns P_i e / sqrt(eta_i) diagonalizes sum u_i P_i
    Psi = np.column_stack([P[i] @ data.e / fr.sqrt_eta[i] for i in range(3)])
    E = np.einsum("i,ijk->jk", fr.u, P)
    assert np.abs(np.linalg.solve(Psi, E @ Psi) - np.diag(fr.u)).max() < 1e-9


def test_classification_random(random_frame):
    data, _, fr = random_frame
    rep = classification_residuals(fr, data, step_ctrl=TIGHT)
    assert rep.cond1 > 1e-3
    assert rep.cond2 < 1e-6 and rep.cond3 < 1e-6 and rep.cond4 < 1e-6
    assert rep.eta_jac_fd < 1e-6


def test_classification_theta_zero_and_rank_two():
    data = trivial_init()
    rep = classification_residuals(projectors_at(data, BASE), data)
    assert rep.cond2 == rep.cond3 == rep.cond4 == 0
    data2 = random_special_init(2, np.random.default_rng(4))
    fr = projectors_at(data2, BASE[:2])
    assert classification_residuals(fr, data2).cond4 == 0


def test_n_independence(random_frame):
    data, path, _ = random_frame
    assert n_independence_check(data, path, -2, 3, TIGHT) < 1e-8
    short = DeformationPath([path.start])
    assert n_independence_check(data, short, -2, 3) < 1e-14  # inverse rounding only
    flat = trivial_init()
    assert n_independence_check(flat, DeformationPath([BASE, BASE + [0.1, 0.2j, -0.1]]),
                                -2, 1) == 0


def test_second_connection_flatness(random_frame):
    data, _, fr = random_frame
    assert second_connection_flatness(fr, data, fr.n, 3.0 + 2.0j, step_ctrl=TIGHT) < 1e-5
    flat = trivial_init()
    assert second_connection_flatness(projectors_at(flat, BASE), flat, -2, 3.0) < 1e-15
    two = random_special_init(2, np.random.default_rng(5))
    fr2 = projectors_at(two, BASE[:2], DeformationPath([BASE[:2], [0.1j, 1.2]]), step_ctrl=TIGHT)
    assert second_connection_flatness(fr2, two, fr2.n, 2.0 - 1.0j, step_ctrl=TIGHT) < 1e-6


def test_sqrt_branch_continued_around_a_loop():
    data = random_special_init(3, np.random.default_rng(6))
    fr0 = projectors_at(data, BASE)
    loop = BASE[None, :] + 0.3 * np.outer(np.exp(2j * np.pi * np.linspace(0, 1, 17)) - 1, [1, 0, 0])
    fr = projectors_at(data, BASE, DeformationPath(loop), step_ctrl=TIGHT)
    assert np.abs(fr.sqrt_eta ** 2 - fr.eta).max() < 1e-9
    # continuation stays on a single branch per flip record
    flipped = {i for _, i in fr.branch_flips}
    for i in range(3):
        same = abs(fr.sqrt_eta[i] - fr0.sqrt_eta[i]) < 1e-6
        assert same or i in flipped
