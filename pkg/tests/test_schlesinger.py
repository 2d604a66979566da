import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isomonodromy.errors import InputError, NearCollisionError, PoleOfSolution
from isomonodromy.levelt import FuchsLocalData, nilpotent_monodromy
from isomonodromy.schlesinger import (DeformationPath, FuchsianSystem, SchlesingerState,
                                      StepControl, circle_loop, continue_along,
                                      isomonodromy_check, local_monodromies, monodromy,
                                      polygon_winding, vector_field)

from helpers import TIGHT, commuting_residues, cplx, n2_closed_form, random_residues, random_state


# -- system and path types --------------------------------------------------

def test_system_validation():
    with pytest.raises(InputError):
        FuchsianSystem([0, 0], np.zeros((2, 2, 2)))
    with pytest.raises(InputError):
        FuchsianSystem([0, 1], np.zeros((3, 2, 2)))
    with pytest.raises(InputError):
        FuchsianSystem([0, 1], np.zeros((2, 2, 3)))
    s = FuchsianSystem([0, 1], [np.eye(2), 2 * np.eye(2)])
    np.testing.assert_array_equal(s.residue_at_infinity, -3 * np.eye(2))
    np.testing.assert_allclose(s(2.0), np.eye(2) / 2 + 2 * np.eye(2))


def test_path_gap_minimization_and_check():
    # u1 - u2 passes through 0.1 at t = 1/2
    path = DeformationPath([[-1, 0.1j], [1, 0.1j]])
    assert path.segment_min_gaps()[0] == pytest.approx(0.1)
    assert path.check(0.05) == pytest.approx(0.1)
    with pytest.raises(NearCollisionError) as info:
        path.check(0.2)
    assert info.value.gap == pytest.approx(0.1)


def test_path_rejects_diagonal_vertex_and_concatenates():
    with pytest.raises(InputError):
        DeformationPath([[0, 0]])
    a = DeformationPath([[0, 1], [0, 2]])
    b = DeformationPath([[0, 2], [1, 2]])
    assert (a + b).n_segments == 2
    assert (a + b).length == pytest.approx(2.0)
    with pytest.raises(InputError):
        b + a
    np.testing.assert_array_equal(a.reversed().start, a.end)


# -- vector field -----------------------------------------------------------

def test_vector_field_scalar_and_commuting_vanish():
    rng = np.random.default_rng(0)
    st_scalar = SchlesingerState([0, 1, 2j], cplx(rng, 3, 1, 1))
    assert np.abs(vector_field(st_scalar, [1, -1, 0.5j])).max() == 0
    diag = np.array([np.diag(cplx(rng, 3)) for _ in range(3)])
    assert np.abs(vector_field(SchlesingerState([0, 1, 2j], diag), [1, 2, 3])).max() == 0


def test_vector_field_matches_commutator_formula():
    rng = np.random.default_rng(1)
    u = np.array([0.0, 1.0 + 0.5j])
    A = random_residues(rng, 2, 2)
    d = np.array([0.0, 1.0])  # move u_2 only
    out = vector_field(SchlesingerState(u, A), d)
    expected_1 = (A[1] @ A[0] - A[0] @ A[1]) / (u[1] - u[0])
    np.testing.assert_allclose(out[0], expected_1, atol=1e-15)
    np.testing.assert_allclose(out[1], -expected_1, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.complex_numbers(max_magnitude=3),
       st.complex_numbers(max_magnitude=3))
def test_vector_field_linear_in_direction(seed, a, b):
    rng = np.random.default_rng(seed)
    state = random_state(rng, 3, 2)
    d1, d2 = cplx(rng, 3), cplx(rng, 3)
    lhs = vector_field(state, a * d1 + b * d2)
    rhs = a * vector_field(state, d1) + b * vector_field(state, d2)
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(lhs).max())


def test_vector_field_sums_to_zero_along_diagonal_direction():
    rng = np.random.default_rng(2)
    state = random_state(rng, 4, 3)
    assert np.abs(vector_field(state, np.ones(4))).max() < 1e-15
    assert np.abs(vector_field(state, cplx(rng, 4)).sum(axis=0)).max() < 1e-14


def test_vector_field_near_collision():
    state = SchlesingerState([0, 1e-9], np.zeros((2, 1, 1)))
    with pytest.raises(NearCollisionError):
        vector_field(state, [1, 0], eps_diag=1e-6)


def test_mixed_derivatives_commute():
    """Integrability: d_j d_k A computed both ways agrees to O(h^2)."""
    rng = np.random.default_rng(3)
    state = random_state(rng, 3, 2)
    h = 1e-3

    def field_after(step, direction):
        end = continue_along(state, DeformationPath.segment(state.u, state.u + step), TIGHT)
        return vector_field(end, direction)

    e = np.eye(3)
    for j in range(3):
        for k in range(j + 1, 3):
            djk = (field_after(h * e[j], e[k]) - field_after(-h * e[j], e[k])) / (2 * h)
            dkj = (field_after(h * e[k], e[j]) - field_after(-h * e[k], e[j])) / (2 * h)
            assert np.abs(djk - dkj).max() < 1e-5


# -- continuation -----------------------------------------------------------

def test_scalar_residues_constant_exactly():
    rng = np.random.default_rng(4)
    state = SchlesingerState([0, 1, 2j], cplx(rng, 3, 1, 1))
    path = DeformationPath([[0, 1, 2j], [0.3, 1.5, 1 + 2j]])
    np.testing.assert_array_equal(continue_along(state, path).residues, state.residues)


def test_n2_closed_form():
    rng = np.random.default_rng(5)
    A = random_residues(rng, 2, 2)
    lam = A.sum(axis=0)
    A = A / max(1.0, np.linalg.norm(lam, 2))
    u0 = np.array([0.0, 1.0])
    u1 = np.array([0.2 + 0.1j, 1.7 - 0.4j])
    end = continue_along(SchlesingerState(u0, A), DeformationPath.segment(u0, u1))
    assert np.abs(end.residues[0] - n2_closed_form(A[0], A[1], u0, u1)).max() < 1e-8


def test_conservation_report():
    rng = np.random.default_rng(6)
    state = random_state(rng, 3, 3)
    path = DeformationPath([state.u, state.u + 0.3 * cplx(rng, 3)])
    end = continue_along(state, path)
    rep = end.conservation
    assert rep.sum_drift < 1e-9
    assert rep.max_eigen_drift < 1e-8
    assert rep.trace_drift < 1e-8
    assert rep.arclength == pytest.approx(path.length)
    assert set(rep.as_dict()) >= {"sum_drift", "eigen_drift", "accepted_steps"}


def test_path_concatenation_consistency():
    rng = np.random.default_rng(7)
    state = random_state(rng, 3, 2)
    mid = state.u + 0.2 * cplx(rng, 3)
    end = mid + 0.2 * cplx(rng, 3)
    p1 = DeformationPath([state.u, mid])
    p2 = DeformationPath([mid, end])
    two_step = continue_along(continue_along(state, p1, TIGHT), p2, TIGHT)
    one_go = continue_along(state, p1 + p2, TIGHT)
    assert np.abs(two_step.residues - one_go.residues).max() < 1e-10


def test_closed_loop_returns_to_start():
    rng = np.random.default_rng(8)
    state = random_state(rng, 3, 2)
    loop = state.u[None, :] + 0.2 * np.outer(circle_loop(0, 1, 16) - 1, [1, 0, 0])
    end = continue_along(state, DeformationPath(loop))
    assert np.abs(end.residues - state.residues).max() < 1e-7


def test_path_must_start_at_state():
    state = SchlesingerState([0, 1], np.zeros((2, 1, 1)))
    with pytest.raises(InputError):
        continue_along(state, DeformationPath([[0, 2], [0, 3]]))


def test_blow_up_reports_pole():
    # a 2x2 system with a pole of the solution: the gauge fixture's zero
    from isomonodromy.birkhoff import gauge_step
    from isomonodromy.tau import gauge_pivot, transport_gauge_frame
    from helpers import GAUGE_PIVOT, gauge_fixture, pivot_zero

    u, A, U0 = gauge_fixture()
    z = pivot_zero(u, A, U0)
    start = np.array([z - 0.3 - 0.1j, u[1]])
    a, U = transport_gauge_frame(u, A, U0, start, TIGHT)
    g = gauge_pivot(start, a, U, GAUGE_PIVOT)
    step = gauge_step(np.concatenate([np.zeros((1, 2, 2)), a]), start, U, g, GAUGE_PIVOT, [0, 0])
    state = SchlesingerState(np.concatenate([[0], start]), np.array(step.new_residues))
    end = np.concatenate([[0], [z + 0.3 + 0.1j, u[1]]])
    with pytest.raises(PoleOfSolution) as info:
        continue_along(state, DeformationPath.segment(state.u, end))
    exact = abs(0.3 + 0.1j)
    assert 0.99 * exact < info.value.arclength < exact
    assert info.value.trace and len(info.value.trace[-1]) == 4


# -- monodromy --------------------------------------------------------------

def test_scalar_monodromy_is_exponential():
    a = 0.3 - 0.2j
    loop = circle_loop(0, 0.5)
    m = monodromy(FuchsianSystem([0], [[[a]]]), loop[0], loop)
    assert abs(m.matrix[0, 0] - np.exp(2j * np.pi * a)) < 1e-9
    assert m.windings[0] == pytest.approx(1.0)


def test_monodromy_of_pole_free_loop_is_identity():
    rng = np.random.default_rng(9)
    system = FuchsianSystem([0, 1], random_residues(rng, 2, 2))
    loop = circle_loop(5, 0.5)
    m = monodromy(system, loop[0], loop)
    assert np.abs(m.matrix - np.eye(2)).max() < 1e-9


def test_nilpotent_monodromy_matches_levelt():
    rng = np.random.default_rng(10)
    N = np.triu(cplx(rng, 3, 3), 1) * 0.5
    ref = nilpotent_monodromy(FuchsLocalData.from_coeffs([N], 0))
    # a lone pole: Y = (lam / base)^N exactly
    loop = circle_loop(0, 0.5, 64)
    m = monodromy(FuchsianSystem([0], [N]), loop[0], loop, TIGHT)
    assert np.abs(m.matrix - ref).max() < 1e-8
    # a second pole perturbs the local frame by O(radius)
    other = random_residues(rng, 1, 3)[0]
    loop = circle_loop(0, 1e-7, 64)
    ctrl = StepControl(rtol=1e-12, atol=1e-14, eps_diag=1e-10)
    m = monodromy(FuchsianSystem([0, 2], [N, other]), loop[0], loop, ctrl)
    assert np.abs(m.matrix - ref).max() < 1e-6


def test_monodromy_det_cross_check_and_composition():
    rng = np.random.default_rng(11)
    system = FuchsianSystem([0, 1], random_residues(rng, 2, 2))
    base = -0.5 + 0j
    g1 = np.array([base, 0.5 - 0.5j, 0.5 + 0.5j, base])        # around 0
    g2 = np.array([base, 0.5 - 1j, 1.5 - 0.5j, 1.5 + 0.5j, 0.5 + 1j, base])  # around 0 and 1
    m1 = monodromy(system, base, g1, TIGHT)
    m2 = monodromy(system, base, g2, TIGHT)
    m12 = monodromy(system, base, np.concatenate([g1, g2[1:]]), TIGHT)
    assert m1.det_residual < 1e-9 and m12.det_residual < 1e-9
    # continuation acts on the right: G(g1 g2) = G(g2) G(g1)
    assert np.abs(m12.matrix - m2.matrix @ m1.matrix).max() < 1e-8
    assert polygon_winding(g2, 0) == pytest.approx(1) and polygon_winding(g2, 1) == pytest.approx(1)


def test_monodromy_loop_validation():
    system = FuchsianSystem([0], [[[0.1]]])
    with pytest.raises(InputError):
        monodromy(system, 1, [1, 2])
    with pytest.raises(InputError):
        monodromy(system, 1, [1, 1j, -1, 2])
    with pytest.raises(NearCollisionError):
        monodromy(system, 1, [1, -1, 1])


def test_isomonodromy_commuting_and_random():
    rng = np.random.default_rng(12)
    u = np.array([0, 1, 0.5 + 1j])
    state = SchlesingerState(u, commuting_residues(rng, 3, 2))
    path = DeformationPath([u, u + [0.1, -0.1j, 0.2]])
    assert isomonodromy_check(state, path).max_drift < 1e-8
    state = SchlesingerState(u, random_residues(rng, 3, 2))
    rep = isomonodromy_check(state, path)
    assert rep.max_drift < 1e-6
    assert len(local_monodromies(state)) == 3
