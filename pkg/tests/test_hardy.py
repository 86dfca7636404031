import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import born_oracle, closed_form_q, null_space_hardy, observable_pairs, random_pair
from hardyba.hardy import (
    ALPHA_OPT,
    PHI_PLUS,
    Q_CELL,
    Q_MAX,
    SETTINGS,
    ZERO_CONDITIONS,
    InvalidObservableError,
    ObservablePair,
    build_model,
    check_hardy_conditions,
    hardy_product_states,
    probability_table,
    q_max_search,
    q_value,
    symmetric_model,
)
from hardyba.qcore import PureState, fidelity, tensor

H = 1 / math.sqrt(2)
FLIP = {"U": "D", "D": "U"}


@pytest.fixture(scope="module")
def half():
    return symmetric_model(H)


# frozen values at alpha = beta = 1/sqrt2 -------------------------------------


def test_symmetric_coefficients_frozen(half):
    # substituting |alpha|^2 = |beta|^2 = 1/2 into the U-basis coefficient formulas
    assert half.x00 == pytest.approx(1 / (2 * math.sqrt(3)), abs=1e-12)
    assert half.x01 == pytest.approx(-1 / (2 * math.sqrt(3)), abs=1e-12)
    assert half.x11 == pytest.approx(-math.sqrt(3) / 2, abs=1e-12)
    assert half.x00.real == pytest.approx(0.288675, abs=1e-6)
    assert half.x11.real == pytest.approx(-0.866025, abs=1e-6)


def test_symmetric_coefficients_satisfy_constraints(half):
    x00, x01, x11 = half.coefficients
    vec = np.array([x00, x01, x01, x11])
    assert abs(np.linalg.norm(vec) - 1) < 1e-12
    for phi in hardy_product_states(half.pair1, half.pair2)[:3]:
        assert abs(np.vdot(phi, vec)) < 1e-12


def test_q_one_twelfth(half):
    assert half.q == pytest.approx(1 / 12, abs=1e-12)
    assert abs(half.psi_h.amplitudes[0]) ** 2 == pytest.approx(1 / 12, abs=1e-12)


def test_q_at_golden_alpha():
    m = symmetric_model(ALPHA_OPT)
    assert ALPHA_OPT == pytest.approx(0.786151, abs=1e-6)
    assert m.q == pytest.approx((5 * math.sqrt(5) - 11) / 2, abs=1e-12)
    assert m.q == pytest.approx(0.0901699, abs=1e-7)


def test_coefficients_match_statevector_for_complex_pairs(rng):
    # the printed x11 mixes conjugates; check the formula against an independent construction
    for _ in range(20):
        pair = random_pair(rng)
        m = build_model(pair)
        oracle = null_space_hardy(pair, pair)
        x00, x01, x11 = m.coefficients
        np.testing.assert_allclose([x00, x01, x01, x11], oracle, atol=1e-12)
        assert abs(abs(x00) ** 2 + 2 * abs(x01) ** 2 + abs(x11) ** 2 - 1) < 1e-12


def test_coefficients_need_symmetric_model(rng):
    m = build_model(random_pair(rng), random_pair(rng))
    with pytest.raises(ValueError):
        _ = m.x00


# q ----------------------------------------------------------------------------


def test_q_value_matches_statevector(rng):
    for _ in range(20):
        p1, p2 = random_pair(rng), random_pair(rng)
        assert abs(q_value(p1, p2) - abs(null_space_hardy(p1, p2)[0]) ** 2) < 1e-12
        assert abs(q_value(p1, p2) - abs(build_model(p1, p2).psi_h.amplitudes[0]) ** 2) < 1e-12


def test_q_max_search():
    alpha, q = q_max_search()
    assert abs(q - (5 * math.sqrt(5) - 11) / 2) < 1e-9
    assert abs(alpha**2 - (math.sqrt(5) - 1) / 2) < 1e-6
    assert Q_MAX == pytest.approx(q, abs=1e-12)
    for a in (alpha - 0.05, alpha + 0.05):
        assert q_value(ObservablePair.real(a), ObservablePair.real(a)) < q


def test_observable_pair_bounds():
    with pytest.raises(InvalidObservableError):
        ObservablePair(1.0, 0.0)
    with pytest.raises(InvalidObservableError):
        ObservablePair(0.0, 1.0)
    with pytest.raises(InvalidObservableError):
        ObservablePair(0.6, 0.6)
    with pytest.raises(InvalidObservableError):
        ObservablePair.real(1.0)


# construction invariants -------------------------------------------------------


def test_hardy_construction_fifty_random_pairs():
    rng = np.random.default_rng(50)
    for _ in range(50):
        p1, p2 = random_pair(rng), random_pair(rng)
        m = build_model(p1, p2)
        psi = m.psi_h.amplitudes
        assert psi[0].real > 0 and abs(psi[0].imag) < 1e-15
        for phi in hardy_product_states(p1, p2)[:3]:
            assert abs(np.vdot(phi, psi)) < 1e-12
        table = m.table("psi")
        for cell in ZERO_CONDITIONS:
            assert table[cell] <= 1e-12
        assert abs(table[Q_CELL] - closed_form_q(p1, p2)) < 1e-12
        assert abs(m.q - closed_form_q(p1, p2)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(observable_pairs(), observable_pairs())
def test_hardy_state_is_the_null_vector(p1, p2):
    m = build_model(p1, p2)
    assert fidelity(m.psi_h, PureState(null_space_hardy(p1, p2))) == pytest.approx(1, abs=1e-12)
    assert check_hardy_conditions(m.table("psi")).passed


@settings(max_examples=40, deadline=None)
@given(observable_pairs())
def test_model_operators(pair):
    m = build_model(pair)
    u = m.conversion_u.matrix
    np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    for proj in (m.swap_m, m.cheat_m):
        assert np.linalg.matrix_rank(proj.matrix, tol=1e-9) == 1
        np.testing.assert_allclose(proj.matrix @ proj.matrix, proj.matrix, atol=1e-12)


# conversion ---------------------------------------------------------------------


def test_conversion_columns_match_printed_rows(half):
    x00, x01, x11 = half.coefficients
    u = half.conversion_u.matrix
    # images of |uu> and |u u_perp> with the ancilla as the first qubit
    np.testing.assert_allclose(u[:, 0], [x00, x01, np.conj(x01), np.conj(x11)], atol=1e-12)
    np.testing.assert_allclose(u[:, 1], [x01, x11, -np.conj(x00), -np.conj(x01)], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(observable_pairs())
def test_conversion_branches(pair):
    m = build_model(pair)
    x00, x01, x11 = m.coefficients
    prob, state = m.conversion_branch
    assert abs(prob - 0.5) < 1e-12
    assert fidelity(state, m.psi_h) >= 1 - 1e-12
    printed = np.array([np.conj(x01), -np.conj(x00), np.conj(x11), -np.conj(x01)])
    assert fidelity(m.psi_prime, PureState(printed)) >= 1 - 1e-12
    np.testing.assert_allclose(m.psi_prime.amplitudes, printed, atol=1e-12)


# swapping ---------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(observable_pairs())
def test_swap_identities(pair):
    m = build_model(pair)
    for cheat, target in ((False, m.psi_h), (True, m.chi)):
        prob, state = m.swap_branch(cheat)
        assert abs(prob - 0.25) < 1e-12
        assert fidelity(state, target) >= 1 - 1e-12


def test_swap_branch_amplitudes(half):
    # (M on 1,3)|Phi+>|Phi+> = 1/2 |psi*>_13 |psi>_24, checked on the full vector
    from hardyba.qcore import project

    for proj, ket in ((half.swap_m, half.psi_h), (half.cheat_m, half.chi)):
        out = project(proj, [0, 2], tensor(PHI_PLUS, PHI_PLUS)).reshape(2, 2, 2, 2)
        expected = 0.5 * np.einsum("ac,bd->abcd", ket.amplitudes.conj().reshape(2, 2), ket.amplitudes.reshape(2, 2))
        np.testing.assert_allclose(out, expected, atol=1e-12)


def test_cheat_ket_is_printed_form(rng):
    for _ in range(10):
        pair = random_pair(rng)
        m = build_model(pair)
        x00, x01, x11 = m.coefficients
        u, up = np.array([1, 0]), np.array([0, 1])
        d, dp = pair.d, pair.d_perp
        chi_star = (
            np.conj(x00) * np.kron(u, d.conj())
            + np.conj(x01) * (np.kron(u, dp.conj()) + np.kron(up, d.conj()))
            + np.conj(x11) * np.kron(up, dp.conj())
        )
        ket = m.cheat_m.matrix @ chi_star
        np.testing.assert_allclose(ket, chi_star, atol=1e-12)
        swap_ket = m.swap_m.matrix @ m.psi_h.amplitudes.conj()
        np.testing.assert_allclose(swap_ket, m.psi_h.amplitudes.conj(), atol=1e-12)


# probability tables -------------------------------------------------------------


def test_tables_match_density_matrix_oracle(rng):
    for _ in range(5):
        p1, p2 = random_pair(rng), random_pair(rng)
        m = build_model(p1, p2)
        for which, state in (("psi", m.psi_h), ("chi", m.chi)):
            table = m.table(which)
            for key in table:
                assert abs(table[key] - born_oracle(state.amplitudes, p1, p2, *key)) < 1e-12


def test_table_frozen_entries(half):
    psi, chi = half.table("psi"), half.table("chi")
    assert psi[("D", "U", -1, -1)] == pytest.approx(1 / 6, abs=1e-12)
    assert chi[("D", "D", -1, -1)] == pytest.approx(1 / 6, abs=1e-12)
    assert chi[("U", "U", 1, 1)] == pytest.approx(0, abs=1e-12)
    zeros = [k for k in psi if psi[k] < 1e-12]
    assert sorted(zeros) == sorted(ZERO_CONDITIONS)
    assert psi[Q_CELL] == pytest.approx(1 / 12, abs=1e-12)


@pytest.mark.parametrize("alpha", [H, ALPHA_OPT, 0.3, 0.9])
def test_chi_relabeling(alpha):
    m = symmetric_model(alpha)
    psi, chi = m.table("psi"), m.table("chi")
    for s1, s2, o1, o2 in chi:
        assert abs(chi[(s1, s2, o1, o2)] - psi[(s1, FLIP[s2], o1, o2)]) < 1e-12


def test_check_hardy_conditions(half):
    ok = check_hardy_conditions(half.table("psi"))
    assert ok.passed and max(ok.residuals.values()) < 1e-12
    bad = check_hardy_conditions(half.table("chi"))
    assert not bad.passed
    assert bad.residuals[("D", "D", -1, -1)] > 0.1
    product = probability_table(PureState.basis([0, 0]), half.pair1, half.pair2)
    assert not check_hardy_conditions(product).passed


@settings(max_examples=40, deadline=None)
@given(observable_pairs(), observable_pairs())
def test_table_rows_are_distributions(p1, p2):
    arr = build_model(p1, p2).table("chi").as_array()
    assert (arr >= -1e-15).all()
    np.testing.assert_allclose(arr.sum(axis=-1), 1, atol=1e-12)


def test_table_csv(half):
    text = half.table("psi").to_csv()
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 16
    assert set(rows[0]) == {"setting1", "setting2", "outcome1", "outcome2", "probability"}
    total = {(s1, s2): 0.0 for s1 in SETTINGS for s2 in SETTINGS}
    for r in rows:
        total[(r["setting1"], r["setting2"])] += float(r["probability"])
    assert all(abs(v - 1) < 1e-12 for v in total.values())
    uu = [r for r in rows if (r["setting1"], r["setting2"], r["outcome1"], r["outcome2"]) == ("U", "U", "+1", "+1")]
    assert float(uu[0]["probability"]) == pytest.approx(1 / 12, abs=1e-12)
