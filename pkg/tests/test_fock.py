import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maqm import fock
from maqm.fock import JointState, ModeSet, SourceParams, StateError, TruncationError


def _q(*labels):
    return ModeSet(tuple(fock.qubit(l) for l in labels))


def _random_pure(dim, rng):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _random_rho(dim, rng, rank=None):
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    r = a @ a.conj().T
    return r / np.trace(r).real


def _assert_physical(state, tol=1e-9):
    r = state.dm()
    assert np.allclose(r, r.conj().T, atol=tol)
    assert abs(np.trace(r).real - 1) < tol
    assert np.linalg.eigvalsh(r)[0] > -tol


# -------------------------------------------------------------- construction

def test_modeset_rejects_duplicate_labels():
    with pytest.raises(StateError):
        ModeSet((fock.qubit("a"), fock.qubit("a")))


def test_modeset_dimension_cap():
    modes = tuple(fock.qubit(f"q{i}") for i in range(13))
    with pytest.raises(StateError):
        ModeSet(modes)


def test_fock_mode_needs_cutoff():
    with pytest.raises(StateError):
        fock.fock("n", 0)


def test_joint_state_rejects_unnormalized():
    ms = _q("a")
    with pytest.raises(StateError):
        JointState(ms, vec=np.array([1.0, 1.0]))
    with pytest.raises(StateError):
        JointState(ms, rho=np.diag([0.6, 0.6]))
    with pytest.raises(StateError):
        JointState(ms, rho=np.diag([1.2, -0.2]))


def test_tms_vacuum_limit():
    s = fock.two_mode_squeezed(SourceParams(0.0, 2))
    assert s.vec[0] == 1
    assert np.count_nonzero(s.vec) == 1


def test_tms_amplitudes():
    s = fock.two_mode_squeezed(SourceParams(0.04, 2))
    amps = np.array([s.vec[0], s.vec[4], s.vec[8]]).real
    assert np.allclose(amps / amps[0], [1, 0.2, 0.04], atol=1e-12)


def test_tms_truncation_error():
    with pytest.raises(TruncationError):
        SourceParams(0.1, 2)  # 0.1**3 = 1e-3 above 1e-4
    SourceParams(0.04, 2)
    with pytest.raises(StateError):
        SourceParams(0.5, 30)


# ----------------------------------------------------------------- tensor

def test_tensor_kets():
    a = fock.ket(ModeSet((fock.fock("x", 1),)), [0])
    b = fock.ket(ModeSet((fock.fock("y", 1),)), [1])
    ab = fock.tensor(a, b)
    assert ab.labels == ("x", "y")
    assert np.allclose(ab.vec, [0, 1, 0, 0])


def test_tensor_label_collision():
    a = fock.ket(_q("a"), ["L"])
    with pytest.raises(StateError):
        fock.tensor(a, a)


def test_tensor_of_two_links_is_four_qubit_state():
    l1 = fock.superposition(_q("s1", "a1"), {("L", "L"): 1, ("R", "R"): 1})
    l2 = fock.superposition(_q("s2", "a2"), {("L", "L"): 1, ("R", "R"): 1})
    j = fock.tensor(l1, l2)
    assert j.is_pure and abs(np.linalg.norm(j.vec) - 1) < 1e-12
    # |LLLL>, |LLRR>, |RRLL>, |RRRR> in (s1, a1, s2, a2) order, each 1/2
    nz = np.flatnonzero(np.abs(j.vec) > 1e-12)
    assert list(nz) == [0b0000, 0b0011, 0b1100, 0b1111]
    assert np.allclose(j.vec[nz], 0.5)


# -------------------------------------------------------------------- loss

def test_loss_identity_and_full():
    ms = ModeSet((fock.fock("n", 2),))
    one = fock.ket(ms, [1])
    same = fock.apply_loss(one, "n", 1.0)
    assert np.allclose(same.dm(), one.dm())
    gone = fock.apply_loss(one, "n", 0.0)
    assert np.allclose(gone.dm(), np.diag([1, 0, 0]))


def test_loss_rejects_qubit_mode():
    with pytest.raises(StateError):
        fock.apply_loss(fock.ket(_q("a"), ["L"]), "a", 0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_loss_composition(e1, e2, seed):
    rng = np.random.default_rng(seed)
    ms = ModeSet((fock.fock("n", 3),))
    s = JointState(ms, rho=_random_rho(4, rng))
    a = fock.apply_loss(fock.apply_loss(s, "n", e1), "n", e2)
    b = fock.apply_loss(s, "n", e1 * e2)
    assert np.allclose(a.dm(), b.dm(), atol=1e-10)
    _assert_physical(a)


def test_loss_binomial_oracle():
    # |2> through eta: P(k survive) = C(2,k) eta^k (1-eta)^(2-k)
    ms = ModeSet((fock.fock("n", 2),))
    eta = 0.3
    r = fock.apply_loss(fock.ket(ms, [2]), "n", eta).dm()
    expect = [math.comb(2, k) * eta**k * (1 - eta) ** (2 - k) for k in range(3)]
    assert np.allclose(np.diag(r).real, expect, atol=1e-12)


# ------------------------------------------------------------- measurement

def test_project_plus_on_L():
    plus = fock.superposition(_q("a"), {("L",): 1, ("R",): 1})
    p, post = fock.measure_projective(plus, ["a"], fock.projector([[1, 0]]))
    assert abs(p - 0.5) < 1e-12
    assert np.allclose(post.dm(), np.diag([1, 0]))


def test_project_psi_plus_on_LL():
    psi = fock.bell_state(("a", "b"), "psi+")
    p, post = fock.measure_projective(psi, ["a", "b"], fock.projector([[1, 0, 0, 0]]))
    assert p == pytest.approx(0, abs=1e-15)
    assert post is None


def test_projector_must_be_projector():
    with pytest.raises(StateError):
        fock.measure_projective(fock.ket(_q("a"), ["L"]), ["a"], np.diag([1.0, 0.5]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_complete_measurement_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    s = JointState(_q("a", "b"), rho=_random_rho(4, rng))
    u = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
    total = 0.0
    for k in range(2):
        p, post = fock.measure_projective(s, ["b"], np.outer(u[:, k], u[:, k].conj()))
        total += p
        if post is not None:
            _assert_physical(post)
    assert abs(total - 1) < 1e-9


# ---------------------------------------------------------- partial trace

def test_partial_trace_bell_half():
    r = fock.partial_trace(fock.bell_state(("a", "b")), ["a"])
    assert np.allclose(r.dm(), np.eye(2) / 2)


def test_partial_trace_nothing_removed():
    s = fock.bell_state(("a", "b"))
    assert np.allclose(fock.partial_trace(s, ["a", "b"]).dm(), s.dm())
    with pytest.raises(StateError):
        fock.partial_trace(s, [])


def test_atoms_of_two_links_are_maximally_mixed():
    l1 = fock.superposition(_q("s1", "a1"), {("L", "L"): 1, ("R", "R"): 1})
    l2 = fock.superposition(_q("s2", "a2"), {("L", "L"): 1, ("R", "R"): 1})
    r = fock.partial_trace(fock.tensor(l1, l2), ["a1", "a2"])
    assert np.allclose(r.dm(), np.eye(4) / 4, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tensor_partial_trace_roundtrip(seed):
    rng = np.random.default_rng(seed)
    a = JointState(_q("a"), rho=_random_rho(2, rng))
    b = JointState(ModeSet((fock.fock("n", 2),)), rho=_random_rho(3, rng))
    assert np.allclose(fock.partial_trace(fock.tensor(a, b), ["a"]).dm(), a.dm(), atol=1e-12)
    assert np.allclose(fock.partial_trace(fock.tensor(a, b), ["n"]).dm(), b.dm(), atol=1e-12)


def test_reorder_permutes_tensor_factors():
    a = fock.ket(_q("a"), ["L"])
    b = fock.ket(_q("b"), ["R"])
    ab = fock.tensor(a, b)
    ba = fock.reorder(ab, ["b", "a"])
    assert np.allclose(ba.dm(), fock.tensor(b, a).dm())


# ---------------------------------------------------------------- fidelity

def test_fidelity_examples():
    phi = fock.bell_state(("a", "b"), "phi+")
    assert fock.fidelity(phi, phi) == pytest.approx(1, abs=1e-12)
    w = fock.mixture([phi.as_mixed(), fock.maximally_mixed(phi.modeset)], [0.8, 0.2])
    assert fock.fidelity(w, phi) == pytest.approx(0.85, abs=1e-12)
    lr = fock.ket(_q("a", "b"), ["L", "R"])
    assert fock.fidelity(lr, fock.bell_state(("a", "b"), "psi+")) == pytest.approx(0.5, abs=1e-12)


def test_werner_hits_requested_fidelity():
    phi = fock.bell_state(("a", "b"))
    for f in (0.25, 0.5, 0.9423, 1.0):
        assert fock.fidelity(fock.werner(phi, f), phi) == pytest.approx(f, abs=1e-12)
    with pytest.raises(StateError):
        fock.werner(phi, 0.1)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 2 * math.pi), st.integers(0, 2**32 - 1))
def test_fidelity_phase_invariant_and_linear(lam, phase, seed):
    rng = np.random.default_rng(seed)
    ms = _q("a", "b")
    t = JointState(ms, vec=_random_pure(4, rng))
    t2 = JointState(ms, vec=t.vec * np.exp(1j * phase))
    r1 = JointState(ms, rho=_random_rho(4, rng))
    r2 = JointState(ms, rho=_random_rho(4, rng))
    mix = fock.mixture([r1, r2], [lam, 1 - lam])
    assert fock.fidelity(r1, t) == pytest.approx(fock.fidelity(r1, t2), abs=1e-12)
    assert fock.fidelity(mix, t) == pytest.approx(
        lam * fock.fidelity(r1, t) + (1 - lam) * fock.fidelity(r2, t), abs=1e-12)


def test_depolarize_limits():
    phi = fock.bell_state(("a", "b"))
    assert np.allclose(fock.depolarize(phi, "b", 1.0).dm(), phi.dm())
    r = fock.depolarize(phi, "b", 0.0)
    assert np.allclose(r.dm(), np.eye(4) / 4)


def test_beamsplitter_hong_ou_mandel():
    # |1,1> on a balanced splitter never leaves one photon per port
    ms = ModeSet((fock.fock("a", 2), fock.fock("b", 2)))
    out = fock.beamsplitter(fock.ket(ms, [1, 1]), "a", "b", 0.5)
    p11 = out.dm()[4, 4].real
    assert p11 == pytest.approx(0, abs=1e-12)
    assert out.dm()[2, 2].real == pytest.approx(0.5, abs=1e-12)


def test_tolerances_override():
    old = fock.TOL
    try:
        fock.set_tolerances(truncation=1e-2)
        SourceParams(0.1, 2)
    finally:
        fock.set_tolerances(old.algebraic, old.truncation)
    with pytest.raises(TruncationError):
        SourceParams(0.1, 2)
