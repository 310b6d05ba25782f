import numpy as np
import pytest

from monotone_spde.space import ThomasFactor, TripleSpace, validate_assumptions


def test_eigen_identities(space64):
    sp = space64
    for k in (1, 2, 5, 32, 64):
        ek = sp.mode(k)
        assert sp.norm_H(ek) == pytest.approx(1.0, abs=1e-12)
        up = sp.apply_A(ek)
        lam = sp.lambdas[k - 1]
        assert np.max(np.abs(up - lam * ek)) <= 1e-10 * lam


def test_hand_stencil():
    sp = TripleSpace(3)
    assert sp.h == 0.25
    out = sp.apply_A(np.array([0.0, 1.0, 0.0]))
    assert np.allclose(out, 16.0 * np.array([-1.0, 2.0, -1.0]), atol=1e-12)
    assert np.allclose(sp.apply_A(np.zeros(3)), 0.0)


def test_norms_on_eigenvector(space64):
    sp = space64
    e1 = sp.mode(1)
    lam1 = sp.lambdas[0]
    assert sp.norm_V_sq(e1) == pytest.approx(lam1, rel=1e-12)
    assert sp.norm_Vdual(e1) ** 2 == pytest.approx(1.0 / lam1, rel=1e-10)
    assert sp.norm_H(np.zeros(64)) == 0.0
    assert sp.norm_V(np.zeros(64)) == 0.0
    assert sp.norm_Vdual(np.zeros(64)) == 0.0


def test_embedding_constant(space64, rng):
    sp = space64
    u = rng.standard_normal((1000, 64))
    assert np.all(sp.norm_H(u) <= sp.K_embed * sp.norm_V(u) * (1.0 + 1e-12))
    assert sp.K_embed == pytest.approx(sp.lambdas[0] ** -0.5, rel=1e-14)


def test_solve_shifted_eigen_and_small_delta(space64):
    sp = space64
    e1 = sp.mode(1)
    out = sp.solve_shifted(0.7, e1)
    assert np.max(np.abs(out - e1 / (1.0 + 0.7 * sp.lambdas[0]))) <= 1e-12
    f = sp.mode(2) + 0.5 * sp.mode(5)
    assert sp.norm_H(sp.solve_shifted(1e-6, f) - f) <= 1e-3 * sp.norm_H(f)
    with pytest.raises(ValueError):
        sp.solve_shifted(0.0, f)


def test_maximum_principle(space64, rng):
    sp = space64
    f = rng.uniform(0.0, 1.0, (2000, 64))
    for delta in (1e-3, 1e-1, 1.0, 10.0):
        g = sp.solve_shifted(delta, f)
        assert np.all(g >= 0.0) and np.all(g <= 1.0)
    one_node = np.zeros(64)
    one_node[13] = 1.0
    g = sp.solve_shifted(1.0, one_node)
    assert np.all(g >= 0.0) and np.all(g <= 1.0)


def test_l1_contraction(space64, rng):
    sp = space64
    f = rng.standard_normal((500, 64))
    for delta in (1e-3, 1.0):
        assert np.all(sp.norm_L1(sp.solve_shifted(delta, f))
                      <= sp.norm_L1(f) * (1.0 + 1e-13))


def test_coercivity_identity_and_symmetry(space64, rng):
    sp = space64
    u = rng.standard_normal((200, 64))
    u /= sp.norm_V(u)[:, None]
    assert np.max(np.abs(sp.inner_H(sp.apply_A(u), u) - 1.0)) <= 1e-12
    v = rng.standard_normal((200, 64))
    sym = sp.inner_H(sp.apply_A(u), v) - sp.inner_H(u, sp.apply_A(v))
    assert np.max(np.abs(sym)) <= 1e-11


def test_dense_inverse_matches_thomas(space64, rng):
    sp = space64
    W = sp.shifted_inverse_dense(1e-3)
    f = rng.standard_normal((50, 64))
    assert np.max(np.abs(f @ W - sp.solve_shifted(1e-3, f))) <= 1e-13


def test_thomas_factor_scalar_system():
    fac = ThomasFactor(diag=np.array([2.0, 2.0, 2.0]), off=-1.0)
    x = fac.solve(np.array([1.0, 0.0, 0.0]))
    A = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    assert np.allclose(A @ x, [1.0, 0.0, 0.0], atol=1e-14)


def test_validate_assumptions_passes(space64, rng):
    rep = validate_assumptions(space64, trials=100, rng=rng)
    assert rep.passed, rep.failures()
    assert {r[0] for r in rep.rows} >= {
        "space.coercivity_identity", "space.sub_markov",
        "space.l1_contraction", "space.ultracontractive_m1"}


def test_space_validation_errors():
    with pytest.raises(ValueError):
        TripleSpace(0)
    with pytest.raises(ValueError):
        TripleSpace(8, diffusivity=0.0)
    sp = TripleSpace(8)
    with pytest.raises(ValueError):
        sp.apply_A(np.zeros(5))
    with pytest.raises(ValueError):
        sp.mode(9)
