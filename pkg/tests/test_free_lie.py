import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypopath.free_lie import (
    LieElement,
    NotLieError,
    bch,
    build_basis,
    from_tensor,
    group_product,
    homogeneous_dimension,
    is_lyndon,
    lie_bracket,
    lyndon_words,
    standard_factorization,
    tensor_generator,
    to_tensor,
    witt_dimension,
)
from hypopath.signature_paths import signature_of_increments
from hypopath.tensor_algebra import AlgebraError, TruncatedTensor, hs_norm, tensor_log


def mobius(n):
    """Independent Moebius function by trial division."""
    out, p = 1, 2
    while p * p <= n:
        if n % p == 0:
            n //= p
            if n % p == 0:
                return 0
            out = -out
        p += 1
    return -out if n > 1 else out


def necklace_count(d, k):
    return sum(mobius(j) * d ** (k // j) for j in range(1, k + 1) if k % j == 0) // k


def brute_lyndon(d, k):
    """Words strictly smaller than all their proper rotations."""
    out = []
    for w in itertools.product(range(1, d + 1), repeat=k):
        if all(w < w[i:] + w[:i] for i in range(1, k)):
            out.append(w)
    return out


def commutator(a, b):
    return a @ b - b @ a


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_lyndon_counts_match_necklace_formula(d):
    words = lyndon_words(d, 6)
    for k in range(1, 7):
        assert sum(len(w) == k for w in words) == necklace_count(d, k) == witt_dimension(d, k)


def test_lyndon_words_match_brute_force():
    words = lyndon_words(3, 5)
    for k in range(1, 6):
        assert [w for w in words if len(w) == k] == brute_lyndon(3, k)
    assert all(is_lyndon(w) for w in words)
    assert not is_lyndon((2, 1)) and not is_lyndon((1, 1))


def test_known_dimensions():
    # free Lie algebra on two letters: 2, 1, 2, 3, 6, 9
    assert [witt_dimension(2, k) for k in range(1, 7)] == [2, 1, 2, 3, 6, 9]
    b = build_basis(2, 4)
    assert b.dims == [2, 1, 2, 3]
    assert b.nu == 1 * 2 + 2 * 1 + 3 * 2 + 4 * 3 == homogeneous_dimension(2, 4)
    assert build_basis(3, 2).nu == 3 + 2 * 3


def test_standard_factorization_and_labels():
    assert standard_factorization((1, 1, 2)) == ((1,), (1, 2))
    assert standard_factorization((1, 2, 2)) == ((1, 2), (2,))
    assert standard_factorization((1, 1, 2, 1, 2)) == ((1, 1, 2), (1, 2))
    b = build_basis(2, 3)
    assert b.brackets[1] == ("[1,2]",)
    assert b.brackets[2] == ("[1,[1,2]]", "[[1,2],2]")


def test_basis_tensors_are_brackets():
    b = build_basis(2, 3)
    e1 = TruncatedTensor.from_words(2, 3, {(1,): 1.0})
    e2 = TruncatedTensor.from_words(2, 3, {(2,): 1.0})
    e12 = commutator(e1, e2)
    assert np.array_equal(to_tensor(LieElement.generator(b, (1, 2))).flat(), e12.flat())
    assert np.array_equal(to_tensor(LieElement.generator(b, (1, 1, 2))).flat(), commutator(e1, e12).flat())
    assert np.array_equal(to_tensor(LieElement.generator(b, (1, 2, 2))).flat(), commutator(e12, e2).flat())


def test_gram_is_hs_inner_product():
    b = build_basis(3, 3)
    rng = np.random.default_rng(0)
    u = LieElement(b, rng.normal(size=b.dim))
    assert u.norm() == pytest.approx(float(hs_norm(to_tensor(u))), rel=1e-13)
    # [1,2] expands to e12 - e21
    assert b.gram()[3, 3] == pytest.approx(2.0)


def test_bch_low_order_terms():
    # log(e^X e^Y) = X + Y + [X,Y]/2 + ([X,[X,Y]] - [Y,[X,Y]])/12 - [Y,[X,[X,Y]]]/24 + ...
    b = build_basis(2, 4)
    X, Y = LieElement.generator(b, (1,)) * 0.7, LieElement.generator(b, (2,)) * -0.4
    tX, tY = to_tensor(X), to_tensor(Y)
    XY = commutator(tX, tY)
    ref = tX + tY + XY * 0.5 + (commutator(tX, XY) - commutator(tY, XY)) * (1 / 12) - commutator(tY, commutator(tX, XY)) * (1 / 24)
    assert np.allclose(to_tensor(bch(X, Y)).flat(), ref.flat(), atol=1e-15)
    assert np.allclose(bch(LieElement.generator(b, (1,)), LieElement.generator(b, (2,))).coords[:3], [1, 1, 0.5])


def test_group_product_convention():
    b = build_basis(2, 3)
    rng = np.random.default_rng(1)
    u, v = LieElement(b, rng.normal(size=b.dim)), LieElement(b, rng.normal(size=b.dim))
    assert np.array_equal(group_product(u, v).coords, bch(v, u).coords)


def test_from_tensor_rejects_non_lie():
    b = build_basis(2, 3)
    t = TruncatedTensor.from_words(2, 3, {(1, 1): 1.0})
    with pytest.raises(NotLieError, match="not a Lie element"):
        from_tensor(t, b)
    with pytest.raises(NotLieError):
        from_tensor(TruncatedTensor.unit(2, 3), b)
    with pytest.raises(AlgebraError):
        build_basis(0, 3)
    with pytest.raises(AlgebraError, match="cap"):
        build_basis(4, 6, max_dim=100)


def test_log_signature_is_lie():
    rng = np.random.default_rng(2)
    b = build_basis(3, 4)
    g = signature_of_increments(rng.normal(size=(20, 6, 3)), 4)
    u = from_tensor(tensor_log(g), b)
    assert np.max(np.abs(to_tensor(u).flat() - tensor_log(g).flat())) < 1e-12


def test_tensor_generator_right_nesting():
    e = [TruncatedTensor.from_words(2, 4, {(i,): 1.0}) for i in (1, 2)]
    ref = commutator(e[1], commutator(e[0], commutator(e[0], e[1])))
    assert np.array_equal(tensor_generator(2, 4, (2, 1, 1, 2)).flat(), ref.flat())


def test_json_round_trip():
    b = build_basis(2, 3)
    u = LieElement(b, np.arange(b.dim, dtype=float))
    back = LieElement.from_json(u.to_json())
    assert np.array_equal(back.coords, u.coords)
    assert b.to_json()["bracketings"][2] == ["[1,[1,2]]", "[[1,2],2]"]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 3), st.integers(2, 5), st.integers(0, 2**31))
def test_bch_associative(d, l, seed):
    rng = np.random.default_rng(seed)
    b = build_basis(d, l)
    u, v, w = (LieElement(b, rng.normal(size=b.dim) * 0.4) for _ in range(3))
    assert np.max(np.abs(bch(bch(u, v), w).coords - bch(u, bch(v, w)).coords)) < 1e-11


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**31), st.floats(0.1, 4.0))
def test_dilation_commutes_with_bch_and_bracket(d, l, seed, lam):
    rng = np.random.default_rng(seed)
    b = build_basis(d, l)
    u, v = LieElement(b, rng.normal(size=b.dim)), LieElement(b, rng.normal(size=b.dim))
    scale = max(1.0, lam**l)
    assert np.allclose(bch(u, v).dilate(lam).coords, bch(u.dilate(lam), v.dilate(lam)).coords, atol=1e-11 * scale)
    assert np.allclose(lie_bracket(u, v).dilate(lam).coords,
                       lie_bracket(u.dilate(lam), v.dilate(lam)).coords, atol=1e-11 * scale)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 3), st.integers(2, 4), st.integers(0, 2**31))
def test_jacobi_identity(d, l, seed):
    rng = np.random.default_rng(seed)
    b = build_basis(d, l)
    x, y, z = (LieElement(b, rng.normal(size=b.dim)) for _ in range(3))
    s = lie_bracket(x, lie_bracket(y, z)) + lie_bracket(y, lie_bracket(z, x)) + lie_bracket(z, lie_bracket(x, y))
    assert np.max(np.abs(s.coords)) < 1e-11
