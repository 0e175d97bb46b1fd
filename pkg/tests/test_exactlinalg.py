import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bernsing.exactlinalg import (
    DegenerateNullspace,
    det_exact,
    det_exact_batch,
    rank_exact,
    smin,
    spectral_norm,
    unit_normal,
)
from bernsing.model import sample_bernoulli_batch
from bernsing.rng import RngSeed, generator
from oracles import cofactor_det, fraction_rank

int_matrices = st.integers(1, 6).flatmap(lambda n: arrays(np.int64, (n, n), elements=st.integers(-9, 9)))


def test_det_examples():
    assert det_exact(np.eye(4, dtype=int)) == 1
    assert det_exact([[1, 1], [1, 1]]) == 0
    assert det_exact(np.zeros((0, 0), dtype=int)) == 1


def test_det_sign_matrices_vs_cofactor():
    S = 2 * sample_bernoulli_batch(5, Fraction(1, 2), 200, RngSeed(1)) - 1
    for M in S:
        assert det_exact(M) == cofactor_det(M)
    assert list(det_exact_batch(S)) == [cofactor_det(M) for M in S]


def test_det_large_entries_use_bignums():
    M = np.array([[10**12, 3, 7], [5, 10**12, 1], [2, 9, 10**12]], dtype=object)
    assert det_exact(M) == cofactor_det(M)
    assert det_exact_batch(M[None])[0] == cofactor_det(M)


@settings(max_examples=150, deadline=None)
@given(int_matrices)
def test_det_matches_cofactor(M):
    assert det_exact(M) == cofactor_det(M)
    assert det_exact_batch(M[None])[0] == cofactor_det(M)


@settings(max_examples=100, deadline=None)
@given(int_matrices, st.data())
def test_det_invariances(M, data):
    n = M.shape[0]
    d = det_exact(M)
    assert det_exact(M.T) == d
    if n >= 2:
        i, j = data.draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True))
        P = M.copy()
        P[[i, j]] = P[[j, i]]
        assert det_exact(P) == -d
    c = data.draw(st.integers(0, n - 1))
    Q = M.copy()
    Q[:, c] *= -1
    assert det_exact(Q) == -d


def test_rank_examples():
    assert rank_exact(np.zeros((3, 3), dtype=int)) == 0
    assert rank_exact(np.eye(5, dtype=int)) == 5
    rng = generator(2)
    for _ in range(30):
        M = rng.integers(-5, 6, (3, 3))
        M[:, 2] = M[:, 0]
        r = rank_exact(M)
        assert r <= 2
        assert r == fraction_rank(M)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_rank_matches_fraction_oracle(r, c, data):
    M = data.draw(arrays(np.int64, (r, c), elements=st.integers(-3, 3)))
    assert rank_exact(M) == fraction_rank(M)


def test_unit_normal_examples():
    nv = unit_normal([[1, 1]])
    assert np.allclose(nv.coords, np.array([1, -1]) / math.sqrt(2), atol=1e-15)
    assert np.allclose(unit_normal([[1, 0, 0], [0, 1, 0]]).coords, [0, 0, 1])
    with pytest.raises(DegenerateNullspace) as e:
        unit_normal([[1, 1, 0], [1, 1, 0]])
    assert e.value.dim == 2


def test_unit_normal_residual_sweep():
    rng = generator(RngSeed(3, ("normals",)))
    done = 0
    while done < 1000:
        n = int(rng.integers(2, 51))
        cols = rng.integers(-1, 2, (n - 1, n))
        try:
            nv = unit_normal(cols)
        except DegenerateNullspace:
            assert rank_exact(cols) < n - 1
            continue
        done += 1
        maxcol = np.linalg.norm(cols, axis=1).max()
        assert abs(np.linalg.norm(nv.coords) - 1) <= 1e-12
        assert nv.residual <= 1e-9 * maxcol
        # the integer representative is exactly orthogonal
        ints = np.array(nv.integer, dtype=object)
        assert all(sum(int(a) * b for a, b in zip(col, ints)) == 0 for col in cols)
        assert nv.coords[np.nonzero(nv.coords)[0][0]] > 0


def test_smin_and_norm_examples():
    assert smin(np.eye(4)) == pytest.approx(1, rel=1e-12)
    assert smin(np.diag([1.0, 2.0])) == pytest.approx(1, rel=1e-12)
    assert spectral_norm(np.eye(3)) == pytest.approx(1, rel=1e-12)
    assert spectral_norm(np.ones((7, 7))) == pytest.approx(7, rel=1e-12)


def test_smin_zero_iff_singular():
    B = sample_bernoulli_batch(4, Fraction(1, 2), 2000, RngSeed(6))
    dets = det_exact_batch(B)
    for M, d in zip(B, dets):
        s, norm = smin(M), spectral_norm(M)
        if d == 0:
            assert s <= 1e-8 * max(norm, 1)
        else:
            assert s > 1e-8 * max(norm, 1)


def test_spectral_norm_centered(pinned):
    C = pinned["spectral_norm"]["C"]
    B = sample_bernoulli_batch(100, Fraction(1, 2), 100, RngSeed(7, ("spectral-test",)))
    for M in B:
        assert spectral_norm(M - 0.5) <= C * 10
