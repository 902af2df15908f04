import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hierrecon.reconcile import estimate_w, shrinkage_intensity
from hierrecon.synthetic import seven_node_hierarchy
from oracles import shrinkage_lambda_loop


def test_three_by_forty_standard_normal():
    R = np.random.default_rng(2024).standard_normal((3, 40))
    assert shrinkage_intensity(R)[0] == pytest.approx(shrinkage_lambda_loop(R), abs=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    m, T = int(rng.integers(2, 8)), int(rng.integers(5, 60))
    mix = rng.normal(size=(m, m))
    R = mix @ rng.standard_normal((m, T)) + rng.normal(0, 0.3, (m, 1))
    assert shrinkage_intensity(R)[0] == pytest.approx(shrinkage_lambda_loop(R), abs=1e-10)


def test_duplicated_rows_give_zero():
    row = np.random.default_rng(0).standard_normal(25)
    assert shrinkage_intensity(np.tile(row, (4, 1)))[0] == 0.0
    assert shrinkage_intensity(np.vstack([row, -2 * row, 3 * row]))[0] == 0.0


def test_independent_large_sample_near_one():
    R = np.random.default_rng(1).standard_normal((5, 20_000))
    assert shrinkage_intensity(R)[0] > 0.8


def test_zero_variance_series_excluded():
    R = np.random.default_rng(3).standard_normal((4, 30))
    R[2] = 0.0
    lam, excluded = shrinkage_intensity(R)
    assert excluded == (2,)
    assert lam == pytest.approx(shrinkage_lambda_loop(np.delete(R, 2, axis=0)), abs=1e-10)


def test_uncorrelated_denominator_zero_gives_one():
    R = np.array([[1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0]])
    assert shrinkage_intensity(R)[0] == 1.0


@given(arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(3, 30)),
              elements=st.floats(-100, 100, allow_nan=False, allow_subnormal=False)))
def test_lambda_in_unit_interval(R):
    lam, _ = shrinkage_intensity(R)
    assert 0.0 <= lam <= 1.0


def test_shrinkage_w_is_symmetric_psd_and_blended():
    h = seven_node_hierarchy()
    R = np.random.default_rng(9).standard_normal((7, 50))
    est = estimate_w("shrinkage", h, R)
    W1 = R @ R.T / 50
    lam = est.lam
    np.testing.assert_allclose(est.W, lam * np.diag(np.diag(W1)) + (1 - lam) * W1, atol=1e-14)
    assert np.max(np.abs(est.W - est.W.T)) <= 1e-12
    assert np.linalg.eigvalsh(est.W).min() >= -1e-12
