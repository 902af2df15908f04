import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hierrecon.base_forecast import (
    BaseModelSpec,
    ForecastPanel,
    _fit_ar_ls,
    fit_forecast,
    forecast_panel,
    load_external_forecasts,
    rolling_one_step,
    rolling_residuals,
    write_forecasts,
    write_rolling_records,
)
from hierrecon.errors import ConfigError, InsufficientHistory, MissingNode, NonNumericValue, RaggedHorizon, UnknownNode
from hierrecon.hierarchy import SeriesPanel
from hierrecon.metrics import mase

NAIVE = BaseModelSpec("seasonal_naive")
AR1 = BaseModelSpec("ar_ls", order=1, intercept=False)


def test_seasonal_naive_repeats_last_season():
    fc = fit_forecast(NAIVE, [1, 2, 3, 4, 10, 20, 30, 40], 4, s=4)
    np.testing.assert_array_equal(fc.values, [10, 20, 30, 40])
    assert not fc.fallback


def test_ar1_noiseless_recursion():
    y = 64 * 0.5 ** np.arange(6)  # ..., 4, 2
    np.testing.assert_allclose(_fit_ar_ls(y, AR1, 1), [0.5], atol=1e-12)
    np.testing.assert_allclose(fit_forecast(AR1, y, 2).values, [1.0, 0.5], atol=1e-12)


@pytest.mark.parametrize("spec", [BaseModelSpec("ar_ls", 1), BaseModelSpec("ar_ls", 2, seasonal_dummies=True),
                                  NAIVE])
def test_constant_series_is_fixed_point(spec):
    fc = fit_forecast(spec, np.full(20, 7.5), 5, s=4)
    np.testing.assert_allclose(fc.values, 7.5, atol=1e-12)


@pytest.mark.parametrize("q", [1, 2, 3])
def test_ar_recovers_exact_coefficients(q):
    coefs = {1: [0.7], 2: [0.5, -0.3], 3: [0.4, 0.2, -0.25]}[q]
    rng = np.random.default_rng(q)
    # a pure decay is ill-conditioned, so the recursion carries a constant drive
    y = list(rng.normal(size=q))
    for t in range(80):
        y.append(sum(c * y[-1 - i] for i, c in enumerate(coefs)) + 3.0)
    spec = BaseModelSpec("ar_ls", q, intercept=True)
    beta = _fit_ar_ls(np.array(y), spec, 1)
    np.testing.assert_allclose(beta[:q], coefs, atol=1e-8)
    np.testing.assert_allclose(beta[q], 3.0, atol=1e-8)


def test_insufficient_history():
    with pytest.raises(InsufficientHistory):
        fit_forecast(BaseModelSpec("ar_ls", 3), [1.0, 2.0, 3.0, 4.0], 1)
    with pytest.raises(InsufficientHistory):
        fit_forecast(NAIVE, [1.0] * 7, 1, s=4)


def test_spec_validation():
    with pytest.raises(ConfigError):
        BaseModelSpec("arima")
    with pytest.raises(ConfigError):
        BaseModelSpec("ar_ls_exog")
    with pytest.raises(ConfigError):
        BaseModelSpec("ar_ls", order=-1)


def test_exogenous_regressor_is_used():
    rng = np.random.default_rng(3)
    x = rng.normal(size=42)
    y = 2.0 * x[:40] + 1.0
    spec = BaseModelSpec("ar_ls_exog", order=0, regressor="x")
    fc = fit_forecast(spec, y, 2, x=x[:40], x_future=x[40:])
    np.testing.assert_allclose(fc.values, 2.0 * x[40:] + 1.0, atol=1e-9)


def test_singular_design_falls_back_and_flags():
    # without intercept, a zero series gives an all-zero lag column
    y = np.zeros(12)
    y[-4:] = [1, 2, 3, 4]
    spec = BaseModelSpec("ar_ls", order=0, intercept=False, seasonal_dummies=False)
    fc = fit_forecast(spec, y, 4, s=4)
    assert fc.fallback
    np.testing.assert_array_equal(fc.values, [1, 2, 3, 4])


def test_rolling_counts_and_targets(fig1):
    panel = SeriesPanel(fig1, fig1.S @ np.arange(40.0).reshape(4, 10), 1)
    recs = rolling_one_step(NAIVE, panel, 6, 9)
    assert [r.origin for r in recs] == [6, 7, 8, 9]
    assert [r.target_time for r in recs] == [7, 8, 9, 10]


def test_rolling_seasonal_naive_values(fig1_panel):
    s = fig1_panel.s
    recs = rolling_one_step(NAIVE, fig1_panel, 10, 30)
    for r in recs:
        np.testing.assert_array_equal(r.forecasts, fig1_panel.values[:, r.origin - s])
        np.testing.assert_array_equal(r.actual_bottom, fig1_panel.values[3:, r.origin])


def test_rolling_matches_plain_refit_loop(fig1_panel):
    spec = BaseModelSpec("ar_ls", 2, seasonal_dummies=True)
    recs = rolling_one_step(spec, fig1_panel, 12, 40)
    for r in recs:
        expected = [fit_forecast(spec, fig1_panel.values[i, :r.origin], 1, 4).values[0] for i in range(7)]
        np.testing.assert_array_equal(r.forecasts, expected)


def test_rolling_worker_count_invariance(fig1_panel):
    spec = BaseModelSpec("ar_ls", 1)
    a = rolling_one_step(spec, fig1_panel, 12, 40, workers=1)
    b = rolling_one_step(spec, fig1_panel, 12, 40, workers=3)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.forecasts, rb.forecasts)


@given(st.integers(12, 46), st.integers(0, 10_000))
def test_no_leakage_under_future_mutation(p, seed):
    from conftest import FIG1_EDGES
    from hierrecon.hierarchy import build_hierarchy

    h = build_hierarchy(FIG1_EDGES)
    rng = np.random.default_rng(seed)
    bottom = rng.uniform(5, 10, (4, 48))
    panel = SeriesPanel(h, h.S @ bottom, 4)
    bottom2 = bottom.copy()
    bottom2[:, p + 1:] += rng.normal(0, 50, (4, 47 - p))
    panel2 = SeriesPanel(h, h.S @ bottom2, 4)
    spec = BaseModelSpec("ar_ls", 2, seasonal_dummies=True)
    a = rolling_one_step(spec, panel, 12, p)
    b = rolling_one_step(spec, panel2, 12, p)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.forecasts, rb.forecasts)
        np.testing.assert_array_equal(ra.actual_bottom, rb.actual_bottom)


def test_naive_errors_equal_mase_denominator_terms(fig1_panel):
    s = fig1_panel.s
    recs = rolling_one_step(NAIVE, fig1_panel, 2 * s, fig1_panel.n - 1)
    R = rolling_residuals(recs, fig1_panel.hierarchy.S)
    y = fig1_panel.values
    np.testing.assert_allclose(R, y[:, 2 * s:] - y[:, s:-s], atol=1e-12)
    # hence naive forecasts over a window score MASE = (n - s)/h * sum|d_window| / sum|d_all|
    row = y[0]
    d = np.abs(row[s:] - row[:-s])
    assert mase(row[2 * s:], row[s:-s], row, s) == pytest.approx((len(row) - s) / (len(row) - 2 * s) * d[s:].sum() / d.sum())


def test_forecast_panel_shape_and_fallback_flags(fig1_panel):
    fc = forecast_panel(NAIVE, fig1_panel, 40, 4)
    assert fc.values.shape == (7, 4) and fc.h == 4 and fc.origin == 40 and fc.fallback == ()


def test_forecast_csv_round_trip_is_exact(tmp_path, fig1, fig1_panel):
    fc = forecast_panel(BaseModelSpec("ar_ls", 2), fig1_panel, 48, 12)
    write_forecasts(fc, tmp_path / "f.csv")
    back = load_external_forecasts(tmp_path / "f.csv", fig1, 48)
    assert back.values.shape == (7, 12)
    np.testing.assert_array_equal(back.values, fc.values)
    assert back.values.tobytes() == fc.values.tobytes()


def _external(tmp_path, rows):
    path = tmp_path / "ext.csv"
    path.write_text("node_id,step,value\n" + "\n".join(rows) + "\n")
    return path


def test_external_forecast_validation(tmp_path, fig1):
    full = [f"{n},{j},1.0" for n in fig1.ids for j in (1, 2)]
    with pytest.raises(MissingNode, match="BB"):
        load_external_forecasts(_external(tmp_path, [r for r in full if not r.startswith("BB,")]), fig1)
    with pytest.raises(UnknownNode, match="ZZ"):
        load_external_forecasts(_external(tmp_path, full + ["ZZ,1,1.0"]), fig1)
    with pytest.raises(RaggedHorizon):
        load_external_forecasts(_external(tmp_path, [r for r in full if r != "A,2,1.0"]), fig1)
    with pytest.raises(NonNumericValue):
        load_external_forecasts(_external(tmp_path, [r.replace("1.0", "abc") for r in full]), fig1)


def test_rolling_records_csv(tmp_path, fig1_panel):
    recs = rolling_one_step(NAIVE, fig1_panel, 40, 41)
    write_rolling_records(recs, fig1_panel.hierarchy, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "origin,node_id,forecast,actual"
    assert len(lines) == 1 + 2 * 7
    assert lines[1].startswith("40,T,") and lines[1].endswith(",")
    assert not lines[4].endswith(",")


def test_forecast_panel_rejects_nonfinite():
    with pytest.raises(Exception):
        ForecastPanel(("a",), np.array([[np.nan]]))
