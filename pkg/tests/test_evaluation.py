import json

import numpy as np
import pytest

from hierrecon.base_forecast import BaseModelSpec, forecast_panel
from hierrecon.errors import ConfigInfeasible
from hierrecon.evaluation import (
    CustomMethod,
    EvalConfig,
    EvalReport,
    read_report_csv,
    render_table,
    rolling_origin_evaluate,
    write_report,
    write_report_files,
)
from hierrecon.hierarchy import SeriesPanel
from hierrecon.methods import METHODS, MethodOptions, apply_method
from hierrecon.metrics import amse, mase, rmsse
from hierrecon.synthetic import nonlinear_panel

SPEC = BaseModelSpec("ar_ls", 1, seasonal_dummies=True)


@pytest.fixture(scope="module")
def panel():
    return nonlinear_panel(3, n=60, s=4)


def test_tourism_and_sales_arithmetic():
    tourism = EvalConfig.for_length(240, 168, 12, 12)
    assert tourism.K == 61 and tourism.N + tourism.h + tourism.K - 1 == 240
    sales = EvalConfig.for_length(120, 52, 8, 4)
    assert sales.K == 61 and sales.N + sales.h + sales.K - 1 == 120
    assert list(tourism.origins) == list(range(168, 229))


@pytest.mark.parametrize("kwargs,fragment", [
    (dict(N=168, h=12, K=62), "N + h + K - 1 <= n"),
    (dict(N=240, h=12, K=None), "K >= 1"),
    (dict(N=168, h=12, K=None, p_start=200), "p_start < N"),
    (dict(N=20, h=12, K=None, s=12), "N > 2s"),
])
def test_infeasible_configs_name_the_inequality(kwargs, fragment):
    with pytest.raises(ConfigInfeasible, match=fragment.replace("+", r"\+")):
        EvalConfig.for_length(240, **kwargs)


def test_single_origin_matches_direct_split(panel):
    N, h = 50, 6
    cfg = EvalConfig(N, h, 1, panel.s)
    report = rolling_origin_evaluate(panel, ["bu"], cfg, SPEC)
    base = forecast_panel(SPEC, panel, N, h)
    fc = apply_method("bu", panel.head(N), base).values
    hier = panel.hierarchy
    for lv in range(hier.k + 1):
        for name, fn in (("mase", mase), ("rmsse", rmsse), ("amse", amse)):
            expected = np.mean([fn(panel.values[i, N:N + h], fc[i], panel.values[i, :N], panel.s)
                                for i in hier.level_indices(lv)])
            assert report.scores[("bu", lv, name)] == pytest.approx(expected, abs=1e-14)
    assert report.metadata["K"] == 1


def test_all_methods_run_and_report_is_consistent(panel):
    cfg = EvalConfig(44, 4, 3, panel.s, p_start=24)
    opts = MethodOptions(hp=MethodOptions().hp.__class__(ntree=5, nrounds=5, nodesize=3))
    report = rolling_origin_evaluate(panel, list(METHODS), cfg, SPEC, seed=2, opts=opts)
    assert report.methods == list(METHODS)
    assert report.metadata["failures"] == [] and report.metadata["incoherent"] == []
    for (method, metric), avg in report.averages.items():
        assert avg == pytest.approx(np.mean([report.scores[(method, lv, metric)] for lv in report.levels]))
    for key, v in report.scores.items():
        assert v >= 0
        if key[2] == "mase":
            assert report.scores[(key[0], key[1], "amse")] <= v + 1e-12
    # top-down leaves the top untouched
    for metric in ("mase", "rmsse", "amse"):
        assert report.scores[("td-td1", 0, metric)] == pytest.approx(report.scores[("base", 0, metric)], rel=1e-12)


def test_perfect_method_scores_zero(panel):
    cfg = EvalConfig(40, 4, 3, panel.s)
    oracle = CustomMethod("oracle", lambda ctx: panel.values[:, ctx.origin:ctx.origin + 4])
    report = rolling_origin_evaluate(panel, [oracle], cfg, SPEC)
    assert set(report.scores.values()) == {0.0}


def test_failures_are_isolated(panel):
    def boom(ctx):
        from hierrecon.errors import ComputationError
        raise ComputationError("nope")

    cfg = EvalConfig(40, 4, 2, panel.s)
    report = rolling_origin_evaluate(panel, ["bu", CustomMethod("boom", boom)], cfg, SPEC)
    assert len(report.metadata["failures"]) == 2
    assert ("bu", 0, "mase") in report.scores
    assert not any(k[0] == "boom" for k in report.scores)


def test_residual_methods_need_p_start(panel):
    with pytest.raises(ConfigInfeasible, match="p_start"):
        rolling_origin_evaluate(panel, ["mint-shrinkage"], EvalConfig(40, 4, 2, panel.s), SPEC)


def test_zero_scale_series_excluded_and_counted(fig1):
    t = np.arange(30)
    bottom = np.vstack([np.full(30, 5.0), 10 + np.sin(t), 10 + np.cos(t), 20 + 0.1 * t])
    panel = SeriesPanel(fig1, fig1.S @ bottom, 1)
    report = rolling_origin_evaluate(panel, ["bu"], EvalConfig(20, 3, 2, 1), BaseModelSpec("seasonal_naive"))
    excl = report.metadata["zero_scale_exclusions"]
    assert {"method": "bu", "level": 2, "metric": "mase", "count": 2} in excl


def test_refit_cadence_and_worker_invariance(panel):
    cfg = EvalConfig(44, 4, 4, panel.s, p_start=24)
    hp = MethodOptions().hp.__class__(ntree=4, nodesize=3)
    a = rolling_origin_evaluate(panel, ["ml-rf"], cfg, SPEC, 1, MethodOptions(hp=hp))
    b = rolling_origin_evaluate(panel, ["ml-rf"], cfg, SPEC, 1, MethodOptions(hp=hp), workers=2)
    c = rolling_origin_evaluate(panel, ["ml-rf"], cfg, SPEC, 1, MethodOptions(hp=hp, refit_every=2))
    assert a.scores == b.scores
    assert a.scores != c.scores


def test_report_files_round_trip_and_are_stable(tmp_path, panel):
    cfg = EvalConfig(40, 4, 2, panel.s)
    r1 = rolling_origin_evaluate(panel, ["bu", "td-td2"], cfg, SPEC)
    r2 = rolling_origin_evaluate(panel, ["bu", "td-td2"], cfg, SPEC)
    write_report_files(r1, tmp_path / "a")
    write_report_files(r2, tmp_path / "b")
    for name in ("report.csv", "report.txt", "per_origin.csv", "metadata.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert read_report_csv(tmp_path / "a" / "report.csv") == r1.scores
    meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
    assert set(meta) == {"config", "n", "K", "seed", "methods", "levels", "zero_scale_exclusions",
                         "failures", "incoherent", "base_fallbacks", "options"}


def test_report_row_order_and_single_level(tmp_path):
    report = EvalReport(["m1", "m2"], [0, 1], {
        (m, lv, mt): 1.0 for m in ("m1", "m2") for lv in (0, 1) for mt in ("mase", "rmsse", "amse")})
    rows = list(report.rows())
    assert [r[2] for r in rows[:4]] == ["mase"] * 4
    assert [(r[0], r[1]) for r in rows[:4]] == [("m1", 0), ("m1", 1), ("m2", 0), ("m2", 1)]
    one = EvalReport(["bu"], [0], {("bu", 0, mt): 0.5 for mt in ("mase", "rmsse", "amse")})
    write_report(one, tmp_path / "r.csv")
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 4
    assert "Average" in render_table(one)


def test_bu_only_report(panel):
    report = rolling_origin_evaluate(panel, ["bu"], EvalConfig(40, 4, 2, panel.s), SPEC)
    assert {k[0] for k in report.scores} == {"bu"}
