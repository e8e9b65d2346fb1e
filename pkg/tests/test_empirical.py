import io
import random

import numpy as np
import pytest

from hcinfer.cascade import BaselineModel, SpreadParams
from hcinfer.empirical import (
    NON_ANNOUNCEMENT,
    PRE_ANNOUNCEMENT,
    CalendarError,
    EmpiricalConfig,
    MarketCalendar,
    SplitError,
    TradeMatrix,
    TradeRecord,
    build_trade_matrix,
    estimate_baselines,
    gt_features_from_trades,
    infer_company,
    read_calendar,
    read_trades,
    synth_baselines,
    synth_calendar,
    synth_trades,
    write_calendar,
    write_trades,
)
from hcinfer.features import EXTENDED, reduced_summary
from hcinfer.graph import SeedSchedule, gen_barabasi_albert


def flat_calendar(n_days=20, price=10.0, announcements=()):
    return MarketCalendar(np.arange(n_days), np.full(n_days, price), frozenset(announcements))


@pytest.fixture(scope="module")
def surrogate():
    g = gen_barabasi_albert(40, 2, 0)
    seeds = SeedSchedule.staggered([0, 1])
    cal = synth_calendar(30, seed=2)
    base = synth_baselines(40, seed=2)
    st = synth_trades(g, seeds, SpreadParams(0.5, 0.6), SpreadParams(0.1, 0.6), cal, base, seed=5)
    return g, seeds, cal, base, st


def test_baseline_counts_example():
    cal = flat_calendar(105)
    trades = [TradeRecord(0, d, 9.0) for d in (0, 1)] + [TradeRecord(0, d, 11.0) for d in (2, 3, 4)]
    trades.append(TradeRecord(1, 50, 9.0))
    b = estimate_baselines(trades, cal, investors=3)
    np.testing.assert_allclose(b.probs[0], [0.95, 0.02, 0.03])
    assert b.probs[2].tolist() == [1.0, 0.0, 0.0]
    assert np.all(np.abs(b.probs.sum(axis=1) - 1.0) <= 1e-12)


def test_baselines_ignore_trade_order(surrogate):
    _, _, cal, _, st = surrogate
    shuffled = list(st.trades)
    random.Random(0).shuffle(shuffled)
    a = estimate_baselines(st.trades, cal, 40)
    b = estimate_baselines(shuffled, cal, 40)
    assert np.array_equal(a.probs, b.probs)


def test_baselines_need_lookahead():
    with pytest.raises(CalendarError):
        estimate_baselines([], flat_calendar(4), investors=1)


def test_profitability_encoding():
    prices = np.full(12, 10.0)
    prices[6] = 12.0
    cal = MarketCalendar(np.arange(12), prices, frozenset())
    m = build_trade_matrix([TradeRecord(0, 1, 10.0), TradeRecord(1, 2, 10.0)], cal, 2, NON_ANNOUNCEMENT)
    col = {d: i for i, d in enumerate(m.days)}
    assert m.values[0, col[1]] == 1  # 10 < 12 five days later
    assert m.values[1, col[2]] == -1  # 10 vs 10 is not a profit


def test_pre_announcement_window_rules():
    prices = np.full(20, 10.0)
    prices[11] = 11.0
    cal = MarketCalendar(np.arange(20), prices, frozenset({10}))
    trades = [
        TradeRecord(0, 6, 10.5), TradeRecord(0, 8, 10.8), TradeRecord(0, 8, 10.0),  # last day 8, mean 10.4
        TradeRecord(1, 3, 9.0),  # outside the 4-day window
        TradeRecord(2, 9, 12.0),
        TradeRecord(3, 10, 5.0),  # announcement day itself
    ]
    m = build_trade_matrix(trades, cal, 4, PRE_ANNOUNCEMENT)
    assert m.days == [10]
    assert m.values[:, 0].tolist() == [1, 0, -1, 0]


def test_announcement_days_excluded_from_quiet_columns():
    cal = flat_calendar(30, announcements={10})
    m = build_trade_matrix([], cal, 1, NON_ANNOUNCEMENT)
    assert not set(m.days) & {6, 7, 8, 9, 10}
    assert m.dropped == 5


def test_columns_without_lookahead_are_dropped():
    cal = flat_calendar(12, announcements={5, 11})
    m = build_trade_matrix([], cal, 1, PRE_ANNOUNCEMENT)
    assert m.days == [5] and m.dropped == 1


def test_trade_on_unknown_day_rejected():
    with pytest.raises(CalendarError):
        build_trade_matrix([TradeRecord(0, 99, 1.0)], flat_calendar(10), 1, NON_ANNOUNCEMENT)


def test_matrix_alphabet_enforced():
    with pytest.raises(ValueError):
        TradeMatrix(np.array([[2]]), [0], NON_ANNOUNCEMENT)


def test_calendar_validation():
    with pytest.raises(CalendarError):
        MarketCalendar(np.array([0, 0]), np.array([1.0, 1.0]))
    with pytest.raises(CalendarError):
        MarketCalendar(np.arange(3), np.array([1.0, -1.0, 1.0]))
    with pytest.raises(CalendarError):
        MarketCalendar(np.arange(3), np.ones(3), frozenset({7}))


def test_bootstrap_zero_matrix():
    m = TradeMatrix(np.zeros((3, 10), np.int8), list(range(10)), NON_ANNOUNCEMENT)
    train, test = gt_features_from_trades(m, 5, 4, seed=1)
    assert np.all(train.values == [0, 0, 1]) and np.all(test.values == [0, 0, 1])
    assert train.m + test.m == 5


def test_bootstrap_exhaustive_sample_equals_direct_summary():
    vals = np.random.default_rng(0).choice([-1, 0, 1], size=(4, 10)).astype(np.int8)
    m = TradeMatrix(vals, list(range(10)), PRE_ANNOUNCEMENT)
    train, test = gt_features_from_trades(m, 1, 6, seed=3, replace=False)
    assert test.m == 0
    assert np.allclose(train.values[:, 0], reduced_summary(vals[:, :6]))


def test_bootstrap_ranges_disjoint():
    # column j holds +1 only for investor j, so each feature row reveals its columns
    n = 10
    m = TradeMatrix(np.eye(n, dtype=np.int8), list(range(n)), NON_ANNOUNCEMENT)
    train, test = gt_features_from_trades(m, 20, 3, seed=2)
    n1 = 6
    assert np.all(train.values[n1:, :, 0] == 0)
    assert np.all(test.values[:n1, :, 0] == 0)


def test_bootstrap_split_errors():
    m = TradeMatrix(np.zeros((2, 1), np.int8), [0], NON_ANNOUNCEMENT)
    with pytest.raises(SplitError):
        gt_features_from_trades(m, 5)
    m = TradeMatrix(np.zeros((2, 10), np.int8), list(range(10)), NON_ANNOUNCEMENT)
    with pytest.raises(SplitError):
        gt_features_from_trades(m, 5, 7, replace=False)


def test_bootstrap_extended_kind():
    m = TradeMatrix(np.zeros((2, 10), np.int8), list(range(10)), NON_ANNOUNCEMENT)
    train, _ = gt_features_from_trades(m, 5, 4, kind=EXTENDED)
    assert train.d == 9


def test_surrogate_round_trip(surrogate):
    g, _, cal, _, st = surrogate
    pre = build_trade_matrix(st.trades, cal, g.node_count, PRE_ANNOUNCEMENT)
    non = build_trade_matrix(st.trades, cal, g.node_count, NON_ANNOUNCEMENT)
    assert np.array_equal(pre.values, st.planted_pre)
    assert np.array_equal(non.values, st.planted_non)


def test_surrogate_silent_when_nothing_spreads():
    g = gen_barabasi_albert(20, 2, 0)
    cal = synth_calendar(5, seed=0)
    quiet = BaselineModel(np.tile([1.0, 0.0, 0.0], (20, 1)))
    st = synth_trades(g, SeedSchedule.single(0), SpreadParams(0, 0), SpreadParams(0, 0), cal, quiet)
    assert st.trades == []


def test_surrogate_baselines_in_sparse_regime():
    b = synth_baselines(500, seed=1)
    assert 3e-3 <= b.b1.mean() <= 7e-3
    assert 3e-3 <= b.b2.mean() <= 7e-3


def test_surrogate_insiders_trade_more_before_announcements(surrogate):
    g, seeds, cal, _, st = surrogate
    pre = build_trade_matrix(st.trades, cal, g.node_count, PRE_ANNOUNCEMENT)
    non = build_trade_matrix(st.trades, cal, g.node_count, NON_ANNOUNCEMENT)
    a, _ = gt_features_from_trades(pre, 30, seed=1)
    n, _ = gt_features_from_trades(non, 30, seed=1)
    insiders = [v for v in range(g.node_count) if v in g.out_adjacency[0] or v in g.out_adjacency[1]]
    assert a.values[insiders, :, 0].mean() >= 2 * n.values[insiders, :, 0].mean()


def test_file_round_trips(surrogate):
    _, _, cal, _, st = surrogate
    buf = io.StringIO()
    write_trades(st.trades[:50], buf)
    assert read_trades(io.StringIO(buf.getvalue())) == st.trades[:50]
    buf = io.StringIO()
    write_calendar(cal, buf)
    back = read_calendar(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.days, cal.days) and np.array_equal(back.prices, cal.prices)
    assert back.announcements == cal.announcements
    with pytest.raises(ValueError):
        read_trades(io.StringIO("who,when,what\n"))
    with pytest.raises(CalendarError):
        read_calendar(io.StringIO("day,market_price,is_announcement\n1,2.0,3\n"))


def test_infer_company_identical_windows_small():
    g = gen_barabasi_albert(30, 2, 1)
    seeds = SeedSchedule.staggered([0, 1])
    cal = synth_calendar(40, seed=3)
    base = synth_baselines(30, seed=3)
    theta = SpreadParams(0.4, 0.6)
    st = synth_trades(g, seeds, theta, theta, cal, base, seed=4)
    res = infer_company(st.trades, cal, g, seeds, EmpiricalConfig(bootstrap=30, tune=False), base)
    assert abs(res.announcement.theta_hat.p - res.non_announcement.theta_hat.p) <= 0.1
    d = res.to_dict()
    assert {"p_ratio", "q_ratio", "baseline_mean"} <= set(d)


def test_estimated_baselines_absorb_quiet_spreading(surrogate):
    # the quiet-period marginals are exactly what the estimated baselines encode,
    # so spreading on quiet days is explained away and p_n collapses toward 0
    g, seeds, cal, _, st = surrogate
    res = infer_company(st.trades, cal, g, seeds, EmpiricalConfig(bootstrap=30, tune=False))
    assert res.non_announcement.theta_hat.p < 0.1
