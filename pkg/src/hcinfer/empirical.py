"""Trade-data pipeline: baselines, trade matrices, bootstrap features, surrogate data.

Days are integer labels; "Δ days later" means Δ positions later in the
calendar's ordered day list.  The pre-announcement window of an
announcement is the ``WINDOW`` trading days right before it.  Event days
for the non-announcement mode are the trading days that are neither an
announcement nor inside any pre-announcement window.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from . import rng as rngmod
from .cascade import BaselineModel, SpreadParams, assign_symptoms, run_ic
from .classify import ClassifierSpec
from .features import OBSERVED, REDUCED, FeatureSet, stat_names, summarize
from .graph import Graph, SeedSchedule
from .optimize import DEFAULT_RESTART_CAP, InferenceResult, ObjectiveContext, infer
from .powell import PowellConfig

log = logging.getLogger(__name__)

PRE_ANNOUNCEMENT = "pre_announcement"
NON_ANNOUNCEMENT = "non_announcement"
MODES = (PRE_ANNOUNCEMENT, NON_ANNOUNCEMENT)

WINDOW = 4
DELTA_PRE = 1
DELTA_NON = 5
TRAIN_SHARE = 0.6
DEFAULT_SAMPLE_WIDTH = 20


class CalendarError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class TradeRecord:
    investor: int
    day: int
    price: float

    def __post_init__(self):
        if self.investor < 0:
            raise ValueError(f"investor id must be >= 0, got {self.investor}")
        if not self.price > 0:
            raise ValueError(f"trade price must be positive, got {self.price}")


@dataclass
class MarketCalendar:
    """Ordered trading days, the market price on each, and the announcement days."""

    days: np.ndarray
    prices: np.ndarray
    announcements: frozenset[int] = frozenset()

    def __post_init__(self):
        self.days = np.asarray(self.days, dtype=np.int64)
        self.prices = np.asarray(self.prices, dtype=float)
        self.announcements = frozenset(int(a) for a in self.announcements)
        if self.days.ndim != 1 or self.days.shape != self.prices.shape:
            raise CalendarError("days and prices must be 1-d and of equal length")
        if np.any(np.diff(self.days) <= 0):
            raise CalendarError("trading days must be strictly increasing")
        if np.any(~(self.prices > 0)):
            raise CalendarError("market prices must be positive")
        missing = self.announcements - set(self.days.tolist())
        if missing:
            raise CalendarError(f"announcement days not in the calendar: {sorted(missing)[:5]}")
        self._index = {int(d): i for i, d in enumerate(self.days)}

    def __len__(self) -> int:
        return len(self.days)

    def index(self, day: int) -> int:
        try:
            return self._index[int(day)]
        except KeyError:
            raise CalendarError(f"day {day} is not a trading day") from None

    def lookahead_price(self, day: int, delta: int) -> float | None:
        i = self.index(day) + delta
        return float(self.prices[i]) if i < len(self.days) else None

    def announcement_indices(self) -> list[int]:
        return sorted(self.index(a) for a in self.announcements)

    def window(self, announcement: int) -> list[int]:
        """Trading days of the pre-announcement window, oldest first."""
        i = self.index(announcement)
        return [int(d) for d in self.days[max(0, i - WINDOW):i]]

    def non_announcement_days(self) -> list[int]:
        excluded = set(self.announcements)
        for a in self.announcements:
            excluded.update(self.window(a))
        return [int(d) for d in self.days if int(d) not in excluded]


@dataclass
class TradeMatrix:
    """Investors x event days, entries in {-1, 0, +1}."""

    values: np.ndarray
    days: list[int]
    mode: str
    dropped: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int8)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.days):
            raise ValueError("one column per event day required")
        if not np.isin(self.values, (-1, 0, 1)).all():
            raise ValueError("trade matrix entries must be -1, 0 or +1")

    @property
    def investors(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


def _mean_prices(trades: Iterable[TradeRecord]) -> dict[int, dict[int, float]]:
    """day -> investor -> mean trade price that day."""
    sums: dict[int, dict[int, list]] = defaultdict(lambda: defaultdict(lambda: [0.0, 0]))
    for t in trades:
        acc = sums[t.day][t.investor]
        acc[0] += t.price
        acc[1] += 1
    return {d: {u: s / c for u, (s, c) in by_inv.items()} for d, by_inv in sums.items()}


def _check_trades(trades: Sequence[TradeRecord], calendar: MarketCalendar, investors: int):
    for t in trades:
        calendar.index(t.day)
        if t.investor >= investors:
            raise ValueError(f"investor {t.investor} outside 0..{investors - 1}")


def _encode(mean_price: float | None, later: float) -> int:
    if mean_price is None:
        return 0
    return 1 if mean_price < later else -1


def build_trade_matrix(trades: Sequence[TradeRecord], calendar: MarketCalendar, investors: int,
                       mode: str, delta: int | None = None) -> TradeMatrix:
    """Profitability encoding of every investor on every event day of ``mode``.

    Pre-announcement columns use each investor's mean price on the last day
    of the window they traded, against the market price ``delta`` days after
    the announcement.  Non-announcement columns use the mean price on the
    day itself against the price ``delta`` days later.  Event days without a
    lookahead price are dropped and counted.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if delta is None:
        delta = DELTA_PRE if mode == PRE_ANNOUNCEMENT else DELTA_NON
    _check_trades(trades, calendar, investors)
    by_day = _mean_prices(trades)
    event_days = (sorted(calendar.announcements) if mode == PRE_ANNOUNCEMENT
                  else calendar.non_announcement_days())
    columns, kept, dropped = [], [], 0
    for day in event_days:
        later = calendar.lookahead_price(day, delta)
        if later is None:
            dropped += 1
            continue
        col = np.zeros(investors, dtype=np.int8)
        if mode == PRE_ANNOUNCEMENT:
            last: dict[int, float] = {}
            for d in calendar.window(day):  # oldest first, so later days overwrite
                last.update(by_day.get(d, {}))
            prices = last
        else:
            prices = by_day.get(day, {})
        for u, price in prices.items():
            col[u] = _encode(price, later)
        columns.append(col)
        kept.append(day)
    if dropped:
        log.warning("%s: dropped %d event days without a %d-day lookahead price",
                    mode, dropped, delta)
    values = np.stack(columns, axis=1) if columns else np.zeros((investors, 0), np.int8)
    return TradeMatrix(values, kept, mode, dropped)


def estimate_baselines(trades: Sequence[TradeRecord], calendar: MarketCalendar, investors: int,
                       delta: int = DELTA_NON) -> BaselineModel:
    """Per-investor (no trade, profitable, unprofitable) day shares outside announcements."""
    matrix = build_trade_matrix(trades, calendar, investors, NON_ANNOUNCEMENT, delta)
    if matrix.n == 0:
        raise CalendarError("no non-announcement day has a lookahead price")
    z = matrix.values
    n_x = matrix.n
    pos = (z == 1).sum(axis=1)
    neg = (z == -1).sum(axis=1)
    none = n_x - pos - neg
    # integer counts keep the row sums exact
    return BaselineModel(np.stack([none, pos, neg], axis=1) / n_x)


def gt_features_from_trades(matrix: TradeMatrix, bootstrap: int, width: int | None = None,
                            seed: int = 0, kind: str = REDUCED, replace: bool = True
                            ) -> tuple[FeatureSet, FeatureSet]:
    """Bootstrap feature rows from a trade matrix, split in time.

    The first floor(0.6 n) columns feed the training samples, the rest feed
    the test samples.  ``bootstrap`` samples are shared between the two
    sides in the same proportion.  Each sample picks ``width`` columns (with
    replacement unless ``replace`` is false) and summarizes every
    investor's row over them.
    """
    n = matrix.n
    n1 = int(math.floor(TRAIN_SHARE * n))
    if n1 == 0 or n - n1 == 0:
        raise SplitError(f"{n} event days leave an empty train or test range")
    if bootstrap < 1:
        raise ValueError(f"bootstrap count must be >= 1, got {bootstrap}")
    width = min(DEFAULT_SAMPLE_WIDTH, n1) if width is None else width
    if width < 1:
        raise SplitError(f"sample width must be >= 1, got {width}")
    stat_names(kind)
    b_train = max(1, round(TRAIN_SHARE * bootstrap))
    b_test = bootstrap - b_train
    used = [n1] + ([n - n1] if b_test else [])
    if not replace and width > min(used):
        raise SplitError(f"sample width {width} does not fit without replacement")
    g = rngmod.substream(seed, rngmod.BOOTSTRAP)

    def sample(lo, hi, count):
        rows = []
        for _ in range(count):
            cols = (g.integers(lo, hi, size=width) if replace
                    else lo + g.permutation(hi - lo)[:width])
            rows.append(matrix.values[:, cols])
        if not rows:
            return np.zeros((matrix.investors, 0, len(stat_names(kind))))
        # rows are (E, width); stacked to (E, B, width), summarized to (E, B, d)
        return summarize(np.stack(rows, axis=1), kind)

    train = FeatureSet(sample(0, n1, b_train), OBSERVED, kind, width)
    test = FeatureSet(sample(n1, n, b_test), OBSERVED, kind, width)
    return train, test


def combine_ground_truth(train: FeatureSet, test: FeatureSet) -> FeatureSet:
    """Stack train rows over test rows, recording the training block size."""
    return FeatureSet(np.concatenate([train.values, test.values], axis=1), OBSERVED, train.kind,
                      train.n_cascades, train_rows=train.m)


# ---------------------------------------------------------------- surrogate data

def synth_calendar(announcements: int, gap: int = 15, lead: int = 10, tail: int = 10,
                   seed: int = 0, start_price: float = 100.0) -> MarketCalendar:
    """Calendar with evenly spaced announcements and a random-walk market price.

    ``gap`` trading days separate consecutive announcements; it must exceed
    the window plus the pre-announcement lookahead so windows never overlap.
    """
    if gap <= WINDOW + DELTA_PRE:
        raise CalendarError(f"gap {gap} lets windows overlap")
    if lead < WINDOW or tail < DELTA_NON:
        raise CalendarError("lead must cover a window and tail a lookahead")
    total = lead + (announcements - 1) * gap + 1 + tail
    g = rngmod.substream(seed, rngmod.SYNTH, 0)
    prices = start_price * np.exp(np.cumsum(g.normal(0.0, 0.01, total)))
    ann = [lead + k * gap for k in range(announcements)]
    return MarketCalendar(np.arange(total), prices, frozenset(ann))


def synth_baselines(investors: int, seed: int = 0, b1_range=(3e-3, 7e-3),
                    b2_range=(3e-3, 7e-3)) -> BaselineModel:
    """Sparse-trading investor baselines in the low per-day trade regime."""
    g = rngmod.substream(seed, rngmod.SYNTH, 1)
    b1 = g.uniform(*b1_range, investors)
    b2 = g.uniform(*b2_range, investors)
    return BaselineModel(np.stack([1.0 - b1 - b2, b1, b2], axis=1))


@dataclass
class SyntheticTrades:
    trades: list[TradeRecord]
    calendar: MarketCalendar
    planted_pre: np.ndarray  # (investors, announcements)
    planted_non: np.ndarray  # (investors, non-announcement event days)
    non_days: list[int] = field(default_factory=list)


def _materialize(z: np.ndarray, day: int, later: float, margin: float) -> list[TradeRecord]:
    out = []
    for u in np.flatnonzero(z):
        price = later * (1.0 - margin) if z[u] == 1 else later * (1.0 + margin)
        out.append(TradeRecord(int(u), int(day), float(price)))
    return out


def synth_trades(graph: Graph, seeds: SeedSchedule, theta_ann: SpreadParams,
                 theta_non: SpreadParams, calendar: MarketCalendar, baselines: BaselineModel,
                 seed: int = 0, margin: float = 0.01) -> SyntheticTrades:
    """Trade records whose profitability encoding equals planted hidden-cascade symptoms.

    Every announcement gets one cascade at ``theta_ann``, materialized on
    the last window day against the price one day after the announcement.
    Every non-announcement event day with a lookahead gets its own cascade
    at ``theta_non``, priced against the market ``DELTA_NON`` days later.
    A +1 becomes a trade below that later price and a -1 a trade above it.
    """
    if len(baselines) != graph.node_count:
        raise ValueError("baselines must have one triple per investor")
    trades: list[TradeRecord] = []
    anns = sorted(calendar.announcements)
    pre = np.zeros((graph.node_count, len(anns)), np.int8)
    for k, a in enumerate(anns):
        window = calendar.window(a)
        later = calendar.lookahead_price(a, DELTA_PRE)
        if len(window) < WINDOW or later is None:
            raise CalendarError(f"announcement {a} lacks a full window or lookahead")
        g = rngmod.substream(seed, rngmod.SYNTH, 2, k)
        z = assign_symptoms(run_ic(graph, seeds, theta_ann.p, rng=g), theta_ann.q, baselines, rng=g)
        pre[:, k] = z
        trades += _materialize(z, window[-1], later, margin)
    non_days = [d for d in calendar.non_announcement_days()
                if calendar.lookahead_price(d, DELTA_NON) is not None]
    non = np.zeros((graph.node_count, len(non_days)), np.int8)
    for k, d in enumerate(non_days):
        g = rngmod.substream(seed, rngmod.SYNTH, 3, k)
        z = assign_symptoms(run_ic(graph, seeds, theta_non.p, rng=g), theta_non.q, baselines, rng=g)
        non[:, k] = z
        trades += _materialize(z, d, calendar.lookahead_price(d, DELTA_NON), margin)
    return SyntheticTrades(trades, calendar, pre, non, non_days)


# ---------------------------------------------------------------- inference

@dataclass
class EmpiricalConfig:
    bootstrap: int = 50
    width: int | None = None
    kind: str = REDUCED
    classifier: ClassifierSpec = field(default_factory=lambda: ClassifierSpec.make("svm"))
    powell: PowellConfig = field(default_factory=PowellConfig)
    restart_cap: int = DEFAULT_RESTART_CAP
    tune: bool = True
    seed: int = 0


@dataclass
class CompanyResult:
    announcement: InferenceResult
    non_announcement: InferenceResult
    baseline_mean: tuple[float, float, float]

    @property
    def p_ratio(self) -> float:
        p_n = self.non_announcement.theta_hat.p
        return self.announcement.theta_hat.p / p_n if p_n > 0 else math.inf

    @property
    def q_ratio(self) -> float:
        q_n = self.non_announcement.theta_hat.q
        return self.announcement.theta_hat.q / q_n if q_n > 0 else math.inf

    def to_dict(self) -> dict:
        a, n = self.announcement.theta_hat, self.non_announcement.theta_hat
        return {
            "p_hat_announcement": a.p, "q_hat_announcement": a.q,
            "p_hat_non_announcement": n.p, "q_hat_non_announcement": n.q,
            "p_ratio": self.p_ratio, "q_ratio": self.q_ratio,
            "baseline_mean": list(self.baseline_mean),
            "announcement": self.announcement.to_dict(),
            "non_announcement": self.non_announcement.to_dict(),
        }


def window_context(matrix: TradeMatrix, graph: Graph, seeds: SeedSchedule,
                   baselines: BaselineModel, config: EmpiricalConfig, salt: int) -> ObjectiveContext:
    seed = rngmod.derive_seed(config.seed, rngmod.BOOTSTRAP, salt)
    train, test = gt_features_from_trades(matrix, config.bootstrap, config.width, seed, config.kind)
    gt = combine_ground_truth(train, test)
    return ObjectiveContext(graph, seeds, baselines, gt, config.classifier, seed)


def infer_company(trades: Sequence[TradeRecord], calendar: MarketCalendar, graph: Graph,
                  seeds: SeedSchedule, config: EmpiricalConfig | None = None,
                  baselines: BaselineModel | None = None) -> CompanyResult:
    """Separate (p, q) estimates for the pre-announcement and the quiet periods.

    The non-carrier model is estimated from the quiet-period trades unless
    ``baselines`` is given.  Estimated baselines also soak up any spreading
    that happens on quiet days, which pulls the quiet-period p estimate
    toward zero; a known non-carrier law (as with surrogate data) avoids that.
    """
    config = config or EmpiricalConfig()
    investors = graph.node_count
    if baselines is None:
        baselines = estimate_baselines(trades, calendar, investors)
    elif len(baselines) != investors:
        raise ValueError("baselines must have one triple per investor")
    results = []
    for salt, mode in enumerate(MODES):
        matrix = build_trade_matrix(trades, calendar, investors, mode)
        ctx = window_context(matrix, graph, seeds, baselines, config, salt)
        results.append(infer(ctx, config=config.powell,
                             restart_cap=config.restart_cap, tune=config.tune))
    mean = tuple(float(v) for v in baselines.probs.mean(axis=0))
    return CompanyResult(results[0], results[1], mean)


# ---------------------------------------------------------------- files

def write_trades(trades: Iterable[TradeRecord], sink: IO[str]) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(("investor_id", "day", "price"))
    for t in trades:
        w.writerow((t.investor, t.day, repr(t.price)))


def read_trades(source: IO[str]) -> list[TradeRecord]:
    r = csv.reader(source)
    header = [h.strip() for h in next(r, [])]
    if header != ["investor_id", "day", "price"]:
        raise ValueError(f"trades header must be investor_id,day,price; got {header}")
    out = []
    for lineno, row in enumerate(r, start=2):
        if not row:
            continue
        try:
            out.append(TradeRecord(int(row[0]), int(row[1]), float(row[2])))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"trades line {lineno}: {exc}") from None
    return out


def write_calendar(calendar: MarketCalendar, sink: IO[str]) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(("day", "market_price", "is_announcement"))
    for d, p in zip(calendar.days, calendar.prices):
        w.writerow((int(d), repr(float(p)), int(int(d) in calendar.announcements)))


def read_calendar(source: IO[str]) -> MarketCalendar:
    r = csv.reader(source)
    header = [h.strip() for h in next(r, [])]
    if header != ["day", "market_price", "is_announcement"]:
        raise ValueError(f"calendar header must be day,market_price,is_announcement; got {header}")
    days, prices, ann = [], [], []
    for lineno, row in enumerate(r, start=2):
        if not row:
            continue
        try:
            d, p, a = int(row[0]), float(row[1]), int(row[2])
        except (ValueError, IndexError) as exc:
            raise CalendarError(f"calendar line {lineno}: {exc}") from None
        if a not in (0, 1):
            raise CalendarError(f"calendar line {lineno}: is_announcement must be 0 or 1")
        days.append(d)
        prices.append(p)
        if a:
            ann.append(d)
    return MarketCalendar(np.array(days), np.array(prices), frozenset(ann))
