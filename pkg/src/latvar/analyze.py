"""Offline analysis: rank events by their impact on tail latency.

For each event the analyzer finds a "high value" threshold from the
knees of the event's value CDF (piecewise-linear fit with mergeable
regressions), computes the impact value — the fractional drop in the
tail latency measure if tasks with high values of the event were
eliminated — and then adjusts the ranking with two causal rules:

  Rule 1: across groups, INST events can cause CACHE events, both can
  cause CYCLE events; a correlated higher-group event's impact (weighted
  by Jaccard correlation of the high sets) is deducted.

  Rule 2: a counter whose values are exactly proportional to its parent
  counter is reporting the parent's behavior, not a cause; it is dropped
  from the ranking.

Missing data is the normal case: each record carries only the counters
its epoch had enabled, and every computation restricts itself to the
records that carry the events involved.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .events import RUNNING_LEN, EventCatalog, EventGroup
from .trace import SegmentStats, TaskRecord, percentile

log = logging.getLogger(__name__)

RULE1_CAUSES = {
    EventGroup.CACHE: (EventGroup.INST,),
    EventGroup.CYCLE: (EventGroup.INST, EventGroup.CACHE),
}
EXCLUDED_GROUPS = (EventGroup.UOP, EventGroup.OTHER)
# running_len is latency minus all waits, i.e. the task's own execution
# time; ranking it as a "cause" of its own latency is self-referential.
EXCLUDED_EVENTS = frozenset({RUNNING_LEN})


class TooFewSamples(ValueError):
    pass


class InsufficientData(ValueError):
    def __init__(self, event: str, n: int):
        super().__init__(f"{event}: only {n} records carry it")
        self.event = event
        self.n = n


@dataclass
class AnalysisConfig:
    p_target: float = 0.99
    cdf_ranges: int = 1000
    merge_r2: float = 0.95
    prop_r2: float = 0.99
    min_tasks_per_event: int = 100
    correlated_jaccard: float = 0.5
    # variance measure over a latency multiset; default is the tail value
    # at p_target (nearest rank), but any summary (CoV, stddev) plugs in
    var_fn: Callable[[Sequence[float]], float] | None = None

    def var(self, latencies: Sequence[float]) -> float:
        if self.var_fn is not None:
            return self.var_fn(latencies)
        return percentile(latencies, self.p_target)

    def validate(self) -> None:
        if not 0 < self.p_target <= 1:
            raise ValueError("p_target must be in (0, 1]")
        if self.cdf_ranges < 2:
            raise ValueError("cdf_ranges must be >= 2")
        for name in ("merge_r2", "prop_r2"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in (0, 1]")


# -- mergeable linear regression ---------------------------------------------


@dataclass
class RegressionSummary:
    """Sufficient statistics for simple linear regression. Merging two
    summaries is exact: it yields the summary of the concatenated data."""

    n: int = 0
    sx: float = 0.0
    sy: float = 0.0
    sxx: float = 0.0
    sxy: float = 0.0
    syy: float = 0.0

    @classmethod
    def from_points(cls, xs: Sequence[float], ys: Sequence[float]) -> "RegressionSummary":
        rs = cls()
        for x, y in zip(xs, ys):
            rs.add(x, y)
        return rs

    def add(self, x: float, y: float) -> None:
        self.n += 1
        self.sx += x
        self.sy += y
        self.sxx += x * x
        self.sxy += x * y
        self.syy += y * y

    def __add__(self, other: "RegressionSummary") -> "RegressionSummary":
        return RegressionSummary(
            self.n + other.n,
            self.sx + other.sx,
            self.sy + other.sy,
            self.sxx + other.sxx,
            self.sxy + other.sxy,
            self.syy + other.syy,
        )

    def line(self) -> tuple[float, float]:
        """Least-squares (slope, intercept) of y on x."""
        if self.n == 0:
            return 0.0, 0.0
        det = self.n * self.sxx - self.sx * self.sx
        if det <= 0:
            return 0.0, self.sy / self.n
        slope = (self.n * self.sxy - self.sx * self.sy) / det
        return slope, (self.sy - slope * self.sx) / self.n

    @property
    def slope(self) -> float:
        return self.line()[0]

    @property
    def intercept(self) -> float:
        return self.line()[1]

    def sst(self) -> float:
        if self.n == 0:
            return 0.0
        return max(0.0, self.syy - self.sy * self.sy / self.n)

    def sse_under(self, slope: float, intercept: float) -> float:
        sse = (
            self.syy
            - 2.0 * intercept * self.sy
            - 2.0 * slope * self.sxy
            + 2.0 * slope * intercept * self.sx
            + intercept * intercept * self.n
            + slope * slope * self.sxx
        )
        return max(0.0, sse)

    def r2_under(self, slope: float, intercept: float) -> float:
        """R-squared of this range's points under an externally fitted line."""
        sst = self.sst()
        sse = self.sse_under(slope, intercept)
        tiny = 1e-9 * max(abs(self.syy), 1.0)
        if sst <= tiny:
            return 1.0 if sse <= tiny else 0.0
        return 1.0 - sse / sst

    @property
    def r_squared(self) -> float:
        return self.r2_under(*self.line())


# -- CDF knee detection ----------------------------------------------------------


@dataclass
class _Seg:
    start: int  # point index range [start, end)
    end: int
    rs: RegressionSummary


def fit_cdf_steps(values: Sequence[float], config: AnalysisConfig) -> list[tuple[float, float]]:
    """Knees of the value CDF: fit value-vs-percentile with one regression
    per range, then repeatedly merge adjacent ranges while both keep
    r^2 >= merge_r2 under the pooled fit. Returns (percentile, value)
    at each boundary between the final fitted lines."""
    n = len(values)
    N = config.cdf_ranges
    if n < N:
        raise TooFewSamples(f"{n} samples for {N} CDF ranges")
    ys = sorted(values)
    xs = [(i + 1) / n for i in range(n)]
    segs: list[_Seg] = []
    for k in range(N):
        lo, hi = k * n // N, (k + 1) * n // N
        if lo >= hi:
            continue
        segs.append(_Seg(lo, hi, RegressionSummary.from_points(xs[lo:hi], ys[lo:hi])))

    merged = True
    while merged:
        merged = False
        i = 0
        while i < len(segs) - 1:
            left, right = segs[i], segs[i + 1]
            pooled = left.rs + right.rs
            slope, intercept = pooled.line()
            if (
                left.rs.r2_under(slope, intercept) >= config.merge_r2
                and right.rs.r2_under(slope, intercept) >= config.merge_r2
            ):
                segs[i] = _Seg(left.start, right.end, pooled)
                del segs[i + 1]
                merged = True
            else:
                i += 1

    return [(xs[seg.end - 1], ys[seg.end - 1]) for seg in segs[:-1]]


def choose_threshold(values: Sequence[float], config: AnalysisConfig) -> float:
    """Pick pThreshold: the largest knee percentile below p_target, or
    p_target itself when the CDF gives no usable knee."""
    try:
        knees = fit_cdf_steps(values, config)
    except TooFewSamples:
        knees = []
    below = [p for p, _ in knees if p < config.p_target]
    return max(below) if below else config.p_target


# -- impact values -----------------------------------------------------------------


def impact_value(
    event: str,
    records: Sequence[TaskRecord],
    config: AnalysisConfig,
    p_threshold: float | None = None,
) -> float:
    """Impact of `event`: relative reduction of the tail latency measure
    when tasks with high event values are removed. Negative values mean
    high values of the event coincide with low latencies."""
    carrying = [r for r in records if event in r.values]
    if len(carrying) < config.min_tasks_per_event:
        raise InsufficientData(event, len(carrying))
    values = [r.values[event] for r in carrying]
    if p_threshold is None:
        p_threshold = choose_threshold(values, config)
    cutoff = percentile(values, p_threshold)
    all_lat = [r.latency for r in carrying]
    rest_lat = [r.latency for r in carrying if r.values[event] <= cutoff]
    var_all = config.var(all_lat)
    if var_all == 0 or not rest_lat:
        return 0.0
    return (var_all - config.var(rest_lat)) / var_all


def jaccard_correlation(
    e1: str,
    e2: str,
    records: Sequence[TaskRecord],
    config: AnalysisConfig,
    p_thr1: float,
    p_thr2: float,
) -> float | None:
    """Jaccard overlap of the two events' high-task sets over the tasks
    that recorded both. None when no task co-records them (correlation
    unknown, which is not the same as 0)."""
    co = [r for r in records if e1 in r.values and e2 in r.values]
    if not co:
        return None
    cut1 = percentile([r.values[e1] for r in co], p_thr1)
    cut2 = percentile([r.values[e2] for r in co], p_thr2)
    high1 = {id(r) for r in co if r.values[e1] > cut1}
    high2 = {id(r) for r in co if r.values[e2] > cut2}
    union = high1 | high2
    if not union:
        return 0.0
    return len(high1 & high2) / len(union)


# -- per-segment analysis -------------------------------------------------------------


@dataclass
class EventAnalysis:
    event: str
    group: EventGroup
    n_tasks: int
    p_threshold: float
    impact: float
    adjusted_impact: float
    rule1_cause: str | None = None
    rule2_parent: str | None = None
    correlations: list[tuple[str, float]] = field(default_factory=list)
    value_p50: float = 0.0
    value_p99: float = 0.0


@dataclass
class ImpactReport:
    segment_index: int
    p_target: float
    tail_latency: float
    task_count: int
    ranked: list[EventAnalysis]
    filtered: list[EventAnalysis]
    unresolved: list[tuple[str, str, float]]
    notes: list[str]
    stats: SegmentStats | None = None

    def rank_of(self, event: str) -> int | None:
        for i, a in enumerate(self.ranked):
            if a.event == event:
                return i + 1
        return None

    def analysis(self, event: str) -> EventAnalysis | None:
        for a in self.ranked + self.filtered:
            if a.event == event:
                return a
        return None


def apply_rule1(
    analyses: dict[str, EventAnalysis],
    correlations: dict[tuple[str, str], float],
) -> None:
    """Deduct, from each CACHE/CYCLE event, the largest correlated impact
    of a strictly higher group (INST > CACHE > CYCLE)."""
    for a in analyses.values():
        causes = RULE1_CAUSES.get(a.group)
        if not causes:
            continue
        best: tuple[float, str] | None = None
        for c in analyses.values():
            if c.group not in causes:
                continue
            jac = correlations.get((c.event, a.event))
            if jac is None:
                continue
            deduction = c.impact * jac
            if best is None or deduction > best[0]:
                best = (deduction, c.event)
        if best is not None:
            a.adjusted_impact = a.impact - best[0]
            if best[0] > 0:
                a.rule1_cause = best[1]


def apply_rule2(
    analyses: dict[str, EventAnalysis],
    records: Sequence[TaskRecord],
    catalog: EventCatalog,
    config: AnalysisConfig,
    notes: list[str],
) -> None:
    """Filter children that are directly proportional to their parent:
    fit parent = a * child through the origin; r^2 above prop_r2 means
    the child just mirrors the parent."""
    for child, parent in catalog.parent_child:
        ca, pa = analyses.get(child), analyses.get(parent)
        if ca is None or pa is None:
            continue
        co = [r for r in records if child in r.values and parent in r.values]
        if len(co) < config.min_tasks_per_event:
            notes.append(
                f"rule2 not evaluable for ({child}, {parent}): {len(co)} co-recorded tasks"
            )
            continue
        sxx = sxy = syy = 0.0
        for r in co:
            x, y = r.values[child], r.values[parent]
            sxx += x * x
            sxy += x * y
            syy += y * y
        if sxx == 0.0:
            continue
        alpha = sxy / sxx
        sse = max(0.0, syy - 2.0 * alpha * sxy + alpha * alpha * sxx)
        tiny = 1e-12 * max(syy, 1.0)
        r2 = 1.0 if syy <= tiny else 1.0 - sse / syy
        if r2 > config.prop_r2:
            ca.rule2_parent = parent


def analyze_segment(
    records: Sequence[TaskRecord],
    catalog: EventCatalog,
    config: AnalysisConfig | None = None,
    segment_index: int = 0,
    stats: SegmentStats | None = None,
) -> ImpactReport:
    """Full per-segment pipeline: thresholds, impacts, correlations,
    Rule 1 adjustment, Rule 2 filtering, deterministic ranking."""
    config = config or AnalysisConfig()
    config.validate()
    if not records:
        raise ValueError("empty segment")
    notes: list[str] = []

    seen: set[str] = set()
    for r in records:
        seen.update(r.values)
    events = []
    for name in sorted(seen):
        if name in EXCLUDED_EVENTS:
            continue
        if name not in catalog:
            notes.append(f"{name}: not in catalog, skipped")
            continue
        group = catalog.group(name)
        if group in EXCLUDED_GROUPS:
            continue
        events.append((name, group))

    analyses: dict[str, EventAnalysis] = {}
    thresholds: dict[str, float] = {}
    for name, group in events:
        carrying = [r for r in records if name in r.values]
        if len(carrying) < config.min_tasks_per_event:
            notes.append(f"{name}: insufficient data ({len(carrying)} tasks)")
            continue
        values = [r.values[name] for r in carrying]
        p_thr = choose_threshold(values, config)
        thresholds[name] = p_thr
        impact = impact_value(name, carrying, config, p_threshold=p_thr)
        analyses[name] = EventAnalysis(
            event=name,
            group=group,
            n_tasks=len(carrying),
            p_threshold=p_thr,
            impact=impact,
            adjusted_impact=impact,
            value_p50=percentile(values, 0.5),
            value_p99=percentile(values, 0.99),
        )

    names = sorted(analyses)
    correlations: dict[tuple[str, str], float] = {}
    for i, e1 in enumerate(names):
        for e2 in names[i + 1 :]:
            jac = jaccard_correlation(
                e1, e2, records, config, thresholds[e1], thresholds[e2]
            )
            if jac is None:
                continue
            correlations[(e1, e2)] = jac
            correlations[(e2, e1)] = jac
    for name in names:
        pairs = sorted(
            ((other, jac) for (a, other), jac in correlations.items() if a == name),
            key=lambda p: (-p[1], p[0]),
        )
        analyses[name].correlations = pairs[:3]

    apply_rule1(analyses, correlations)
    apply_rule2(analyses, records, catalog, config, notes)

    parent_child = set(catalog.parent_child)
    unresolved = []
    for i, e1 in enumerate(names):
        for e2 in names[i + 1 :]:
            jac = correlations.get((e1, e2))
            if jac is None or jac < config.correlated_jaccard:
                continue
            g1, g2 = analyses[e1].group, analyses[e2].group
            rule1_related = (g1 != g2 and g2 in RULE1_CAUSES.get(g1, ())) or (
                g1 != g2 and g1 in RULE1_CAUSES.get(g2, ())
            )
            rule2_related = (e1, e2) in parent_child or (e2, e1) in parent_child
            if not rule1_related and not rule2_related:
                unresolved.append((e1, e2, jac))

    ranked = sorted(
        (a for a in analyses.values() if a.rule2_parent is None),
        key=lambda a: (-a.adjusted_impact, a.event),
    )
    filtered = sorted(
        (a for a in analyses.values() if a.rule2_parent is not None),
        key=lambda a: a.event,
    )
    latencies = [r.latency for r in records]
    return ImpactReport(
        segment_index=segment_index,
        p_target=config.p_target,
        tail_latency=percentile(latencies, config.p_target),
        task_count=len(records),
        ranked=ranked,
        filtered=filtered,
        unresolved=unresolved,
        notes=notes,
        stats=stats,
    )


# -- segments --------------------------------------------------------------------------


@dataclass
class Segment:
    index: int
    records: list[TaskRecord]
    stats: SegmentStats


def split_segments(
    records: Iterable[TaskRecord],
    count: int | None = None,
    length: int | None = None,
    percentiles: Sequence[float] = (0.5, 0.9, 0.99),
) -> list[Segment]:
    """Cut a time-ordered trace into contiguous segments, either `count`
    equal-population segments or fixed `length` (ns) buckets."""
    if (count is None) == (length is None):
        raise ValueError("give exactly one of count= or length=")
    ordered = sorted(records, key=lambda r: (r.begin_ts, r.task_id))
    if not ordered:
        return []
    groups: list[list[TaskRecord]] = []
    if count is not None:
        n = len(ordered)
        bounds = [k * n // count for k in range(count + 1)]
        groups = [ordered[lo:hi] for lo, hi in zip(bounds, bounds[1:])]
    else:
        t0 = ordered[0].begin_ts
        n_buckets = (ordered[-1].begin_ts - t0) // length + 1
        buckets: list[list[TaskRecord]] = [[] for _ in range(n_buckets)]
        for r in ordered:
            buckets[(r.begin_ts - t0) // length].append(r)
        groups = buckets
    segments = []
    for i, group in enumerate(groups):
        if not group:
            log.warning("segment %d is empty, skipped", i)
            continue
        stats = SegmentStats.from_latencies(
            len(segments), [r.latency for r in group], percentiles
        )
        segments.append(Segment(len(segments), group, stats))
    return segments


@dataclass
class CrossSegmentSummary:
    segment_tails: list[float]  # tail latency per segment, report order
    max_index: int
    median_index: int
    events: dict[str, list[tuple[float | None, int | None, float | None, float | None]]]
    # per event, per segment: (adjusted_impact, rank, value_p50, value_p99)
    flagged: list[str]

    def dump_lines(self):
        yield "# latvar-cross-segment v1"
        yield "segment\t" + "\t".join(str(i) for i in range(len(self.segment_tails)))
        yield "tail_latency\t" + "\t".join(_fmt(t) for t in self.segment_tails)
        yield f"max_segment\t{self.max_index}"
        yield f"median_segment\t{self.median_index}"
        yield "flagged\t" + ",".join(self.flagged)
        for name in sorted(self.events):
            cells = self.events[name]
            yield f"event\t{name}\timpact\t" + "\t".join(_fmt(c[0]) for c in cells)
            yield f"event\t{name}\trank\t" + "\t".join(
                "-" if c[1] is None else str(c[1]) for c in cells
            )
            yield f"event\t{name}\tp50\t" + "\t".join(_fmt(c[2]) for c in cells)
            yield f"event\t{name}\tp99\t" + "\t".join(_fmt(c[3]) for c in cells)


def _fmt(x: float | None) -> str:
    if x is None:
        return "-"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def compare_segments(reports: Sequence[ImpactReport]) -> CrossSegmentSummary:
    """Tabulate impacts and value percentiles across segments and flag
    events whose rank differs between the max- and median-tail segments."""
    if len(reports) < 2:
        raise ValueError("need at least two segment reports")
    tails = [rep.tail_latency for rep in reports]
    order = sorted(range(len(reports)), key=lambda i: tails[i])
    max_index = order[-1]
    median_index = order[len(order) // 2]

    names: set[str] = set()
    for rep in reports:
        names.update(a.event for a in rep.ranked + rep.filtered)
    events: dict[str, list] = {}
    for name in sorted(names):
        cells = []
        for rep in reports:
            a = rep.analysis(name)
            if a is None:
                cells.append((None, None, None, None))
            else:
                cells.append((a.adjusted_impact, rep.rank_of(name), a.value_p50, a.value_p99))
        events[name] = cells

    flagged = []
    for name in sorted(names):
        r_max = events[name][max_index][1]
        r_med = events[name][median_index][1]
        if r_max != r_med:
            flagged.append(name)
    return CrossSegmentSummary(tails, max_index, median_index, events, flagged)


# -- report output ------------------------------------------------------------------------


def report_tsv_lines(report: ImpactReport):
    yield "# latvar-report v1"
    yield (
        f"# segment={report.segment_index} tasks={report.task_count} "
        f"p_target={report.p_target:.9g} tail_latency={_fmt(report.tail_latency)}"
    )
    yield "name\tgroup\tn\tp_threshold\timpact\tadjusted\tfilter\tcorrelations"
    for a in report.ranked + report.filtered:
        if a.rule2_parent is not None:
            filt = f"rule2:{a.rule2_parent}"
        elif a.rule1_cause is not None:
            filt = f"rule1:{a.rule1_cause}"
        else:
            filt = "-"
        corrs = ",".join(f"{e}={jac:.4f}" for e, jac in a.correlations) or "-"
        yield (
            f"{a.event}\t{a.group.value}\t{a.n_tasks}\t{a.p_threshold:.9g}"
            f"\t{a.impact:.9g}\t{a.adjusted_impact:.9g}\t{filt}\t{corrs}"
        )


def report_text_lines(report: ImpactReport):
    yield (
        f"segment {report.segment_index}: {report.task_count} tasks, "
        f"p{100 * report.p_target:g} latency {report.tail_latency}"
    )
    yield "ranked by adjusted impact:"
    for i, a in enumerate(report.ranked, start=1):
        extra = f" (rule1 deducted {a.rule1_cause})" if a.rule1_cause else ""
        yield (
            f"{i:3d}. {a.event}  impact={a.impact:.4f}"
            f"  adjusted={a.adjusted_impact:.4f}  n={a.n_tasks}"
            f"  pThreshold={a.p_threshold:.4g}{extra}"
        )
    if report.filtered:
        yield "filtered by rule 2 (proportional to parent):"
        for a in report.filtered:
            yield f"      {a.event} -> {a.rule2_parent}  impact={a.impact:.4f}"
    if report.unresolved:
        yield "correlated, neither rule applicable:"
        for e1, e2, jac in report.unresolved:
            yield f"      {e1} ~ {e2}  jaccard={jac:.4f}"
    for note in report.notes:
        yield f"note: {note}"
