"""Recording-budget math: how many requests must run before a rare cause
is observed often enough, given tail probability, request selection rate,
and per-epoch counter coverage. All arithmetic is exact rationals so the
combinatorial identities hold to the integer."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import ceil, comb


class ZeroProbability(ValueError):
    pass


class InvalidSlots(ValueError):
    pass


def _frac(p) -> Fraction:
    # decimal-literal floats mean their decimal value (0.05 -> 1/20)
    if isinstance(p, float):
        return Fraction(str(p))
    return Fraction(p)


@dataclass
class Budget:
    p_tail: Fraction
    p_req: Fraction
    p_event: Fraction
    p_pair: Fraction | None = None
    counters_total: int | None = None  # configurable counters M
    slots: int | None = None  # simultaneously recordable k
    target_occurrences: int = 1
    throughput: float | None = None  # requests per second

    @classmethod
    def build(
        cls,
        p_tail,
        p_req,
        p_event=None,
        counters_total: int | None = None,
        slots: int | None = None,
        target_occurrences: int = 1,
        throughput: float | None = None,
    ) -> "Budget":
        p_tail, p_req = _frac(p_tail), _frac(p_req)
        p_pair = None
        if p_event is None:
            if counters_total is None or slots is None:
                raise ValueError("need p_event or (counters_total, slots)")
            p_event = Fraction(slots, counters_total)
        else:
            p_event = _frac(p_event)
        if counters_total is not None and slots is not None:
            p_pair = pair_penalty(counters_total, slots)[0]
        for name, p in (("p_tail", p_tail), ("p_req", p_req), ("p_event", p_event)):
            if not 0 < p <= 1:
                raise ZeroProbability(f"{name} must be in (0, 1], got {p}")
        if target_occurrences < 1:
            raise ValueError("target_occurrences must be >= 1")
        return cls(p_tail, p_req, p_event, p_pair, counters_total, slots,
                   target_occurrences, throughput)


def requests_to_observe(budget: Budget, per_pair: bool = False) -> tuple[int, float | None]:
    """Requests needed for `target_occurrences` sightings of the cause:
    ceil(occurrences / (p_tail * p_req * p_event)). With per_pair=True the
    event coverage is replaced by the pair coverage. Also returns the
    wall-clock seconds at the given throughput, when known."""
    coverage = budget.p_pair if per_pair else budget.p_event
    if per_pair and coverage is None:
        raise InvalidSlots("pair coverage needs counters_total and slots")
    p = budget.p_tail * budget.p_req * coverage
    if p <= 0:
        raise ZeroProbability("joint probability is zero")
    requests = ceil(Fraction(budget.target_occurrences) / p)
    seconds = requests / budget.throughput if budget.throughput else None
    return requests, seconds


def pair_penalty(counters_total: int, slots: int) -> tuple[Fraction, Fraction]:
    """Probability that a specific counter pair is co-enabled in an epoch,
    C(k,2)/C(M,2), and how many times smaller that is than the single
    counter coverage k/M (algebraically (M-1)/(k-1))."""
    if not 2 <= slots <= counters_total:
        raise InvalidSlots(f"need 2 <= slots <= counters_total, got {slots}, {counters_total}")
    p_pair = Fraction(comb(slots, 2), comb(counters_total, 2))
    ratio = Fraction(slots, counters_total) / p_pair
    return p_pair, ratio


def plan_lines(budget: Budget):
    """Human-readable budget table."""
    yield (
        f"p_tail={float(budget.p_tail):.6g} p_req={float(budget.p_req):.6g} "
        f"p_event={float(budget.p_event):.6g} occurrences={budget.target_occurrences}"
    )
    requests, seconds = requests_to_observe(budget)
    yield f"requests (single counter): {requests}"
    if seconds is not None:
        yield f"  wall clock at {budget.throughput:g} req/s: {seconds:.1f} s"
    if budget.p_pair is not None:
        p_pair, ratio = pair_penalty(budget.counters_total, budget.slots)
        yield (
            f"pair coverage: p_pair={float(p_pair):.6g} "
            f"({float(ratio):g}x smaller than p_event={budget.slots}/{budget.counters_total})"
        )
        requests, seconds = requests_to_observe(budget, per_pair=True)
        yield f"requests (counter pair): {requests}"
        if seconds is not None:
            yield f"  wall clock at {budget.throughput:g} req/s: {seconds:.1f} s"
