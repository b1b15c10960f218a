"""Interval algebra and result-type behavior."""
import math

import numpy as np
import pytest

from cluster_sieve.core import (
    INF,
    Interval,
    IntervalUnion,
    Method,
    PValueResult,
    interval_complement,
    interval_contains,
    interval_intersect,
    interval_measure_under,
)


def U(*pairs):
    return IntervalUnion.from_pairs(pairs)


class TestInterval:
    def test_rejects_nan_and_negative_and_inverted(self):
        with pytest.raises(ValueError):
            Interval(float("nan"), 1.0)
        with pytest.raises(ValueError):
            Interval(-0.5, 1.0)
        with pytest.raises(ValueError):
            Interval(2.0, 1.0)

    def test_infinite_upper_end_is_open(self):
        iv = Interval(1.0, INF, True, True)
        assert iv.hi_closed is False

    def test_endpoints_coerced_to_python_scalars(self):
        iv = Interval(np.float64(1.0), np.float64(2.0), np.bool_(True), np.bool_(False))
        assert type(iv.lo) is float and type(iv.hi) is float
        assert type(iv.lo_closed) is bool and type(iv.hi_closed) is bool


class TestIntervalUnion:
    def test_canonicalizes_overlaps_and_order(self):
        u = U((3.0, 5.0), (0.0, 1.0), (0.5, 2.0))
        assert [(iv.lo, iv.hi) for iv in u.intervals] == [(0.0, 2.0), (3.0, 5.0)]

    def test_touching_closed_endpoints_merge(self):
        u = IntervalUnion((Interval(0, 1, True, True), Interval(1, 2, False, True)))
        assert len(u.intervals) == 1
        assert (u.intervals[0].lo, u.intervals[0].hi) == (0.0, 2.0)

    def test_open_gap_does_not_merge(self):
        u = IntervalUnion((Interval(0, 1, True, False), Interval(1, 2, False, True)))
        assert len(u.intervals) == 2

    def test_empty_and_full(self):
        assert IntervalUnion.empty().intervals == ()
        full = IntervalUnion.full()
        assert len(full.intervals) == 1
        assert full.intervals[0].hi == INF

    def test_intersect_frozen_case(self):
        got = interval_intersect(U((0, 2), (3, 5)), U((1, 4)))
        assert [(iv.lo, iv.hi) for iv in got.intervals] == [(1.0, 2.0), (3.0, 4.0)]

    def test_intersect_with_empty_is_empty(self):
        assert interval_intersect(U((0, 2)), IntervalUnion.empty()).intervals == ()

    def test_intersect_preserves_openness(self):
        a = IntervalUnion((Interval(0, 2, True, False),))
        b = IntervalUnion((Interval(1, 2, True, True),))
        got = interval_intersect(a, b)
        assert got.intervals[0].hi == 2.0 and got.intervals[0].hi_closed is False

    def test_complement_roundtrip(self):
        for u in (U((0.5, 2), (3, 4)), U((0, 1)), IntervalUnion.empty(),
                  IntervalUnion.full()):
            assert interval_complement(interval_complement(u)) == u

    def test_complement_of_empty_is_full(self):
        assert interval_complement(IntervalUnion.empty()) == IntervalUnion.full()

    def test_contains_respects_closedness(self):
        u = IntervalUnion((Interval(1, 2, False, True),))
        assert not interval_contains(u, 1.0)
        assert interval_contains(u, 2.0)
        assert interval_contains(u, 1.5)
        assert not interval_contains(u, 2.5)

    def test_contains_tolerance(self):
        u = U((1.0, 2.0))
        assert interval_contains(u, 0.9999999, tol=1e-6)
        assert not interval_contains(u, 0.9999999, tol=0.0)

    def test_measure_under_survival(self):
        # exp(-x) survival: mass of [0, inf) is 1, of [ln2, inf) is 1/2
        sf = lambda x: math.exp(-x)
        assert interval_measure_under(IntervalUnion.full(), sf) == pytest.approx(1.0)
        half = IntervalUnion((Interval(math.log(2.0), INF),))
        assert interval_measure_under(half, sf) == pytest.approx(0.5, rel=1e-12)

    def test_membership_partition_property(self):
        # every point lands in exactly one of (set, complement),
        # away from endpoints
        rng = np.random.default_rng(7)
        for _ in range(50):
            cuts = np.sort(rng.uniform(0, 10, size=6))
            u = U((cuts[0], cuts[1]), (cuts[2], cuts[3]), (cuts[4], cuts[5]))
            comp = interval_complement(u)
            for x in rng.uniform(0, 12, size=40):
                if min(abs(x - c) for c in cuts) < 1e-9:
                    continue
                assert interval_contains(u, x) != interval_contains(comp, x)


class TestPValueResult:
    def test_method_wire_names(self):
        assert Method.KNOWN_SIGMA.value == "KnownSigma"
        assert Method.KNOWN_SIGMA_SELECTED.value == "KnownSigmaSelected"
        assert Method.BONFERRONI.value == "Bonferroni"
        assert Method.UNKNOWN_SIGMA.value == "UnknownSigma"
        assert Method.UNKNOWN_SIGMA_SELECTED.value == "UnknownSigmaSelected"
        assert Method.PAIRWISE_KNOWN.value == "PairwiseKnown"

    def test_not_available_shape(self):
        res = PValueResult.not_available(Method.KNOWN_SIGMA, "because")
        assert res.degenerate is True
        assert math.isnan(res.p_value)
        assert res.diagnostics["reason"] == "because"

    def test_rejects_out_of_range_p(self):
        with pytest.raises(ValueError):
            PValueResult(
                statistic=1.0,
                df_num=1,
                df_den=None,
                truncation=IntervalUnion.full(),
                p_value=1.5,
                method=Method.KNOWN_SIGMA,
            )
