"""Loop classes, wedge composition, group completion, the sequence metric
and integer threads."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from localfields.loops import (BasepointViolated, CapacityExceeded,
                               Incompatible, LoopClass, LoopGroupElement,
                               PinnedMap, PointedSet, all_pinned_maps,
                               baire_distance, basepoint_fixing_permutations,
                               cancel, class_of, grothendieck,
                               group_rank_report, induced_projection,
                               integer_digits, loop_thread_check, unit_class,
                               wedge, wedge_via_maps)

M4 = PointedSet((0, 1, 2, 3), 0)
M3 = PointedSet((0, 1, 2), 0)
N3 = PointedSet(("y0", "a", "b"), "y0")
N4 = PointedSet(("y0", "a", "b", "c"), "y0")


class TestClasses:
    def test_constant_map_is_unit(self):
        f = PinnedMap(M4, N3, ("y0",) * 4)
        assert class_of(f).is_unit()

    def test_basepoint_enforced(self):
        with pytest.raises(BasepointViolated):
            PinnedMap(M4, N3, ("a", "y0", "y0", "y0"))

    def test_single_hit_maps_identified(self):
        # |M|=3, |N|=2: both maps hitting the non-basepoint value once
        N2 = PointedSet(("y0", "a"), "y0")
        f1 = PinnedMap(M3, N2, ("y0", "a", "y0"))
        f2 = PinnedMap(M3, N2, ("y0", "y0", "a"))
        assert class_of(f1) == class_of(f2)

    def test_class_count_exhaustive(self):
        # multisets of size 3 over 3 values: C(5,2) = 10
        classes = {class_of(f).values for f in all_pinned_maps(M4, N3)}
        assert len(classes) == 10

    def test_orbit_invariance_and_separation(self):
        by_class = {}
        for f in all_pinned_maps(M4, N3):
            c = class_of(f)
            by_class.setdefault(c.values, set()).add(f.table)
            for psi in basepoint_fixing_permutations(M4):
                assert class_of(f.precompose(psi)) == c
        for tables in by_class.values():
            rep = PinnedMap(M4, N3, next(iter(tables)))
            orbit = {rep.precompose(psi).table
                     for psi in basepoint_fixing_permutations(M4)}
            assert orbit == tables

    def test_serialize(self):
        assert LoopClass(N3, ("a", "a", "b")).serialize() == "{a,a,b}"


class TestWedge:
    def test_unit_law(self):
        a = LoopClass(N3, ("a",))
        assert wedge(a, unit_class(N3)) == a

    def test_multiset_union(self):
        a, b = LoopClass(N3, ("a",)), LoopClass(N3, ("b",))
        assert wedge(a, b).values == ("a", "b")

    def test_commutative_exhaustive_small(self):
        classes = [LoopClass(N3, v) for v in
                   {class_of(f).values for f in all_pinned_maps(M3, N3)}]
        for a in classes:
            for b in classes:
                assert wedge(a, b) == wedge(b, a)

    def test_cancelation(self):
        a, b, c = (LoopClass(N3, v) for v in (("a",), ("b", "b"), ("a", "b")))
        assert cancel(wedge(a, c), c) == a
        assert cancel(wedge(b, c), c) == b

    def test_capacity(self):
        a = LoopClass(N3, ("a", "a"))
        with pytest.raises(CapacityExceeded):
            wedge(a, a, capacity=3)
        assert wedge(a, a, capacity=4).size == 4

    def test_chi_independence(self):
        fa = PinnedMap(M4, N3, ("y0", "a", "y0", "b"))
        fb = PinnedMap(M4, N3, ("y0", "b", "y0", "y0"))
        rng = random.Random(5)
        tags = [("L", x) for x in M4.others()] + \
            [("R", x) for x in M4.others()]
        outcomes = set()
        for _ in range(5):
            rng.shuffle(tags)
            chi = {i + 1: tags[i] for i in range(len(tags))}
            outcomes.add(wedge_via_maps(fa, fb, chi).values)
        assert outcomes == {wedge(class_of(fa), class_of(fb)).values}


class TestGrothendieck:
    def test_unit_is_zero(self):
        assert grothendieck(unit_class(N4)).is_zero()

    def test_inverse(self):
        v = grothendieck(LoopClass(N4, ("a", "c")))
        assert (v + (-v)).is_zero()

    def test_counting_homomorphism(self):
        a = LoopClass(N4, ("a", "b"))
        b = LoopClass(N4, ("b", "c"))
        assert (grothendieck(a) + grothendieck(b)).counts == \
            grothendieck(wedge(a, b)).counts

    def test_injective_on_classes(self):
        vals = {class_of(f).values for f in all_pinned_maps(M4, N3)}
        vectors = {grothendieck(LoopClass(N3, v)).counts for v in vals}
        assert len(vectors) == len(vals)

    def test_rank_discrepancy_reported(self):
        rep = group_rank_report(N4)
        assert rep["constructed_rank"] == 3
        assert rep["nominal_rank_card_N"] == 4
        assert rep["discrepancy"] == 1


class TestBaire:
    def test_equal_sequences(self):
        assert baire_distance([1, 2, 3], [1, 2, 3], 2) == 0

    def test_first_index(self):
        assert baire_distance([7, 1], [0, 1], 3) == 1
        assert baire_distance([1, 7], [1, 0], 3) == Fraction(1, 3)

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.integers(0, 2), min_size=5, max_size=5),
           st.lists(st.integers(0, 2), min_size=5, max_size=5),
           st.lists(st.integers(0, 2), min_size=5, max_size=5))
    def test_ultrametric(self, f, g, h):
        assert baire_distance(f, h, 3) <= max(baire_distance(f, g, 3),
                                              baire_distance(g, h, 3))


class TestThreads:
    def test_zero_thread(self):
        N1 = PointedSet((0, 1), 0)
        levels = [LoopGroupElement(N1, (0,)), LoopGroupElement(N1, (0,))]
        proj = induced_projection({0: 0, 1: 1}, N1, N1)
        rep = loop_thread_check(levels, [proj], 2, digits=6)
        assert rep["compatible"]
        assert rep["coordinates"] == [(0,) * 6]

    def test_constant_vector_identity_maps(self):
        N1 = PointedSet((0, 1, 2), 0)
        v = LoopGroupElement(N1, (3, 1))
        proj = induced_projection({0: 0, 1: 1, 2: 2}, N1, N1)
        rep = loop_thread_check([v, v, v], [proj, proj], 2)
        assert rep["compatible"]

    def test_projected_pinned_family(self):
        # a fixed map into Z/2^k targets, projected across k = 1..3
        targets = [PointedSet(tuple(range(2 ** k)), 0) for k in (1, 2, 3)]
        base_values = [5, 3, 3, 1, 6]  # the multiset of nonzero hits mod 8

        def counts_for(k):
            tg = targets[k - 1]
            counts = [0] * (tg.size - 1)
            for v in base_values:
                r = v % 2 ** k
                if r:
                    counts[tg.others().index(r)] += 1
            return LoopGroupElement(tg, tuple(counts))

        levels = [counts_for(k) for k in (1, 2, 3)]
        projs = [induced_projection({v: v % 2 ** k for v in range(2 ** (k + 1))},
                                    targets[k], targets[k - 1])
                 for k in (1, 2)]
        rep = loop_thread_check(levels, projs, 2, digits=8)
        assert rep["compatible"]

    def test_incompatible(self):
        N1 = PointedSet((0, 1), 0)
        N2 = PointedSet((0, 1, 2, 3), 0)
        proj = induced_projection({0: 0, 1: 1, 2: 0, 3: 1}, N2, N1)
        lo = LoopGroupElement(N1, (4,))
        hi = LoopGroupElement(N2, (2, 1, 3))  # projects to 5, not 4
        with pytest.raises(Incompatible):
            loop_thread_check([lo, hi], [proj], 2)

    def test_digit_streams(self):
        assert integer_digits(5, 2, 4) == (1, 0, 1, 0)
        assert integer_digits(-1, 3, 4) == (2, 2, 2, 2)
