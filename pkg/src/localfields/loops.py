"""Finite-level loop monoids: basepoint-pinned maps between pointed finite
sets modulo basepoint-fixing reparameterization, wedge composition, the
group completion by counting vectors, the first-disagreement ultrametric on
sequences, and integer threads with their digit-stream coordinates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction


class LoopError(Exception):
    pass


class BasepointViolated(LoopError):
    pass


class CapacityExceeded(LoopError):
    pass


class Incompatible(LoopError):
    pass


@dataclass(frozen=True)
class PointedSet:
    elements: tuple
    basepoint: object

    def __post_init__(self):
        if self.basepoint not in self.elements:
            raise LoopError("basepoint must belong to the set")
        if len(set(self.elements)) != len(self.elements):
            raise LoopError("duplicate elements")

    @property
    def size(self) -> int:
        return len(self.elements)

    def others(self):
        return tuple(e for e in self.elements if e != self.basepoint)


@dataclass(frozen=True)
class PinnedMap:
    """f: (M, s0) -> (N, y0) with f(s0) = y0."""

    source: PointedSet
    target: PointedSet
    table: tuple  # images aligned with source.elements

    def __post_init__(self):
        if len(self.table) != self.source.size:
            raise LoopError("table size mismatch")
        if any(v not in self.target.elements for v in self.table):
            raise LoopError("image outside the target set")
        if self(self.source.basepoint) != self.target.basepoint:
            raise BasepointViolated(
                f"f(basepoint) = {self(self.source.basepoint)} != "
                f"{self.target.basepoint}")

    def __call__(self, x):
        return self.table[self.source.elements.index(x)]

    def precompose(self, psi) -> "PinnedMap":
        """f o psi for a basepoint-fixing permutation psi of the source,
        given as a dict."""
        if psi[self.source.basepoint] != self.source.basepoint:
            raise BasepointViolated("psi must fix the basepoint")
        return PinnedMap(self.source, self.target,
                         tuple(self(psi[x]) for x in self.source.elements))


@dataclass(frozen=True)
class LoopClass:
    """Canonical orbit representative: the multiset of non-basepoint values
    attained away from the source basepoint (sorted tuple)."""

    target: PointedSet
    values: tuple

    def __post_init__(self):
        if tuple(sorted(self.values)) != self.values:
            raise LoopError("values must be sorted (canonical form)")
        if any(v == self.target.basepoint or v not in self.target.elements
               for v in self.values):
            raise LoopError("class values must be non-basepoint targets")

    @property
    def size(self) -> int:
        return len(self.values)

    def is_unit(self) -> bool:
        return not self.values

    def serialize(self) -> str:
        return "{" + ",".join(str(v) for v in self.values) + "}"


def class_of(f: PinnedMap) -> LoopClass:
    """The orbit invariant under precomposition by basepoint-fixing
    permutations: values over the non-basepoint points, basepoint values
    dropped, sorted."""
    vals = [f(x) for x in f.source.others()]
    vals = [v for v in vals if v != f.target.basepoint]
    return LoopClass(f.target, tuple(sorted(vals)))


def unit_class(target: PointedSet) -> LoopClass:
    return LoopClass(target, ())


def all_pinned_maps(source: PointedSet, target: PointedSet):
    for imgs in itertools.product(target.elements, repeat=source.size - 1):
        table = []
        it = iter(imgs)
        for x in source.elements:
            table.append(target.basepoint if x == source.basepoint
                         else next(it))
        yield PinnedMap(source, target, tuple(table))


def basepoint_fixing_permutations(source: PointedSet):
    others = source.others()
    for perm in itertools.permutations(others):
        psi = {source.basepoint: source.basepoint}
        psi.update(dict(zip(others, perm)))
        yield psi


def wedge(a: LoopClass, b: LoopClass, capacity: int | None = None) -> LoopClass:
    """Composition: multiset union (the two halves of a wedge re-indexed into
    one source through any half-to-target bijection; the result does not
    depend on that choice, which wedge_via_maps exercises).

    capacity: in strict finite-level mode, the source has only |M|-1 free
    points; exceeding it is an error.  None means the unbounded model with
    finitely supported maps.
    """
    if a.target != b.target:
        raise LoopError("classes over different targets")
    merged = tuple(sorted(a.values + b.values))
    if capacity is not None and len(merged) > capacity:
        raise CapacityExceeded(
            f"multiset size {len(merged)} exceeds capacity {capacity}")
    return LoopClass(a.target, merged)


def wedge_via_maps(fa: PinnedMap, fb: PinnedMap, chi: dict) -> LoopClass:
    """Wedge through an explicit gluing: chi maps each non-basepoint point
    of a fresh source onto ('L', x) or ('R', x) tags of the two halves."""
    target = fa.target
    size = len(chi) + 1
    src = PointedSet(tuple(range(size)), 0)
    table = [target.basepoint]
    for i in range(1, size):
        side, x = chi[i]
        half = fa if side == "L" else fb
        table.append(half(x))
    return class_of(PinnedMap(src, target, tuple(table)))


def cancel(a: LoopClass, c: LoopClass) -> LoopClass:
    """Multiset subtraction witnessing cancelativity: a = (a v c) minus c."""
    vals = list(a.values)
    for v in c.values:
        vals.remove(v)
    return LoopClass(a.target, tuple(sorted(vals)))


# ---------------------------------------------------------------------------
# group completion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoopGroupElement:
    """Integer vector indexed by the non-basepoint target values (the
    difference-of-multisets completion of the monoid)."""

    target: PointedSet
    counts: tuple

    def __post_init__(self):
        if len(self.counts) != self.target.size - 1:
            raise LoopError("count vector has the wrong length")

    def __add__(self, other):
        if self.target != other.target:
            raise LoopError("different targets")
        return LoopGroupElement(self.target, tuple(
            x + y for x, y in zip(self.counts, other.counts)))

    def __neg__(self):
        return LoopGroupElement(self.target, tuple(-x for x in self.counts))

    def __sub__(self, other):
        return self + (-other)

    def is_zero(self) -> bool:
        return all(x == 0 for x in self.counts)


def grothendieck(a: LoopClass) -> LoopGroupElement:
    """The counting homomorphism into the free abelian group on the
    non-basepoint values.  The constructed rank is |N| - 1: the basepoint
    value contributes nothing in the multiset model (reported, and flagged
    against the nominal card(N))."""
    others = a.target.others()
    counts = [0] * len(others)
    for v in a.values:
        counts[others.index(v)] += 1
    return LoopGroupElement(a.target, tuple(counts))


def group_rank_report(target: PointedSet) -> dict:
    rank = target.size - 1
    return {
        "constructed_rank": rank,
        "nominal_rank_card_N": target.size,
        "discrepancy": target.size - rank,
        "note": "the basepoint value is invisible to the multiset model, "
                "so the free group built here has rank card(N) - 1",
    }


# ---------------------------------------------------------------------------
# the first-disagreement ultrametric
# ---------------------------------------------------------------------------

def baire_distance(f, g, p: int) -> Fraction:
    """|pi|^j with j the first index where the sequences differ; 0 when they
    agree everywhere.  (Decreasing convention: longer agreement means
    smaller distance.)"""
    if len(f) != len(g):
        raise LoopError("sequences must share an enumeration")
    for j, (x, y) in enumerate(zip(f, g)):
        if x != y:
            return Fraction(1, p) ** j
    return Fraction(0)


# ---------------------------------------------------------------------------
# integer threads and digit-stream coordinates
# ---------------------------------------------------------------------------

def induced_projection(value_map: dict, src: PointedSet, dst: PointedSet):
    """The homomorphism of count vectors induced by a basepoint-preserving
    value projection N_l -> N_k."""
    if value_map[src.basepoint] != dst.basepoint:
        raise BasepointViolated("value projection must preserve basepoints")

    def proj(elem: LoopGroupElement) -> LoopGroupElement:
        counts = [0] * (dst.size - 1)
        dst_others = dst.others()
        for v, c in zip(src.others(), elem.counts):
            w = value_map[v]
            if w != dst.basepoint:
                counts[dst_others.index(w)] += c
        return LoopGroupElement(dst, tuple(counts))

    return proj


def loop_thread_check(levels: list, connecting: list, p: int,
                      digits: int = 16) -> dict:
    """levels: LoopGroupElements from fine to coarse is NOT assumed; the
    list is ordered coarse to fine, connecting[i] maps level i+1 onto level
    i.  Verifies compatibility and emits the per-coordinate base-p digit
    streams of the finest level's integers."""
    for i, proj in enumerate(connecting):
        down = proj(levels[i + 1])
        if down.counts != levels[i].counts:
            raise Incompatible(
                f"level {i + 1} projects to {down.counts}, "
                f"expected {levels[i].counts}")
    finest = levels[-1]
    streams = [integer_digits(c, p, digits) for c in finest.counts]
    return {
        "levels": len(levels),
        "compatible": True,
        "coordinates": streams,
    }


def integer_digits(z: int, p: int, n: int) -> tuple:
    """First n base-p digits of the integer z (negatives through the usual
    complement representation mod p^n)."""
    m = z % p ** n
    out = []
    for _ in range(n):
        out.append(m % p)
        m //= p
    return tuple(out)
