"""Multiplicative local one-parameter structure over positive-characteristic
fields at finite levels: the unit-ball groups 1 + theta^s(...), level
homomorphisms eta with anchor conditions, tower compatibility of the etas,
and the additive obstruction (p-th powers of generic near-identity maps do
not return to the identity when char K = p).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import lcm

from .calculus import FnRepr, cnb_norm, default_sampler
from .fields import (DEFAULT_PRECISION, FieldDescriptor, LocalFieldElement,
                     ResidueRing, laurent, project_down)
from .linalg import ultrametric_rank
from .poly import MultiPoly
from .tower import DiffRepr, LevelPermutation


class OneParamError(Exception):
    pass


class Infeasible(OneParamError):
    pass


class Incompatible(OneParamError):
    pass


class DegenerateSample(OneParamError):
    pass


# ---------------------------------------------------------------------------
# the multiplicative unit-ball groups
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiplicativeBallGroup:
    """pi_{s_v} of the multiplicative ball 1 + theta^s O in F_{p^u}((theta)).

    Elements are tuples of s_v - s GF codes: (c_0, ..., c_{w-1}) stands for
    1 + theta^s (c_0 + c_1 theta + ...).  The group is a finite abelian
    p-group of order p^(u*(s_v-s)).
    """

    p: int
    u: int
    s: int
    s_v: int

    def __post_init__(self):
        if not 1 <= self.s < self.s_v:
            raise OneParamError("need s_v > s >= 1")

    @property
    def desc(self) -> FieldDescriptor:
        return laurent(self.p, self.u)

    @property
    def width(self) -> int:
        return self.s_v - self.s

    @property
    def order(self) -> int:
        return (self.p ** self.u) ** self.width

    def identity(self):
        return (0,) * self.width

    def elements(self):
        G = self.desc.gf()
        return itertools.product(range(G.q), repeat=self.width)

    def mul(self, a, b):
        """(1 + A)(1 + B) = 1 + A + B + AB mod theta^{s_v}."""
        G = self.desc.gf()
        w = self.width
        out = [G.add(x, y) for x, y in zip(a, b)]
        for i, x in enumerate(a):
            if not x:
                continue
            for j, y in enumerate(b):
                # A B contributes at theta^(2s + i + j) = slot s + i + j
                slot = self.s + i + j
                if slot >= w:
                    break
                if y:
                    out[slot] = G.add(out[slot], G.mul(x, y))
        return tuple(out)

    def inverse(self, a):
        acc = self.identity()
        cur = a
        # |G| is a p-power, so a^(order-1) inverts a
        e = self.order - 1
        while e:
            if e & 1:
                acc = self.mul(acc, cur)
            cur = self.mul(cur, cur)
            e >>= 1
        return acc

    def power(self, a, e: int):
        acc = self.identity()
        cur = a
        e %= self.order
        while e:
            if e & 1:
                acc = self.mul(acc, cur)
            cur = self.mul(cur, cur)
            e >>= 1
        return acc

    def element_order(self, a) -> int:
        o, cur = 1, a
        while cur != self.identity():
            cur = self.mul(cur, a)
            o += 1
        return o

    def exponent(self) -> int:
        return lcm(*[self.element_order(a) for a in self.elements()])

    def cyclic_subgroup(self, a):
        out = [self.identity()]
        cur = a
        while cur != self.identity():
            out.append(cur)
            cur = self.mul(cur, a)
        return out

    def to_field(self, a, precision: int | None = None) -> LocalFieldElement:
        precision = precision or max(self.s_v, DEFAULT_PRECISION)
        coeffs = [0] * self.s + list(a)
        coeffs[0] = 1
        return LocalFieldElement.from_laurent_coeffs(self.desc, 0, coeffs,
                                                     precision)

    def from_field(self, x: LocalFieldElement):
        if x.valuation != 0:
            raise OneParamError("ball group elements are units")
        code = x.project(self.s_v)
        if code[0] != 1 or any(code[1:self.s]):
            raise OneParamError("element is not in 1 + theta^s O")
        return tuple(code[self.s:])

    def project_to(self, a, coarser: "MultiplicativeBallGroup"):
        if coarser.s != self.s or coarser.s_v > self.s_v:
            raise OneParamError("projection needs the same s and a smaller s_v")
        return tuple(a[: coarser.width])


def ball_group(s: int, s_v: int, p: int, u: int = 1) -> MultiplicativeBallGroup:
    return MultiplicativeBallGroup(p, u, s, s_v)


# ---------------------------------------------------------------------------
# level homomorphisms
# ---------------------------------------------------------------------------

@dataclass
class LocalSubgroupLevel:
    """eta: ball group -> permutations of the level-q_v residues, with
    eta(anchor) equal to the level image of the underlying map."""

    q_v: int
    group: MultiplicativeBallGroup
    table: dict
    anchor: tuple
    sigma: LevelPermutation

    def verify_conditions(self) -> dict:
        ident = self.table[self.group.identity()]
        cond1 = ident.is_identity()
        cond2 = True
        for a in self.group.elements():
            for b in self.group.elements():
                lhs = self.table[self.group.mul(a, b)]
                rhs = self.table[a].compose(self.table[b])
                if lhs.images != rhs.images:
                    cond2 = False
                    break
            if not cond2:
                break
        cond3 = self.table[self.anchor].images == self.sigma.images
        return {"unit_maps_to_id": cond1, "homomorphism": cond2,
                "anchor_hits_sigma": cond3,
                "ok": cond1 and cond2 and cond3}


def eta_construct(sigma: LevelPermutation, x0,
                  G: MultiplicativeBallGroup) -> LocalSubgroupLevel:
    """eta on <x0> sends x0^a to sigma^a; a complement of <x0> (when one
    exists) is sent to the identity.  Infeasible reports the honest
    obstruction: order divisibility, or no complement splitting off <x0>.
    """
    d = sigma.order()
    ord_x0 = G.element_order(x0)
    if ord_x0 % d != 0:
        raise Infeasible(
            f"order(sigma) = {d} does not divide order(x0) = {ord_x0}")
    cyc = G.cyclic_subgroup(x0)
    complement = _find_complement(G, set(cyc))
    if complement is None:
        raise Infeasible(
            f"<x0> (order {ord_x0}) admits no complement in the group of "
            f"order {G.order}; the level cannot be split at this anchor")
    ident_perm = LevelPermutation.identity(sigma.level, sigma.elements,
                                           sigma.basepoint)
    sigma_pows = [ident_perm]
    for _ in range(ord_x0 - 1):
        sigma_pows.append(sigma_pows[-1].compose(sigma))
    table = {}
    for a in range(ord_x0):
        for c in complement:
            g = G.mul(cyc[a], c)
            table[g] = sigma_pows[a]
    if len(table) != G.order:
        raise Infeasible("the product <x0> * complement misses elements")
    level = LocalSubgroupLevel(sigma.level, G, table, x0, sigma)
    checks = level.verify_conditions()
    if not checks["ok"]:
        raise Infeasible(f"construction failed its own conditions: {checks}")
    return level


def _find_complement(G: MultiplicativeBallGroup, cyc: set):
    """A subgroup C with C * <x0> = G and trivial intersection, by closure
    of up to two generators (enough for the desk-scale groups here)."""
    target = G.order // len(cyc)
    if target == 1:
        return [G.identity()]
    elems = list(G.elements())
    for gens in itertools.chain(((e,) for e in elems),
                                itertools.combinations(elems, 2)):
        C = _closure(G, gens)
        if len(C) == target and sum(1 for c in C if c in cyc) == 1:
            return sorted(C)
    return None


def _closure(G: MultiplicativeBallGroup, gens):
    out = {G.identity()}
    frontier = list(gens)
    while frontier:
        g = frontier.pop()
        if g in out:
            continue
        out.add(g)
        for h in list(out):
            prod = G.mul(g, h)
            if prod not in out:
                frontier.append(prod)
    return out


def project_permutation(desc: FieldDescriptor, perm: LevelPermutation,
                        k: int) -> LevelPermutation:
    """The level-k table induced by a finer permutation; raises Incompatible
    when the finer table does not descend."""
    mapping = {}
    for e, img in zip(perm.elements, perm.images):
        down = project_down(desc, e, perm.level, k)
        val = project_down(desc, img, perm.level, k)
        if mapping.get(down, val) != val:
            raise Incompatible(
                f"finer table does not descend: class {down} has two images")
        mapping[down] = val
    return LevelPermutation.from_mapping(k, mapping)


def lift_check(levels: list, desc: FieldDescriptor) -> dict:
    """Compatibility squares of consecutive eta levels: projecting
    eta_{v+1}(x) to the coarser permutation level equals eta_v of the
    projected group element, for every x."""
    for lo, hi in zip(levels, levels[1:]):
        if lo.group.s != hi.group.s:
            raise Incompatible("levels use different ball parameters s")
        for x in hi.group.elements():
            down_x = hi.group.project_to(x, lo.group)
            projected = project_permutation(desc, hi.table[x], lo.q_v)
            if projected.images != lo.table[down_x].images:
                raise Incompatible(
                    f"square fails at group element {x}")
    return {"levels": [lv.q_v for lv in levels], "compatible": True}


# ---------------------------------------------------------------------------
# the additive obstruction
# ---------------------------------------------------------------------------

def compose_univariate(P: MultiPoly, Q: MultiPoly, degree_cap: int) -> MultiPoly:
    """P(Q(x)) for univariate polynomials, truncating x-degrees past the cap."""
    result = MultiPoly(1)
    # Horner from the top coefficient down
    top = P.degree_in(0)
    for d in range(top, -1, -1):
        result = result * Q
        result = MultiPoly(1, {e: c for e, c in result.terms.items()
                               if e[0] <= degree_cap})
        c = P.coefficient_of((d,))
        if not (c == 0):
            result = result + MultiPoly.constant(1, c)
    return result


def iterate_map(poly: MultiPoly, times: int, degree_cap: int) -> MultiPoly:
    acc = poly
    for _ in range(times - 1):
        acc = compose_univariate(acc, poly, degree_cap)
    return acc


def additive_obstruction(g: DiffRepr, precision: int = DEFAULT_PRECISION,
                         degree_cap: int = 64, samples: int = 100) -> dict:
    """For char-p fields: computes the p-fold composition of g symbolically
    and reports whether it is the identity; also verifies the contraction
    bound |g^p(x) - x| <= ||h||^2 |x| on sampled points, h = g - id."""
    desc = g.desc
    p = desc.char
    if p == 0:
        raise OneParamError("the additive obstruction lives in char p > 0")
    if not isinstance(g.backing, MultiPoly):
        raise OneParamError("need a polynomial-backed map")
    gp = iterate_map(g.backing, p, degree_cap)
    one = LocalFieldElement.one(desc, precision)
    ident = MultiPoly(1, {(1,): one})
    delta = gp - ident
    nonzero = [(e[0], c) for e, c in delta.terms.items()
               if not (isinstance(c, LocalFieldElement) and c.is_zero())]
    is_identity = not nonzero
    # h-norm via the sampled C^1 norm (attained for the monomial fixtures)
    h_poly = g.backing - ident
    h_fn = FnRepr(1, h_poly)
    sampler = default_sampler(desc, 1, span=2, precision=precision)
    h_norm = cnb_norm(h_fn, 1, sampler)
    bound_ok = True
    bound_records = []
    ring = ResidueRing(desc, 2)
    count = 0
    for code in ring.elements():
        if count >= samples:
            break
        x = ring.lift(code, precision)
        count += 1
        lhs = (gp.eval_cached([x]) - x)
        lhs_norm = Fraction(0) if lhs.is_zero() else lhs.norm()
        rhs = h_norm * h_norm * (Fraction(0) if x.is_exact_zero else x.norm())
        ok = lhs_norm <= rhs
        bound_ok = bound_ok and ok
        bound_records.append((str(code), str(lhs_norm), str(rhs), ok))
    witness = None
    if not is_identity:
        deg, c = min(nonzero)
        witness = {"degree": deg, "coefficient_valuation": c.valuation}
    return {
        "p": p,
        "g_p_is_identity": is_identity,
        "witness": witness,
        "h_norm": h_norm,
        "bound_holds": bound_ok,
        "samples": count,
    }


def shift_family_check(desc: FieldDescriptor, c: LocalFieldElement,
                       ys, samples) -> bool:
    """Positive control: the additive family x -> x + y c satisfies
    g^{y1} o g^{y2} = g^{y1+y2} exactly at truncation."""
    for y1 in ys:
        for y2 in ys:
            for x in samples:
                lhs = (x + y2 * c) + y1 * c
                rhs = x + (y1 + y2) * c
                if not lhs.same(rhs):
                    return False
    return True


# ---------------------------------------------------------------------------
# condition (i): linear independence of the twisted increments
# ---------------------------------------------------------------------------

def condition_i_check(g: DiffRepr, sample_points,
                      precision: int = DEFAULT_PRECISION) -> dict:
    """Evaluates w = h - h o g^{-1} (h = g - id) and its compositions with
    g^2, ..., g^{p-1} on the samples and reports whether the rank of the
    evaluation matrix is p - 1 (valuation-pivoted elimination)."""
    desc = g.desc
    p = desc.char
    if p == 0:
        raise OneParamError("condition (i) lives in char p > 0")
    if len(sample_points) < p - 1:
        raise DegenerateSample(
            f"need at least {p - 1} sample points, got {len(sample_points)}")
    ginv = g.inverse()

    def h(x):
        return g.evaluate(x) - x

    def w(x):
        return h(x) - h(ginv.evaluate(x))

    def g_pow(x, j):
        for _ in range(j):
            x = g.evaluate(x)
        return x

    exponents = [0] + list(range(2, p))
    rows = []
    for j in exponents:
        rows.append([w(g_pow(x, j)) for x in sample_points])
    rank = ultrametric_rank(rows)
    return {
        "p": p,
        "rank": rank,
        "required": p - 1,
        "holds": rank == p - 1,
        "rows": len(rows),
        "samples": len(sample_points),
    }
