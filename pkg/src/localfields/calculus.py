"""Difference-quotient calculus: the iterated partial quotients on flat
tuples (x; v_1..v_n; t_1..t_n), their recursive pair-tree refinement, the
C^n_b norms, differentials, and the product / multi-factor / composition
operator identities checked against direct recursion.

Two point flavors share one evaluator through a small context interface:

* flat points carry one direction and one scalar per level;
* tree points are the recursive pairs x_k = (x_{k-1}, v_{k-1}, t_k), whose
  direction slots are themselves trees (2^n vector slots, 2^n - 1 scalars).

Operator expressions (difference step, projection-back, shift) are reified
as words and evaluated by interpretation, never compiled.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .fields import LocalFieldElement
from .poly import MultiPoly, quotient_in_new_var

MAX_ORDER = 6  # tree sizes grow as 2^n


class CalculusError(Exception):
    pass


class DomainViolation(CalculusError):
    pass


class ShapeMismatch(CalculusError):
    pass


class CharacteristicObstruction(CalculusError):
    pass


class ZeroDenominator(CalculusError):
    pass


# ---------------------------------------------------------------------------
# scalars and vectors (duck typed: Fraction, LocalFieldElement, MultiPoly)
# ---------------------------------------------------------------------------

def is_zero_scalar(t) -> bool:
    if isinstance(t, LocalFieldElement):
        return t.is_zero()
    if isinstance(t, MultiPoly):
        return t.is_zero()
    return t == 0


def scalar_div(a, t):
    """a / t where t may be a plain variable monomial in symbolic mode;
    vector values divide slotwise."""
    if isinstance(a, tuple):
        return tuple(scalar_div(x, t) for x in a)
    if isinstance(a, MultiPoly) or isinstance(t, MultiPoly):
        if not isinstance(t, MultiPoly):
            return a.scale_div(t)
        mono = list(t.terms.items())
        if len(mono) == 1 and sum(mono[0][0]) == 1 and mono[0][1] == 1:
            i = mono[0][0].index(1)
            if not isinstance(a, MultiPoly):
                raise ZeroDenominator("cannot divide a constant by a variable")
            return a.div_var(i)
        raise ZeroDenominator("symbolic division only by a bare variable")
    if is_zero_scalar(t):
        raise ZeroDenominator("difference step at t = 0 needs a polynomial "
                              "backing (symbolic extension)")
    return a / t


def value_norm(x) -> Fraction:
    """Norm of a value; an apparent zero (0 at its working precision) counts
    as 0, which keeps every sampled supremum a lower bound."""
    if isinstance(x, LocalFieldElement):
        return Fraction(0) if x.is_zero() else x.norm()
    if isinstance(x, tuple):
        return max((value_norm(c) for c in x), default=Fraction(0))
    return abs(Fraction(x))


def values_same(a, b, precision=None) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(
            values_same(x, y, precision) for x, y in zip(a, b))
    if isinstance(a, LocalFieldElement):
        return a.same(b, precision)
    return a == b


def vec_add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def vec_scale(a, t):
    return tuple(x * t for x in a)


def value_sub(a, b):
    if isinstance(a, tuple):
        return tuple(value_sub(x, y) for x, y in zip(a, b))
    return a - b


def value_add(a, b):
    if isinstance(a, tuple):
        return tuple(value_add(x, y) for x, y in zip(a, b))
    return a + b


def value_mul(a, b):
    """Product of check values; a scalar times a vector acts slotwise (the
    algebra-valued case of the product rule)."""
    if isinstance(b, tuple):
        return tuple(value_mul(a, y) for y in b)
    if isinstance(a, tuple):
        return tuple(value_mul(x, b) for x in a)
    return a * b


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhiPoint:
    """Flat point (x; v_1..v_n; t_1..t_n)."""

    x: tuple
    vs: tuple = ()
    ts: tuple = ()

    def __post_init__(self):
        if len(self.vs) != len(self.ts):
            raise ShapeMismatch("need one scalar per direction")

    @property
    def level(self) -> int:
        return len(self.ts)

    def partial_sums(self):
        """x, x + v_1 t_1, x + v_1 t_1 + v_2 t_2, ... (domain membership)."""
        acc = self.x
        yield acc
        for v, t in zip(self.vs, self.ts):
            acc = vec_add(acc, vec_scale(v, t))
            yield acc


class TreePoint:
    """Recursive pair point: level 0 wraps a vector, level k is
    (lower, direction, t) with direction a level-(k-1) TreePoint."""

    __slots__ = ("vec", "lower", "direction", "t", "level")

    def __init__(self, vec=None, lower=None, direction=None, t=None):
        if vec is not None:
            self.vec, self.lower, self.direction, self.t = tuple(vec), None, None, None
            self.level = 0
        else:
            if lower.level != direction.level:
                raise ShapeMismatch(
                    f"direction level {direction.level} != base level {lower.level}")
            self.vec = None
            self.lower, self.direction, self.t = lower, direction, t
            self.level = lower.level + 1

    @classmethod
    def leaf(cls, vec):
        return cls(vec=vec)

    def add_scaled(self, other: "TreePoint", t) -> "TreePoint":
        """self + t * other, componentwise over the whole tree."""
        if self.level != other.level:
            raise ShapeMismatch("tree shapes differ")
        if self.level == 0:
            return TreePoint.leaf(vec_add(self.vec, vec_scale(other.vec, t)))
        return TreePoint(lower=self.lower.add_scaled(other.lower, t),
                         direction=self.direction.add_scaled(other.direction, t),
                         t=self.t + other.t * t)

    def slots(self):
        """All vector slots, depth-first (2^level of them)."""
        if self.level == 0:
            yield self.vec
        else:
            yield from self.lower.slots()
            yield from self.direction.slots()

    def scalars(self):
        if self.level:
            yield from self.lower.scalars()
            yield from self.direction.scalars()
            yield self.t

    def __repr__(self):
        if self.level == 0:
            return f"leaf{self.vec}"
        return f"({self.lower!r}, {self.direction!r}, {self.t!r})"


def zero_tree(level: int, dim: int, zero) -> TreePoint:
    if level == 0:
        return TreePoint.leaf((zero,) * dim)
    return TreePoint(lower=zero_tree(level - 1, dim, zero),
                     direction=zero_tree(level - 1, dim, zero), t=zero)


def embed_direction(v, level: int, zero) -> TreePoint:
    """The tree direction whose only nonzero slot is the innermost base: the
    canonical embedding that makes tree evaluation restrict to the flat one."""
    if level == 0:
        return TreePoint.leaf(v)
    return TreePoint(lower=embed_direction(v, level - 1, zero),
                     direction=zero_tree(level - 1, len(v), zero), t=zero)


def embed_phi_point(pt: PhiPoint, zero=None) -> TreePoint:
    """Canonical slice: the tree point at which the tree quotient reproduces
    the flat quotient (fixed variable ordering shipped with the module)."""
    if zero is None:
        zero = pt.x[0] * 0
    node = TreePoint.leaf(pt.x)
    for k, (v, t) in enumerate(zip(pt.vs, pt.ts)):
        node = TreePoint(lower=node, direction=embed_direction(v, k, zero), t=t)
    return node


# ---------------------------------------------------------------------------
# evaluation contexts
# ---------------------------------------------------------------------------

class PhiContext:
    """Flat flavor: level step consumes the last (v, t); the shift moves the
    base point only."""

    flavor = "phi"

    @staticmethod
    def split(pt: PhiPoint):
        return (PhiPoint(pt.x, pt.vs[:-1], pt.ts[:-1]), pt.vs[-1], pt.ts[-1])

    @staticmethod
    def shift(lower: PhiPoint, direction, t) -> PhiPoint:
        return PhiPoint(vec_add(lower.x, vec_scale(direction, t)),
                        lower.vs, lower.ts)

    @staticmethod
    def base_vec(pt: PhiPoint):
        return pt.x


class TreeContext:
    """Pair-tree flavor."""

    flavor = "upsilon"

    @staticmethod
    def split(pt: TreePoint):
        return (pt.lower, pt.direction, pt.t)

    @staticmethod
    def shift(lower: TreePoint, direction: TreePoint, t) -> TreePoint:
        return lower.add_scaled(direction, t)

    @staticmethod
    def base_vec(pt: TreePoint):
        while pt.level:
            pt = pt.lower
        return pt.vec


def context_for(pt):
    return TreeContext if isinstance(pt, TreePoint) else PhiContext


def diff_eval(fn, pt, ctx=None):
    """The iterated difference quotient of a level-0 function at a point.

    fn takes a base vector; the recursion runs over the point's levels.
    Division is by the level scalars only.
    """
    ctx = ctx or context_for(pt)
    if getattr(pt, "level") == 0:
        return fn(ctx.base_vec(pt))
    lower, direction, t = ctx.split(pt)
    hi = diff_eval(fn, ctx.shift(lower, direction, t), ctx)
    lo = diff_eval(fn, lower, ctx)
    return scalar_div(value_sub(hi, lo), t)


# ---------------------------------------------------------------------------
# function representations
# ---------------------------------------------------------------------------

@dataclass
class FnRepr:
    """Evaluable map on a clopen piece of K^m (or Q^m in exact mode).

    backing: MultiPoly (scalar), list of MultiPoly (vector valued), a Mahler
    series, or an opaque callable on vectors.
    """

    arity: int
    backing: object
    codim: int = 1
    domain: object = None        # optional membership predicate on vectors
    smooth_class: str | None = None
    _sym_cache: dict = field(default_factory=dict, repr=False)

    def eval_vec(self, vec):
        if self.domain is not None and not self._sym_mode(vec) \
                and not self.domain(vec):
            raise DomainViolation(f"point {vec} outside the domain")
        b = self.backing
        if isinstance(b, MultiPoly):
            return b.eval_cached(list(vec))
        if isinstance(b, (list, tuple)):
            return tuple(c.eval_cached(list(vec)) for c in b)
        if hasattr(b, "evaluate"):  # Mahler series (arity 1)
            return b.evaluate(vec[0])
        return b(vec)

    @staticmethod
    def _sym_mode(vec) -> bool:
        return any(isinstance(c, MultiPoly) for c in vec)

    def is_polynomial(self) -> bool:
        return isinstance(self.backing, (MultiPoly, list, tuple))

    def __call__(self, vec):
        return self.eval_vec(vec)

    @classmethod
    def poly(cls, mpoly: MultiPoly, domain=None, smooth_class=None):
        return cls(mpoly.nvars, mpoly, 1, domain, smooth_class)

    def product(self, other: "FnRepr") -> "FnRepr":
        if self.arity != other.arity:
            raise ShapeMismatch("factor arities differ")
        if isinstance(self.backing, MultiPoly) and \
                isinstance(other.backing, MultiPoly):
            return FnRepr(self.arity, self.backing * other.backing, 1,
                          self.domain, None)
        return FnRepr(self.arity,
                      lambda v, a=self, b=other: value_mul(a.eval_vec(v),
                                                           b.eval_vec(v)),
                      max(self.codim, other.codim), self.domain, None)


def product_many(fs) -> FnRepr:
    acc = fs[0]
    for f in fs[1:]:
        acc = acc.product(f)
    return acc


# ---------------------------------------------------------------------------
# the two evaluators
# ---------------------------------------------------------------------------

def phi_eval(f: FnRepr, pt: PhiPoint, check_domain: bool = True):
    """Iterated partial difference quotient at a flat point.

    Zero scalars require a polynomial backing: the quotient is then computed
    symbolically (exact division by the scalar variables), which realizes
    the continuous extension.
    """
    n = pt.level
    if n > MAX_ORDER:
        raise CalculusError(f"order {n} exceeds the cap {MAX_ORDER}")
    if check_domain and f.domain is not None:
        for s in pt.partial_sums():
            if not f.domain(s):
                raise DomainViolation(f"partial sum {s} leaves the domain")
    if any(is_zero_scalar(t) for t in pt.ts):
        if not f.is_polynomial():
            raise ZeroDenominator(
                "t = 0 needs a polynomial backing; eval_small_t provides the "
                "surrogate extension for opaque evaluators")
        sym = _phi_symbolic(f, n)
        values = list(pt.x)
        for v in pt.vs:
            values.extend(v)
        values.extend(pt.ts)
        return sym.eval_cached(values)
    return diff_eval(f.eval_vec, pt, PhiContext)


def eval_small_t(f: FnRepr, pt: PhiPoint):
    """Extension-by-small-t for opaque (non-polynomial) backings.

    Every vanishing scalar is replaced by pi^(N//2), N being the smallest
    precision among the point's field entries.  The budget arithmetic then
    charges N//2 digits for each replaced level, so the returned element's
    own precision IS the documented error bound of the surrogate.
    """
    entries = [*pt.x, *(c for v in pt.vs for c in v), *pt.ts]
    descs = [c.desc for c in entries if isinstance(c, LocalFieldElement)]
    if not descs:
        raise CalculusError("eval_small_t needs field-valued points")
    precisions = [int(c.precision) for c in entries
                  if isinstance(c, LocalFieldElement)
                  and c.precision != float("inf")]
    N = min(precisions) if precisions else 2 * MAX_ORDER
    small = descs[0].uniformizer(N) ** max(N // 2, 1)
    ts = tuple(small if is_zero_scalar(t) else t for t in pt.ts)
    return diff_eval(f.eval_vec, PhiPoint(pt.x, pt.vs, ts), PhiContext)


def _phi_symbolic(f: FnRepr, n: int) -> MultiPoly:
    """Symbolic iterated quotient in variables
    (x_1..x_m, v_{1,1}..v_{1,m}, ..., v_{n,1}..v_{n,m}, t_1..t_n)."""
    key = ("phi", n)
    if key in f._sym_cache:
        return f._sym_cache[key]
    m = f.arity
    nv = m + n * m + n
    xs = [MultiPoly.variable(nv, i, 1) for i in range(m)]
    vs = [[MultiPoly.variable(nv, m + k * m + i, 1) for i in range(m)]
          for k in range(n)]
    ts = [MultiPoly.variable(nv, m + n * m + k, 1) for k in range(n)]
    pt = PhiPoint(tuple(xs), tuple(tuple(v) for v in vs), tuple(ts))
    backing = f.backing if isinstance(f.backing, MultiPoly) else _as_poly(f)
    ext = backing.extend(nv)

    def fn(vec):
        return ext.subst({i: vec[i] for i in range(m)})

    sym = diff_eval(fn, pt, PhiContext)
    f._sym_cache[key] = sym
    return sym


def _as_poly(f: FnRepr) -> MultiPoly:
    b = f.backing
    if isinstance(b, MultiPoly):
        return b
    if hasattr(b, "coeffs"):  # Mahler series: finite sum of binomials
        from .mahler import mahler_polynomial
        return mahler_polynomial(b)
    raise CalculusError("need a polynomial (or Mahler) backing")


def upsilon_eval(f: FnRepr, pt: TreePoint):
    """Iterated quotient at a pair-tree point.

    Divisions happen by the spine scalars and their shifted combinations
    only, so the numeric path is attempted first; a vanishing denominator
    falls back to the symbolic quotient for polynomial backings.
    """
    n = pt.level
    if n > MAX_ORDER:
        raise CalculusError(f"order {n} exceeds the cap {MAX_ORDER}")
    try:
        return diff_eval(f.eval_vec, pt, TreeContext)
    except ZeroDenominator:
        if not f.is_polynomial():
            raise
    sym = _upsilon_symbolic(f, n)
    values = []
    for slot in pt.slots():
        values.extend(slot)
    values.extend(pt.scalars())
    return sym.eval_cached(values)


def _upsilon_symbolic(f: FnRepr, n: int):
    key = ("upsilon", n)
    if key in f._sym_cache:
        return f._sym_cache[key]
    m = f.arity
    nslots = 2 ** n
    nscal = 2 ** n - 1
    nv = nslots * m + nscal
    slot_vars = [[MultiPoly.variable(nv, s * m + i, 1)
                  for i in range(m)] for s in range(nslots)]
    scal_vars = [MultiPoly.variable(nv, nslots * m + k, 1)
                 for k in range(nscal)]
    slot_iter = iter(slot_vars)
    scal_iter = iter(scal_vars)

    def build(level):
        if level == 0:
            return TreePoint.leaf(tuple(next(slot_iter)))
        lower = build(level - 1)
        direction = build(level - 1)
        return TreePoint(lower=lower, direction=direction, t=next(scal_iter))

    # depth-first slot order must match TreePoint.slots()/scalars()
    pt = build(n)
    backing = _as_poly(f)
    ext = backing.extend(nv)

    def fn(vec):
        return ext.subst({i: vec[i] for i in range(m)})

    sym = diff_eval(fn, pt, TreeContext)
    f._sym_cache[key] = sym
    return sym


# ---------------------------------------------------------------------------
# norms and differentials
# ---------------------------------------------------------------------------

@dataclass
class SamplerSpec:
    """Finite sample of evaluation data for the C^n_b norms.

    Directions are normalized (sup norm 1) and |t| <= 1; t = 0 entries are
    kept only for polynomial backings (symbolic extension).  The resulting
    norm is a LOWER bound of the true supremum: it is monotone nondecreasing
    in the sample and never overshoots.
    """

    xs: list
    dirs: list
    ts: list

    def __post_init__(self):
        if not self.xs or not self.dirs or not self.ts:
            raise CalculusError("empty sampler")


def default_sampler(desc, m: int = 1, span: int = 2,
                    precision: int = 24) -> SamplerSpec:
    """Residue representatives as base points, unit coordinate directions,
    scalars 1, pi, pi^2 and 0."""
    from .fields import LocalFieldElement
    one = LocalFieldElement.one(desc, precision)
    pi = desc.uniformizer(precision)
    xs = []
    for code in range(min(desc.residue_cardinality(span), 16)):
        if desc.family == "padic":
            x = LocalFieldElement.from_int(desc, code, precision)
        else:
            digits = []
            c = code
            for _ in range(span):
                digits.append(c % desc.residue_size)
                c //= desc.residue_size
            x = LocalFieldElement.from_laurent_coeffs(desc, 0, digits, precision)
        xs.append((x,) * m if m > 1 else (x,))
    zero = LocalFieldElement.zero(desc)
    dirs = []
    for i in range(m):
        d = [zero] * m
        d[i] = one
        dirs.append(tuple(d))
    ts = [one, pi, pi * pi, zero]
    return SamplerSpec(xs, dirs, ts)


def cnb_norm(f: FnRepr, n: int, sampler: SamplerSpec,
             flavor: str = "phi") -> Fraction:
    """max over k <= n and sampled points of the norm of the k-fold quotient
    (flat or tree flavor).  A lower bound for the true C^n_b norm."""
    best = Fraction(0)
    for x in sampler.xs:
        try:
            best = max(best, value_norm(f.eval_vec(x)))
        except DomainViolation:
            continue
    symbolic_ok = f.is_polynomial()
    for k in range(1, n + 1):
        for x in sampler.xs:
            for dirs in itertools.product(sampler.dirs, repeat=k):
                for ts in itertools.product(sampler.ts, repeat=k):
                    if not symbolic_ok and any(is_zero_scalar(t) for t in ts):
                        continue
                    pt = PhiPoint(x, dirs, ts)
                    try:
                        if flavor == "phi":
                            val = phi_eval(f, pt)
                        else:
                            val = upsilon_eval(f, embed_phi_point(pt))
                    except DomainViolation:
                        continue
                    best = max(best, value_norm(val))
    return best


def differential_eval(f: FnRepr, x, directions):
    """The symmetric n-linear differential: the n-fold partial quotient
    with all scalars at zero (continuous extension).

    For polynomials this is the classical mixed n-th derivative; the
    iterated one-direction-per-level quotients already carry the factorial
    normalization, so no extra n! factor is applied.  In characteristic p
    the factorial relation between this form and repeated differences
    breaks for n >= p, which is surfaced as an obstruction rather than a
    silent zero.
    """
    n = len(directions)
    desc = getattr(x[0], "desc", None)
    if desc is not None and desc.char and n >= desc.char:
        raise CharacteristicObstruction(
            f"n! vanishes in characteristic {desc.char} for n={n}")
    zero = x[0] * 0
    pt = PhiPoint(tuple(x), tuple(directions), (zero,) * n)
    return phi_eval(f, pt)


# ---------------------------------------------------------------------------
# operator words (reified expansion terms)
# ---------------------------------------------------------------------------

DIFF, PROJ, SHIFT = "D", "pi", "P"


@dataclass(frozen=True)
class OperatorWord:
    """A chain of level steps applied to one tensor factor, innermost first.

    Letters: D (difference step), pi (projection back), P (shift).  The
    level bookkeeping requires every leading shift block to sit at
    nonnegative net depth: #D + #P + #pi below any P equals its level
    index minus one.
    """

    letters: tuple

    def pretty(self, symbol: str = "f") -> str:
        out = []
        for j, letter in enumerate(self.letters, start=1):
            if letter == DIFF:
                out.append("Y")
            elif letter == PROJ:
                out.append("pr")
            else:
                out.append(f"P{j}")
        return "".join(reversed(out)) + f".{symbol}"

    def net_depth(self) -> int:
        return len(self.letters)

    def validate(self) -> bool:
        """Level bookkeeping: each letter raises the argument level by one,
        so a shift applied after a history of a projections and b difference
        steps (and c earlier shifts) acts at index a + b + c + 1.  For a
        projection-free history that index is s + 1 with s = b + c, the
        nonnegative net depth of the history; a negative depth never
        occurs."""
        depth = 0
        for letter in self.letters:
            if letter not in (DIFF, PROJ, SHIFT):
                raise ShapeMismatch(f"unknown operator letter {letter!r}")
            if letter == SHIFT and depth < 0:
                raise ShapeMismatch("shift at negative depth")
            depth += 1
        return depth == len(self.letters)

    def shift_indices(self) -> tuple:
        """Concrete level indices of the shift letters (innermost first)."""
        return tuple(j + 1 for j, letter in enumerate(self.letters)
                     if letter == SHIFT)

    def apply(self, fn, pt, ctx):
        self.validate()
        return _apply_word(fn, self.letters, pt, ctx)


def _apply_word(fn, letters, pt, ctx):
    if not letters:
        return fn(ctx.base_vec(pt))
    op = letters[-1]
    lower, direction, t = ctx.split(pt)
    if op == PROJ:
        return _apply_word(fn, letters[:-1], lower, ctx)
    if op == SHIFT:
        return _apply_word(fn, letters[:-1], ctx.shift(lower, direction, t), ctx)
    hi = _apply_word(fn, letters[:-1], ctx.shift(lower, direction, t), ctx)
    lo = _apply_word(fn, letters[:-1], lower, ctx)
    return scalar_div(value_sub(hi, lo), t)


def product_rule_terms(k: int, n: int):
    """All expansion terms of the n-step product rule for k factors.

    Yields tuples (choice_1..choice_n) with choice_j in 0..k-1: at step j
    factor choice_j takes the difference step, factors before it project
    back, factors after it shift.
    """
    return itertools.product(range(k), repeat=n)


def term_words(choices, k: int):
    """OperatorWords of all k factors for one term of the expansion."""
    words = []
    for i in range(k):
        letters = []
        for c in choices:
            letters.append(DIFF if c == i else (PROJ if i < c else SHIFT))
        words.append(OperatorWord(tuple(letters)))
    return words


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class CheckReport:
    operation: str
    flavor: str
    n: int
    lhs: object
    rhs: object
    margin: Fraction
    status: str
    detail: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def to_record(self) -> dict:
        return {
            "operation": self.operation,
            "flavor": self.flavor,
            "n": self.n,
            "lhs": repr(self.lhs),
            "rhs": repr(self.rhs),
            "margin": str(self.margin),
            "status": self.status,
            "detail": self.detail,
        }


def _finish_report(op, flavor, n, lhs, rhs, detail=None) -> CheckReport:
    # equality at working precision counts as zero margin: the difference of
    # truncated values that agree digit for digit is an apparent zero
    if values_same(lhs, rhs):
        margin = Fraction(0)
    elif isinstance(lhs, tuple):
        margin = max(value_norm(x - y) for x, y in zip(lhs, rhs))
    else:
        margin = value_norm(lhs - rhs)
    return CheckReport(op, flavor, n, lhs, rhs, margin,
                       "PASS" if margin == 0 else "FAIL", detail or [])


# ---------------------------------------------------------------------------
# product rule (two factors)
# ---------------------------------------------------------------------------

def leibniz_check(f: FnRepr, g: FnRepr, pt, flavor: str = "upsilon",
                  collect_terms: bool = False) -> CheckReport:
    """Difference-quotient product rule at a point.

    LHS: the n-fold quotient of the pointwise product, by direct recursion.
    RHS (tree flavor): the binomial operator-word expansion
    (difference (x) shift + project (x) difference)^n.
    RHS (flat flavor): the explicit sum over splittings {1..n} = J u S of
    quotients of f at (x; v_J; t_J) times quotients of g based at
    x + sum_{j in J} v_j t_j.
    """
    ctx = context_for(pt)
    if (flavor == "upsilon") != (ctx is TreeContext):
        raise ShapeMismatch(f"{flavor} flavor needs a matching point type")
    n = pt.level
    lhs = diff_eval(f.product(g).eval_vec, pt, ctx)
    detail = []
    if flavor == "upsilon":
        rhs = None
        for choices in product_rule_terms(2, n):
            wf, wg = term_words(choices, 2)
            a = wf.apply(f.eval_vec, pt, ctx)
            b = wg.apply(g.eval_vec, pt, ctx)
            term = value_mul(a, b)
            if collect_terms:
                detail.append((wf.pretty("f"), wg.pretty("g"), repr(term)))
            rhs = term if rhs is None else value_add(rhs, term)
    else:
        rhs = phi_leibniz_subset_sum(f, g, pt, detail if collect_terms else None)
    return _finish_report("leibniz", flavor, n, lhs, rhs, detail)


def phi_leibniz_subset_sum(f: FnRepr, g: FnRepr, pt: PhiPoint, detail=None):
    """sum over a+b=n and ordered splittings {j_*} u {s_*} = {1..n} of
    quotient_a(f)(x; v_j; t_j) * quotient_b(g)(x + sum v_j t_j; v_s; t_s)."""
    n = pt.level
    rhs = None
    for a in range(n + 1):
        for J in itertools.combinations(range(n), a):
            S = tuple(i for i in range(n) if i not in J)
            base = pt.x
            fpt = PhiPoint(pt.x, tuple(pt.vs[j] for j in J),
                           tuple(pt.ts[j] for j in J))
            for j in J:
                base = vec_add(base, vec_scale(pt.vs[j], pt.ts[j]))
            gpt = PhiPoint(base, tuple(pt.vs[s] for s in S),
                           tuple(pt.ts[s] for s in S))
            fa = phi_eval(f, fpt, check_domain=False)
            gb = phi_eval(g, gpt, check_domain=False)
            term = value_mul(fa, gb)
            if detail is not None:
                detail.append((f"F^{a}f{list(J)}", f"F^{n - a}g{list(S)}",
                               repr(term)))
            rhs = term if rhs is None else value_add(rhs, term)
    return rhs


def leibniz_multi_check(fs, pt, flavor: str = "upsilon",
                        collect_terms: bool = False) -> CheckReport:
    """k-factor product rule: at every step exactly one factor takes the
    difference step, everything left of it projects back, everything right
    of it shifts."""
    ctx = context_for(pt)
    if (flavor == "upsilon") != (ctx is TreeContext):
        raise ShapeMismatch(f"{flavor} flavor needs a matching point type")
    n = pt.level
    k = len(fs)
    lhs = diff_eval(product_many(list(fs)).eval_vec, pt, ctx)
    rhs = None
    detail = []
    for choices in product_rule_terms(k, n):
        words = term_words(choices, k)
        vals = [w.apply(f.eval_vec, pt, ctx) for w, f in zip(words, fs)]
        term = vals[0]
        for v in vals[1:]:
            term = value_mul(term, v)
        if collect_terms:
            detail.append(tuple(w.pretty(f"f{i + 1}")
                                for i, w in enumerate(words)) + (repr(term),))
        rhs = term if rhs is None else value_add(rhs, term)
    return _finish_report("leibniz_multi", flavor, n, lhs, rhs, detail)


# ---------------------------------------------------------------------------
# chain rule
# ---------------------------------------------------------------------------

class _Composite:
    """A function written as (polynomial in c coordinates) o (coordinate
    evaluators); the shape every chain-rule head factor keeps under the
    expansion.  Coordinate evaluators take points of the current level.

    The coordinate step: the difference step on the head splits into one
    term per coordinate j; the head becomes the exact divided difference of
    the polynomial in coordinate j (a new last variable holds the increment),
    coordinates up to j stay at the projected point, coordinates past j move
    to the shifted point, and the coordinate quotient (increment / t) comes
    off as a separate scalar factor.
    """

    __slots__ = ("poly", "coords")

    def __init__(self, poly: MultiPoly, coords):
        if poly.nvars != len(coords):
            raise ShapeMismatch("coordinate count mismatch")
        self.poly = poly
        self.coords = list(coords)

    def eval(self, pt):
        return self.poly.eval_cached([c(pt) for c in self.coords])

    def project(self, ctx) -> "_Composite":
        return _Composite(self.poly,
                          [_wrap_lower(c, ctx) for c in self.coords])

    def chain_step(self, ctx):
        """Yield (new head, new coordinate-quotient factor) per coordinate."""
        c = len(self.coords)
        for j in range(c):
            qpoly = quotient_in_new_var(self.poly, j)
            new_coords = []
            for a in range(c):
                if a <= j:
                    new_coords.append(_wrap_lower(self.coords[a], ctx))
                else:
                    new_coords.append(_wrap_shift(self.coords[a], ctx))
            new_coords.append(_increment(self.coords[j], ctx))
            ufactor = _coordinate_quotient(self.coords[j], ctx)
            yield _Composite(qpoly, new_coords), ufactor


def _wrap_lower(coord, ctx):
    def wrapped(pt):
        return coord(ctx.split(pt)[0])
    return wrapped


def _wrap_shift(coord, ctx):
    def wrapped(pt):
        lower, direction, t = ctx.split(pt)
        return coord(ctx.shift(lower, direction, t))
    return wrapped


def _increment(coord, ctx):
    def wrapped(pt):
        lower, direction, t = ctx.split(pt)
        return coord(ctx.shift(lower, direction, t)) - coord(lower)
    return wrapped


def _coordinate_quotient(coord, ctx):
    def wrapped(pt):
        lower, direction, t = ctx.split(pt)
        num = coord(ctx.shift(lower, direction, t)) - coord(lower)
        return scalar_div(num, t)
    return wrapped


def _step_factor(fac, op, ctx):
    if op == PROJ:
        return _wrap_lower(fac, ctx)
    if op == SHIFT:
        return _wrap_shift(fac, ctx)
    return _coordinate_quotient(fac, ctx)


def chain_rhs_terms(f: FnRepr, u_polys, n: int, ctx):
    """All expansion terms (head composite, scalar factors) after n steps."""
    if not isinstance(f.backing, MultiPoly):
        raise CalculusError("the chain expansion needs a polynomial outer map")
    base_coords = []
    for up in u_polys:
        def coord(pt, _up=up):
            return _up.eval_cached(list(ctx.base_vec(pt)))
        base_coords.append(coord)
    terms = [(_Composite(f.backing, base_coords), [])]
    for _ in range(n):
        new_terms = []
        for head, factors in terms:
            # the difference step hits the head: coordinate split
            for new_head, ufactor in head.chain_step(ctx):
                new_terms.append(
                    (new_head,
                     [ufactor] + [_step_factor(g, SHIFT, ctx) for g in factors]))
            # the difference step hits scalar factor a
            for a in range(len(factors)):
                wrapped = []
                for b, g in enumerate(factors):
                    op = PROJ if b < a else (DIFF if b == a else SHIFT)
                    wrapped.append(_step_factor(g, op, ctx))
                new_terms.append((head.project(ctx), wrapped))
        terms = new_terms
    return terms


def chain_check(f: FnRepr, u, pt, flavor: str = "upsilon") -> CheckReport:
    """Composition rule: the n-fold quotient of f o u against the expansion
    into head operators, partial shifts and coordinate quotients.

    n <= 3 is supported (the expansion is assembled recursively; term count
    grows with the coordinate budget m + step)."""
    ctx = context_for(pt)
    if (flavor == "upsilon") != (ctx is TreeContext):
        raise ShapeMismatch(f"{flavor} flavor needs a matching point type")
    n = pt.level
    if n > 3:
        raise CalculusError("chain expansion is implemented for n <= 3")
    u_polys = _u_polys(u)
    if len(u_polys) != f.arity:
        raise ShapeMismatch(
            f"outer arity {f.arity} != inner codomain {len(u_polys)}")

    def composed(vec):
        inner = [up.eval_cached(list(vec)) for up in u_polys]
        return f.eval_vec(tuple(inner))

    lhs = diff_eval(composed, pt, ctx)
    rhs = None
    for head, factors in chain_rhs_terms(f, u_polys, n, ctx):
        term = head.eval(pt)
        for g in factors:
            term = term * g(pt)
        rhs = term if rhs is None else rhs + term
    return _finish_report("chain", flavor, n, lhs, rhs)


def _u_polys(u):
    if isinstance(u, FnRepr):
        b = u.backing
        if isinstance(b, MultiPoly):
            return [b]
        if isinstance(b, (list, tuple)):
            return list(b)
        raise CalculusError("inner map must be polynomial for the chain check")
    if isinstance(u, MultiPoly):
        return [u]
    return list(u)


# ---------------------------------------------------------------------------
# fixture files (external interface): one check per line
# ---------------------------------------------------------------------------

def run_fixture_line(line: str, precision: int = 24) -> CheckReport:
    """Grammar per line (whitespace separated):

        leibniz|leibniz_multi|chain <flavor> n=<n> p=<prime>
            f=<spec> g=<spec> | fs=<spec>|<spec>... | u=<spec>|<spec>...
            x=<c1,c2,..> vs=<v11,v12;v21,v22;..> ts=<t1,t2,..>
            expect=PASS|FAIL

    Scalars are integers, converted into Q_p at the given precision.
    """
    from .fields import LocalFieldElement, padic
    from .funcspec import parse_poly
    toks = line.split()
    if len(toks) < 3:
        raise ValueError(f"malformed fixture line: {line!r}")
    op, flavor = toks[0], toks[1]
    kv = {}
    for tok in toks[2:]:
        key, _, val = tok.partition("=")
        kv[key] = val
    n = int(kv["n"])
    desc = padic(int(kv["p"]))

    def elem(s):
        return LocalFieldElement.from_int(desc, int(s), precision)

    x = tuple(elem(c) for c in kv["x"].split(","))
    vs = tuple(tuple(elem(c) for c in grp.split(","))
               for grp in kv["vs"].split(";")) if kv.get("vs") else ()
    ts = tuple(elem(c) for c in kv["ts"].split(",")) if kv.get("ts") else ()
    if len(ts) != n or len(vs) != n:
        raise ValueError(f"point shape does not match n={n}")
    flat = PhiPoint(x, vs, ts)
    pt = embed_phi_point(flat) if flavor == "upsilon" else flat

    def fn_of(spec_text, arity):
        spec = parse_poly(spec_text, arity)
        return FnRepr.poly(spec.to_field_poly(desc, precision))

    if op == "leibniz":
        rep = leibniz_check(fn_of(kv["f"], len(x)), fn_of(kv["g"], len(x)),
                            pt, flavor)
    elif op == "leibniz_multi":
        fs = [fn_of(s, len(x)) for s in kv["fs"].split("|")]
        rep = leibniz_multi_check(fs, pt, flavor)
    elif op == "chain":
        u_polys = [parse_poly(s, len(x)).to_field_poly(desc, precision)
                   for s in kv["u"].split("|")]
        f = fn_of(kv["f"], len(u_polys))
        rep = chain_check(f, u_polys, pt, flavor)
    else:
        raise ValueError(f"unknown check {op!r}")
    rep.detail.insert(0, {"inputs": line.strip()})
    expected = kv.get("expect", "PASS")
    matched = rep.status == expected
    if not matched:
        rep.detail.append(f"expected {expected}, computed margin {rep.margin}")
    rep.status = "PASS" if matched else "FAIL"
    return rep


def run_fixture_file(path: str, precision: int = 24):
    reports = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            reports.append(run_fixture_line(line, precision))
    return reports


def dump_reports(reports, path=None) -> str:
    text = "\n".join(json.dumps(r.to_record(), sort_keys=True) for r in reports)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
