"""Truncated exact arithmetic in the two locally compact ultrametric field
families: Q_p (characteristic zero) and F_{p^u}((theta)) (characteristic p),
together with their residue-ring towers and the valuation combinatorics of
factorials and binomial coefficients.

Every element carries an explicit precision budget: "known modulo pi^N".
Operations propagate the honest minimum; dividing by an element of valuation
v consumes v units of budget.  Exact zero is a distinguished value with
valuation +infinity so that no spurious precision is ever claimed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

from .gf import GF, _is_prime, gf

DEFAULT_PRECISION = 32

PADIC = "padic"
LAURENT = "laurent"


class FieldError(Exception):
    pass


class DescriptorMismatch(FieldError):
    pass


class NonUnit(FieldError):
    pass


class PrecisionExhausted(FieldError):
    pass


@dataclass(frozen=True)
class FieldDescriptor:
    """One of the two locally compact families, with |pi| = 1/p fixed.

    family "padic": Q_p with uniformizer p (u is unused and forced to 1).
    family "laurent": F_{p^u}((theta)) with uniformizer theta.
    """

    family: str
    p: int
    u: int = 1

    def __post_init__(self):
        if self.family not in (PADIC, LAURENT):
            raise ValueError(f"unknown family {self.family!r}")
        if not _is_prime(self.p):
            raise ValueError(f"p={self.p} is not prime")
        if self.u < 1:
            raise ValueError(f"u={self.u} must be >= 1")
        if self.family == PADIC and self.u != 1:
            raise ValueError("extension degree is only meaningful for laurent")

    @property
    def char(self) -> int:
        return 0 if self.family == PADIC else self.p

    @property
    def residue_size(self) -> int:
        """Cardinality of the residue field."""
        return self.p if self.family == PADIC else self.p ** self.u

    def residue_cardinality(self, k: int) -> int:
        """Cardinality of the level-k residue ring: p^k resp. p^(uk)."""
        return self.residue_size ** k

    def gf(self) -> GF:
        return gf(self.p, self.u if self.family == LAURENT else 1)

    def uniformizer(self, precision: int = DEFAULT_PRECISION) -> "LocalFieldElement":
        if self.family == PADIC:
            return LocalFieldElement.from_int(self, self.p, precision)
        return LocalFieldElement(self, 1, (1,) + (0,) * (precision - 2), precision - 1)

    def norm_of_valuation(self, v) -> Fraction:
        if v is INFINITY:
            return Fraction(0)
        return Fraction(1, self.p) ** v


INFINITY = math.inf


def padic(p: int) -> FieldDescriptor:
    return FieldDescriptor(PADIC, p)


def laurent(p: int, u: int = 1) -> FieldDescriptor:
    return FieldDescriptor(LAURENT, p, u)


class LocalFieldElement:
    """A field element known modulo pi^N.

    Internal representation: (valuation v, mantissa, relative precision r)
    with N = v + r.  The mantissa holds the unit part:

    * padic:   an integer in [0, p^r) not divisible by p (element is
               p^v * mantissa mod p^N);
    * laurent: a tuple of r GF(p^u) codes, leading code nonzero (element is
               theta^v * sum c_i theta^i mod theta^N).

    A mantissa of relative precision 0 is an *apparent zero*: the element is
    indistinguishable from 0 at precision N.  Exact zero is separate and has
    valuation +infinity.
    """

    __slots__ = ("desc", "_val", "_mant", "_rel", "_exact_zero")

    def __init__(self, desc, val, mant, rel, _exact_zero=False):
        self.desc = desc
        self._exact_zero = _exact_zero
        if _exact_zero:
            self._val, self._mant, self._rel = 0, 0, 0
            return
        # normalize: strip uniformizer factors out of the mantissa
        if desc.family == PADIC:
            p = desc.p
            mant %= p ** rel
            while rel > 0 and mant % p == 0:
                # a zero low digit means the true valuation is higher
                mant //= p
                val += 1
                rel -= 1
        else:
            mant = tuple(mant)[:rel]
            while mant and mant[0] == 0:
                mant = mant[1:]
                val += 1
                rel -= 1
            rel = len(mant)
        if rel <= 0:
            mant = 0 if desc.family == PADIC else ()
            rel = 0
        self._val, self._mant, self._rel = val, mant, rel

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, desc: FieldDescriptor) -> "LocalFieldElement":
        return cls(desc, 0, 0, 0, _exact_zero=True)

    @classmethod
    def one(cls, desc: FieldDescriptor, precision: int = DEFAULT_PRECISION):
        return cls.from_int(desc, 1, precision)

    @classmethod
    def from_int(cls, desc, n: int, precision: int = DEFAULT_PRECISION):
        if n == 0:
            return cls.zero(desc)
        if desc.family == PADIC:
            v = 0
            while n % desc.p == 0:
                n //= desc.p
                v += 1
            return cls(desc, v, n % desc.p ** (precision - v), precision - v)
        # integers embed through the prime field
        G = desc.gf()
        c0 = G.from_int(n)
        if c0 == 0:
            return cls(desc, precision, (), 0)
        return cls(desc, 0, (c0,) + (0,) * (precision - 1), precision)

    @classmethod
    def from_fraction(cls, desc, q: Fraction, precision: int = DEFAULT_PRECISION):
        q = Fraction(q)
        if desc.family != PADIC:
            raise FieldError("from_fraction only makes sense over Q_p")
        if q == 0:
            return cls.zero(desc)
        num = cls.from_int(desc, q.numerator, precision + 0)
        den = cls.from_int(desc, q.denominator, precision + 0)
        return num.divide(den)

    @classmethod
    def from_laurent_coeffs(cls, desc, val: int, coeffs,
                            precision: int = DEFAULT_PRECISION):
        """theta^val * (coeffs[0] + coeffs[1] theta + ...), GF codes."""
        if desc.family != LAURENT:
            raise FieldError("laurent coefficients need a laurent descriptor")
        coeffs = tuple(coeffs)
        rel = max(precision - val, 0)
        coeffs = coeffs[:rel] + (0,) * (rel - len(coeffs))
        return cls(desc, val, coeffs, rel)

    @classmethod
    def apparent_zero(cls, desc, precision: int) -> "LocalFieldElement":
        return cls(desc, precision, 0 if desc.family == PADIC else (), 0)

    # -- basic queries -----------------------------------------------------

    @property
    def valuation(self):
        return INFINITY if self._exact_zero else self._val

    @property
    def precision(self):
        return INFINITY if self._exact_zero else self._val + self._rel

    @property
    def is_exact_zero(self) -> bool:
        return self._exact_zero

    def is_zero(self) -> bool:
        """True when the element is indistinguishable from 0 at its precision."""
        return self._exact_zero or self._rel == 0

    def norm(self) -> Fraction:
        """p^(-valuation); for an apparent zero this is the bound p^(-N),
        the best statement the budget supports (exact zero gives 0)."""
        if self._exact_zero:
            return Fraction(0)
        return Fraction(self.desc.p) ** (-self._val)

    def digits(self) -> tuple:
        """Unit-part digits, least significant first."""
        if self.desc.family == PADIC:
            m, out = self._mant, []
            for _ in range(self._rel):
                out.append(m % self.desc.p)
                m //= self.desc.p
            return tuple(out)
        return self._mant

    def lift_int(self) -> int:
        """Canonical integer representative p^v * mantissa (padic, v >= 0)."""
        if self.desc.family != PADIC:
            raise FieldError("lift_int is a padic operation")
        if self._exact_zero:
            return 0
        if self._val < 0:
            raise FieldError("cannot lift an element of negative valuation")
        if self._rel == 0:
            return 0
        return self.desc.p ** self._val * self._mant

    # -- arithmetic --------------------------------------------------------

    def _check(self, other):
        if not isinstance(other, LocalFieldElement) or other.desc != self.desc:
            raise DescriptorMismatch(f"operand descriptors differ: {self.desc} vs "
                                     f"{getattr(other, 'desc', type(other))}")

    def _coerce_int(self, n: int) -> "LocalFieldElement":
        """An integer operand is exactly known; give it enough precision that
        the coercion never binds the result's budget."""
        if self._exact_zero:
            return LocalFieldElement.from_int(self.desc, n, DEFAULT_PRECISION)
        v = 0
        if n:
            while n % self.desc.p ** (v + 1) == 0:
                v += 1
        return LocalFieldElement.from_int(
            self.desc, n, self._val + self._rel + v + 1)

    def __add__(self, other):
        if isinstance(other, int):
            other = self._coerce_int(other)
        self._check(other)
        if self._exact_zero:
            return other
        if other._exact_zero:
            return self
        N = min(self.precision, other.precision)
        v0 = min(self._val, other._val)
        rel = N - v0
        if rel <= 0:
            return LocalFieldElement.apparent_zero(self.desc, N)
        if self.desc.family == PADIC:
            p = self.desc.p
            s = (self._mant * p ** (self._val - v0)
                 + other._mant * p ** (other._val - v0)) % p ** rel
            return LocalFieldElement(self.desc, v0, s, rel)
        G = self.desc.gf()
        coeffs = [0] * rel
        for src in (self, other):
            off = src._val - v0
            for i, c in enumerate(src._mant):
                if off + i < rel:
                    coeffs[off + i] = G.add(coeffs[off + i], c)
        return LocalFieldElement(self.desc, v0, tuple(coeffs), rel)

    __radd__ = __add__

    def __neg__(self):
        if self._exact_zero:
            return self
        if self.desc.family == PADIC:
            return LocalFieldElement(self.desc, self._val,
                                     (-self._mant) % self.desc.p ** self._rel,
                                     self._rel)
        G = self.desc.gf()
        return LocalFieldElement(self.desc, self._val,
                                 tuple(G.neg(c) for c in self._mant), self._rel)

    def __sub__(self, other):
        if isinstance(other, int):
            other = self._coerce_int(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, int):
            other = self._coerce_int(other)
        self._check(other)
        if self._exact_zero or other._exact_zero:
            return LocalFieldElement.zero(self.desc)
        v = self._val + other._val
        rel = min(self._rel, other._rel)
        if self.is_zero() or other.is_zero():
            return LocalFieldElement.apparent_zero(self.desc, v + rel)
        if self.desc.family == PADIC:
            m = (self._mant * other._mant) % self.desc.p ** rel
            return LocalFieldElement(self.desc, v, m, rel)
        G = self.desc.gf()
        coeffs = [0] * rel
        for i, a in enumerate(self._mant):
            if a and i < rel:
                for j, b in enumerate(other._mant):
                    if i + j >= rel:
                        break
                    if b:
                        coeffs[i + j] = G.add(coeffs[i + j], G.mul(a, b))
        return LocalFieldElement(self.desc, v, tuple(coeffs), rel)

    __rmul__ = __mul__

    def inv_unit(self) -> "LocalFieldElement":
        """Inverse of a unit (valuation 0).

        When |x - 1| < 1 the geometric series 1 + sum (1-x)^l is used; the
        general unit case is Hensel lifting on the leading digit.
        """
        if self.is_zero() or self._val != 0:
            raise NonUnit(f"inv_unit needs valuation 0, got {self.valuation}")
        rel = self._rel
        one = LocalFieldElement.one(self.desc, rel)
        delta = one - self  # 1 - x
        if delta.is_zero() or delta._val >= 1:
            # geometric series; (1-x)^l dies past l*val(1-x) >= rel
            acc = one
            term = one
            w = max(delta._val, 1) if not delta.is_zero() else rel
            for _ in range(rel // w + 1):
                term = term * delta
                if term.is_zero():
                    break
                acc = acc + term
            return acc
        if self.desc.family == PADIC:
            p = self.desc.p
            mod = p ** rel
            # Hensel lifting of the digit-0 inverse, doubling digits per step
            c = pow(self._mant % p, p - 2, p)
            bits = 1
            while bits < rel:
                c = (c * (2 - self._mant * c)) % mod
                bits *= 2
            c = (c * (2 - self._mant * c)) % mod
            return LocalFieldElement(self.desc, 0, c, rel)
        # laurent: back substitution on series coefficients
        G = self.desc.gf()
        c = self._mant
        inv0 = G.inv(c[0])
        out = [inv0] + [0] * (rel - 1)
        for n in range(1, rel):
            s = 0
            for i in range(1, n + 1):
                if i < len(c) and c[i]:
                    s = G.add(s, G.mul(c[i], out[n - i]))
            out[n] = G.neg(G.mul(inv0, s))
        return LocalFieldElement(self.desc, 0, tuple(out), rel)

    def divide(self, other) -> "LocalFieldElement":
        """self / other; consumes valuation(other) units of precision budget."""
        if isinstance(other, int):
            other = self._coerce_int(other)
        self._check(other)
        if other.is_zero():
            raise NonUnit("division by (apparent) zero")
        if self._exact_zero:
            return self
        unit = LocalFieldElement(other.desc, 0, other._mant, other._rel)
        quo = self * unit.inv_unit()
        return LocalFieldElement(self.desc, quo._val - other._val, quo._mant,
                                 quo._rel, _exact_zero=quo._exact_zero)

    def __truediv__(self, other):
        return self.divide(other)

    def __rtruediv__(self, other):
        if isinstance(other, int):
            return self._coerce_int(other).divide(self)
        return NotImplemented

    def __pow__(self, e: int):
        if e < 0:
            rel = DEFAULT_PRECISION if self._exact_zero else self._rel
            return (LocalFieldElement.one(self.desc, rel) / self) ** (-e)
        if e == 0:
            return LocalFieldElement.one(
                self.desc,
                DEFAULT_PRECISION if self._exact_zero else self._val + self._rel)
        result, base = None, self
        while e:
            if e & 1:
                result = base if result is None else result * base
            e >>= 1
            if e:
                base = base * base
        return result

    # -- comparisons -------------------------------------------------------

    def same(self, other, precision=None) -> bool:
        """Equality at working precision: the difference is apparent zero."""
        if isinstance(other, int):
            other = self._coerce_int(other)
        d = self - other
        if d.is_exact_zero:
            return True
        if precision is not None:
            return d.is_zero() or d._val >= precision
        return d.is_zero()

    def __eq__(self, other):
        if not isinstance(other, LocalFieldElement):
            return NotImplemented
        return (self.desc == other.desc and self._exact_zero == other._exact_zero
                and self._val == other._val and self._mant == other._mant
                and self._rel == other._rel)

    def __hash__(self):
        return hash((self.desc, self._exact_zero, self._val, self._mant, self._rel))

    # -- projection to residue rings ----------------------------------------

    def project(self, k: int):
        """Residue of the element in the level-k quotient ring.

        Requires valuation >= 0 and precision >= k.
        """
        if k < 1:
            raise ValueError("level k must be >= 1")
        if self.precision < k:
            raise PrecisionExhausted(
                f"element known mod pi^{self.precision}, need level {k}")
        if self._exact_zero:
            return 0 if self.desc.family == PADIC else (0,) * k
        if self._val < 0:
            raise FieldError("cannot project an element of negative valuation")
        if self.desc.family == PADIC:
            return self.lift_int() % self.desc.p ** k
        out = [0] * k
        for i, c in enumerate(self._mant):
            if self._val + i < k:
                out[self._val + i] = c
        return tuple(out)

    # -- display -------------------------------------------------------------

    def __repr__(self):
        if self._exact_zero:
            return f"<0 exactly ({self.desc.family} p={self.desc.p})>"
        if self.desc.family == PADIC:
            ds = "".join(str(d) for d in reversed(self.digits()))
            return f"<p={self.desc.p}:{ds or '0'}*{self.desc.p}^{self._val}" \
                   f" mod {self.desc.p}^{self.precision}>"
        terms = " + ".join(f"{c}*t^{self._val + i}"
                           for i, c in enumerate(self._mant) if c)
        return f"<p={self.desc.p},u={self.desc.u}:{terms or '0'}" \
               f" mod t^{self.precision}>"


# ---------------------------------------------------------------------------
# element literals (external interface shared by the CLI and fixtures)
# ---------------------------------------------------------------------------

_PADIC_RE = re.compile(r"^p=(\d+)(?:,N=(\d+))?:([0-9]+)$")
_LAURENT_RE = re.compile(r"^p=(\d+),u=(\d+)(?:,N=(\d+))?:(.*)$")


def parse_element(text: str) -> LocalFieldElement:
    """Parse an element literal.

    padic:   ``p=3:210``       digits d2 d1 d0 (d0 rightmost, value = sum d_i p^i)
    laurent: ``p=2,u=1:1+1*t+0*t^2``   GF coefficient codes by power of t
    Either form takes an optional ``N=<precision>``.
    """
    text = text.strip()
    m = _LAURENT_RE.match(text)
    if m:
        p, u, N, body = int(m.group(1)), int(m.group(2)), m.group(3), m.group(4)
        N = int(N) if N else DEFAULT_PRECISION
        desc = laurent(p, u)
        G = desc.gf()
        coeffs = {}
        for part in body.replace("-", "+-").split("+"):
            part = part.strip()
            if not part:
                continue
            if "*" in part:
                c, mono = part.split("*")
                mono = mono.strip()
                exp = 1 if mono == "t" else int(mono.split("^")[1])
            elif part == "t":
                c, exp = "1", 1
            elif part.startswith("t^"):
                c, exp = "1", int(part[2:])
            else:
                c, exp = part, 0
            ci = int(c)
            if u == 1:
                code = ci % p
            else:
                if not 0 <= ci < G.q:
                    raise ValueError(
                        f"GF({p}^{u}) coefficient codes must lie in 0..{G.q - 1}")
                code = ci
            coeffs[exp] = G.add(coeffs.get(exp, 0), code)
        if not coeffs:
            return LocalFieldElement.zero(desc)
        v = min(coeffs)
        width = max(coeffs) - v + 1
        arr = [0] * width
        for e, c in coeffs.items():
            arr[e - v] = c
        return LocalFieldElement.from_laurent_coeffs(desc, v, arr, N)
    m = _PADIC_RE.match(text)
    if m:
        p, N, ds = int(m.group(1)), m.group(2), m.group(3)
        N = int(N) if N else DEFAULT_PRECISION
        desc = padic(p)
        value = 0
        for ch in ds:
            d = int(ch)
            if d >= p:
                raise ValueError(f"digit {d} out of range for p={p}")
            value = value * p + d
        return LocalFieldElement.from_int(desc, value, N)
    raise ValueError(f"cannot parse element literal {text!r}")


def format_element(x: LocalFieldElement) -> str:
    if x.desc.family == PADIC:
        if x.is_exact_zero or x._val < 0:
            return f"p={x.desc.p}:0" if x.is_exact_zero else repr(x)
        digits = "".join(str(d) for d in reversed(
            [*(0,) * x._val, *x.digits()])).lstrip("0") or "0"
        return f"p={x.desc.p},N={x.precision}:{digits}"
    if x.is_exact_zero:
        return f"p={x.desc.p},u={x.desc.u}:0"
    parts = [f"{c}*t^{x._val + i}" for i, c in enumerate(x._mant) if c]
    return f"p={x.desc.p},u={x.desc.u},N={x.precision}:" + ("+".join(parts) or "0")


# ---------------------------------------------------------------------------
# residue rings S_{p^k} and the projection tower
# ---------------------------------------------------------------------------

class ResidueRing:
    """The finite quotient ring B(K,0,1)/B(K,0,p^-k).

    padic: Z/p^k with elements encoded as integers 0..p^k-1.
    laurent: F_{p^u}[theta]/theta^k with elements encoded as k-tuples of
    GF codes (constant coefficient first).

    Enumeration order is lexicographic on digit strings, most significant
    digit first for padic (i.e. plain integer order) and coefficient order
    c_0, c_1, ... for laurent.
    """

    def __init__(self, desc: FieldDescriptor, k: int):
        if k < 1:
            raise ValueError("level k must be >= 1")
        self.desc = desc
        self.k = k
        self.cardinality = desc.residue_cardinality(k)

    def elements(self):
        if self.desc.family == PADIC:
            return iter(range(self.cardinality))
        G = self.desc.gf()

        def gen():
            idx = [0] * self.k
            while True:
                yield tuple(idx)
                i = self.k - 1
                while i >= 0:
                    idx[i] += 1
                    if idx[i] < G.q:
                        break
                    idx[i] = 0
                    i -= 1
                else:
                    return
        return gen()

    def zero(self):
        return 0 if self.desc.family == PADIC else (0,) * self.k

    def one(self):
        return 1 if self.desc.family == PADIC else (1,) + (0,) * (self.k - 1)

    def add(self, a, b):
        if self.desc.family == PADIC:
            return (a + b) % self.cardinality
        G = self.desc.gf()
        return tuple(G.add(x, y) for x, y in zip(a, b))

    def neg(self, a):
        if self.desc.family == PADIC:
            return (-a) % self.cardinality
        G = self.desc.gf()
        return tuple(G.neg(x) for x in a)

    def mul(self, a, b):
        if self.desc.family == PADIC:
            return (a * b) % self.cardinality
        G = self.desc.gf()
        out = [0] * self.k
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    if i + j >= self.k:
                        break
                    if y:
                        out[i + j] = G.add(out[i + j], G.mul(x, y))
        return tuple(out)

    def is_unit(self, a) -> bool:
        if self.desc.family == PADIC:
            return a % self.desc.p != 0
        return a[0] != 0

    def units(self):
        return (a for a in self.elements() if self.is_unit(a))

    def lift(self, a, precision: int = DEFAULT_PRECISION) -> LocalFieldElement:
        """Canonical representative in the field, exact up to `precision`."""
        if self.desc.family == PADIC:
            return LocalFieldElement.from_int(self.desc, a, precision)
        return LocalFieldElement.from_laurent_coeffs(self.desc, 0, a, precision)

    def representatives(self, a, count: int = 2, precision: int = DEFAULT_PRECISION):
        """`count` distinct field representatives of the class a.

        The j-th representative refines the class by the digits of j written
        at the levels just above k, so count = (residue size)^m enumerates
        every refinement m levels deeper.
        """
        reps = []
        q = self.desc.residue_size
        for j in range(count):
            base = self.lift(a, precision)
            if j:
                if self.desc.family == PADIC:
                    bump = LocalFieldElement.from_int(
                        self.desc, j * self.desc.p ** self.k, precision)
                else:
                    digits = []
                    jj = j
                    while jj:
                        digits.append(jj % q)
                        jj //= q
                    bump = LocalFieldElement.from_laurent_coeffs(
                        self.desc, self.k, digits, precision)
                base = base + bump
            reps.append(base)
        return reps


class ProjectionMap:
    """pi_k (field to level k) or pi^l_k (level l down to level k <= l)."""

    def __init__(self, desc: FieldDescriptor, target: int, source: int | None = None):
        if source is not None and source < target:
            raise ValueError("source level must be >= target level")
        self.desc = desc
        self.target = target
        self.source = source

    def __call__(self, x):
        if self.source is None:
            return x.project(self.target)
        if self.desc.family == PADIC:
            return x % self.desc.p ** self.target
        return tuple(x[: self.target])


def project_down(desc: FieldDescriptor, a, l: int, k: int):
    """pi^l_k on encoded residue elements."""
    return ProjectionMap(desc, k, l)(a)


# ---------------------------------------------------------------------------
# valuation combinatorics
# ---------------------------------------------------------------------------

def digit_sum(n: int, p: int) -> int:
    s = 0
    while n:
        s += n % p
        n //= p
    return s


def legendre_lambda(n: int, p: int) -> int:
    """(n - s_n)/(p-1): the p-adic valuation of n factorial."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return (n - digit_sum(n, p)) // (p - 1)


def binom_valuation_exponent(k: int, q: int, p: int) -> int:
    """v_p of the binomial coefficient C(k, q), by digit sums."""
    if not 0 <= q <= k:
        raise ValueError(f"q={q} out of range 0..{k}")
    return (digit_sum(q, p) + digit_sum(k - q, p) - digit_sum(k, p)) // (p - 1)


def binom_valuation(k: int, q: int, p: int) -> Fraction:
    """|C(k,q)|_p as an exact rational p^(-e)."""
    return Fraction(1, p ** binom_valuation_exponent(k, q, p))


def carmichael_exponent(p: int, k: int) -> int:
    """Exponent of the unit group (Z/p^k)^*."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if p == 2:
        if k == 1:
            return 1
        if k == 2:
            return 2
        return 2 ** (k - 2)
    return p ** (k - 1) * (p - 1)
