"""Difference-quotient evaluation and the operator identities."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from localfields.calculus import (CharacteristicObstruction, DomainViolation,
                                  FnRepr, OperatorWord, PhiPoint, SamplerSpec,
                                  ShapeMismatch, TreePoint, ZeroDenominator,
                                  chain_check, cnb_norm, default_sampler,
                                  diff_eval, differential_eval, dump_reports,
                                  embed_phi_point, leibniz_check,
                                  leibniz_multi_check, phi_eval,
                                  product_rule_terms, run_fixture_file,
                                  run_fixture_line, term_words, upsilon_eval)
from localfields.fields import LocalFieldElement, laurent, padic
from localfields.funcspec import parse_poly
from localfields.poly import MultiPoly

F = Fraction
D2, D3, D5 = padic(2), padic(3), padic(5)


def fn_q(text, nx=1):
    return FnRepr.poly(parse_poly(text, nx).to_fraction_poly())


def fn_p(text, desc, nx=1, N=24):
    return FnRepr.poly(parse_poly(text, nx).to_field_poly(desc, N))


def e(desc, n, N=24):
    return LocalFieldElement.from_int(desc, n, N)


def rand_tree(rng, level, dim=1, lo=-3, hi=3):
    if level == 0:
        return TreePoint.leaf(tuple(F(rng.randint(lo, hi))
                                    for _ in range(dim)))
    return TreePoint(lower=rand_tree(rng, level - 1, dim, lo, hi),
                     direction=rand_tree(rng, level - 1, dim, lo, hi),
                     t=F(rng.choice([1, -1, 2, 3])))


class TestPhiEval:
    def test_square_basic(self):
        pt = PhiPoint((F(1),), ((F(1),),), (F(1),))
        assert phi_eval(fn_q("x^2"), pt) == 3

    def test_constant_vanishes(self):
        pt = PhiPoint((F(1),), ((F(1),),), (F(1),))
        assert phi_eval(fn_q("7"), pt) == 0

    def test_cube_over_q2(self):
        f = fn_p("x^3", D2)
        pt = PhiPoint((e(D2, 1),), ((e(D2, 1),),), (e(D2, 2),))
        assert phi_eval(f, pt).same(13)  # (27 - 1)/2

    def test_t_zero_symbolic(self):
        pt = PhiPoint((F(5),), ((F(1),),), (F(0),))
        assert phi_eval(fn_q("x^2"), pt) == 10

    def test_opaque_needs_nonzero_t(self):
        f = FnRepr(1, lambda v: v[0] * v[0])
        pt = PhiPoint((F(5),), ((F(1),),), (F(0),))
        with pytest.raises(ZeroDenominator):
            phi_eval(f, pt)

    def test_opaque_small_t_surrogate(self):
        from localfields.calculus import eval_small_t
        f = FnRepr(1, lambda v: v[0] * v[0])
        zero = LocalFieldElement.zero(D3)
        pt = PhiPoint((e(D3, 5),), ((e(D3, 1),),), (zero,))
        got = eval_small_t(f, pt)
        # derivative 2x = 10 up to the surrogate's own (reduced) budget
        assert got.same(10, precision=int(got.precision))
        assert got.precision <= 24 - 24 // 2 + 2

    def test_domain_violation(self):
        f = FnRepr.poly(parse_poly("x^2").to_fraction_poly(),
                        domain=lambda v: abs(v[0]) <= 2)
        pt = PhiPoint((F(1),), ((F(5),),), (F(1),))
        with pytest.raises(DomainViolation):
            phi_eval(f, pt)

    def test_linearity(self):
        rng = random.Random(2)
        f, g = fn_q("x^2+x"), fn_q("x^3")
        for _ in range(25):
            n = rng.randint(1, 3)
            x = (F(rng.randint(-3, 3)),)
            vs = tuple((F(rng.randint(-3, 3)),) for _ in range(n))
            ts = tuple(F(rng.choice([1, 2, -1])) for _ in range(n))
            pt = PhiPoint(x, vs, ts)
            a, b = F(rng.randint(-4, 4)), F(rng.randint(-4, 4))
            combo = FnRepr.poly(a * f.backing + b * g.backing)
            assert phi_eval(combo, pt) == \
                a * phi_eval(f, pt) + b * phi_eval(g, pt)


class TestUpsilonEval:
    def test_identity_gives_direction(self):
        tp = TreePoint(lower=TreePoint.leaf((F(2),)),
                       direction=TreePoint.leaf((F(7),)), t=F(3))
        assert upsilon_eval(fn_q("x"), tp) == 7

    def test_slice_property_exact(self):
        rng = random.Random(0)
        for _ in range(100):
            n = rng.randint(1, 3)
            f = fn_q(_rand_poly_text(rng))
            x = (F(rng.randint(-4, 4)),)
            vs = tuple((F(rng.randint(-3, 3)),) for _ in range(n))
            ts = tuple(F(rng.choice([1, 2, 3, -1])) for _ in range(n))
            flat = PhiPoint(x, vs, ts)
            assert phi_eval(f, flat) == upsilon_eval(f, embed_phi_point(flat))

    def test_slice_property_per_prime(self):
        rng = random.Random(1)
        for desc in (D2, D3):
            for _ in range(100):
                n = rng.randint(1, 3)
                f = fn_p(_rand_poly_text(rng), desc)
                x = (e(desc, rng.randint(-4, 4)),)
                vs = tuple((e(desc, rng.randint(-3, 3)),) for _ in range(n))
                ts = tuple(e(desc, 1 + desc.p * rng.randint(0, 2))
                           for _ in range(n))
                flat = PhiPoint(x, vs, ts)
                a = phi_eval(f, flat)
                b = upsilon_eval(f, embed_phi_point(flat))
                assert a.same(b)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            TreePoint(lower=TreePoint.leaf((F(1),)),
                      direction=TreePoint(lower=TreePoint.leaf((F(1),)),
                                          direction=TreePoint.leaf((F(1),)),
                                          t=F(1)),
                      t=F(1))

    def test_double_quotient_oracle(self):
        # independent direct recursion, written from scratch
        def brute(fn, pt):
            if pt.level == 0:
                return fn(pt.vec[0])
            shifted = pt.lower.add_scaled(pt.direction, pt.t)
            return (brute(fn, shifted) - brute(fn, pt.lower)) / pt.t

        rng = random.Random(4)
        f = fn_q("x^2")
        for _ in range(30):
            pt = rand_tree(rng, 2)
            try:
                expect = brute(lambda x: x * x, pt)
            except ZeroDivisionError:
                continue
            assert upsilon_eval(f, pt) == expect


def _rand_poly_text(rng):
    deg = rng.randint(1, 3)
    terms = [f"{rng.randint(-5, 5)}*x^{d}" for d in range(deg + 1)]
    return "+".join(terms).replace("+-", "-")


class TestCnbNorm:
    def test_zero_function(self):
        sampler = default_sampler(D3)
        assert cnb_norm(fn_p("0", D3), 1, sampler) == 0

    def test_identity_on_unit_ball(self):
        sampler = default_sampler(D3)
        assert cnb_norm(fn_p("x", D3), 1, sampler) == 1

    def test_px_order_zero(self):
        sampler = default_sampler(D3)
        assert cnb_norm(fn_p("pi*x", D3), 0, sampler) == Fraction(1, 3)

    def test_empty_sampler(self):
        from localfields.calculus import CalculusError
        with pytest.raises(CalculusError):
            SamplerSpec([], [], [])

    def test_monotone_in_sample(self):
        s1 = default_sampler(D2, span=1)
        s2 = default_sampler(D2, span=2)
        f = fn_p("x^2+pi*x", D2)
        assert cnb_norm(f, 1, s1) <= cnb_norm(f, 1, s2) <= 1


class TestDifferential:
    def test_first_derivative(self):
        f = fn_q("x^2")
        for x in (F(0), F(3), F(-2)):
            assert differential_eval(f, (x,), ((F(1),),)) == 2 * x

    def test_constant(self):
        assert differential_eval(fn_q("9"), (F(1),), ((F(1),),)) == 0

    def test_cube_second_differential(self):
        f = fn_p("x^3", D5)
        x = (e(D5, 1),)
        vs = ((e(D5, 1),), (e(D5, 1),))
        assert differential_eval(f, x, vs).same(6)

    def test_symmetry(self):
        f = fn_q("x^3+2*x^2")
        vs = [(F(2),), (F(3),)]
        assert differential_eval(f, (F(5),), vs) == \
            differential_eval(f, (F(5),), list(reversed(vs)))

    def test_characteristic_obstruction(self):
        L3 = laurent(3)
        one = LocalFieldElement.one(L3, 16)
        f = FnRepr.poly(MultiPoly(1, {(3,): one}))
        x = (LocalFieldElement.one(L3, 16),)
        vs = ((one,),) * 3
        with pytest.raises(CharacteristicObstruction):
            differential_eval(f, x, vs)


class TestLeibniz:
    def test_n1_polynomial_identity(self):
        # v(2x + vt) = v(x + vt) + xv for f = g = x
        f = g = fn_q("x")
        pt = PhiPoint((F(4),), ((F(2),),), (F(3),))
        rep = leibniz_check(f, g, pt, "phi")
        assert rep.passed and rep.margin == 0
        assert rep.lhs == F(2) * (2 * F(4) + F(2) * F(3))

    def test_n2_random_over_q3(self):
        rng = random.Random(9)
        f, g = fn_p("x", D3), fn_p("x^2", D3)
        for _ in range(50):
            x = (e(D3, rng.randint(-9, 9)),)
            vs = tuple((e(D3, rng.randint(-6, 6)),) for _ in range(2))
            ts = tuple(e(D3, rng.choice([1, 2, 4, -1])) for _ in range(2))
            rep = leibniz_check(f, g, PhiPoint(x, vs, ts), "phi")
            assert rep.passed and rep.margin == 0

    def test_n3_eight_terms(self):
        rng = random.Random(5)
        f, g = fn_q("x^2"), fn_q("x^3+x")
        while True:
            try:
                pt = rand_tree(rng, 3)
                rep = leibniz_check(f, g, pt, "upsilon", collect_terms=True)
                break
            except ZeroDenominator:
                continue
        # skip the inputs entry that fixture running prepends
        assert rep.passed
        assert len(rep.detail) == 8
        fwords = sorted(d[0] for d in rep.detail)
        assert fwords == sorted([
            "YYY.f", "YYpr.f", "YprY.f", "Yprpr.f",
            "prYY.f", "prYpr.f", "prprY.f", "prprpr.f"])

    def test_flavor_point_mismatch(self):
        with pytest.raises(ShapeMismatch):
            leibniz_check(fn_q("x"), fn_q("x"),
                          PhiPoint((F(1),), ((F(1),),), (F(1),)), "upsilon")

    def test_word_bookkeeping(self):
        words = term_words((0, 1, 0), 2)
        assert words[0].letters == ("D", "pi", "D")
        assert words[1].letters == ("P", "D", "P")
        assert len(list(product_rule_terms(2, 3))) == 8


class TestSliceCorrespondence:
    def test_tree_words_restrict_to_subset_terms(self):
        # at an embedded point, each tree operator word equals the flat
        # subset term indexed by the steps where the first factor took the
        # difference; this is the restriction argument connecting the two
        # flavors of the product rule, verified term by term
        from localfields.calculus import TreeContext
        rng = random.Random(33)
        for _ in range(60):
            n = rng.randint(1, 3)
            f = fn_q(_rand_poly_text(rng))
            g = fn_q(_rand_poly_text(rng))
            x = (F(rng.randint(-4, 4)),)
            vs = tuple((F(rng.randint(-3, 3)),) for _ in range(n))
            ts = tuple(F(rng.choice([1, 2, -1, 3])) for _ in range(n))
            tree = embed_phi_point(PhiPoint(x, vs, ts))
            for choices in product_rule_terms(2, n):
                wf, wg = term_words(choices, 2)
                tree_val = wf.apply(f.eval_vec, tree, TreeContext) * \
                    wg.apply(g.eval_vec, tree, TreeContext)
                J = [j for j, c in enumerate(choices) if c == 0]
                S = [j for j, c in enumerate(choices) if c == 1]
                fpt = PhiPoint(x, tuple(vs[j] for j in J),
                               tuple(ts[j] for j in J))
                base = x
                for j in J:
                    base = tuple(b + v * ts[j]
                                 for b, v in zip(base, vs[j]))
                gpt = PhiPoint(base, tuple(vs[s] for s in S),
                               tuple(ts[s] for s in S))
                assert tree_val == phi_eval(f, fpt) * phi_eval(g, gpt)


class TestLeibnizMulti:
    def test_k2_matches_leibniz(self):
        rng = random.Random(12)
        for _ in range(20):
            n = rng.randint(1, 2)
            f, g = fn_q(_rand_poly_text(rng)), fn_q(_rand_poly_text(rng))
            pt = rand_tree(rng, n)
            try:
                a = leibniz_check(f, g, pt, "upsilon")
                b = leibniz_multi_check([f, g], pt, "upsilon")
            except ZeroDenominator:
                continue
            assert a.passed and b.passed and a.lhs == b.lhs

    def test_k3_linear_factors_q2(self):
        rng = random.Random(13)
        fs = [fn_p("x", D2)] * 3
        for _ in range(20):
            x = (e(D2, rng.randint(-5, 5)),)
            vs = ((e(D2, rng.randint(-4, 4)),),)
            ts = (e(D2, rng.choice([1, 3, -1])),)
            rep = leibniz_multi_check(fs, PhiPoint(x, vs, ts), "phi")
            assert rep.passed and rep.margin == 0

    def test_scalar_times_vector_valued(self):
        # the algebra-valued case: scalar f against a two-slot g
        f = fn_q("x")
        g = FnRepr(1, [parse_poly("x^2", 1).to_fraction_poly(),
                       parse_poly("1+2*x", 1).to_fraction_poly()], codim=2)
        rng = random.Random(17)
        done = 0
        while done < 10:
            pt = rand_tree(rng, rng.randint(1, 2))
            try:
                rep = leibniz_check(f, g, pt, "upsilon")
            except ZeroDenominator:
                continue
            assert rep.passed and rep.margin == 0
            done += 1

    def test_unit_factor_absorption(self):
        rng = random.Random(14)
        one = fn_q("1")
        f, g = fn_q("x^2"), fn_q("x+1")
        for _ in range(10):
            pt = rand_tree(rng, 2)
            try:
                with_unit = leibniz_multi_check([f, one, g], pt, "upsilon")
                without = leibniz_multi_check([f, g], pt, "upsilon")
            except ZeroDenominator:
                continue
            assert with_unit.passed and without.passed
            assert with_unit.lhs == without.lhs


class TestChain:
    def test_n1_two_coordinates(self):
        # the single-step expansion over coordinate quotients
        f = fn_q("x1*x2+x2", 2)
        u = [parse_poly("x^2", 1).to_fraction_poly(),
             parse_poly("x+1", 1).to_fraction_poly()]
        pt = PhiPoint((F(2),), ((F(1),),), (F(3),))
        rep = chain_check(f, u, pt, "phi")
        assert rep.passed and rep.margin == 0

    def test_f_identity_degenerates(self):
        f = fn_q("x1", 1)
        u = [parse_poly("x^2+x", 1).to_fraction_poly()]
        rng = random.Random(3)
        for n in (1, 2):
            pt = rand_tree(rng, n)
            rep = chain_check(f, u, pt, "upsilon")
            assert rep.passed
            assert rep.lhs == diff_eval(
                lambda v: u[0].eval_cached(list(v)), pt)

    def test_spec_example_q3(self):
        f = fn_p("x1*x2", D3, 2)
        u = [parse_poly("x", 1).to_field_poly(D3, 24),
             parse_poly("x^2", 1).to_field_poly(D3, 24)]
        x = (e(D3, 2),)
        vs = ((e(D3, 1),), (e(D3, 2),))
        ts = (e(D3, 1), e(D3, 4))
        rep = chain_check(f, u, PhiPoint(x, vs, ts), "phi")
        assert rep.passed and rep.margin == 0
        rep2 = chain_check(f, u, embed_phi_point(PhiPoint(x, vs, ts)),
                           "upsilon")
        assert rep2.passed and rep2.margin == 0

    def test_n3_one_dimensional(self):
        f = fn_q("x^2+x")
        u = [parse_poly("x^2+2*x", 1).to_fraction_poly()]
        rng = random.Random(8)
        done = 0
        while done < 10:
            pt = rand_tree(rng, 3)
            try:
                rep = chain_check(f, u, pt, "upsilon")
            except ZeroDenominator:
                continue
            assert rep.passed and rep.margin == 0
            done += 1

    def test_order_cap(self):
        from localfields.calculus import CalculusError
        f = fn_q("x")
        u = [parse_poly("x", 1).to_fraction_poly()]
        rng = random.Random(1)
        with pytest.raises(CalculusError):
            chain_check(f, u, rand_tree(rng, 4), "upsilon")

    def test_expansion_structure(self):
        # the head coordinate count grows by one per difference step hitting
        # it (m coordinates, then m+1, then m+2) and the step that hits the
        # head splits into one term per coordinate
        from localfields.calculus import TreeContext, chain_rhs_terms
        for m in (1, 2):
            f = fn_q("x1" if m == 1 else "x1*x2", m)
            u = [parse_poly("x^2", 1).to_fraction_poly() for _ in range(m)]
            terms1 = chain_rhs_terms(f, u, 1, TreeContext)
            assert len(terms1) == m
            assert all(len(head.coords) == m + 1 for head, _ in terms1)
            terms2 = chain_rhs_terms(f, u, 2, TreeContext)
            # per step-1 term: (m+1) head splits + 1 factor hit
            assert len(terms2) == m * (m + 1) + m
            head_sizes = {len(head.coords) for head, _ in terms2}
            assert head_sizes == {m + 1, m + 2}


class TestFixtures:
    def test_line_pass(self):
        rep = run_fixture_line(
            "leibniz upsilon n=1 p=3 f=x g=x x=1 vs=1 ts=1 expect=PASS")
        assert rep.passed

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "checks.txt"
        path.write_text(
            "# sample fixtures\n"
            "leibniz phi n=2 p=3 f=x^2 g=x+1 x=1 vs=1;2 ts=1,1 expect=PASS\n"
            "leibniz_multi upsilon n=1 p=2 fs=x|x+1|x^2 x=1 vs=1 ts=1 "
            "expect=PASS\n"
            "chain phi n=1 p=3 f=x1*x2 u=x|x^2 x=2 vs=1 ts=1 expect=PASS\n")
        reports = run_fixture_file(str(path))
        assert len(reports) == 3 and all(r.passed for r in reports)
        text = dump_reports(reports)
        assert text.count('"status": "PASS"') == 3

    def test_expected_failure_line(self):
        rep = run_fixture_line(
            "leibniz phi n=1 p=3 f=x g=x x=1 vs=1 ts=1 expect=FAIL")
        assert not rep.passed  # identity holds, so expecting FAIL fails

    def test_malformed_line(self):
        with pytest.raises(ValueError):
            run_fixture_line("leibniz phi n=2 p=3 f=x g=x x=1 vs=1 ts=1,1")


class TestOperatorWords:
    def test_pretty_and_depth(self):
        w = OperatorWord(("P", "D", "pi"))
        assert w.net_depth() == 3
        assert w.pretty("g") == "prYP1.g"

    def test_level_bookkeeping(self):
        # a leading shift block after b difference steps starts at index b+1
        w = OperatorWord(("D", "D", "P"))
        assert w.validate()
        assert w.shift_indices() == (3,)
        w2 = OperatorWord(("D", "P", "P"))
        assert w2.shift_indices() == (2, 3)
        with pytest.raises(ShapeMismatch):
            OperatorWord(("D", "Q")).validate()


class TestTreeShapes:
    def test_slot_and_scalar_counts(self):
        rng = random.Random(6)
        for n in (1, 2, 3):
            pt = rand_tree(rng, n)
            assert len(list(pt.slots())) == 2 ** n
            assert len(list(pt.scalars())) == 2 ** n - 1
