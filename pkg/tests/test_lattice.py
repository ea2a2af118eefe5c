"""Tests for exact lattice arithmetic.

Short-vector enumeration is checked against a brute-force box oracle at
low rank, and inertia against Sylvester's law (congruence by random
integer matrices cannot change it).  The rank-16 dichotomy counts are
then frozen: 480 roots either way, components 240+240 versus 480.
"""

import random

import pytest

from k3lab.lattice import (
    E8_TYPE,
    GAMMA16_TYPE,
    GramMatrix,
    classify_rank16,
    determinant,
    direct_sum,
    k3_gram,
    minus_d16plus_gram,
    minus_e8_gram,
    pairing,
    short_vectors,
    signature,
    standard_gram,
    u_gram,
    vector_props,
)


def brute_force_vectors(g, norm, box):
    """Oracle: scan the full coordinate box for vectors of the given norm."""
    n = g.rank
    found = []

    def rec(i, v):
        if i == n:
            if any(v) and pairing(tuple(v), tuple(v), g) == norm:
                found.append(tuple(v))
            return
        for x in range(-box, box + 1):
            v.append(x)
            rec(i + 1, v)
            v.pop()

    rec(0, [])
    return sorted(found)


def congruence(g, m):
    """m^T g m as a GramMatrix, exact."""
    n = g.rank
    gm = [[sum(g.entries[i][k] * m[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
    out = [[sum(m[k][i] * gm[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
    return GramMatrix(tuple(tuple(row) for row in out))


class TestBasicForms:
    def test_u_gram(self):
        g = u_gram()
        assert signature(g) == (1, 1, 0)
        assert determinant(g) == -1
        assert g.is_even()

    def test_minus_e8(self):
        g = minus_e8_gram()
        assert g.rank == 8
        assert signature(g) == (0, 8, 0)
        assert determinant(g) == 1
        assert g.is_even()

    def test_minus_d16plus(self):
        g = minus_d16plus_gram()
        assert g.rank == 16
        assert signature(g) == (0, 16, 0)
        assert abs(determinant(g)) == 1
        assert g.is_even()

    def test_k3_gram(self):
        g = k3_gram()
        assert g.rank == 22
        assert signature(g) == (3, 19, 0)
        assert abs(determinant(g)) == 1
        assert g.is_even()

    def test_standard_gram_both_kinds(self):
        for kind in (E8_TYPE, GAMMA16_TYPE):
            spec = standard_gram(kind)
            g = spec.gram
            assert g.rank == 22
            assert signature(g) == (3, 19, 0)
            assert abs(determinant(g)) == 1
            for a, b in spec.corner_pairs:
                assert g.entries[a][b] == 1
                assert g.entries[a][a] == 0
                assert g.entries[b][b] == 0
            mid = spec.middle_block()
            assert mid.rank == 16
            assert signature(mid) == (0, 16, 0)

    def test_standard_gram_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            standard_gram("NotAKind")


class TestVectorOps:
    def test_pairing_bilinear(self):
        rng = random.Random(20260301)
        g = k3_gram()
        n = g.rank
        for _ in range(20):
            u = tuple(rng.randint(-4, 4) for _ in range(n))
            v = tuple(rng.randint(-4, 4) for _ in range(n))
            w = tuple(rng.randint(-4, 4) for _ in range(n))
            uv = pairing(u, v, g)
            assert uv == pairing(v, u, g)
            vw_sum = tuple(v[i] + w[i] for i in range(n))
            assert pairing(u, vw_sum, g) == uv + pairing(u, w, g)

    def test_vector_props(self):
        g = u_gram()
        p = vector_props((0, 1), g)
        assert p.isotropic and p.primitive and p.norm == 0
        p = vector_props((2, 2), g)
        assert p.norm == 8 and not p.primitive and not p.isotropic
        p = vector_props((1, -1), g)
        assert p.norm == -2 and p.primitive
        with pytest.raises(ValueError):
            vector_props((0, 0), g)


class TestSignatureOracle:
    def test_sylvester_invariance(self):
        # congruence with an invertible integer matrix preserves inertia
        rng = random.Random(777)
        diag_cases = [
            (1, 1, 1, -1, -1),
            (1, -1, 0, -1, -1),
            (0, 0, 1, 1, -1),
            (-1, -1, -1, -1, -1),
        ]
        for diag in diag_cases:
            n = len(diag)
            g = GramMatrix(tuple(tuple(diag[i] if i == j else 0 for j in range(n)) for i in range(n)))
            expect = (
                sum(1 for d in diag if d > 0),
                sum(1 for d in diag if d < 0),
                sum(1 for d in diag if d == 0),
            )
            assert signature(g) == expect
            for _ in range(5):
                while True:
                    m = [[rng.randint(-2, 2) for _ in range(n)] for _ in range(n)]
                    gm = congruence(GramMatrix(tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n))), m)
                    if determinant(gm) != 0:
                        break
                assert signature(congruence(g, m)) == expect

    def test_off_diagonal_pivot(self):
        # all-zero diagonal exercises the off-diagonal congruence step
        g = GramMatrix(((0, 1), (1, 0)))
        assert signature(g) == (1, 1, 0)
        g = GramMatrix(((0, 0, 3), (0, 0, 0), (3, 0, 0)))
        assert signature(g) == (1, 1, 1)


class TestShortVectors:
    def test_box_oracle_rank2(self):
        a2 = GramMatrix(((2, -1), (-1, 2)))
        for norm in (2, 4, 6):
            got = short_vectors(a2, norm)
            assert got == brute_force_vectors(a2, norm, box=4)
        assert len(short_vectors(a2, 2)) == 6

    def test_box_oracle_negative_definite(self):
        g = GramMatrix(((-2, 1), (1, -2)))
        got = short_vectors(g, -2)
        assert got == brute_force_vectors(g, -2, box=4)
        assert len(got) == 6

    def test_box_oracle_rank3(self):
        a3 = GramMatrix(((2, -1, 0), (-1, 2, -1), (0, -1, 2)))
        got = short_vectors(a3, 2)
        assert got == brute_force_vectors(a3, 2, box=3)
        assert len(got) == 12

    def test_negation_closure_and_uniqueness(self):
        g = minus_e8_gram()
        roots = short_vectors(g, -2)
        assert len(roots) == 240
        root_set = set(roots)
        assert len(root_set) == 240
        for r in roots:
            assert tuple(-x for x in r) in root_set

    def test_d16plus_root_count(self):
        roots = short_vectors(minus_d16plus_gram(), -2)
        assert len(roots) == 480

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            short_vectors(u_gram(), 2)
        with pytest.raises(ValueError):
            short_vectors(minus_e8_gram(), 2)


class TestRank16Dichotomy:
    def test_e8e8(self):
        g = direct_sum(minus_e8_gram(), minus_e8_gram())
        v = classify_rank16(g)
        assert v.kind == "E8E8"
        assert v.root_count == 480
        assert v.component_sizes == (240, 240)

    def test_d16(self):
        v = classify_rank16(minus_d16plus_gram())
        assert v.kind == "D16"
        assert v.root_count == 480
        assert v.component_sizes == (480,)

    def test_component_sizes_sum_to_root_count(self):
        for g in (direct_sum(minus_e8_gram(), minus_e8_gram()), minus_d16plus_gram()):
            v = classify_rank16(g)
            assert sum(v.component_sizes) == v.root_count

    def test_middle_blocks_of_standard_bases(self):
        assert classify_rank16(standard_gram(E8_TYPE).middle_block()).kind == "E8E8"
        assert classify_rank16(standard_gram(GAMMA16_TYPE).middle_block()).kind == "D16"

    def test_precondition_errors(self):
        odd = GramMatrix(tuple(tuple(-1 if i == j else 0 for j in range(16)) for i in range(16)))
        with pytest.raises(ValueError):
            classify_rank16(odd)
        non_unimodular = GramMatrix(tuple(tuple(-2 if i == j else 0 for j in range(16)) for i in range(16)))
        with pytest.raises(ValueError):
            classify_rank16(non_unimodular)
        wrong_rank = minus_e8_gram()
        with pytest.raises(ValueError):
            classify_rank16(wrong_rank)
