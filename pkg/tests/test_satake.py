"""Tests for period frames, triangular coordinates, and boundary types.

Synthetic frames come from the diagonal isometry flow acting on the
reference frame, which realizes any target coordinates exactly; that
gives closed-form oracles for the triangular form, the four boundary
types, and the polarized filter families.  The basis involution is
checked as an isometry onto the split Gram form.
"""

import math
import random
import unittest

import numpy as np
from scipy.linalg import expm

from k3lab import satake as S
from k3lab.kemetric import FlatOrbifold, SegmentSpace
from k3lab.lattice import E8_TYPE, GAMMA16_TYPE, standard_gram

E8 = standard_gram(E8_TYPE)
G16 = standard_gram(GAMMA16_TYPE)
Q8 = np.array(E8.gram.entries, dtype=float)


def random_frame(rng, sigma=0.05, basis=E8):
    ref = S.reference_frame(basis)
    pert = np.array([[rng.gauss(0, sigma) for _ in range(3)] for _ in range(22)])
    return S.PeriodFrame(matrix=ref.matrix + pert, basis=basis)


def random_rotation(rng):
    skew = np.zeros((3, 3))
    skew[0, 1], skew[0, 2], skew[1, 2] = (
        rng.gauss(0, 1),
        rng.gauss(0, 1),
        rng.gauss(0, 1),
    )
    return expm(skew - skew.T)


def flow_frame(a, b, c, basis=E8):
    ref = S.reference_frame(basis)
    return S.PeriodFrame(matrix=S.diagonal_flow(a, b, c) @ ref.matrix, basis=basis)


def flow_coords(gen, n=8, basis=E8):
    return [
        S.triangularize(S.q_orthonormalize(flow_frame(*gen(k), basis=basis)))
        for k in range(n)
    ]


class PeriodFrameTest(unittest.TestCase):
    def test_reference_frame_gram(self):
        for basis in (E8, G16):
            g = S.reference_frame(basis).gram()
            np.testing.assert_allclose(g, 2.0 * np.eye(3), atol=1e-14)

    def test_shape_validation(self):
        with self.assertRaises(ValueError):
            S.PeriodFrame(matrix=np.zeros((21, 3)), basis=E8)

    def test_indefinite_plane_reports_inertia(self):
        m = np.zeros((22, 3))
        m[0, 0] = 1.0  # isotropic
        m[1, 1] = 1.0
        m[2, 2] = 1.0
        with self.assertRaises(ValueError) as ctx:
            S.PeriodFrame(matrix=m, basis=E8)
        self.assertIn("inertia", str(ctx.exception))

    def test_diagonal_flow_is_isometry(self):
        d = S.diagonal_flow(0.7, -0.2, 1.3)
        np.testing.assert_allclose(d.T @ Q8 @ d, Q8, atol=1e-12)


class OrthonormalizeTest(unittest.TestCase):
    def test_output_gram(self):
        rng = random.Random(2)
        for _ in range(10):
            fr = S.q_orthonormalize(random_frame(rng))
            np.testing.assert_allclose(fr.gram(), 2 * np.eye(3), atol=1e-12)

    def test_idempotent(self):
        rng = random.Random(4)
        fr = S.q_orthonormalize(random_frame(rng))
        fr2 = S.q_orthonormalize(fr)
        np.testing.assert_allclose(fr.matrix, fr2.matrix, atol=1e-12)

    def test_rescales_stretched_column(self):
        ref = S.reference_frame(E8)
        m = ref.matrix.copy()
        m[:, 0] *= 2.0  # gram becomes diag(8, 2, 2)
        fr = S.q_orthonormalize(S.PeriodFrame(matrix=m, basis=E8))
        np.testing.assert_allclose(fr.matrix[:, 0], 0.5 * m[:, 0], atol=1e-14)
        np.testing.assert_allclose(fr.matrix[:, 1:], m[:, 1:], atol=1e-14)


class TriangularizeTest(unittest.TestCase):
    def test_reference_frame_is_origin(self):
        co = S.triangularize(S.reference_frame(E8))
        self.assertEqual((co.a, co.b, abs(co.c)), (0.0, 0.0, 0.0))

    def test_flow_coordinates_exact(self):
        # bottom diagonal (e^-1, e^-3, e^-6) reads off as (3, 2, 1)
        co = S.triangularize(S.q_orthonormalize(flow_frame(3, 2, 1)))
        self.assertEqual((co.a, co.b, co.c), (3.0, 2.0, 1.0))
        u = co.matrix()
        self.assertAlmostEqual(u[19, 0], math.exp(-1), places=15)
        self.assertAlmostEqual(u[20, 1], math.exp(-3), places=15)
        self.assertAlmostEqual(u[21, 2], math.exp(-6), places=15)

    def test_random_frames_reconstruct(self):
        rng = random.Random(11)
        worst = 0.0
        for _ in range(100):
            fr = S.q_orthonormalize(random_frame(rng))
            co = S.triangularize(fr)
            u = (fr.matrix * np.array(co.column_flip)[None, :]) @ co.rotation
            worst = max(worst, float(np.max(np.abs(co.matrix() - u))))
            self.assertAlmostEqual(
                float(np.linalg.det(co.rotation)), 1.0, places=10
            )
        self.assertLess(worst, 1e-10)

    def test_gauge_invariance(self):
        rng = random.Random(7)
        for _ in range(20):
            fr = S.q_orthonormalize(random_frame(rng))
            c1 = S.triangularize(fr)
            c2 = S.triangularize(
                S.PeriodFrame(matrix=fr.matrix @ random_rotation(rng), basis=E8)
            )
            self.assertLess(
                max(abs(c1.a - c2.a), abs(c1.b - c2.b), abs(c1.c - c2.c)), 1e-9
            )

    def test_reflection_absorbed_by_column_flip(self):
        rng = random.Random(13)
        fr = S.q_orthonormalize(random_frame(rng))
        c1 = S.triangularize(fr)
        fr2 = S.PeriodFrame(matrix=fr.matrix @ np.diag([1.0, 1.0, -1.0]), basis=E8)
        c2 = S.triangularize(fr2)
        self.assertEqual(c2.column_flip, (-1, 1, 1))
        self.assertAlmostEqual(float(np.linalg.det(c2.rotation)), 1.0, places=12)
        self.assertEqual((c1.a, c1.b, c1.c), (c2.a, c2.b, c2.c))
        u = (fr2.matrix * np.array(c2.column_flip)[None, :]) @ c2.rotation
        self.assertLess(float(np.max(np.abs(c2.matrix() - u))), 1e-12)

    def test_left_flow_shifts_additively(self):
        rng = random.Random(19)
        fr = S.q_orthonormalize(random_frame(rng))
        c1 = S.triangularize(fr)
        d = S.diagonal_flow(0.7, 0.3, 1.1)
        c2 = S.triangularize(
            S.q_orthonormalize(S.PeriodFrame(matrix=d @ fr.matrix, basis=E8))
        )
        self.assertAlmostEqual(c2.a - c1.a, 0.7, places=9)
        self.assertAlmostEqual(c2.b - c1.b, 0.3, places=9)
        self.assertAlmostEqual(c2.c - c1.c, 1.1, places=9)

    def test_requires_normalized_frame(self):
        ref = S.reference_frame(E8)
        m = ref.matrix.copy()
        m[:, 0] *= 2.0
        with self.assertRaises(ValueError):
            S.triangularize(S.PeriodFrame(matrix=m, basis=E8))

    def test_non_siegel_position(self):
        class Stub:
            basis = E8
            matrix = S.reference_frame(E8).matrix.copy()

            def gram(self):
                return 2.0 * np.eye(3)

        stub = Stub()
        stub.matrix[21, :] = stub.matrix[20, :]  # bottom block rank 2
        with self.assertRaises(S.NonSiegelError):
            S.triangularize(stub)


class ClassifySequenceTest(unittest.TestCase):
    def test_four_synthetic_families(self):
        cases = [
            (lambda k: (4 * k, 0, 0), "TypeA"),
            (lambda k: (0, 0, 4 * k), "TypeB"),
            (lambda k: (4 * k, 0, 4 * k), "TypeC"),
            (lambda k: (0, 4 * k, 0), "TypeD"),
        ]
        for gen, want in cases:
            v = S.classify_sequence(flow_coords(gen), lattice_kind=E8_TYPE)
            self.assertEqual(v.btype, want)

    def test_interior(self):
        v = S.classify_sequence(flow_coords(lambda k: (1.0, 0.5, 0.25)))
        self.assertEqual(v.btype, "Interior")
        self.assertIsNone(v.payload)

    def test_indeterminate_oscillation(self):
        v = S.classify_sequence(flow_coords(lambda k: (0, 3.0 * (k % 2), 0)))
        self.assertEqual(v.btype, "Indeterminate")
        self.assertIn("trends", v.diagnostics)

    def test_payload_determinants(self):
        vb = S.classify_sequence(flow_coords(lambda k: (0, 0, 4 * k)))
        self.assertAlmostEqual(float(np.linalg.det(vb.payload)), 1.0, places=12)
        vc = S.classify_sequence(flow_coords(lambda k: (4 * k, 0, 4 * k)))
        self.assertEqual(vc.payload.shape, (2, 2))
        self.assertAlmostEqual(float(np.linalg.det(vc.payload)), 1.0, places=12)

    def test_type_a_payload_plane(self):
        va = S.classify_sequence(flow_coords(lambda k: (4 * k, 0, 0)))
        self.assertEqual(va.payload.shape, (20, 2))

    def test_needs_three_terms(self):
        with self.assertRaises(ValueError):
            S.classify_sequence(flow_coords(lambda k: (k, 0, 0), n=2))

    def test_siegel_bound_enforced(self):
        with self.assertRaises(ValueError) as ctx:
            S.classify_sequence(flow_coords(lambda k: (-6.0, 0, 0)))
        self.assertIn("Siegel", str(ctx.exception))

    def test_threshold_validation(self):
        with self.assertRaises(ValueError):
            S.ClassifyThresholds(divergence=-1.0)
        with self.assertRaises(ValueError):
            S.ClassifyThresholds(variation=0.0)

    def test_verdict_validation(self):
        with self.assertRaises(ValueError):
            S.BoundaryVerdict(btype="TypeE", lattice_kind=E8_TYPE)
        with self.assertRaises(ValueError):
            S.BoundaryVerdict(btype="TypeB", lattice_kind=E8_TYPE)
        with self.assertRaises(ValueError):
            S.BoundaryVerdict(
                btype="TypeA", lattice_kind=E8_TYPE, payload=np.zeros((20, 2))
            )


class RealizeTest(unittest.TestCase):
    def test_gamma16_types_give_orbifolds(self):
        vb = S.classify_sequence(
            flow_coords(lambda k: (0, 0, 4 * k), basis=G16),
            lattice_kind=GAMMA16_TYPE,
        )
        rb = S.phi_realize(vb)
        self.assertIsInstance(rb.space, FlatOrbifold)
        self.assertEqual(rb.space.dim, 3)
        # identity payload: diameter sqrt(3)/2, so unit scale is 2/sqrt(3)
        self.assertAlmostEqual(rb.scale, 2 / math.sqrt(3), places=12)

        vc = S.classify_sequence(
            flow_coords(lambda k: (4 * k, 0, 4 * k), basis=G16),
            lattice_kind=GAMMA16_TYPE,
        )
        rc = S.phi_realize(vc)
        self.assertIsInstance(rc.space, FlatOrbifold)
        self.assertEqual(rc.space.dim, 2)
        self.assertAlmostEqual(rc.scale, math.sqrt(2), places=12)
        self.assertAlmostEqual(
            rc.distance((0.25, 0.0), (0.0, 0.0)), 0.25 * math.sqrt(2), places=12
        )

    def test_e8_types_give_segment(self):
        for gen in (lambda k: (0, 0, 4 * k), lambda k: (4 * k, 0, 4 * k)):
            v = S.classify_sequence(flow_coords(gen), lattice_kind=E8_TYPE)
            r = S.phi_realize(v)
            self.assertIsInstance(r.space, SegmentSpace)

    def test_type_d_gives_segment(self):
        for kind, basis in ((E8_TYPE, E8), (GAMMA16_TYPE, G16)):
            v = S.classify_sequence(
                flow_coords(lambda k: (0, 4 * k, 0), basis=basis),
                lattice_kind=kind,
            )
            self.assertIsInstance(S.phi_realize(v).space, SegmentSpace)

    def test_unrealizable_verdicts(self):
        va = S.classify_sequence(flow_coords(lambda k: (4 * k, 0, 0)))
        with self.assertRaises(ValueError):
            S.phi_realize(va)
        vi = S.classify_sequence(flow_coords(lambda k: (1.0, 0.5, 0.25)))
        with self.assertRaises(ValueError):
            S.phi_realize(vi)


class PolarizationTest(unittest.TestCase):
    def lam_a(self):
        v = [0] * 22
        v[1] = 1
        v[20] = 1  # x2 + x21, fixed by the TypeA flow
        return tuple(v)

    def lam_d(self):
        v = [0] * 22
        v[2] = 1
        v[19] = 1  # x3 + x20, fixed by the TypeD flow
        return tuple(v)

    def test_validation(self):
        S.PolarizationClass(vector=self.lam_a(), basis=E8)
        with self.assertRaises(ValueError):
            S.PolarizationClass(vector=(0.5,) * 22, basis=E8)
        doubled = tuple(2 * x for x in self.lam_a())
        with self.assertRaises(ValueError):
            S.PolarizationClass(vector=doubled, basis=E8)
        negative = [0] * 22
        negative[1] = 1
        negative[20] = -1
        with self.assertRaises(ValueError):
            S.PolarizationClass(vector=tuple(negative), basis=E8)
        isotropic = [0] * 22
        isotropic[0] = 1
        with self.assertRaises(ValueError):
            S.PolarizationClass(vector=tuple(isotropic), basis=E8)

    def test_norm(self):
        self.assertEqual(S.PolarizationClass(vector=self.lam_a(), basis=E8).norm, 2)

    def test_type_a_family_passes(self):
        lam = S.PolarizationClass(vector=self.lam_a(), basis=E8)
        frames = [flow_frame(4 * k, 0, 0) for k in range(8)]
        rep = S.polarized_filter(frames, lam)
        self.assertTrue(rep.passed)
        self.assertEqual(rep.verdict.btype, "TypeA")
        self.assertEqual(max(rep.residuals), 0.0)

    def test_type_d_family_passes(self):
        lam = S.PolarizationClass(vector=self.lam_d(), basis=E8)
        frames = [flow_frame(0, 4 * k, 0) for k in range(8)]
        rep = S.polarized_filter(frames, lam)
        self.assertTrue(rep.passed)
        self.assertEqual(rep.verdict.btype, "TypeD")

    def test_off_plane_polarization_rejected(self):
        lam = S.PolarizationClass(vector=self.lam_a(), basis=E8)
        frames = [flow_frame(0, 0, 4 * k) for k in range(8)]
        with self.assertRaises(ValueError) as ctx:
            S.polarized_filter(frames, lam)
        self.assertIn("does not lie in the plane", str(ctx.exception))

    def test_indeterminate_family_not_passed(self):
        lam = S.PolarizationClass(vector=self.lam_d(), basis=E8)
        frames = [flow_frame(0, 3.0 * (k % 2), 0) for k in range(8)]
        rep = S.polarized_filter(frames, lam)
        self.assertFalse(rep.passed)
        self.assertEqual(rep.verdict.btype, "Indeterminate")
        self.assertIn("indeterminate", rep.reason)

    def test_empty_frames_rejected(self):
        with self.assertRaises(ValueError):
            S.polarized_filter([], S.PolarizationClass(vector=self.lam_a(), basis=E8))


class BasisConvertTest(unittest.TestCase):
    def w_gram(self, q):
        qw = q.copy()
        for k in range(3):
            i, j = k, 21 - k
            qw[i, i], qw[j, j] = 1.0, -1.0
            qw[i, j] = qw[j, i] = 0.0
        return qw

    def test_round_trip(self):
        rng = random.Random(5)
        v = np.array([rng.gauss(0, 1) for _ in range(22)])
        w = S.basis_convert(v, "to_w")
        np.testing.assert_allclose(S.basis_convert(w, "to_x"), v, atol=1e-14)

    def test_isometry_onto_split_gram(self):
        rng = random.Random(8)
        for basis in (E8, G16):
            q = np.array(basis.gram.entries, dtype=float)
            qw = self.w_gram(q)
            for _ in range(10):
                u = np.array([float(rng.randrange(-3, 4)) for _ in range(22)])
                v = np.array([float(rng.randrange(-3, 4)) for _ in range(22)])
                lhs = float(u @ q @ v)
                rhs = float(
                    S.basis_convert(u, "to_w") @ qw @ S.basis_convert(v, "to_w")
                )
                self.assertAlmostEqual(lhs, rhs, places=10)

    def test_validation(self):
        with self.assertRaises(ValueError):
            S.basis_convert(np.zeros(22), "sideways")
        with self.assertRaises(ValueError):
            S.basis_convert(np.zeros(21), "to_w")


class IwasawaValidationTest(unittest.TestCase):
    def test_field_checks(self):
        co = S.triangularize(S.reference_frame(E8))
        with self.assertRaises(ValueError):
            S.IwasawaCoordinates(
                a=0, b=0, c=0, alphas=co.alphas[:20], rotation=np.eye(3)
            )
        bad = co.alphas.copy()
        bad[20, 0] = 0.5
        with self.assertRaises(ValueError):
            S.IwasawaCoordinates(a=0, b=0, c=0, alphas=bad, rotation=np.eye(3))
        with self.assertRaises(ValueError):
            S.IwasawaCoordinates(
                a=0, b=0, c=0, alphas=co.alphas, rotation=np.eye(3), frame_norm=1.0
            )


if __name__ == "__main__":
    unittest.main()
