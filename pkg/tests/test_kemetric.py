"""Tests for the conformal factor field, mesh geometry, and limit spaces.

The round sphere provides closed-form oracles (area 4 pi, diameter pi,
cap volumes, curvature 1/R^2).  Flat orbifold distances are checked
against brute-force enumeration over lattice translates, and orbifold
diameters against hand-computed extremal points.  Conformal field
values are cross-checked between charts and against the arithmetic
identity rho = 2 pi^2 log+|j| / (3 |g4|) valid near a stable target
with h8 = 3 g4^2, h12 = g4^3.
"""

import math
import random
import unittest

import numpy as np
import pytest

from k3lab import kemetric as KM
from k3lab import modular
from k3lab.modular import SingularFiberError
from k3lab.weierstrass import NonMinimalError, WeierstrassData

GENERIC_H8 = [1, 1, 0, 0, 0, 0, 0, 0, 1]
GENERIC_H12 = [3, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1]


@pytest.fixture(scope="module")
def generic_field():
    data = WeierstrassData.from_coefficients(GENERIC_H8, GENERIC_H12)
    return KM.ConformalFactorField(data)


@pytest.fixture(scope="module")
def generic_mesh(generic_field):
    return KM.build_mesh(generic_field, resolution=16)


@pytest.fixture(scope="module")
def sphere_field():
    return KM.RoundSphereField(1.0)


@pytest.fixture(scope="module")
def sphere_mesh(sphere_field):
    return KM.build_mesh(sphere_field, resolution=24, neighbor_factor=6.4)


def g4_pair(eps):
    """Coefficients of (3 g4^2 + eps, g4^3) for g4 = t(t-1)(t-2)(t-5)."""
    g4 = np.array([0, 10, -17, 8, -1], dtype=float)
    sq = np.convolve(g4, g4)
    cube = np.convolve(sq, g4)
    h8 = 3.0 * sq
    h8[0] += eps
    return list(h8), list(cube)


class ChartConsistencyTest(unittest.TestCase):
    def test_weight_four_transition(self):
        data = WeierstrassData.from_coefficients(GENERIC_H8, GENERIC_H12)
        field = KM.ConformalFactorField(data)
        rng = random.Random(5)
        for _ in range(12):
            r = rng.uniform(0.92, 1.08)
            th = rng.uniform(0, 2 * math.pi)
            z = r * complex(math.cos(th), math.sin(th))
            rho0 = field.rho(1.0 / z, chart=0)
            rho1 = field.rho(z, chart=1)
            self.assertAlmostEqual(
                rho1, abs(z) ** -4 * rho0, delta=1e-9 * abs(rho1)
            )

    def test_scalar_matches_vector(self):
        field = KM.RoundSphereField(2.0)
        z = 0.3 + 0.4j
        self.assertEqual(field.rho(z), float(field.rho_many([z])[0]))

    def test_conformal_factor_helper(self):
        field = KM.RoundSphereField(1.0)
        self.assertAlmostEqual(KM.conformal_factor(field, 0j), 4.0, places=12)


class ConformalFieldTest(unittest.TestCase):
    def test_stable_target_arithmetic_identity(self):
        h8, h12 = g4_pair(1e-10)
        data = WeierstrassData.from_coefficients(h8, h12)
        field = KM.ConformalFactorField(data)
        # the relative discriminant scale at eps = 1e-10 is eps / (2 g4^2),
        # so sample points must keep |g4| moderate to stay above the
        # degeneracy mask
        for t in (3.0 + 0.5j, 0.5 + 0.3j, 1.5 + 0.4j):
            g4 = complex(np.polyval([-1, 8, -17, 10, 0], t))
            rho = field.rho(t)
            a = 3 * g4 * g4 + 1e-10
            b = g4**3
            jval = 1728.0 * a**3 / (a**3 - 27 * b**2)
            ratio = rho * 3 * abs(g4) / (
                2 * math.pi**2 * modular.log_plus(abs(jval))
            )
            self.assertAlmostEqual(ratio, 1.0, delta=0.01)

    def test_singular_markers(self):
        data = WeierstrassData.from_coefficients(
            [0, 0, 0, 0, 1], [0, 0, 0, 0, 0, 0, 1, 1]
        )
        field = KM.ConformalFactorField(data)
        out = field.rho_many([0j])
        self.assertTrue(np.isinf(out[0]))
        regular = field.rho_many([0.5 + 0.5j])
        self.assertTrue(np.isfinite(regular[0]) and regular[0] > 0)

    def test_identically_singular_pair_rejected(self):
        # (3t^2, t^3) satisfies a^3 = 27 b^2 identically
        with self.assertRaises(SingularFiberError):
            KM.ConformalFactorField(
                WeierstrassData.from_coefficients([0, 0, 3], [0, 0, 0, 1])
            )

    def test_chunked_evaluation_matches_direct(self):
        data = WeierstrassData.from_coefficients(GENERIC_H8, GENERIC_H12)
        field = KM.ConformalFactorField(data)
        rng = random.Random(9)
        pts = np.array(
            [complex(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)) for _ in range(512)]
        )
        direct = field.log_mu_many(pts)
        saved = KM._EVAL_CHUNK
        try:
            KM._EVAL_CHUNK = 97
            chunked = field.log_mu_many(pts)
        finally:
            KM._EVAL_CHUNK = saved
        np.testing.assert_allclose(chunked, direct, rtol=0, atol=0)


class NonMinimalTest(unittest.TestCase):
    def test_exact_pair_refused(self):
        data = WeierstrassData.from_coefficients([0, 0, 0, 0, 1], [0, 0, 0, 0, 0, 0, 1])
        field = KM.ConformalFactorField(data)
        self.assertTrue(field.non_minimal_points)
        with self.assertRaises(NonMinimalError) as ctx:
            KM.build_mesh(field, resolution=8)
        self.assertIn("non-minimal", str(ctx.exception))
        with self.assertRaises(NonMinimalError):
            KM.total_volume(field)

    def test_numeric_pair_refused_by_probe(self):
        data = WeierstrassData.from_coefficients(
            [0, 0, 0, 0, 1], [0, 0, 0, 0, 0, 0, 1], mode="numeric"
        )
        field = KM.ConformalFactorField(data)
        with self.assertRaises(NonMinimalError):
            KM.build_mesh(field, resolution=8)

    def test_merged_ring_candidate_is_cleared(self):
        # a tight root ring of h8 around an exact h12 zero merges into a
        # false non-minimal candidate; the funnel probe must clear it
        eps = 1e-4
        data = WeierstrassData.from_coefficients(
            [eps**8, 0, 0, 0, 1.0],
            [0, 0, 0, 0, 0, 0, 1.0, eps**8],
        )
        field = KM.ConformalFactorField(data)
        self.assertTrue(field.non_minimal_points)
        mesh = KM.build_mesh(field, resolution=12)
        self.assertGreater(mesh.total_cell_volume, 0)


class SphereGeometryTest(unittest.TestCase):
    def test_total_volume(self):
        vol = KM.total_volume(KM.RoundSphereField(1.0), tol=1e-3)
        self.assertAlmostEqual(vol, 4 * math.pi, delta=1e-3 * 4 * math.pi)

    def test_total_volume_radius_scaling(self):
        vol = KM.total_volume(KM.RoundSphereField(2.0), tol=1e-3)
        self.assertAlmostEqual(vol, 16 * math.pi, delta=1e-3 * 16 * math.pi)

    def test_curvature(self):
        for radius in (1.0, 2.0):
            k = KM.curvature_fd(KM.RoundSphereField(radius), 0.3 + 0.1j, 1e-2)
            self.assertAlmostEqual(k, 1.0 / radius**2, delta=2e-3 / radius**2)

    def test_bishop_gromov_input_validation(self):
        field = KM.RoundSphereField(1.0)
        mesh = KM.build_mesh(field, resolution=8)
        with self.assertRaises(ValueError):
            KM.bishop_gromov_ratio(mesh, (0, 0j), 1.0, 0.5)


def test_sphere_mesh_diameter(sphere_mesh):
    assert abs(KM.diameter(sphere_mesh) - math.pi) < 0.01 * math.pi


def test_sphere_cap_volume_and_partition(sphere_mesh):
    for r in (0.8, 1.5, 2.4):
        cap = KM.ball_volume(sphere_mesh, (0, 0j), r)
        exact = 2 * math.pi * (1 - math.cos(r))
        assert abs(cap - exact) < 0.05 * exact
    everything = KM.ball_volume(sphere_mesh, (0, 0j), 4.0)
    assert everything == sphere_mesh.total_cell_volume


def test_segment_fit_rejects_sphere(sphere_mesh):
    _, deviation = KM.segment_fit(KM.summarize(sphere_mesh, landmarks=24))
    assert deviation > 0.2


def test_sphere_bishop_gromov_benchmark(sphere_mesh):
    # radii below a handful of cell diameters quantize badly, so keep r1
    # large enough for the ball boundary band to stay a small fraction
    rng = random.Random(3)
    for _ in range(10):
        r1 = rng.uniform(0.55, 1.4)
        r2 = rng.uniform(r1 * 1.15, 2.5)
        ratio = KM.bishop_gromov_ratio(sphere_mesh, (0, 0j), r1, r2)
        exact = (1 - math.cos(r1)) / (1 - math.cos(r2))
        assert abs(ratio - exact) < 0.05 * exact
        assert ratio >= (r1 / r2) ** 2 * 0.95


class MeshStructureTest(unittest.TestCase):
    def test_resolution_floor(self):
        with self.assertRaises(ValueError):
            KM.build_mesh(KM.RoundSphereField(1.0), resolution=3)

    def test_ownership_partition(self):
        mesh = KM.build_mesh(KM.RoundSphereField(1.0), resolution=8)
        owned0 = mesh.owned & (mesh.chart == 0)
        owned1 = mesh.owned & (mesh.chart == 1)
        self.assertTrue(np.all(np.abs(mesh.pos[owned0]) <= 1.0 + 1e-12))
        self.assertTrue(np.all(np.abs(mesh.pos[owned1]) < 1.0))
        self.assertTrue(owned0.any() and owned1.any())

    def test_edge_lengths_positive_finite(self):
        mesh = KM.build_mesh(KM.RoundSphereField(1.0), resolution=8)
        self.assertTrue(np.all(np.isfinite(mesh.edge_lengths)))
        self.assertTrue(np.all(mesh.edge_lengths >= 0))

    def test_summary_determinism(self):
        field = KM.RoundSphereField(1.0)
        m1 = KM.build_mesh(field, resolution=8)
        m2 = KM.build_mesh(field, resolution=8)
        s1 = KM.summarize(m1, landmarks=16)
        s2 = KM.summarize(m2, landmarks=16)
        np.testing.assert_array_equal(s1.landmark_ids, s2.landmark_ids)
        np.testing.assert_array_equal(s1.distances, s2.distances)


def test_generic_mesh_exclusions(generic_mesh):
    assert generic_mesh.exclusion
    for key, info in generic_mesh.exclusion.items():
        chart, z = key
        assert chart in (0, 1)
        assert {"orders", "metric_radius", "chart_radius"} <= set(info)
    assert generic_mesh.excluded_volume_estimate >= 0
    assert (
        generic_mesh.excluded_volume_estimate
        < 1e-3 * generic_mesh.total_cell_volume
    )


def test_generic_mesh_connected(generic_mesh):
    row = generic_mesh.distances_from(0)
    assert np.all(np.isfinite(row))


def test_generic_volume_agreement(generic_field, generic_mesh):
    quad = KM.total_volume(generic_field, tol=1e-2)
    assert abs(generic_mesh.total_cell_volume - quad) < 0.05 * quad


def test_generic_curvature_guard(generic_field):
    sing = generic_field.chart_singular(0)
    z, _ = sing[0]
    with pytest.raises(ValueError):
        KM.curvature_fd(generic_field, z + 1e-6, 1e-3)


def test_generic_curvature_finite(generic_field):
    k = KM.curvature_fd(generic_field, 0.31 + 0.17j, 1e-4)
    assert np.isfinite(k)


class FlatOrbifoldTest(unittest.TestCase):
    def brute_distance(self, orb, x, y):
        """Exhaustive minimum over sign and lattice translates.

        Differences are first rounded into the fundamental cell; for a
        basis of condition number at most 3 and determinant 1 the
        optimal residual translate then has sup-norm below 8, so the
        box search is exhaustive, not heuristic.
        """
        basis = np.asarray(orb.basis, float)
        offs = np.array(
            np.meshgrid(*([range(-8, 9)] * orb.dim))
        ).reshape(orb.dim, -1).T
        trans = offs @ basis
        best = math.inf
        for sign in (1.0, -1.0):
            d = np.asarray(x, float) - sign * np.asarray(y, float)
            d = d - np.round(np.linalg.solve(basis.T, d)) @ basis
            best = min(best, float(np.min(np.linalg.norm(d - trans, axis=1))))
        return best

    def test_against_brute_force(self):
        rng = random.Random(17)
        for dim in (2, 3):
            for _ in range(10):
                while True:
                    m = np.array(
                        [[rng.gauss(0, 1) for _ in range(dim)] for _ in range(dim)]
                    )
                    det = np.linalg.det(m)
                    if abs(det) > 0.3 and np.linalg.cond(m) < 3.0:
                        break
                m = m / abs(det) ** (1.0 / dim)
                if np.linalg.det(m) < 0:
                    m[0] = -m[0]
                orb = KM.FlatOrbifold(dim=dim, basis=m)
                x = [rng.uniform(-1, 1) for _ in range(dim)]
                y = [rng.uniform(-1, 1) for _ in range(dim)]
                got = KM.flat_orbifold_distance(orb, x, y)
                want = self.brute_distance(orb, x, y)
                self.assertAlmostEqual(got, want, delta=1e-10)

    def test_unit_determinant_required(self):
        with self.assertRaises(ValueError):
            KM.FlatOrbifold(dim=2, basis=np.diag([2.0, 2.0]))

    def test_square_torus_diameter(self):
        orb = KM.FlatOrbifold(dim=2, basis=np.eye(2))
        self.assertAlmostEqual(
            KM.flat_orbifold_diameter(orb, grid=16), math.sqrt(2) / 2, places=12
        )

    def test_cubic_torus_diameter(self):
        orb = KM.FlatOrbifold(dim=3, basis=np.eye(3))
        self.assertAlmostEqual(
            KM.flat_orbifold_diameter(orb, grid=8), math.sqrt(3) / 2, places=12
        )

    def test_fixed_points_at_distance_zero(self):
        orb = KM.FlatOrbifold(dim=2, basis=np.eye(2))
        self.assertEqual(KM.flat_orbifold_distance(orb, (0.5, 0.5), (-0.5, -0.5)), 0.0)


class SegmentTest(unittest.TestCase):
    def test_distance(self):
        seg = KM.SegmentSpace(1.0)
        self.assertAlmostEqual(seg.distance(0.2, 0.9), 0.7, places=14)
        with self.assertRaises(ValueError):
            seg.distance(-0.1, 0.5)
        with self.assertRaises(ValueError):
            KM.SegmentSpace(0.0)

    def test_gh_upper_bound(self):
        rng = random.Random(23)
        pts = sorted(rng.uniform(0, 1) for _ in range(8))
        d = np.abs(np.subtract.outer(pts, pts))
        self.assertEqual(KM.gh_upper_bound(d, d), 0.0)
        delta = 0.125
        scaled = (1 + delta) * d
        self.assertAlmostEqual(
            KM.gh_upper_bound(d, scaled), 0.5 * delta * d.max(), places=14
        )
        with self.assertRaises(ValueError):
            KM.gh_upper_bound(d, d[:4, :4])

    def test_segment_fit_exact_segment(self):
        pts = np.linspace(0.0, 2.0, 12)
        d = np.abs(np.subtract.outer(pts, pts))
        summary = KM.MetricSummary(
            diameter=2.0,
            total_volume=1.0,
            landmark_ids=np.arange(12),
            distances=d,
            unit_diameter_scale=0.5,
        )
        length, deviation = KM.segment_fit(summary)
        self.assertAlmostEqual(length, 1.0, places=12)
        self.assertLess(deviation, 1e-12)



class MetricSummaryValidationTest(unittest.TestCase):
    def test_rejects_bad_matrices(self):
        ids = np.arange(3)
        good = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
        KM.MetricSummary(3.0, 1.0, ids, good, 1 / 3.0)
        with self.assertRaises(ValueError):
            KM.MetricSummary(3.0, 1.0, ids, good[:2], 1 / 3.0)
        with self.assertRaises(ValueError):
            bad = good.copy()
            bad[0, 1] = 5.0
            KM.MetricSummary(3.0, 1.0, ids, bad, 1 / 3.0)
        with self.assertRaises(ValueError):
            bad = good.copy()
            bad[1, 1] = 1.0
            KM.MetricSummary(3.0, 1.0, ids, bad, 1 / 3.0)

    def test_to_dict_round_trip_fields(self):
        ids = np.arange(2)
        d = np.array([[0.0, 1.5], [1.5, 0.0]])
        s = KM.MetricSummary(1.5, 2.0, ids, d, 1 / 1.5)
        out = s.to_dict()
        self.assertEqual(out["landmark_count"], 2)
        self.assertEqual(out["distances"][0][1], 1.5)


if __name__ == "__main__":
    unittest.main()
