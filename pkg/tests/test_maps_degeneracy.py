"""Polynomial maps, Cauchy-Binet rank profiles, fibre probes, chart potentials."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qposlab import (
    HermitianFormField,
    ModelError,
    PipelineFailure,
    PotentialField,
    TorusModel,
    combine_normal_potentials,
    degeneracy_locus_scan,
    fd_complex_hessian,
    fibre_dimension_estimate,
    local_potential_build,
    pullback_form,
    sigma_j_minors,
)
from qposlab.maps_degeneracy import (
    ChartData,
    PolyMap,
    numeric_rank,
    sample_box,
    sigma_profile,
)

MAP_TEXT = """
# f(z1, z2) = (z1, z1 z2); rank drops exactly on z1 = 0
0 1 0 1 0
1 1 1 1 0
"""


def example_map():
    return PolyMap.from_text(MAP_TEXT, n=2, m=2)


def esym(values, j):
    return sum(math.prod(c) for c in itertools.combinations(values, j))


class TestPolyMap:
    def test_from_text_matches_direct_tables(self):
        pm = example_map()
        direct = PolyMap(n=2, m=2, components=({(1, 0): 1.0}, {(1, 1): 1.0}))
        assert pm.components == direct.components

    def test_evaluate_known_point(self):
        pm = example_map()
        assert np.allclose(pm.evaluate([2.0, 3.0]), [2.0, 6.0])

    def test_evaluate_batched(self):
        pm = example_map()
        pts = np.array([[[1, 1], [2, 3]], [[0, 5], [1j, 1]]], dtype=complex)
        vals = pm.evaluate(pts)
        assert vals.shape == (2, 2, 2)
        assert vals[0, 1, 1] == 6.0
        assert vals[1, 1, 0] == 1j

    def test_jacobian_analytic(self):
        pm = example_map()
        z = np.array([2.0 + 1j, -0.5])
        jac = pm.jacobian(z)
        expect = np.array([[1.0, 0.0], [z[1], z[0]]])
        assert np.max(np.abs(jac - expect)) == 0.0

    def test_zero_coefficients_dropped(self):
        pm = PolyMap(n=1, m=1, components=({(1,): 0.0, (2,): 1.0},))
        assert pm.components == ({(2,): 1.0},)

    def test_repeated_monomials_accumulate(self):
        pm = PolyMap.from_text("0 1 2 0\n0 1 3 0", n=1, m=1)
        assert pm.components == ({(1,): 5.0},)

    def test_parse_errors_name_the_line(self):
        with pytest.raises(ModelError, match="line 1"):
            PolyMap.from_text("0 1 0 1", n=2, m=2)  # one field short
        with pytest.raises(ModelError, match="line 2"):
            PolyMap.from_text("0 1 0 1 0\n7 1 0 1 0", n=2, m=2)  # bad component
        with pytest.raises(ModelError):
            PolyMap.from_text("0 -1 0 1 0", n=2, m=2)  # negative exponent

    def test_dimension_limits(self):
        with pytest.raises(ModelError):
            PolyMap(n=5, m=1, components=({},) * 1)
        with pytest.raises(ModelError):
            PolyMap(n=1, m=7, components=({},) * 7)


class TestSigmaProfile:
    def test_frozen_integer_point(self):
        pm = example_map()
        jac = pm.jacobian(np.array([2.0, 3.0]))  # [[1, 0], [3, 2]]
        assert sigma_j_minors(jac, 1) == 14.0
        assert sigma_j_minors(jac, 2) == 4.0
        assert list(sigma_profile(jac)) == [14.0, 4.0]

    def test_pullback_form_is_gram_matrix(self):
        pm = example_map()
        g = pullback_form(pm, np.array([1.0, 3.0]))
        expect = np.array([[10.0, 3.0], [3.0, 1.0]])
        assert np.max(np.abs(g - expect)) == 0.0

    def test_cauchy_binet_against_eigenvalues(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            m, n = rng.integers(1, 5), rng.integers(1, 5)
            jac = rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))
            eigs = np.linalg.eigvalsh(jac.conj().T @ jac)
            for j in range(1, min(m, n) + 1):
                got = float(sigma_j_minors(jac, j))
                expect = esym(eigs, j)
                assert abs(got - expect) <= 1e-10 * max(1.0, abs(expect))

    def test_sigma_index_validated(self):
        jac = np.eye(2)
        with pytest.raises(ModelError):
            sigma_j_minors(jac, 0)
        with pytest.raises(ModelError):
            sigma_j_minors(jac, 3)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_sigma1_is_squared_frobenius(self, seed):
        rng = np.random.default_rng(seed)
        jac = rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))
        assert float(sigma_j_minors(jac, 1)) == pytest.approx(
            float(np.sum(np.abs(jac) ** 2)), rel=1e-12
        )


class TestNumericRank:
    def test_full_and_deficient(self):
        assert int(numeric_rank(np.array([[1.0, 0.0], [3.0, 2.0]]))) == 2
        assert int(numeric_rank(np.array([[1.0, 0.0], [0.0, 0.0]]))) == 1
        assert int(numeric_rank(np.zeros((2, 2)))) == 0

    def test_batched(self):
        pm = example_map()
        pts = np.array([[0.0, 5.0], [2.0, 3.0]])
        ranks = numeric_rank(pm.jacobian(pts))
        assert list(ranks) == [1, 2]


class TestSampleBox:
    def test_shape_and_endpoints(self):
        pts = sample_box([(-1, 1)] * 4, per_axis=5)
        assert pts.shape == (625, 2)
        assert np.min(pts.real) == -1.0 and np.max(pts.real) == 1.0
        assert np.any(pts[:, 0] == 0.0)  # odd per_axis hits the centre

    def test_validation(self):
        with pytest.raises(ModelError):
            sample_box([(-1, 1)] * 3, per_axis=5)
        with pytest.raises(ModelError):
            sample_box([(-1, 1)] * 2, per_axis=1)


class TestDegeneracyScan:
    def test_flags_exactly_the_rank_drop_slice(self):
        pm = example_map()
        pts = sample_box([(-1, 1)] * 4, per_axis=9)
        scan = degeneracy_locus_scan(pm, q=0, points=pts)
        flagged = scan.flagged_points()
        assert flagged.shape[0] == 81
        assert np.all(flagged[:, 0] == 0.0)
        missed = pts[~scan.flagged]
        assert np.all(np.abs(missed[:, 0]) > 0.0)

    def test_weaker_count_unflagged(self):
        pm = example_map()
        pts = sample_box([(-1, 1)] * 4, per_axis=9)
        scan = degeneracy_locus_scan(pm, q=1, points=pts)
        assert int(np.count_nonzero(scan.flagged)) == 0

    def test_q_validated(self):
        pm = example_map()
        with pytest.raises(ModelError):
            degeneracy_locus_scan(pm, q=2, points=np.zeros((3, 2)))


class TestFibreDimension:
    def test_positive_dimensional_fibre(self):
        pm = example_map()
        assert fibre_dimension_estimate(pm, (0.0, 0.0)) == 1

    def test_zero_dimensional_fibre(self):
        pm = example_map()
        assert fibre_dimension_estimate(pm, (2.0, 6.0)) == 0

    def test_empty_fibre(self):
        pm = PolyMap(n=1, m=2, components=({(1,): 1.0}, {(1,): 1.0}))  # image is the diagonal
        assert fibre_dimension_estimate(pm, (1.0, 2.0)) == -1

    def test_target_shape_checked(self):
        with pytest.raises(ModelError):
            fibre_dimension_estimate(example_map(), (0.0,))


class TestLocalPotential:
    def test_partition_of_unity_enforced(self):
        t = TorusModel(1, 16)
        chart = ChartData(weight=np.full((1, 1), 0.5), components=np.zeros((1, 1, 1)))
        with pytest.raises(ModelError, match="partition"):
            local_potential_build(t, [chart])

    def test_negative_weight_rejected(self):
        t = TorusModel(1, 16)
        chart = ChartData(weight=np.full((1, 1), -0.2), components=np.zeros((1, 1, 1)))
        with pytest.raises(ModelError):
            local_potential_build(t, [chart])

    def test_single_chart_absolute_square(self):
        t = TorusModel(1, 64)
        (z,) = t.complex_coordinates(centered=True)
        chart = ChartData(weight=np.ones((1, 1)), components=z[..., None])
        phi = local_potential_build(t, [chart])
        assert np.max(np.abs(phi.values - (z.real**2 + z.imag**2))) == 0.0

    def test_chart_hessian_near_centre(self):
        # |z|^2 in centred coordinates: curvature 1 at the centre.  Only local
        # stencils apply: the coordinate's gradient jump at the wrap seam is a
        # delta in the distributional Hessian, which truncated Fourier modes
        # smear over the whole grid; finite differences away from the seam
        # never touch it.
        t = TorusModel(1, 64)
        (z,) = t.complex_coordinates(centered=True)
        chart = ChartData(weight=np.ones((1, 1)), components=z[..., None])
        phi = local_potential_build(t, [chart])
        fd4 = fd_complex_hessian(phi, order=4).values[0, 0, 0, 0]
        assert fd4.real == pytest.approx(1.0, abs=1e-4)
        fd2 = fd_complex_hessian(phi, order=2).values[0, 0, 0, 0]
        assert fd2.real == pytest.approx(1.0, abs=1e-2)

    def test_two_charts_complementary_bumps(self):
        t = TorusModel(1, 32)
        x = t.real_coordinates()[0]
        w1 = 0.5 * (1.0 + np.cos(2 * np.pi * x)) * np.ones((1, 32))
        charts = [
            ChartData(weight=w1, components=np.ones((32, 32, 1))),
            ChartData(weight=1.0 - w1, components=2.0 * np.ones((32, 32, 1))),
        ]
        phi = local_potential_build(t, charts)
        expect = w1 * 1.0 + (1.0 - w1) * 4.0
        assert np.max(np.abs(phi.values - expect)) < 1e-14


class TestCombineLadder:
    @staticmethod
    def spike_setup():
        # positive spike of height 1/64 at the origin: its fourth-order
        # Hessian at the origin is exactly -5 (all-dyadic stencil arithmetic)
        t = TorusModel(1, 16)
        base = HermitianFormField.from_constant(t, np.eye(1))
        vals = np.zeros((16, 16))
        vals[0, 0] = 1.0 / 64.0
        previous = PotentialField(t, vals)
        phi = PotentialField(t, np.zeros((1, 1)))
        return t, base, phi, previous

    def test_spike_hessian_value(self):
        t, base, phi, previous = self.spike_setup()
        h = fd_complex_hessian(previous, order=4).values[0, 0, 0, 0]
        assert h.real == -5.0

    def test_ladder_stops_at_first_certifying_weight(self):
        t, base, phi, previous = self.spike_setup()
        res = combine_normal_potentials(base, phi, previous, [(0, 0)], q=0)
        assert res.epsilon == 0.125  # margin 1 - 5 eps first positive here
        assert res.halvings == 3
        assert res.min_margin == pytest.approx(0.375, abs=1e-14)
        assert res.worst_point == (0, 0)
        assert np.max(np.abs(res.potential.values - 0.125 * previous.values)) == 0.0

    def test_exhaustion_raises_with_location(self):
        t, base, phi, previous = self.spike_setup()
        with pytest.raises(PipelineFailure) as exc:
            combine_normal_potentials(
                base, phi, previous, [(0, 0)], q=0, margin=2.0, max_halvings=5
            )
        assert exc.value.region == "stratum-combination"
        assert exc.value.worst_point == (0, 0)

    def test_checkpoint_wraparound(self):
        t, base, phi, previous = self.spike_setup()
        res = combine_normal_potentials(base, phi, previous, [(16, 16)], q=0)
        assert res.epsilon == 0.125  # indices reduce mod the grid shape

    def test_validation(self):
        t, base, phi, previous = self.spike_setup()
        with pytest.raises(ModelError):
            combine_normal_potentials(base, phi, previous, [], q=0)
        with pytest.raises(ModelError):
            combine_normal_potentials(base, phi, previous, [(0, 0)], q=1)
