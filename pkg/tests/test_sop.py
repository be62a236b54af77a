import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powerpool.elempn import PNConfig
from powerpool.matcore import rng_stream
from powerpool.sop import (
    PoolSpec,
    autocorrelation,
    beta_center,
    coord_encoder,
    coordinate_grid,
    default_pivots,
    encode_coordinate,
    linearization_constant,
    relation_descriptor,
)


def pooled(block):
    block = np.asarray(block, dtype=float)
    return block @ block.T / block.shape[1]


class TestKernelLinearization:
    # dual-route identity: the inner product of two pooled matrices must
    # equal the mean squared inner product of their feature columns
    @pytest.mark.parametrize("k,n_a,n_b,seed", [
        (2, 3, 4, 0),
        (5, 7, 7, 1),
        (8, 16, 5, 2),
        (8, 16, 16, 3),
        (3, 1, 16, 4),
    ])
    def test_pooled_inner_product_equals_mean_squared_kernel(self, k, n_a, n_b, seed):
        rng = rng_stream(seed)
        a = rng.standard_normal((k, n_a))
        b = rng.standard_normal((k, n_b))
        lhs = float(np.sum(pooled(a) * pooled(b)))
        gram = a.T @ b
        rhs = float(np.sum(gram**2)) / (n_a * n_b)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1.0)

    def test_holds_after_centering(self):
        rng = rng_stream(9)
        a = beta_center(rng.standard_normal((4, 10)) + 3.0, 1.0)
        b = beta_center(rng.standard_normal((4, 6)) + 3.0, 1.0)
        lhs = float(np.sum(pooled(a) * pooled(b)))
        rhs = float(np.sum((a.T @ b) ** 2)) / (10 * 6)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1.0)


class TestCoordinateEncoder:
    def test_default_pivots_span_and_spacing(self):
        p = default_pivots(32)
        assert p[0] == pytest.approx(-0.2) and p[-1] == pytest.approx(1.2)
        assert np.allclose(np.diff(p), 1.4 / 31)

    def test_linearization_constant_value(self):
        cfg = coord_encoder(32, 0.5)
        h = 1.4 / 31
        assert linearization_constant(cfg) == pytest.approx(
            math.sqrt(2.0 / (math.pi * 0.25)) * h, rel=1e-12
        )

    def test_quadrature_matches_gaussian_kernel(self):
        # pairs straddling the domain midpoint keep the Riemann sum away
        # from the pivot boundary, where truncation would dominate
        cfg = coord_encoder(32, 0.5)
        c = linearization_constant(cfg)
        for delta in np.linspace(0.0, 0.6, 13):
            x, y = 0.5 - delta / 2.0, 0.5 + delta / 2.0
            approx = c * float(encode_coordinate(x, cfg) @ encode_coordinate(y, cfg))
            exact = math.exp(-(delta**2) / (2.0 * 0.25))
            assert abs(approx - exact) <= 0.05 * exact

    def test_encoder_validation(self):
        with pytest.raises(ValueError):
            coord_encoder(1, 0.5)
        with pytest.raises(ValueError):
            coord_encoder(65, 0.5)
        with pytest.raises(ValueError):
            coord_encoder(8, 0.0)
        with pytest.raises(ValueError):
            coord_encoder(8, 0.5, weight=-1.0)

    def test_out_of_range_warns(self):
        cfg = coord_encoder(8, 0.5)
        with pytest.warns(UserWarning):
            encode_coordinate(1.5, cfg)

    def test_response_peak_near_location(self):
        cfg = coord_encoder(32, 0.1)
        resp = encode_coordinate(0.5, cfg)
        assert abs(cfg.pivots[int(np.argmax(resp))] - 0.5) <= 1.4 / 31


class TestBetaCenter:
    def test_zero_is_identity_copy(self):
        block = rng_stream(0).standard_normal((3, 5))
        out = beta_center(block, 0.0)
        assert (out == block).all() and out is not block

    def test_one_removes_mean(self):
        block = rng_stream(1).standard_normal((3, 5)) + 7.0
        out = beta_center(block, 1.0)
        assert np.allclose(out.mean(axis=1), 0.0, atol=1e-12)

    @given(st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=25, deadline=None)
    def test_interpolates_linearly(self, beta):
        block = rng_stream(2).standard_normal((2, 4))
        expected = block - beta * block.mean(axis=1, keepdims=True)
        assert np.allclose(beta_center(block, beta), expected, atol=1e-12)

    def test_range_enforced(self):
        with pytest.raises(ValueError):
            beta_center(np.ones((2, 2)), 1.5)


class TestCoordinateGrid:
    def test_row_major_layout(self):
        grid = coordinate_grid(3, 2)
        assert np.allclose(grid[0], [0.0, 0.5, 1.0, 0.0, 0.5, 1.0])
        assert np.allclose(grid[1], [0.0, 0.0, 0.0, 1.0, 1.0, 1.0])

    def test_degenerate_axis_pins_to_zero(self):
        grid = coordinate_grid(1, 3)
        assert np.allclose(grid[0], 0.0)
        assert np.allclose(grid[1], [0.0, 0.5, 1.0])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            coordinate_grid(0, 3)


class TestAutocorrelation:
    def test_single_column_example(self):
        m = autocorrelation(np.array([[1.0], [2.0]]))
        assert np.allclose(m, [[1.0, 2.0], [2.0, 4.0]], atol=0.0)

    def test_positive_semidefinite(self):
        rng = rng_stream(5)
        m = autocorrelation(rng.standard_normal((6, 20)))
        assert np.linalg.eigvalsh(m).min() >= -1e-12

    def test_coordinate_channels_extend_side(self):
        rng = rng_stream(6)
        block = rng.standard_normal((4, 6))
        spec = PoolSpec(beta=0.0, coord=coord_encoder(8, 0.5, weight=2.0))
        coords = coordinate_grid(3, 2)
        m = autocorrelation(block, spec, coords)
        assert m.shape == (4 + 2 * 8, 4 + 2 * 8)
        # trace covers feature and coordinate channels alike
        assert np.trace(m) > np.trace(autocorrelation(block)) + 1e-9

    def test_centering_leaves_coordinate_channels_alone(self):
        # constant feature columns center to zero, so every surviving
        # entry must come from the appended coordinate rows
        block = np.ones((3, 4))
        spec = PoolSpec(beta=1.0, coord=coord_encoder(4, 0.5))
        coords = coordinate_grid(2, 2)
        m = autocorrelation(block, spec, coords)
        assert np.allclose(m[:3, :], 0.0, atol=1e-12)
        assert np.abs(m[3:, 3:]).max() > 0.1

    def test_weight_scales_coordinate_block_quadratically(self):
        rng = rng_stream(7)
        block = rng.standard_normal((2, 4))
        coords = coordinate_grid(4, 1)
        m1 = autocorrelation(block, PoolSpec(coord=coord_encoder(4, 0.5, 1.0)), coords)
        m3 = autocorrelation(block, PoolSpec(coord=coord_encoder(4, 0.5, 3.0)), coords)
        assert np.allclose(m3[2:, 2:], 9.0 * m1[2:, 2:], atol=1e-12)
        assert np.allclose(m3[:2, 2:], 3.0 * m1[:2, 2:], atol=1e-12)

    def test_coords_shape_enforced(self):
        spec = PoolSpec(coord=coord_encoder(4, 0.5))
        with pytest.raises(ValueError):
            autocorrelation(np.ones((2, 3)), spec, np.zeros((2, 4)))

    def test_coords_without_encoder_rejected(self):
        with pytest.raises(ValueError):
            autocorrelation(np.ones((2, 3)), PoolSpec(), np.zeros((2, 3)))

    def test_encoder_without_coords_rejected(self):
        with pytest.raises(ValueError):
            autocorrelation(np.ones((2, 3)), PoolSpec(coord=coord_encoder(4, 0.5)))


class TestRelationDescriptor:
    def test_single_support_variants_coincide(self):
        # rectified features keep the pooled entries inside the maxexp domain
        rng = rng_stream(8)
        support = np.abs(rng.standard_normal((5, 9)))
        query = np.abs(rng.standard_normal((5, 9)))
        pn = PNConfig("maxexp", 3.0, trace_normalize=True)
        sa, qa = relation_descriptor("average_features", [support], query, pn)
        sb, qb = relation_descriptor("average_pooled", [support], query, pn)
        assert np.allclose(sa, sb, atol=1e-14)
        assert np.allclose(qa, qb, atol=1e-14)

    def test_average_features_pools_the_mean_block(self):
        rng = rng_stream(9)
        supports = [rng.standard_normal((3, 6)) for _ in range(4)]
        query = rng.standard_normal((3, 6))
        pn = PNConfig("identity")
        sd, qd = relation_descriptor("average_features", supports, query, pn)
        mean_block = np.mean(supports, axis=0)
        assert np.allclose(sd, pooled(mean_block), atol=1e-12)
        assert np.allclose(qd, pooled(query), atol=1e-12)

    def test_average_pooled_averages_descriptors(self):
        rng = rng_stream(10)
        supports = [np.abs(rng.standard_normal((3, 4 + j))) for j in range(3)]
        query = np.abs(rng.standard_normal((3, 5)))
        pn = PNConfig("gamma", 0.5)
        sd, _ = relation_descriptor("average_pooled", supports, query, pn)
        from powerpool.elempn import pn_forward

        expected = np.mean([pn_forward(pooled(s), pn) for s in supports], axis=0)
        assert np.allclose(sd, expected, atol=1e-12)

    def test_average_features_needs_equal_shapes(self):
        blocks = [np.ones((3, 4)), np.ones((3, 5))]
        with pytest.raises(ValueError):
            relation_descriptor("average_features", blocks, np.ones((3, 4)), PNConfig("identity"))

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError):
            relation_descriptor("median", [np.ones((2, 2))], np.ones((2, 2)), PNConfig("identity"))

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError):
            relation_descriptor(
                "average_pooled", [np.ones((2, 3))], np.ones((4, 3)), PNConfig("identity")
            )
