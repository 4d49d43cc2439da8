import pytest
import os
import sys
import numpy as np

# Add the src directory to the path so we can import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

from src.channel import (
    Channel,
    InclusionCertificate,
    ProbVector,
    PureChannel,
    bec,
    bsc,
    certificate_residual,
    circ_conv,
    compose,
    identity,
    is_circulant,
    is_doubly_stochastic,
    is_symmetric_dmc,
    kron_lift_certificate,
    kron_power,
    uniform,
    validate,
)
from src.errors import (
    ChannelValidationError,
    EmptyMatrixError,
    NegativeEntryError,
    OutOfRangeError,
    RowSumError,
    ShapeMismatchError,
    SizeOverflowError,
)


class TestValidate:
    """Test suite for channel validation"""

    def test_valid_matrix(self):
        k = validate([[0.5, 0.5], [0.2, 0.8]])
        assert k.shape == (2, 2)
        assert np.allclose(k.p.sum(axis=1), 1.0)

    def test_renormalizes_within_tolerance(self):
        k = validate([[0.5, 0.5 + 5e-10], [0.0, 1.0]])
        assert k.p.sum(axis=1)[0] == pytest.approx(1.0, abs=1e-15)

    def test_tiny_negative_clipped(self):
        k = validate([[1.0 + 5e-10, -5e-10], [0.0, 1.0]])
        assert k.p.min() >= 0.0

    def test_negative_entry(self):
        with pytest.raises(NegativeEntryError):
            validate([[1.1, -0.1], [0.0, 1.0]])

    def test_bad_row_sum(self):
        with pytest.raises(RowSumError):
            validate([[0.5, 0.4], [0.0, 1.0]])

    def test_empty(self):
        with pytest.raises(EmptyMatrixError):
            validate([])

    def test_wrong_dimension(self):
        with pytest.raises(ShapeMismatchError):
            validate([0.5, 0.5])

    def test_non_finite(self):
        with pytest.raises(ChannelValidationError):
            validate([[np.nan, 1.0]])

    def test_channel_is_immutable(self):
        k = bsc(0.1)
        with pytest.raises(ValueError):
            k.p[0, 0] = 0.5


class TestPureChannel:
    """Test suite for pure channels"""

    def test_dense(self):
        pure = PureChannel(3, 2, (0, 1, 1))
        assert np.array_equal(pure.dense(), [[1, 0], [0, 1], [0, 1]])

    def test_from_dense_round_trip(self):
        pure = PureChannel.from_dense([[0, 1, 0], [1, 0, 0]])
        assert pure.mapping == (1, 0)
        assert pure.shape == (2, 3)

    def test_from_dense_rejects_fractional(self):
        with pytest.raises(ChannelValidationError):
            PureChannel.from_dense([[0.5, 0.5]])

    def test_mapping_out_of_range(self):
        with pytest.raises(ShapeMismatchError):
            PureChannel(2, 2, (0, 2))

    def test_is_permutation(self):
        assert PureChannel(3, 3, (2, 0, 1)).is_permutation
        assert not PureChannel(3, 3, (0, 0, 1)).is_permutation
        assert not PureChannel(2, 3, (0, 1)).is_permutation

    def test_kron_matches_dense_kron(self):
        a = PureChannel(2, 3, (2, 0))
        b = PureChannel(2, 2, (1, 1))
        assert np.array_equal(a.kron(b).dense(), np.kron(a.dense(), b.dense()))

    def test_identity(self):
        assert np.array_equal(PureChannel.identity(3).dense(), np.eye(3))


class TestProbVector:
    """Test suite for probability vectors"""

    def test_valid(self):
        assert ProbVector([0.25, 0.75]).dim == 2

    def test_rejects_bad_sum(self):
        with pytest.raises(RowSumError):
            ProbVector([0.2, 0.2])

    def test_rejects_negative(self):
        with pytest.raises(NegativeEntryError):
            ProbVector([1.5, -0.5])

    def test_normalized(self):
        v = ProbVector.normalized([2.0, 2.0, -1e-14])
        assert np.allclose(v.w, [0.5, 0.5, 0.0])


class TestPredicates:
    """Test suite for structural predicates"""

    def test_doubly_stochastic(self):
        assert is_doubly_stochastic(bsc(0.3))
        assert not is_doubly_stochastic(validate([[1.0, 0.0], [1.0, 0.0]]))
        assert not is_doubly_stochastic(bec(0.2))

    def test_circulant(self):
        assert is_circulant(validate(np.array([[1, 2, 3], [3, 1, 2], [2, 3, 1]]) / 6))
        assert not is_circulant(validate(np.array([[1, 2, 3], [2, 3, 1], [3, 1, 2]]) / 6))

    def test_symmetric(self):
        assert is_symmetric_dmc(validate(np.array([[1, 2, 3], [2, 3, 1], [3, 1, 2]]) / 6))
        assert is_symmetric_dmc(bsc(0.2))
        assert not is_symmetric_dmc(bec(0.2))


class TestAlgebra:
    """Test suite for composition and Kronecker powers"""

    def test_compose_identity(self):
        k = validate([[0.7, 0.3], [0.4, 0.6]])
        assert compose(identity(2), k, identity(2)).allclose(k)

    def test_compose_with_pure(self):
        k = validate([[0.7, 0.3], [0.4, 0.6]])
        swapped = compose(PureChannel(2, 2, (1, 0)), k, identity(2))
        assert np.allclose(swapped.p, [[0.4, 0.6], [0.7, 0.3]])

    def test_compose_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            compose(identity(3), bsc(0.1), identity(2))

    def test_kron_power_convention(self):
        p, q = 0.1, 0.9
        expected = [[q * q, q * p, p * q, p * p],
                    [q * p, q * q, p * p, p * q],
                    [p * q, p * p, q * q, q * p],
                    [p * p, p * q, q * p, q * q]]
        assert np.allclose(kron_power(bsc(0.1), 2).p, expected)

    def test_kron_power_one_is_identity_op(self):
        k = bsc(0.2)
        assert kron_power(k, 1) is k

    def test_kron_power_overflow(self):
        with pytest.raises(SizeOverflowError):
            kron_power(uniform(4, 4), 6, max_entries=1000)

    def test_kron_power_order(self):
        with pytest.raises(OutOfRangeError):
            kron_power(bsc(0.1), 0)

    def test_circ_conv(self):
        v1 = ProbVector([0.5, 0.5, 0.0])
        x = ProbVector([0.0, 1.0, 0.0])
        assert np.allclose(circ_conv(v1, x).w, [0.0, 0.5, 0.5])


class TestCertificates:
    """Test suite for certificates and their Kronecker lifting"""

    @pytest.fixture
    def planted(self):
        k1 = validate([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
        r1, t1 = identity(2), PureChannel(3, 2, (0, 1, 1))
        r2, t2 = PureChannel(2, 2, (1, 0)), PureChannel(3, 2, (1, 0, 0))
        k2 = validate(0.4 * (k1.p @ t1.dense()) + 0.6 * (r2.dense() @ k1.p @ t2.dense()))
        cert = InclusionCertificate((0, 1), [0.4, 0.6], pairs=((r1, t1), (r2, t2)))
        return k1, k2, cert

    def test_residual_zero_for_exact_certificate(self, planted):
        k1, k2, cert = planted
        assert certificate_residual(cert, k1, k2) < 1e-12

    def test_residual_detects_wrong_weights(self, planted):
        k1, k2, cert = planted
        wrong = InclusionCertificate(cert.atom_indices, [0.6, 0.4], pairs=cert.pairs)
        assert certificate_residual(wrong, k1, k2) > 1e-3

    def test_mismatched_lengths(self):
        with pytest.raises(ShapeMismatchError):
            InclusionCertificate((0, 1), [1.0])

    def test_residual_needs_pairs(self, planted):
        k1, k2, _ = planted
        with pytest.raises(ValueError):
            certificate_residual(InclusionCertificate((0,), [1.0]), k1, k2)

    def test_lift_order_two(self, planted):
        k1, k2, cert = planted
        lifted = kron_lift_certificate(cert, 2, k1, k2)
        assert lifted.beta == 4
        assert lifted.weights.sum() == pytest.approx(1.0)
        assert lifted.weights[1] == pytest.approx(0.4 * 0.6)
        assert lifted.residual_inf < 1e-12

    def test_lift_term_order_is_row_major(self, planted):
        _, _, cert = planted
        lifted = kron_lift_certificate(cert, 2)
        r_expected = np.kron(cert.pairs[0][0].p, cert.pairs[1][0].dense())
        assert np.allclose(lifted.pairs[1][0].p, r_expected)

    def test_lift_order_one(self, planted):
        k1, k2, cert = planted
        lifted = kron_lift_certificate(cert, 1, k1, k2)
        assert lifted.beta == cert.beta

    def test_lift_term_limit(self, planted):
        _, _, cert = planted
        with pytest.raises(SizeOverflowError):
            kron_lift_certificate(cert, 5, max_terms=10)


class TestNamedChannels:
    """Test suite for named channel constructors"""

    def test_bsc(self):
        assert np.allclose(bsc(0.25).p, [[0.75, 0.25], [0.25, 0.75]])

    def test_bec(self):
        assert np.allclose(bec(0.3).p, [[0.7, 0.3, 0.0], [0.0, 0.3, 0.7]])

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeError):
            bsc(1.5)
        with pytest.raises(OutOfRangeError):
            bec(-0.1)

    def test_uniform(self):
        assert np.allclose(uniform(2, 4).p, 0.25)
