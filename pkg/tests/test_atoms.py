import pytest
import os
import sys
import logging
import numpy as np

# Add the src directory to the path so we can import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

from src.atoms import (
    build_system,
    cache_path,
    caratheodory_bound,
    enumerate_pure,
    load_or_build,
    load_system,
    make_certificate,
    restrict_to_permutations,
    vec,
    verify_certificate,
)
from src.channel import InclusionCertificate, bec, bsc, compose, identity, validate
from src.errors import (
    CacheFormatError,
    IndexOutOfRangeError,
    NotDoublyStochasticError,
    ShapeMismatchError,
    SizeLimitError,
)
from src.instances import random_channel, random_doubly_stochastic


@pytest.fixture
def rectangular_system():
    rng = np.random.default_rng(4)
    return build_system(random_channel(2, 3, rng), random_channel(2, 2, rng))


class TestEnumeration:
    """Test suite for pure channel enumeration"""

    def test_counts(self):
        assert len(enumerate_pure(2, 2)) == 4
        assert len(enumerate_pure(1, 5)) == 5
        assert len(enumerate_pure(3, 2)) == 8

    def test_lexicographic_order(self):
        maps = [pure.mapping for pure in enumerate_pure(3, 2)]
        assert maps[0] == (0, 0, 0)
        assert maps[1] == (0, 0, 1)
        assert maps[-1] == (1, 1, 1)

    def test_cap(self):
        with pytest.raises(SizeLimitError):
            enumerate_pure(5, 5, cap=100)

    def test_vec_stacks_columns(self):
        assert np.array_equal(vec([[1, 2], [3, 4]]), [1, 3, 2, 4])


class TestBuildSystem:
    """Test suite for building the measurement system"""

    def test_bsc_sizes(self):
        system = build_system(bsc(0.1), bsc(0.1))
        assert system.p == 4
        assert system.atom_count == 16
        assert system.columns == 16

    def test_columns_are_processed_channels(self, rectangular_system):
        system = rectangular_system
        for alpha in (0, 5, system.atom_count - 1):
            r, t = system.pair(alpha)
            expected = vec(r.dense() @ system.k1.p @ t.dense())
            assert np.allclose(system.A[:, alpha], expected)

    def test_atom_index_layout(self, rectangular_system):
        system = rectangular_system
        t_count = system.t_maps.shape[0]
        r, t = system.pair(2 * t_count + 3)
        assert r.mapping == tuple(system.r_maps[2])
        assert t.mapping == tuple(system.t_maps[3])

    def test_column_sums(self, rectangular_system):
        assert np.allclose(rectangular_system.A.sum(axis=0), rectangular_system.n2)

    def test_target_is_vec_of_k2(self, rectangular_system):
        assert np.allclose(rectangular_system.h, vec(rectangular_system.k2.p))

    def test_identity_atom_present(self):
        k = bsc(0.2)
        system = build_system(k, k)
        # R = T = identity maps (0, 1) are map number 1 of 4
        assert np.allclose(system.A[:, 1 * 4 + 1], system.h)

    def test_pair_out_of_range(self, rectangular_system):
        with pytest.raises(IndexOutOfRangeError):
            rectangular_system.pair(rectangular_system.atom_count)

    def test_cap(self):
        with pytest.raises(SizeLimitError):
            build_system(identity(4), identity(4), cap=1000)

    def test_arrays_read_only(self, rectangular_system):
        with pytest.raises(ValueError):
            rectangular_system.A[0, 0] = 1.0


class TestDedup:
    """Test suite for duplicate-column removal"""

    def test_dedup_keeps_first_occurrences(self):
        system = build_system(bsc(0.1), bsc(0.1), dedup=True)
        assert system.columns < system.atom_count
        assert np.all(np.diff(system.atom_ids) > 0)
        assert system.atom_ids[0] == 0

    def test_dedup_map_points_at_equal_column(self):
        full = build_system(bec(0.2), bsc(0.1))
        deduped = build_system(bec(0.2), bsc(0.1), dedup=True)
        for alpha in range(full.atom_count):
            assert np.allclose(deduped.A[:, deduped.dedup_map[alpha]], full.A[:, alpha])

    def test_columns_unique(self):
        system = build_system(bsc(0.1), bsc(0.1), dedup=True)
        assert np.unique(np.round(system.A.T, 12), axis=0).shape[0] == system.columns

    def test_shuffled_preserves_atoms(self):
        system = build_system(bec(0.2), bsc(0.1), dedup=True)
        shuffled = system.shuffled(3)
        assert sorted(shuffled.atom_ids) == sorted(system.atom_ids)
        for c in range(shuffled.columns):
            r, t = shuffled.column_pair(c)
            assert np.allclose(shuffled.A[:, c], vec(r.dense() @ system.k1.p @ t.dense()))
        for alpha in range(system.atom_count):
            assert np.allclose(shuffled.A[:, shuffled.dedup_map[alpha]], system.A[:, system.dedup_map[alpha]])


class TestPermutationAtoms:
    """Test suite for permutation-only atoms"""

    def test_counts(self):
        rng = np.random.default_rng(1)
        k3 = random_doubly_stochastic(3, rng)
        assert restrict_to_permutations(build_system(k3, k3)).atom_count == 36
        k2 = bsc(0.3)
        assert restrict_to_permutations(build_system(k2, k2)).atom_count == 4

    def test_flag(self):
        system = restrict_to_permutations(build_system(bsc(0.1), bsc(0.2)))
        assert system.permutations_only
        assert all(system.pair(a)[0].is_permutation for a in range(system.atom_count))

    def test_requires_doubly_stochastic(self):
        k = validate([[0.5, 0.5], [0.0, 1.0]])
        with pytest.raises(NotDoublyStochasticError):
            restrict_to_permutations(build_system(k, bsc(0.1)))


class TestCaratheodory:
    """Test suite for the support bound"""

    def test_values(self):
        assert caratheodory_bound(3, 3) == 7
        assert caratheodory_bound(3, 3, doubly_stochastic=True) == 5
        assert caratheodory_bound(4, 3) == 9

    def test_doubly_stochastic_needs_square(self):
        with pytest.raises(ShapeMismatchError):
            caratheodory_bound(4, 3, doubly_stochastic=True)


class TestCertificates:
    """Test suite for certificate checks against a system"""

    @pytest.fixture
    def planted(self):
        k1 = validate([[0.6, 0.3, 0.1], [0.2, 0.2, 0.6]])
        system = build_system(k1, bsc(0.5))
        weights = np.array([0.3, 0.7])
        columns = [7, 29]
        h = system.A[:, columns] @ weights
        k2 = validate(h.reshape(2, 2).T)
        return build_system(k1, k2), columns, weights

    def test_planted_certificate_verifies(self, planted):
        system, columns, weights = planted
        cert = make_certificate(system, columns, weights)
        assert cert.residual_inf < 1e-12
        assert verify_certificate(system, cert, 1e-8)

    def test_pairs_reproduce_target(self, planted):
        system, columns, weights = planted
        cert = make_certificate(system, columns, weights)
        total = sum(w * compose(r, system.k1, t).p for w, (r, t) in zip(cert.weights, cert.pairs))
        assert np.allclose(total, system.k2.p)

    def test_scaled_weights_rejected(self, planted):
        system, columns, weights = planted
        cert = InclusionCertificate(tuple(columns), weights * 0.5)
        assert not verify_certificate(system, cert, 1e-8)

    def test_index_out_of_range(self, planted):
        system, _, _ = planted
        with pytest.raises(IndexOutOfRangeError):
            verify_certificate(system, InclusionCertificate((system.columns,), [1.0]), 1e-8)


class TestCache:
    """Test suite for the atom cache"""

    def test_build_then_load(self, tmp_path):
        k1, k2 = bec(0.2), bsc(0.1)
        built = load_or_build(k1, k2, dedup=True, cache_dir=tmp_path)
        path = cache_path(tmp_path, k1, k2, True, False)
        assert path.exists()
        loaded = load_system(path, k1, k2)
        assert np.array_equal(loaded.A, built.A)
        assert np.array_equal(loaded.dedup_map, built.dedup_map)
        assert loaded.dedup

    def test_permutation_cache(self, tmp_path):
        system = load_or_build(bsc(0.1), bsc(0.2), permutations_only=True, cache_dir=tmp_path)
        again = load_or_build(bsc(0.1), bsc(0.2), permutations_only=True, cache_dir=tmp_path)
        assert again.permutations_only
        assert np.array_equal(again.A, system.A)

    def test_wrong_channels(self, tmp_path):
        k1, k2 = bec(0.2), bsc(0.1)
        load_or_build(k1, k2, cache_dir=tmp_path)
        path = cache_path(tmp_path, k1, k2, False, False)
        with pytest.raises(CacheFormatError):
            load_system(path, bec(0.3), k2)

    def test_corrupt_cache_is_rebuilt(self, tmp_path, caplog):
        k1, k2 = bsc(0.1), bsc(0.2)
        path = cache_path(tmp_path, k1, k2, False, False)
        path.write_bytes(b"not an npz file")
        with caplog.at_level(logging.WARNING):
            system = load_or_build(k1, k2, cache_dir=tmp_path)
        assert system.columns == 16
        assert "Ignoring atom cache" in caplog.text
        assert load_system(path, k1, k2).columns == 16
