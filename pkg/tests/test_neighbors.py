"""Neighbor engine: strategies, padding, canonical form, batching."""

import numpy as np
import pytest

from nnpkit import (
    Box,
    CapacityError,
    NeighborSpec,
    ValidationError,
    as_full_list,
    as_half_list,
    build_neighbor_list,
    build_system,
    build_with_auto_capacity,
    canonicalize,
    capacity_heuristic,
    minimum_image,
)

from conftest import oracle_pair_set, random_system


def collinear_system():
    return build_system([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]], [1, 1, 1])


class TestSpecValidation:
    def test_cutoff_window(self):
        with pytest.raises(ValidationError):
            NeighborSpec(cutoff_upper=1.0, cutoff_lower=1.0, capacity=4)
        with pytest.raises(ValidationError):
            NeighborSpec(cutoff_upper=1.0, capacity=0)
        with pytest.raises(ValidationError):
            NeighborSpec(cutoff_upper=1.0, capacity=4, strategy="magic")

    def test_capacity_heuristic(self):
        assert capacity_heuristic(100, 64) == 6400


class TestBasics:
    def test_collinear_pairs(self):
        nlist = build_neighbor_list(
            collinear_system(), NeighborSpec(cutoff_upper=1.5, capacity=8)
        )
        pairs, dists = canonicalize(nlist)
        assert pairs.tolist() == [[0, 1], [1, 2]]
        assert np.allclose(dists, 1.0)

    def test_overflow_reports_required(self):
        with pytest.raises(CapacityError) as err:
            build_neighbor_list(
                collinear_system(), NeighborSpec(cutoff_upper=1.5, capacity=1)
            )
        assert err.value.required == 2
        assert err.value.capacity == 1

    def test_auto_capacity_retry(self):
        nlist = build_with_auto_capacity(
            collinear_system(), NeighborSpec(cutoff_upper=1.5, capacity=1)
        )
        assert nlist.count == 2

    def test_minimum_image_pair(self):
        system = build_system(
            [[0.1, 0, 0], [9.9, 0, 0]], [1, 1], box=Box.cubic(10.0)
        )
        nlist = build_neighbor_list(system, NeighborSpec(cutoff_upper=0.5, capacity=4))
        pairs, dists = canonicalize(nlist)
        assert pairs.tolist() == [[0, 1]]
        assert dists[0] == pytest.approx(0.2, abs=1e-12)

    def test_batch_masking(self):
        positions = [[0.0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [0.3, 0, 0]]
        system = build_system(positions, [1, 1, 1, 1], batch=[0, 0, 1, 1])
        nlist = build_neighbor_list(system, NeighborSpec(cutoff_upper=1.0, capacity=16))
        pairs, _ = canonicalize(nlist)
        assert pairs.tolist() == [[0, 1], [2, 3]]

    def test_cutoff_too_large_for_box(self):
        system = build_system([[0.0, 0, 0]], [1], box=Box.cubic(4.0))
        with pytest.raises(ValidationError, match="cutoff too large"):
            build_neighbor_list(system, NeighborSpec(cutoff_upper=2.5, capacity=4))

    def test_sentinels_fill_tail(self):
        nlist = build_neighbor_list(
            collinear_system(), NeighborSpec(cutoff_upper=1.5, capacity=10)
        )
        assert np.all(nlist.pairs[nlist.count :] == -1)
        assert np.all(nlist.distances[nlist.count :] == 0.0)
        assert np.all(np.abs(nlist.deltas[nlist.count :]) == 0.0)

    def test_delta_norm_equals_distance(self, rng):
        system = random_system(rng, n=40)
        cutoff = 3.5 if system.box is None else min(3.5, 0.9 * system.box.min_width() / 2)
        spec = NeighborSpec(cutoff_upper=cutoff, capacity=1600)
        nlist = build_neighbor_list(system, spec)
        _, deltas, dists = nlist.valid()
        assert np.max(np.abs(np.linalg.norm(deltas, axis=1) - dists)) < 1e-12

    def test_lower_cutoff_excludes(self):
        nlist = build_neighbor_list(
            collinear_system(),
            NeighborSpec(cutoff_upper=2.5, cutoff_lower=1.5, capacity=8),
        )
        pairs, dists = canonicalize(nlist)
        assert pairs.tolist() == [[0, 2]]
        assert dists[0] == pytest.approx(2.0)


class TestFlags:
    def test_self_loops(self):
        nlist = build_neighbor_list(
            collinear_system(),
            NeighborSpec(cutoff_upper=1.5, capacity=10, include_self_loops=True),
        )
        pairs = nlist.pairs[: nlist.count]
        loops = pairs[pairs[:, 0] == pairs[:, 1]]
        assert sorted(loops[:, 0].tolist()) == [0, 1, 2]

    def test_full_list_mirrors(self):
        spec = NeighborSpec(cutoff_upper=1.5, capacity=10, full_list=True)
        nlist = build_neighbor_list(collinear_system(), spec)
        assert nlist.count == 4
        pairs, _ = canonicalize(nlist)
        assert pairs.tolist() == [[0, 1], [1, 2]]

    def test_full_and_half_views_roundtrip(self, rng):
        system = random_system(rng, n=30, kind="none")
        half = build_neighbor_list(system, NeighborSpec(cutoff_upper=3.0, capacity=900))
        full = as_full_list(half)
        assert full.count == 2 * half.count
        p_full, d_full = canonicalize(full)
        p_half, d_half = canonicalize(half)
        assert np.array_equal(p_full, p_half)
        assert np.array_equal(d_full, d_half)
        back = as_half_list(full)
        p_back, d_back = canonicalize(back)
        assert np.array_equal(p_back, p_half)

    def test_full_list_deltas_antisymmetric(self):
        spec = NeighborSpec(cutoff_upper=1.5, capacity=10, full_list=True)
        nlist = build_neighbor_list(collinear_system(), spec)
        pairs, deltas, _ = nlist.valid()
        lookup = {(i, j): d for (i, j), d in zip(map(tuple, pairs), deltas)}
        for (i, j), d in lookup.items():
            assert np.allclose(lookup[(j, i)], -d)


class TestCanonicalize:
    def test_swap_drop_sort(self):
        system = collinear_system()
        nlist = build_neighbor_list(
            system, NeighborSpec(cutoff_upper=1.5, capacity=12, deterministic=False)
        )
        pairs, _ = canonicalize(nlist)
        assert pairs.tolist() == [[0, 1], [1, 2]]

    def test_full_list_collapses_transposes(self):
        spec = NeighborSpec(cutoff_upper=2.5, capacity=16, full_list=True)
        nlist = build_neighbor_list(collinear_system(), spec)
        pairs, _ = canonicalize(nlist)
        assert len(pairs) == nlist.count // 2


class TestStrategies:
    @pytest.mark.parametrize("kind", ["none", "orthorhombic", "triclinic"])
    def test_cell_equals_brute_equals_oracle(self, rng, kind):
        for _ in range(12):
            system = random_system(rng, n=int(rng.integers(4, 96)), kind=kind)
            if system.box is not None:
                r_upper = float(system.box.min_width() / 2 * rng.uniform(0.5, 0.99))
            else:
                r_upper = float(rng.uniform(1.5, 4.0))
            r_lower = float(rng.choice([0.0, 0.3 * r_upper]))
            ref_pairs, ref_d = oracle_pair_set(system, r_lower, r_upper)
            results = {}
            for strategy in ("brute", "cell"):
                spec = NeighborSpec(
                    cutoff_upper=r_upper,
                    cutoff_lower=r_lower,
                    capacity=system.n_atoms**2 + 1,
                    strategy=strategy,
                )
                results[strategy] = canonicalize(build_neighbor_list(system, spec))
            for strategy, (pairs, dists) in results.items():
                assert pairs.tolist() == ref_pairs.tolist(), strategy
                assert np.max(np.abs(dists - ref_d), initial=0.0) < 1e-10

    def test_cell_falls_back_when_grid_too_coarse(self):
        system = build_system(
            [[0.0, 0, 0], [1.0, 0, 0]], [1, 1], box=Box.cubic(10.0)
        )
        spec = NeighborSpec(cutoff_upper=4.9, capacity=8, strategy="cell")
        nlist = build_neighbor_list(system, spec)
        assert any("fell back" in note for note in nlist.notes)
        assert nlist.count == 1

    def test_auto_picks_brute_below_threshold(self, rng):
        system = random_system(rng, n=16, kind="none")
        spec = NeighborSpec(cutoff_upper=2.0, capacity=300, strategy="auto")
        nlist = build_neighbor_list(system, spec)
        assert nlist.notes == ()


class TestInvariants:
    def test_determinism_bitwise(self, rng):
        system = random_system(rng, n=50, kind="none")
        spec = NeighborSpec(cutoff_upper=3.0, capacity=2500)
        a = build_neighbor_list(system, spec)
        b = build_neighbor_list(system, spec)
        assert np.array_equal(a.pairs, b.pairs)
        assert np.array_equal(a.deltas, b.deltas)
        assert np.array_equal(a.distances, b.distances)

    def test_translation_invariance(self, rng):
        system = random_system(rng, n=40, kind="orthorhombic")
        cutoff = min(2.5, 0.9 * system.box.min_width() / 2)
        spec = NeighborSpec(cutoff_upper=cutoff, capacity=1600)
        base = canonicalize(build_neighbor_list(system, spec))
        shifted = build_system(
            system.positions + np.array([1.7, -2.3, 0.9]),
            system.species,
            batch=system.batch,
            box=system.box,
        )
        moved = canonicalize(build_neighbor_list(shifted, spec))
        assert base[0].tolist() == moved[0].tolist()
        assert np.max(np.abs(base[1] - moved[1]), initial=0.0) < 1e-10

    def test_image_completeness(self, rng):
        system = random_system(rng, n=24, kind="triclinic", n_batches=1)
        r_upper = system.box.min_width() / 2 * 0.9
        spec = NeighborSpec(cutoff_upper=r_upper, capacity=600)
        nlist = build_neighbor_list(system, spec)
        pairs, _, dists = nlist.valid()
        for (i, j), d in zip(pairs, dists):
            mi = minimum_image(system.positions[i] - system.positions[j], system.box)
            assert np.linalg.norm(mi) == pytest.approx(d, abs=1e-10)

    def test_padding_inert_for_consumers(self, rng):
        system = random_system(rng, n=30, kind="none")
        tight = build_neighbor_list(
            system, NeighborSpec(cutoff_upper=3.0, capacity=900)
        )
        padded = build_neighbor_list(
            system, NeighborSpec(cutoff_upper=3.0, capacity=4 * max(tight.count, 1))
        )
        a = canonicalize(tight)
        b = canonicalize(padded)
        assert a[0].tolist() == b[0].tolist()
        assert np.array_equal(a[1], b[1])
