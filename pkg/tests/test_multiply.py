import numpy as np
import pytest

from oversketch import (
    InsufficientResultsError,
    MultiplyPlan,
    RecoveryFailureError,
    Simulator,
    StragglerModel,
    blocked_multiply,
    coded_naive_multiply,
    make_oversketch,
    naive_multiply,
    oversketch_multiply,
)
from oversketch.costmodel import InfeasibleMemoryError

from conftest import rel_frobenius, triple_loop_matmul


def quiet_oversketch(*args, **kwargs):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return oversketch_multiply(*args, **kwargs)


class TestNaive:
    def test_8x8_chunk2_tasks_and_oracle(self, rng):
        a = rng.standard_normal((8, 8))
        b = rng.standard_normal((8, 8))
        sim = Simulator(seed=0)
        got = naive_multiply(a, b, 2, sim)
        assert len(sim.trace.tasks) == 16
        assert rel_frobenius(triple_loop_matmul(a, b), got) < 1e-10

    def test_identity_exact(self, rng):
        b = rng.standard_normal((6, 6))
        sim = Simulator(seed=0)
        np.testing.assert_array_equal(naive_multiply(np.eye(6), b, 3, sim), b)

    def test_per_task_bytes_read(self, rng):
        chunk, n = 2, 8
        sim = Simulator(seed=0)
        naive_multiply(rng.standard_normal((4, n)), rng.standard_normal((n, 4)), chunk, sim)
        for t in sim.trace.counted():
            assert t.bytes_read == 8 * 2 * chunk * n
            assert t.bytes_written == 8 * chunk * chunk
            assert t.messages == 3

    def test_memory_budget_enforced(self, rng):
        sim = Simulator(seed=0)
        with pytest.raises(InfeasibleMemoryError):
            naive_multiply(
                rng.standard_normal((4, 8)), rng.standard_normal((8, 4)), 2, sim,
                memory_budget=31,
            )

    def test_invalid_chunk(self, rng):
        with pytest.raises(ValueError):
            naive_multiply(
                rng.standard_normal((4, 4)), rng.standard_normal((4, 4)), 0,
                Simulator(seed=0),
            )


class TestBlocked:
    def test_three_block_column_reduction(self, rng):
        b = 4
        a = rng.standard_normal((3 * b, 3 * b))
        y = rng.standard_normal((3 * b, 3 * b))
        sim = Simulator(seed=0)
        got = blocked_multiply(a, y, b, sim)
        assert rel_frobenius(a @ y, got) < 1e-12
        labels = [w.label for w in sim.trace.waves]
        assert labels == ["compute", "reduction"]
        assert sim.trace.waves[0].n_tasks == 27
        assert sim.trace.waves[1].n_tasks == 9

    def test_single_block_column_skips_reduction(self, rng):
        n = 6
        a = rng.standard_normal((2 * n, n))
        y = rng.standard_normal((n, 2 * n))
        sim = Simulator(seed=0)
        got = blocked_multiply(a, y, n, sim)
        assert rel_frobenius(a @ y, got) < 1e-12
        assert [w.label for w in sim.trace.waves] == ["compute"]

    def test_matches_naive_on_24x24(self, rng):
        a = rng.standard_normal((24, 24))
        y = rng.standard_normal((24, 24))
        got_b = blocked_multiply(a, y, 8, Simulator(seed=0))
        got_n = naive_multiply(a, y, 8, Simulator(seed=1))
        assert rel_frobenius(got_n, got_b) < 1e-10

    def test_non_divisible_shapes_padded(self, rng):
        a = rng.standard_normal((7, 10))
        y = rng.standard_normal((10, 9))
        got = blocked_multiply(a, y, 4, Simulator(seed=0))
        assert got.shape == (7, 9)
        assert rel_frobenius(a @ y, got) < 1e-12

    def test_reduction_reads_all_partials(self, rng):
        b, n = 2, 8
        sim = Simulator(seed=0)
        blocked_multiply(rng.standard_normal((4, n)), rng.standard_normal((n, 4)), b, sim)
        red = [t for t in sim.trace.tasks if t.label == "reduction"]
        for t in red:
            assert t.messages == n // b + 1
            assert t.flops == 0


class TestOverSketch:
    def test_exact_when_no_stragglers_matches_dense_sketch(self, rng):
        a = rng.standard_normal((8, 40))
        y = rng.standard_normal((40, 8))
        sim = Simulator(model=StragglerModel(straggler_prob=0.0), seed=0)
        out = quiet_oversketch(a, y, 4, 3, 0, sim, seed=21)
        spec = make_oversketch(40, 4, 3, 0, seed=21)
        dense = a @ spec.materialize() @ spec.materialize().T @ y
        assert rel_frobenius(dense, out.product) < 1e-10

    def test_group_sizes_and_survivors(self, rng):
        # m = l = 2b with keep 3, spare 1: 4 tasks per block, any 3 suffice
        b = 4
        a = rng.standard_normal((2 * b, 6 * b))
        y = rng.standard_normal((6 * b, 2 * b))
        sim = Simulator(seed=3)
        out = quiet_oversketch(a, y, b, 3, 1, sim, seed=5)
        compute = [t for t in sim.trace.tasks if t.label == "compute"]
        assert len(compute) == 4 * 4  # 4 blocks x (keep + spare)
        ignored = [t for t in compute if t.ignored]
        assert len(ignored) == 4  # exactly spare per block
        assert set(out.keep_per_block.values()) == {3}
        red = [t for t in sim.trace.tasks if t.label == "reduction"]
        assert all(t.messages == 3 + 1 for t in red)

    def test_output_depends_only_on_seed_and_ignore_set(self, rng):
        # reconstruct the product from the survivor set alone; any simulation
        # that produced the same ignore-set must give exactly this matrix
        b = 4
        a = rng.standard_normal((2 * b, 5 * b))
        y = rng.standard_normal((5 * b, 2 * b))
        sim = Simulator(seed=100)
        out = quiet_oversketch(a, y, b, 2, 1, sim, seed=7)
        kept = {}
        for t in sim.trace.tasks:
            if t.label == "compute" and not t.ignored:
                i, j, k = map(int, t.task_id.split(":", 1)[1].split(","))
                kept.setdefault((i, j), []).append(k)
        spec = make_oversketch(5 * b, b, 2, 1, seed=7)
        sa = spec.apply_right(a)
        sb = spec.apply_left(y)
        expected = np.zeros_like(out.product)
        for (i, j), ks in kept.items():
            for k in ks:
                expected[i * b : (i + 1) * b, j * b : (j + 1) * b] += (
                    sa[i * b : (i + 1) * b, k * b : (k + 1) * b]
                    @ sb[k * b : (k + 1) * b, j * b : (j + 1) * b]
                )
        np.testing.assert_allclose(out.product, expected, atol=1e-12)

    def test_unbiased_after_drops(self, rng):
        # Monte Carlo mean over sketch seeds matches the exact product
        a = rng.standard_normal((4, 30))
        y = rng.standard_normal((30, 4))
        exact = a @ y
        model = StragglerModel(straggler_prob=0.3, multiplier_power=1.0)
        total = np.zeros_like(exact)
        trials = 400
        for seed in range(trials):
            sim = Simulator(model=model, seed=seed)
            out = quiet_oversketch(a, y, 2, 4, 2, sim, seed=seed)
            total += out.product
        mean = total / trials
        scale = np.linalg.norm(exact)
        assert np.linalg.norm(mean - exact) / scale < 0.2  # ~1/sqrt(trials*d)

    def test_strict_mode_raises_when_budget_exhausted(self, rng):
        a = rng.standard_normal((4, 30))
        y = rng.standard_normal((30, 4))
        model = StragglerModel(straggler_prob=1.0, multiplier_power=1.0)
        sim = Simulator(model=model, seed=0)
        with pytest.raises(InsufficientResultsError):
            quiet_oversketch(a, y, 2, 4, 1, sim, seed=0, sketch_allow_ignored=1,
                             strict=True)

    def test_graceful_mode_records_effective_keep(self, rng):
        a = rng.standard_normal((4, 30))
        y = rng.standard_normal((30, 4))
        model = StragglerModel(straggler_prob=1.0, multiplier_power=1.0)
        sim = Simulator(model=model, seed=0)
        out = quiet_oversketch(a, y, 2, 4, 1, sim, seed=0, sketch_allow_ignored=1,
                               strict=False)
        assert out.min_keep < 4
        assert out.product.shape == (4, 4)

    def test_sketch_losses_consume_budget(self, rng):
        # pre-ignored sketch blocks reduce the partials available per block
        a = rng.standard_normal((4, 30))
        y = rng.standard_normal((30, 4))
        model = StragglerModel(straggler_prob=0.9, multiplier_power=1.0)
        sim = Simulator(model=model, seed=2)
        out = quiet_oversketch(a, y, 2, 3, 2, sim, seed=3, sketch_allow_ignored=2,
                               strict=False)
        assert out.sketch_missing_a or out.sketch_missing_b
        compute = [t for t in sim.trace.tasks if t.label == "compute"]
        lost = len(out.sketch_missing_a) + len(out.sketch_missing_b)
        assert len(compute) < 2 * 2 * 5 or lost == 0


class TestCoded:
    def test_nine_workers_and_fig2_pattern(self, rng):
        a = rng.standard_normal((8, 6))
        y = rng.standard_normal((6, 8))
        sim = Simulator(seed=0)
        out = coded_naive_multiply(a, y, 4, sim, stragglers=[(0, 0), (0, 1), (1, 1)])
        assert len(sim.trace.tasks) == 9
        assert rel_frobenius(a @ y, out.product) < 1e-12
        assert len(out.recovered) == 3
        assert out.decode_flops > 0

    def test_no_stragglers_decode_noop(self, rng):
        a = rng.standard_normal((8, 6))
        y = rng.standard_normal((6, 8))
        out = coded_naive_multiply(a, y, 4, Simulator(seed=0))
        assert out.recovered == []
        assert out.decode_flops == 0
        assert rel_frobenius(a @ y, out.product) < 1e-12

    def test_undecodable_pattern(self, rng):
        a = rng.standard_normal((8, 6))
        y = rng.standard_normal((6, 8))
        sim = Simulator(seed=0)
        # data block plus its row parity, column parity, and the corner
        with pytest.raises(RecoveryFailureError) as exc:
            coded_naive_multiply(
                a, y, 4, sim, stragglers=[(0, 0), (0, 2), (2, 0), (2, 2)]
            )
        assert (0, 0) in exc.value.lost

    def test_single_loss_anywhere_recoverable(self, rng):
        a = rng.standard_normal((8, 6))
        y = rng.standard_normal((6, 8))
        for pattern in [[(0, 0)], [(1, 2)], [(2, 2)], [(2, 1)]]:
            out = coded_naive_multiply(a, y, 4, Simulator(seed=0), stragglers=pattern)
            assert rel_frobenius(a @ y, out.product) < 1e-12


class TestPlans:
    @pytest.mark.parametrize("m,n,l,tile", [(8, 8, 8, 2), (12, 8, 4, 4), (6, 10, 6, 3)])
    def test_naive_plan_matches_trace(self, rng, m, n, l, tile):
        sim = Simulator(seed=0)
        naive_multiply(rng.standard_normal((m, n)), rng.standard_normal((n, l)), tile, sim)
        plan = MultiplyPlan("naive", m, n, l, tile)
        assert plan.workers_launched == len(sim.trace.tasks)

    @pytest.mark.parametrize("m,n,l,tile", [(8, 8, 8, 2), (12, 8, 4, 4), (9, 10, 6, 3)])
    def test_blocked_plan_matches_trace(self, rng, m, n, l, tile):
        sim = Simulator(seed=0)
        blocked_multiply(rng.standard_normal((m, n)), rng.standard_normal((n, l)), tile, sim)
        plan = MultiplyPlan("blocked", m, n, l, tile)
        assert plan.workers_launched == len(sim.trace.tasks)
        phases = plan.phase_tasks()
        for label, count in phases.items():
            assert sum(1 for t in sim.trace.tasks if t.label == label) == count

    @pytest.mark.parametrize("keep,spare", [(2, 0), (3, 1), (2, 2)])
    def test_oversketch_plan_matches_trace(self, rng, keep, spare):
        m, n, l, b = 8, 40, 8, 4
        sim = Simulator(seed=0)
        quiet_oversketch(
            rng.standard_normal((m, n)), rng.standard_normal((n, l)), b, keep, spare,
            sim, seed=0,
        )
        plan = MultiplyPlan("oversketch", m, n, l, b, keep_count=keep, spare_count=spare)
        for label, count in plan.phase_tasks().items():
            assert sum(1 for t in sim.trace.tasks if t.label == label) == count

    def test_coded_plan_matches_trace(self, rng):
        sim = Simulator(seed=0)
        coded_naive_multiply(
            rng.standard_normal((8, 6)), rng.standard_normal((6, 8)), 4, sim
        )
        plan = MultiplyPlan("coded", 8, 6, 8, 4)
        assert plan.workers_launched == len(sim.trace.tasks) == 9
