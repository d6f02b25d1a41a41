import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oversketch import (
    IncompleteMatrixError,
    ObjectStore,
    assemble,
    as_matrix,
    load_matrix,
    load_matrix_csv,
    local_multiply,
    partition,
    ramp_matrix,
    save_matrix,
)
from oversketch.matrix import matmul_flops

from conftest import triple_loop_matmul


class TestValidation:
    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            as_matrix(np.zeros(3))

    def test_rejects_zero_dimension(self):
        with pytest.raises(ValueError):
            as_matrix(np.zeros((0, 4)))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            as_matrix(np.array([[1.0, np.nan]]))


class TestPartitionAssemble:
    def test_4x4_b2_grid(self, rng):
        a = rng.standard_normal((4, 4))
        blocked = partition(a, 2, ObjectStore(), "A")
        assert (blocked.grid_rows, blocked.grid_cols) == (2, 2)
        np.testing.assert_array_equal(assemble(blocked), a)

    def test_5x4_b2_pads_bottom_row(self, rng):
        a = rng.standard_normal((5, 4))
        blocked = partition(a, 2, ObjectStore(), "A")
        assert (blocked.grid_rows, blocked.grid_cols) == (3, 2)
        bottom = blocked.block(2, 0)
        np.testing.assert_array_equal(bottom[1], np.zeros(2))
        np.testing.assert_array_equal(assemble(blocked), a)

    def test_paper_scale_grid_ratios(self):
        # m = l = 10b, n = 60b at desk-scale b = 16
        b = 16
        a = ramp_matrix(10 * b, 60 * b)
        blocked = partition(a, b, ObjectStore(), "A")
        assert (blocked.grid_rows, blocked.grid_cols) == (10, 60)

    def test_round_trip_7x9_b4(self, rng):
        a = rng.standard_normal((7, 9))
        blocked = partition(a, 4, ObjectStore(), "A")
        np.testing.assert_array_equal(assemble(blocked), a)

    def test_missing_block_names_key(self, rng):
        store = ObjectStore()
        blocked = partition(rng.standard_normal((6, 6)), 2, store, "A")
        store.delete(blocked.key(1, 2))
        with pytest.raises(IncompleteMatrixError) as exc:
            assemble(blocked)
        assert exc.value.key == blocked.key(1, 2)

    def test_all_zero_matrix(self):
        blocked = partition(np.zeros((4, 6)), 3, ObjectStore(), "Z")
        np.testing.assert_array_equal(assemble(blocked), np.zeros((4, 6)))

    def test_zero_block_size_rejected(self, rng):
        with pytest.raises(ValueError):
            partition(rng.standard_normal((4, 4)), 0, ObjectStore(), "A")

    @settings(max_examples=60, deadline=None)
    @given(
        rows=st.integers(1, 17),
        cols=st.integers(1, 17),
        block=st.integers(1, 7),
        seed=st.integers(0, 2**31),
    )
    def test_round_trip_property(self, rows, cols, block, seed):
        a = np.random.default_rng(seed).standard_normal((rows, cols))
        blocked = partition(a, block, ObjectStore(), "A")
        np.testing.assert_array_equal(assemble(blocked), a)


class TestLocalMultiply:
    def test_identity(self, rng):
        y = rng.standard_normal((5, 5))
        np.testing.assert_array_equal(local_multiply(np.eye(5), y), y)

    def test_hand_checked_2x2(self):
        out = local_multiply([[1, 2], [3, 4]], [[5, 6], [7, 8]])
        np.testing.assert_array_equal(out, [[19, 22], [43, 50]])

    def test_matches_triple_loop_8x8(self, rng):
        x = rng.standard_normal((8, 8))
        y = rng.standard_normal((8, 8))
        want = triple_loop_matmul(x, y)
        got = local_multiply(x, y)
        assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-12

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            local_multiply(rng.standard_normal((3, 4)), rng.standard_normal((3, 4)))

    def test_flop_count_is_2b_cubed(self):
        assert matmul_flops(4, 4, 4) == 2 * 4**3


class TestPaddingInvariance:
    def test_padded_product_matches_dense(self, rng):
        # product through padded blocks, restricted to the unpadded region
        a = rng.standard_normal((5, 7))
        b = rng.standard_normal((7, 6))
        store = ObjectStore()
        ab = partition(a, 4, store, "A")
        bb = partition(b, 4, store, "B")
        out = np.zeros((ab.padded_rows, bb.padded_cols))
        for i in range(ab.grid_rows):
            for j in range(bb.grid_cols):
                for k in range(ab.grid_cols):
                    out[i * 4 : (i + 1) * 4, j * 4 : (j + 1) * 4] += local_multiply(
                        ab.block(i, k), bb.block(k, j)
                    )
        assert np.allclose(out[:5, :6], a @ b, atol=1e-12)


class TestSerialization:
    def test_binary_round_trip(self, tmp_path, rng):
        a = rng.standard_normal((5, 3))
        save_matrix(tmp_path / "m.bin", a)
        np.testing.assert_array_equal(load_matrix(tmp_path / "m.bin"), a)

    def test_binary_layout(self, tmp_path):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        save_matrix(tmp_path / "m.bin", a)
        raw = (tmp_path / "m.bin").read_bytes()
        assert raw[:16] == (2).to_bytes(8, "little") * 2
        assert np.frombuffer(raw[16:], dtype="<f8").tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_truncated_file_rejected(self, tmp_path):
        (tmp_path / "bad.bin").write_bytes(b"\x01\x00")
        with pytest.raises(ValueError):
            load_matrix(tmp_path / "bad.bin")

    def test_csv_import(self, tmp_path):
        (tmp_path / "m.csv").write_text("1.5,2\n3,4\n")
        np.testing.assert_array_equal(
            load_matrix_csv(tmp_path / "m.csv"), [[1.5, 2.0], [3.0, 4.0]]
        )


def test_ramp_matrix_is_rank_two():
    a = ramp_matrix(6, 9)
    assert a[0, 0] == 2.0  # 1 + 1
    assert np.linalg.matrix_rank(a) == 2
