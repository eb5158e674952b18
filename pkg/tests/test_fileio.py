import numpy as np
import pytest

from tenfact.fileio import read_coo, read_cpm, write_coo, write_cpm
from tenfact.tensors import SparseTensor3, cp_reconstruct

from conftest import random_model, random_sparse


class TestCooFormat:
    def test_roundtrip_sparse(self, rng, tmp_path):
        s = random_sparse(rng, (5, 4, 6), 20)
        path = tmp_path / "t.coo"
        write_coo(path, s)
        back = read_coo(path)
        assert back.dims == s.dims
        np.testing.assert_array_equal(back.indices, s.indices)
        np.testing.assert_array_equal(back.values, s.values)

    def test_roundtrip_dense(self, rng, tmp_path):
        t = cp_reconstruct(random_model(rng, (3, 3, 3), 2))
        path = tmp_path / "t.coo"
        write_coo(path, t)
        np.testing.assert_allclose(read_coo(path).to_dense().array, t.array, atol=1e-15)

    def test_header_and_line_format(self, tmp_path):
        s = SparseTensor3.from_entries((2, 3, 4), [(1, 2, 3, 0.5), (0, 0, 0, -2.0)])
        path = tmp_path / "t.coo"
        write_coo(path, s)
        lines = path.read_text().splitlines()
        assert lines[0] == "2 3 4 2"
        assert lines[1] == "0 0 0 -2.0"
        assert lines[2] == "1 2 3 0.5"

    def test_scientific_notation_parsed(self, tmp_path):
        path = tmp_path / "t.coo"
        path.write_text("2 2 2 1\n0 1 0 1.5e-3\n")
        s = read_coo(path)
        assert s.values[0] == pytest.approx(1.5e-3)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.coo"
        path.write_text("2 2 2\n")
        with pytest.raises(ValueError):
            read_coo(path)

    def test_byte_identical_rewrite(self, rng, tmp_path):
        s = random_sparse(rng, (4, 4, 4), 12)
        p1, p2 = tmp_path / "a.coo", tmp_path / "b.coo"
        write_coo(p1, s)
        write_coo(p2, read_coo(p1))
        assert p1.read_bytes() == p2.read_bytes()


class TestCpmFormat:
    def test_roundtrip(self, rng, tmp_path):
        m = random_model(rng, (4, 5, 6), 3)
        path = tmp_path / "m.cpm"
        write_cpm(path, m)
        back = read_cpm(path)
        np.testing.assert_array_equal(back.weights, m.weights)
        np.testing.assert_array_equal(back.A, m.A)
        np.testing.assert_array_equal(back.B, m.B)
        np.testing.assert_array_equal(back.C, m.C)

    def test_header_layout(self, rng, tmp_path):
        m = random_model(rng, (2, 3, 4), 2)
        path = tmp_path / "m.cpm"
        write_cpm(path, m)
        lines = path.read_text().splitlines()
        assert lines[0] == "2 3 4 2"
        assert len(lines) == 2 + 2 + 3 + 4
        assert len(lines[1].split()) == 2  # weights row
        assert len(lines[2].split()) == 2  # first factor row has k values

    def test_weight_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.cpm"
        path.write_text("2 2 2 2\n1.0\n1 0\n0 1\n1 0\n0 1\n1 0\n0 1\n")
        with pytest.raises(ValueError):
            read_cpm(path)
