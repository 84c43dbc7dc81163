import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from hmcompress.fileio import read_csv, read_matrix, write_csv, write_matrix
from hmcompress.generators import KINDS, generate_matrix
from hmcompress.hmatrix import BuildConfig, build_adaptive, reconstruct
from hmcompress.linalg import spectrum, svd
from hmcompress.nn import compress_network, init_network
from hmcompress.serialize import (
    dump_hmatrix,
    dump_network,
    load_hmatrix,
    load_network,
    read_hmatrix,
    save_hmatrix,
)


def walk(node):
    yield node
    for c in node.children:
        yield from walk(c)


def same_tree(a, b):
    for x, y in zip(walk(a), walk(b), strict=True):
        assert (x.row_span, x.col_span, x.kind, x.level) == (y.row_span, y.col_span, y.kind, y.level)
        if x.kind == "lowrank":
            assert x.factor.local_error == y.factor.local_error
            assert x.factor.U.tobytes() == y.factor.U.tobytes()
            assert x.factor.V.tobytes() == y.factor.V.tobytes()
        elif x.kind == "dense":
            assert x.block.tobytes() == y.block.tobytes()


class TestHMX1:
    @pytest.mark.parametrize("seed", range(20))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        A = generate_matrix(KINDS[seed % 4], int(rng.integers(8, 100)), seed=seed)
        H = build_adaptive(A, BuildConfig(10.0 ** rng.uniform(-8, -1), min_block=int(rng.integers(2, 12))))
        blob = dump_hmatrix(H)
        H2 = load_hmatrix(blob)
        same_tree(H.root, H2.root)
        assert (H2.tol, H2.config) == (H.tol, H.config)
        assert dump_hmatrix(H2) == blob
        assert reconstruct(H2).tobytes() == reconstruct(H).tobytes()

    def test_header_layout(self):
        H = build_adaptive(np.eye(4), 0.5, min_block=2, max_depth=7)
        blob = dump_hmatrix(H)
        assert blob[:4] == b"HMX1"
        assert struct.unpack("<QQdQQ", blob[4:44]) == (4, 4, 0.5, 2, 7)

    def test_file_round_trip(self, tmp_path):
        H = build_adaptive(generate_matrix("kernel_band", 64), 1e-4)
        save_hmatrix(tmp_path / "h.hmx1", H)
        assert dump_hmatrix(read_hmatrix(tmp_path / "h.hmx1")) == dump_hmatrix(H)

    @pytest.mark.parametrize("mutate", [lambda b: b"XXXX" + b[4:], lambda b: b[:-3], lambda b: b + b"\0"])
    def test_corrupt(self, mutate):
        blob = dump_hmatrix(build_adaptive(np.eye(8), 1e-3, min_block=2))
        with pytest.raises(ValueError):
            load_hmatrix(mutate(blob))


class TestHMXN:
    @pytest.mark.parametrize("seed", range(20))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        sizes = [int(rng.integers(1, 4))] + [int(rng.integers(2, 40)) for _ in range(int(rng.integers(1, 3)))] + [1]
        net = init_network(sizes, seed=seed)
        if seed % 2:
            net, _ = compress_network(net, 10.0 ** rng.uniform(-3, 0), min_block=4)
        blob = dump_network(net)
        net2 = load_network(blob)
        assert dump_network(net2) == blob
        for a, b in zip(net.layers, net2.layers, strict=True):
            assert a.activation == b.activation and a.bias.tobytes() == b.bias.tobytes()
            if a.is_dense:
                assert b.is_dense and a.weight.tobytes() == b.weight.tobytes()
            else:
                same_tree(a.weight.root, b.weight.root)

    def test_trailing_bytes(self):
        blob = dump_network(init_network([1, 3, 1]))
        with pytest.raises(ValueError):
            load_network(blob + b"\1")


class TestMatrixText:
    def test_one_by_one(self, tmp_path):
        write_matrix(tmp_path / "m.txt", [[42.0]])
        assert (tmp_path / "m.txt").read_text() == "1 1\n42\n"
        assert_array_equal(read_matrix(tmp_path / "m.txt"), [[42.0]])

    def test_signed_zero_and_denormals(self, tmp_path):
        A = np.array([[-0.0, 5e-324, -2.2250738585072014e-308], [np.finfo(float).max, 1e-310, 0.1]])
        write_matrix(tmp_path / "m.txt", A)
        B = read_matrix(tmp_path / "m.txt")
        assert B.tobytes() == A.tobytes()
        assert np.signbit(B[0, 0])

    def test_seeded_bit_exact(self, tmp_path):
        A = np.random.default_rng(0).standard_normal((64, 64)) * 10.0 ** np.random.default_rng(1).uniform(-300, 300, (64, 64))
        write_matrix(tmp_path / "m.txt", A)
        assert read_matrix(tmp_path / "m.txt").tobytes() == A.tobytes()

    def test_bad_shape(self, tmp_path):
        (tmp_path / "m.txt").write_text("2 2\n1 2\n3\n")
        with pytest.raises(ValueError):
            read_matrix(tmp_path / "m.txt")


def test_csv_header_and_values(tmp_path):
    write_csv(tmp_path / "o.csv", ("a", "b"), [(1, 0.1), (2, 1e-300)], {"seed": 3})
    meta, cols, rows = read_csv(tmp_path / "o.csv")
    assert meta["seed"] == "3" and "version" in meta
    assert cols == ["a", "b"]
    assert [float(r[1]) for r in rows] == [0.1, 1e-300]


class TestGenerators:
    def test_rank_one(self):
        s = svd(generate_matrix("rank_k", 50, seed=0, rank=1)).singular_values
        assert s[0] > 1e-6 and np.all(s[1:] <= 1e-12)

    def test_geometric_kappa(self):
        k = spectrum(generate_matrix("geometric_spectrum", 100, seed=0, kappa=1e6)).condition_number
        assert 0.99e6 <= k <= 1.01e6

    @pytest.mark.parametrize("kind", KINDS)
    def test_seed_reproducible(self, kind):
        assert generate_matrix(kind, 30, seed=5).tobytes() == generate_matrix(kind, 30, seed=5).tobytes()

    def test_kernel_entries(self):
        A = generate_matrix("kernel_band", 5)
        assert A[0, 3] == 0.25 and A[2, 2] == 1.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            generate_matrix("nope", 4)
