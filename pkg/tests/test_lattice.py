import numpy as np
import pytest

from czlab.lattice import (
    GridFunction,
    ProductLattice,
    StructureError,
    fft_forward,
    fft_inverse,
    inner_product,
    lp_norm,
    read_czl1,
    write_czl1,
)
from conftest import random_grid


def dft_oracle(values):
    """Direct O(N^2) unitary DFT over all axes, no FFT machinery."""
    flat = values.ravel()
    shape = values.shape
    n = flat.size
    idx = np.array(list(np.ndindex(*shape)))
    out = np.zeros(n, dtype=complex)
    for a, k in enumerate(idx):
        phase = np.zeros(n)
        for ax, ksz in enumerate(shape):
            phase += k[ax] * idx[:, ax] / ksz
        out[a] = np.sum(flat * np.exp(-2j * np.pi * phase))
    return (out / np.sqrt(n)).reshape(shape)


class TestLatticeConstruction:
    def test_valid(self):
        lat = ProductLattice((2, 2), (16, 16, 8, 8))
        assert lat.t == 2
        assert lat.npoints == 16 * 16 * 8 * 8
        assert lat.param_axes(1) == (2, 3)
        assert lat.param_shape(0) == (16, 16)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(StructureError):
            ProductLattice((1,), (12,))
        with pytest.raises(StructureError):
            ProductLattice((1,), (2,))

    def test_rejects_axis_count_mismatch(self):
        with pytest.raises(StructureError):
            ProductLattice((2,), (16,))

    def test_grid_shape_mismatch(self, line16):
        with pytest.raises(StructureError):
            GridFunction(line16, np.zeros(8))

    def test_grid_rejects_nan(self, line16):
        v = np.zeros(16)
        v[3] = np.nan
        with pytest.raises(StructureError):
            GridFunction(line16, v)


class TestFFT:
    def test_delta_is_flat(self, line16):
        v = np.zeros(16, dtype=complex)
        v[0] = 1.0
        fh = fft_forward(GridFunction(line16, v))
        assert np.allclose(fh.values, 0.25, atol=1e-14)

    def test_constant_concentrates_at_zero(self, line16):
        c = 2.5 - 1.0j
        fh = fft_forward(GridFunction(line16, np.full(16, c)))
        assert abs(fh.values[0] - c * 4.0) < 1e-12
        assert np.max(np.abs(fh.values[1:])) < 1e-12

    def test_round_trip_many_shapes(self):
        for dims, n_axis in [((1,), (16,)), ((2,), (8, 8)), ((1, 1), (8, 16)),
                             ((2, 1), (8, 8, 4)), ((2, 2), (8, 8, 8, 8))]:
            lat = ProductLattice(dims, n_axis)
            f = random_grid(lat, seed=hash((dims, n_axis)) % 2**32)
            g = fft_inverse(fft_forward(f))
            err = np.max(np.abs(g.values - f.values)) / np.max(np.abs(f.values))
            assert err < 1e-12

    def test_parseval_random(self, plane16):
        f = random_grid(plane16, seed=7)
        fh = fft_forward(f)
        assert abs(lp_norm(fh, 2) - lp_norm(f, 2)) <= 1e-12 * lp_norm(f, 2)

    def test_against_direct_dft(self, plane16):
        f = random_grid(plane16, seed=11)
        fh = fft_forward(f)
        oracle = dft_oracle(f.values)
        assert np.max(np.abs(fh.values - oracle)) < 1e-10


class TestNorms:
    def test_constant_norm_is_one(self, line16):
        one = GridFunction(line16, np.ones(16))
        for p in (1, 2, 3.5, 8, np.inf):
            assert abs(lp_norm(one, p) - 1.0) < 1e-14

    def test_half_indicator(self, line16):
        v = np.zeros(16)
        v[:8] = 1.0
        f = GridFunction(line16, v)
        assert abs(lp_norm(f, 2) - np.sqrt(0.5)) < 1e-14

    def test_norm_squared_is_self_inner_product(self, biparam8):
        f = random_grid(biparam8, seed=3)
        direct = np.sum(np.abs(f.values) ** 2) / f.lattice.npoints
        assert abs(lp_norm(f, 2) ** 2 - direct) < 1e-12
        assert abs(inner_product(f, f).real - direct) < 1e-12

    def test_rejects_small_p(self, line16):
        f = GridFunction(line16, np.ones(16))
        with pytest.raises(ValueError):
            lp_norm(f, 0.5)

    def test_monotone_in_p(self, plane16):
        rng = np.random.default_rng(5)
        f = GridFunction(plane16, rng.uniform(-1, 1, plane16.shape))
        norms = [lp_norm(f, p) for p in (1, 2, 4, 8, np.inf)]
        assert all(a <= b + 1e-12 for a, b in zip(norms, norms[1:]))


class TestInnerProduct:
    def test_conjugate_symmetry(self, biparam8):
        f = random_grid(biparam8, seed=21)
        g = random_grid(biparam8, seed=22)
        assert abs(inner_product(f, g) - np.conj(inner_product(g, f))) < 1e-14

    def test_conjugate_linear_second_slot(self, line16):
        f = random_grid(line16, seed=31)
        g = random_grid(line16, seed=32)
        c = 0.7 - 1.3j
        assert abs(inner_product(f, c * g) - np.conj(c) * inner_product(f, g)) < 1e-13

    def test_lattice_mismatch(self, line16, plane16):
        f = GridFunction(line16, np.ones(16))
        g = GridFunction(plane16, np.ones((16, 16)))
        with pytest.raises(StructureError):
            inner_product(f, g)

    def test_direct_summation_oracle(self, biparam8):
        f = random_grid(biparam8, seed=41)
        g = random_grid(biparam8, seed=42)
        acc = 0.0 + 0.0j
        for idx in np.ndindex(*biparam8.shape):
            acc += f.values[idx] * np.conj(g.values[idx])
        acc /= biparam8.npoints
        assert abs(inner_product(f, g) - acc) < 1e-12


class TestCZL1:
    def test_round_trip(self, tmp_path):
        lat = ProductLattice((2, 1), (8, 8, 16))
        f = random_grid(lat, seed=55)
        p = tmp_path / "f.czl1"
        write_czl1(f, p)
        g = read_czl1(p)
        assert g.lattice == lat
        assert np.array_equal(g.values, f.values)

    def test_rejects_bad_magic(self, tmp_path):
        p = tmp_path / "bad.czl1"
        p.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(StructureError):
            read_czl1(p)

    def test_rejects_bad_axis(self, tmp_path):
        import struct
        p = tmp_path / "bad2.czl1"
        payload = b"CZL1" + struct.pack("<I", 1) + struct.pack("<I", 1) + struct.pack("<I", 12)
        p.write_bytes(payload + b"\x00" * (16 * 12))
        with pytest.raises(StructureError):
            read_czl1(p)

    def test_rejects_truncated(self, tmp_path):
        lat = ProductLattice((1,), (16,))
        f = random_grid(lat, seed=1)
        p = tmp_path / "t.czl1"
        write_czl1(f, p)
        data = p.read_bytes()
        p.write_bytes(data[:-8])
        with pytest.raises(StructureError):
            read_czl1(p)
