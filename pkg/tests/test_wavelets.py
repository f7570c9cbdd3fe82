import io

import numpy as np
import pytest

from czlab.lattice import (
    GridFunction,
    ProductLattice,
    StructureError,
    inner_product,
    lp_norm,
)
from czlab.wavelets import (
    DyadicRectangle,
    Signature,
    WaveletCoefficients,
    all_rectangles,
    dump_coefficients,
    haar_inverse,
    haar_transform,
    project_onto_collection,
    scaling_projection,
    signatures,
    wavelet_function,
)
from conftest import random_grid


def explicit_wavelet(lattice, rect, sig):
    """Sample w_R^eps from its defining formula; independent of the transform code."""
    vals = np.ones(lattice.shape)
    for s in range(lattice.t):
        k = rect.scales[s]
        for a, j, e in zip(lattice.param_axes(s), rect.positions[s], sig.parts[s]):
            n = lattice.n_axis[a]
            x = np.arange(n) / n
            left = j * 2.0 ** -k
            mid = left + 2.0 ** -(k + 1)
            right = left + 2.0 ** -k
            if e == 1:
                w = np.where((x >= left) & (x < right), 2.0 ** (k / 2), 0.0)
            else:
                w = np.where(
                    (x >= left) & (x < mid),
                    -(2.0 ** (k / 2)),
                    np.where((x >= mid) & (x < right), 2.0 ** (k / 2), 0.0),
                )
            shape = [1] * len(lattice.shape)
            shape[a] = n
            vals = vals * w.reshape(shape)
    return GridFunction(lattice, vals)


def all_labels(lattice):
    for rect in all_rectangles(lattice):
        for sig_combo in _sig_combos(lattice):
            yield rect, sig_combo


def _sig_combos(lattice):
    import itertools
    pools = [signatures(d) for d in lattice.dims]
    return [Signature(parts) for parts in itertools.product(*pools)]


class TestTypes:
    def test_rectangle_validation(self):
        with pytest.raises(StructureError):
            DyadicRectangle((1,), ((2,),))  # position out of range
        with pytest.raises(StructureError):
            DyadicRectangle((-1,), ((0,),))

    def test_rectangle_volume(self):
        r = DyadicRectangle((1, 2), ((0, 1), (3,)))
        assert abs(r.volume() - 2.0 ** -2 * 2.0 ** -2) < 1e-15

    def test_rectangle_contains(self):
        big = DyadicRectangle((0, 1), ((0,), (1,)))
        small = DyadicRectangle((2, 1), ((3,), (1,)))
        assert big.contains(small)
        assert not small.contains(big)

    def test_signature_rejects_all_ones(self):
        with pytest.raises(StructureError):
            Signature(((1, 1), (0, 1)))
        Signature(((0, 1), (1, 0)))  # fine

    def test_signature_order_is_lexicographic(self):
        assert signatures(2) == ((0, 0), (0, 1), (1, 0))


class TestTransform:
    def test_single_wavelet_gives_single_coefficient(self, biparam8):
        rect = DyadicRectangle((0, 0), ((0,), (0,)))
        sig = Signature(((0,), (0,)))
        f = explicit_wavelet(biparam8, rect, sig)
        c = haar_transform(f)
        assert abs(c.coefficient(rect, sig) - 1.0) < 1e-13
        total = np.sum(np.abs(c.array) ** 2)
        assert abs(total - 1.0) < 1e-13  # nothing anywhere else

    def test_constant_has_no_wavelet_mass(self, biparam8):
        f = GridFunction(biparam8, np.full(biparam8.shape, 1.7 + 0.3j))
        c = haar_transform(f)
        assert c.wavelet_mass() < 1e-26
        assert abs(c.scaling_mass() - lp_norm(f, 2) ** 2) < 1e-13

    def test_parseval_large(self):
        lat = ProductLattice((2, 2), (16, 16, 16, 16))
        f = random_grid(lat, seed=2024)
        c = haar_transform(f)
        total = float(np.sum(np.abs(c.array) ** 2))
        n2 = lp_norm(f, 2) ** 2
        assert abs(total - n2) <= 1e-12 * n2
        assert abs(c.wavelet_mass() + c.scaling_mass() - n2) <= 1e-12 * n2

    def test_coefficients_match_explicit_inner_products(self):
        lat = ProductLattice((2, 2), (16, 16, 16, 16))
        f = random_grid(lat, seed=77)
        c = haar_transform(f)
        rng = np.random.default_rng(5)
        rects = all_rectangles(lat)
        sigs = _sig_combos(lat)
        for _ in range(30):
            rect = rects[rng.integers(len(rects))]
            sig = sigs[rng.integers(len(sigs))]
            w = explicit_wavelet(lat, rect, sig)
            assert abs(c.coefficient(rect, sig) - inner_product(f, w)) < 1e-12

    def test_round_trip(self, biparam8):
        f = random_grid(biparam8, seed=9)
        g = haar_inverse(haar_transform(f))
        assert np.max(np.abs(g.values - f.values)) < 1e-12

    def test_coefficient_round_trip(self, biparam8):
        rng = np.random.default_rng(13)
        c = WaveletCoefficients.zeros(biparam8)
        c = c.with_array(
            rng.standard_normal(c.array.shape) + 1j * rng.standard_normal(c.array.shape)
        )
        c2 = haar_transform(haar_inverse(c))
        assert np.max(np.abs(c2.array - c.array)) < 1e-12

    def test_single_coefficient_inverts_to_basis_function(self, biparam8):
        rect = DyadicRectangle((1, 2), ((1,), (3,)))
        sig = Signature(((0,), (0,)))
        f = wavelet_function(biparam8, rect, sig)
        w = explicit_wavelet(biparam8, rect, sig)
        assert np.max(np.abs(f.values - w.values)) < 1e-12

    def test_unequal_axes_within_parameter_rejected(self):
        lat = ProductLattice((2,), (8, 16))
        with pytest.raises(StructureError):
            haar_transform(GridFunction(lat, np.zeros((8, 16))))

    def test_finer_scale_rejected(self, biparam8):
        rect = DyadicRectangle((3, 0), ((5,), (0,)))  # scale 3 needs N >= 16
        with pytest.raises(StructureError):
            WaveletCoefficients.from_dict(
                biparam8, {(rect, Signature(((0,), (0,)))): 1.0}
            )


class TestOrthonormality:
    @pytest.mark.parametrize("dims,n_axis", [((1, 1), (8, 8)), ((2,), (8, 8))])
    def test_exhaustive_at_n8(self, dims, n_axis):
        lat = ProductLattice(dims, n_axis)
        fns = [explicit_wavelet(lat, rect, sig).values.ravel() for rect, sig in all_labels(lat)]
        fns.append(np.ones(lat.npoints))  # the constant completes the basis
        W = np.array(fns)
        gram = (W @ W.conj().T) / lat.npoints
        assert np.max(np.abs(gram - np.eye(len(fns)))) < 1e-13


class TestProjection:
    def test_all_rectangles_removes_scaling_part(self, biparam8):
        f = random_grid(biparam8, seed=17)
        p = project_onto_collection(f, all_rectangles(biparam8))
        c = haar_transform(f)
        pure = c.with_array(c.array.copy())
        pure.array[0, :] = 0.0
        pure.array[:, 0] = 0.0
        expected = haar_inverse(pure)
        assert np.max(np.abs(p.values - expected.values)) < 1e-12

    def test_empty_collection(self, biparam8):
        f = random_grid(biparam8, seed=18)
        p = project_onto_collection(f, [])
        assert np.max(np.abs(p.values)) < 1e-14

    def test_single_rectangle_matches_explicit_reconstruction(self, biparam8):
        f = random_grid(biparam8, seed=19)
        rect = DyadicRectangle((1, 1), ((0,), (1,)))
        p = project_onto_collection(f, [rect])
        acc = np.zeros(biparam8.shape, dtype=complex)
        for sig in _sig_combos(biparam8):
            w = explicit_wavelet(biparam8, rect, sig)
            acc += complex(inner_product(f, w)) * w.values
        assert np.max(np.abs(p.values - acc)) < 1e-12

    def test_idempotent_and_self_adjoint(self, biparam8):
        f = random_grid(biparam8, seed=20)
        g = random_grid(biparam8, seed=21)
        U = [
            DyadicRectangle((1, 1), ((0,), (1,))),
            DyadicRectangle((2, 0), ((3,), (0,))),
        ]
        pf = project_onto_collection(f, U)
        ppf = project_onto_collection(pf, U)
        assert np.max(np.abs(ppf.values - pf.values)) < 1e-12
        lhs = inner_product(pf, g)
        rhs = inner_product(f, project_onto_collection(g, U))
        assert abs(lhs - rhs) < 1e-12


class TestScalingProjection:
    def test_constant_stays_constant(self, biparam8):
        f = GridFunction(biparam8, np.full(biparam8.shape, 2.0))
        J = DyadicRectangle((1, 1), ((1,), (0,)))
        p = scaling_projection(f, J)
        assert np.max(np.abs(p.values - 2.0)) < 1e-13

    def test_wavelet_at_j_projects_to_zero(self, biparam8):
        J = DyadicRectangle((1, 1), ((1,), (0,)))
        sig = Signature(((0,), (0,)))
        w = explicit_wavelet(biparam8, J, sig)
        p = scaling_projection(w, J)
        assert np.max(np.abs(p.values)) < 1e-13

    def test_father_identity_on_j_one_parameter(self):
        lat = ProductLattice((1,), (16,))
        f = random_grid(lat, seed=23)
        for k in (1, 2, 3):
            for j in range(2 ** k):
                J = DyadicRectangle((k,), ((j,),))
                p = scaling_projection(f, J)
                w1 = np.zeros(16)
                wdth = 16 >> k
                w1[j * wdth:(j + 1) * wdth] = 2.0 ** (k / 2)
                coeff = np.sum(f.values * w1) / 16
                rhs = coeff * w1
                mask = w1 > 0
                assert np.max(np.abs(p.values[mask] - rhs[mask])) < 1e-12

    def test_explicit_tower_sum_oracle(self):
        lat = ProductLattice((1,), (16,))
        f = random_grid(lat, seed=29)
        J = DyadicRectangle((3,), ((5,),))
        acc = np.full(16, complex(np.mean(f.values)))  # torus stand-in for coarser scales
        for k in range(3):
            anc = (5 >> (3 - k),)
            I = DyadicRectangle((k,), (anc,))
            w = explicit_wavelet(lat, I, Signature(((0,),)))
            acc += complex(inner_product(f, w)) * w.values
        p = scaling_projection(f, J)
        assert np.max(np.abs(p.values - acc)) < 1e-12


class TestDump:
    def test_deterministic_and_parsable(self, biparam8):
        f = random_grid(biparam8, seed=31)
        c = haar_transform(f)
        buf1, buf2 = io.StringIO(), io.StringIO()
        dump_coefficients(c, buf1, min_abs=1e-9)
        dump_coefficients(c, buf2, min_abs=1e-9)
        assert buf1.getvalue() == buf2.getvalue()
        import json
        lines = buf1.getvalue().strip().split("\n")
        row = json.loads(lines[0])
        rect = DyadicRectangle(tuple(row["scales"]), tuple(tuple(p) for p in row["positions"]))
        sig = Signature(tuple(tuple(p) for p in row["signature"]))
        assert abs(c.coefficient(rect, sig) - complex(row["re"], row["im"])) < 1e-12
