import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kff.grid import build_grid
from kff.operator import (
    MagneticPotential,
    apply,
    assemble,
    dump_operator,
    form_value,
    scalar_product,
    x0a_norm_sq,
)

from conftest import POTENTIALS, random_state

H2 = np.array([[22 / 3, -2.0], [-2.0, 22 / 3]])


def loop_form(grid, potential, u, v):
    """B(u, v) summed term by term from its definition."""
    x, w, s = grid.nodes, grid.weights, grid.s
    total = 0.0 + 0.0j
    for i in range(grid.N):
        for j in range(grid.N):
            if i == j:
                continue
            e = np.exp(1j * (x[i] - x[j]) * potential((x[i] + x[j]) / 2))
            total += w[i] * w[j] * (u[i] - e * u[j]) * np.conj(v[i] - e * v[j]) / abs(x[i] - x[j]) ** (1 + 2 * s)
    total += 2 * np.sum(w * grid.tail * u * np.conj(v))
    return total


def test_two_node_matrix():
    form = assemble(build_grid(-1, 1, 2, 0.5))
    np.testing.assert_allclose(form.H, H2, rtol=0, atol=1e-12)


def test_two_node_constant_potential_modulus():
    form = assemble(build_grid(-1, 1, 2, 0.5), MagneticPotential.constant(0.7))
    assert abs(form.H[0, 1]) == pytest.approx(2.0, rel=1e-14)
    assert abs(form.H[0, 1].imag) > 0


def test_two_node_apply_norm_product():
    form = assemble(build_grid(-1, 1, 2, 0.5))
    np.testing.assert_allclose(apply(form, [1, 1]), [16 / 3, 16 / 3], rtol=1e-14)
    assert x0a_norm_sq(form, [1, -1]) == pytest.approx(56 / 3, rel=1e-14)
    assert scalar_product(form, [1, 0], [0, 1]) == pytest.approx(-2.0, rel=1e-14)
    np.testing.assert_array_equal(apply(form, [0, 0]), [0, 0])
    assert x0a_norm_sq(form, [0, 0]) == 0.0


@pytest.mark.parametrize("pot", POTENTIALS)
def test_matrix_matches_definition(pot, rng):
    grid = build_grid(-1, 1, 7, 0.35)
    form = assemble(grid, POTENTIALS[pot])
    for _ in range(3):
        u, v = random_state(rng, 7), random_state(rng, 7)
        ref = loop_form(grid, POTENTIALS[pot], u, v)
        assert np.vdot(v, form.H @ u) == pytest.approx(ref, rel=1e-12)
        assert scalar_product(form, u, v) == pytest.approx(ref.real, rel=1e-12)
    u = random_state(rng, 7)
    assert form_value(grid, POTENTIALS[pot], u) == pytest.approx(x0a_norm_sq(form, u), rel=1e-12)


@pytest.mark.parametrize("N", [2, 8, 32])
@pytest.mark.parametrize("pot", POTENTIALS)
def test_hermitian_and_psd(N, pot):
    form = assemble(build_grid(-1, 1, N, 0.4), POTENTIALS[pot])
    H = form.H
    nrm = np.linalg.norm(H, 2)
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12 * nrm
    assert np.linalg.eigvalsh(H).min() >= -1e-10 * nrm


@settings(max_examples=25, deadline=None)
@given(c0=st.floats(-5, 5), c1=st.floats(-5, 5), N=st.integers(2, 24), s=st.floats(0.05, 0.95))
def test_hermitian_random_potentials(c0, c1, N, s):
    form = assemble(build_grid(-1, 2, N, s), MagneticPotential.affine(c0, c1))
    H = form.H
    np.testing.assert_array_equal(H, H.conj().T)
    nrm = np.linalg.norm(H, 2)
    assert np.linalg.eigvalsh(H).min() >= -1e-10 * nrm


def test_zero_potential_is_real():
    form = assemble(build_grid(-1, 1, 16, 0.3))
    assert np.max(np.abs(form.H.imag)) < 1e-14 * np.linalg.norm(form.H, 2)


def test_reduces_to_fractional_laplacian():
    grid = build_grid(-1, 1, 12, 0.4)
    x, w, s = grid.nodes, grid.weights, grid.s
    ref = np.zeros((12, 12))
    for i in range(12):
        for j in range(12):
            if i != j:
                ref[i, j] = -2 * w[i] * w[j] / abs(x[i] - x[j]) ** (1 + 2 * s)
        ref[i, i] = 2 * w[i] * (sum(w[j] / abs(x[i] - x[j]) ** (1 + 2 * s) for j in range(12) if j != i) + grid.tail[i])
    H = assemble(grid).H
    np.testing.assert_allclose(H.real, ref, rtol=0, atol=1e-14 * np.abs(ref).max())


def test_phase_antisymmetry():
    pot = MagneticPotential.affine(0.5, 0.3)
    x = np.linspace(-1, 1, 9)
    th = pot.phase(x[:, None], x[None, :])
    np.testing.assert_array_equal(th, -th.T)


@pytest.mark.parametrize("pot", POTENTIALS)
def test_diamagnetic(pot, rng):
    grid = build_grid(-1, 1, 32, 0.4)
    fa, f0 = assemble(grid, POTENTIALS[pot]), assemble(grid)
    for _ in range(40):
        u = random_state(rng, 32)
        ba = x0a_norm_sq(fa, u)
        assert ba >= x0a_norm_sq(f0, np.abs(u)) - 1e-9 * ba


def test_positive_on_constant_sign():
    form = assemble(build_grid(-1, 1, 10, 0.3))
    assert x0a_norm_sq(form, np.ones(10)) > 0


def test_homogeneity_and_symmetry(rng):
    form = assemble(build_grid(-1, 1, 10, 0.3), POTENTIALS["affine"])
    u, v = random_state(rng, 10), random_state(rng, 10)
    assert x0a_norm_sq(form, 2 * u) == pytest.approx(4 * x0a_norm_sq(form, u), rel=1e-13)
    assert scalar_product(form, u, v) == pytest.approx(scalar_product(form, v, u), rel=1e-12)
    assert scalar_product(form, u, u) == pytest.approx(x0a_norm_sq(form, u), rel=1e-13)


def test_eigenvector_relation():
    import scipy.linalg

    form = assemble(build_grid(-1, 1, 16, 0.4), POTENTIALS["constant"])
    vals, vecs = scipy.linalg.eigh(form.H, np.diag(form.weights))
    np.testing.assert_allclose(apply(form, vecs[:, 2]), vals[2] * vecs[:, 2], atol=1e-10 * vals[-1])


def test_dimension_mismatch():
    form = assemble(build_grid(-1, 1, 4, 0.3))
    with pytest.raises(ValueError):
        apply(form, np.ones(3))
    with pytest.raises(ValueError):
        x0a_norm_sq(form, np.ones(5))
    with pytest.raises(ValueError):
        scalar_product(form, np.ones(4), np.ones(2))


def test_block_assembly_identical():
    grid = build_grid(-1, 1, 37, 0.4)
    pot = POTENTIALS["affine"]
    ref = assemble(grid, pot).H
    for block, workers in [(1, 1), (5, 3), (16, 2), (100, 4)]:
        np.testing.assert_array_equal(assemble(grid, pot, block_rows=block, workers=workers).H, ref)


def test_quadrature_converges():
    # B(u,u) for a smooth bump against a large-grid matrix-free reference
    pot = MagneticPotential.zero()
    bump = lambda x: np.clip(1 - x**2, 0, None) ** 2

    def value(N):
        g = build_grid(-1, 1, N, 0.4)
        return form_value(g, pot, bump(g.nodes))

    ref = value(4096)
    errs = [abs(value(N) - ref) for N in (64, 128, 256)]
    orders = [np.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(orders) >= 1.0, orders


def test_dump_operator(tmp_path):
    form = assemble(build_grid(-1, 1, 3, 0.4), POTENTIALS["affine"])
    path = tmp_path / "H.csv"
    dump_operator(form, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,j,re,im"
    assert len(lines) == 1 + 6
    for line in lines[1:]:
        i, j, re, im = line.split(",")
        assert int(i) <= int(j)
        assert complex(float(re), float(im)) == form.H[int(i), int(j)]


def test_potential_validation():
    with pytest.raises(ValueError):
        MagneticPotential("quadratic")
    with pytest.raises(ValueError):
        MagneticPotential.from_dict({"kind": "constant", "c1": 2})
    assert MagneticPotential.from_dict({"kind": "affine", "c0": 0.5, "c1": 0.3}) == POTENTIALS["affine"]
