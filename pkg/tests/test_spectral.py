import numpy as np
import pytest

from lsns.errors import ConfigurationError, GridMismatchError
from lsns.spectral import (
    Grid,
    ScalarField,
    SpectralField,
    curl,
    dealias,
    divergence,
    divergence_residual,
    forward_transform,
    gradient,
    inverse_transform,
    l2_norm,
    leray_project,
    mean_mode,
    nonlinear_term,
    solve_pressure,
    synthesize,
)

from helpers import (
    convolution_oracle,
    dft_oracle,
    random_field,
    random_solenoidal,
    random_vector_samples,
    taylor_green,
)


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        Grid(7)
    with pytest.raises(ConfigurationError):
        Grid(8, dealias_cutoff=5)
    g = Grid(16)
    assert g.dealias_cutoff == 5
    assert Grid(8).dealias_cutoff == 2
    assert Grid(32).dealias_cutoff == 10


def test_forward_constant_field():
    g = Grid(8)
    samples = np.zeros((3, 8, 8, 8))
    samples[0] = 1.0
    f = forward_transform(g, samples)
    assert np.allclose(mean_mode(f), [1.0, 0.0, 0.0])
    c = f.coeffs.copy()
    c[:, 0, 0, 0] = 0.0
    assert np.max(np.abs(c)) < 1e-15


def test_forward_single_cosine():
    g = Grid(8)
    x = g.points()
    samples = np.zeros((3, 8, 8, 8))
    samples[0] = np.cos(2 * np.pi * x[0])
    f = forward_transform(g, samples)
    assert abs(f.coeffs[0, 1, 0, 0] - 0.5) < 1e-14
    assert abs(f.coeffs[0, -1, 0, 0] - 0.5) < 1e-14
    zeroed = f.coeffs.copy()
    zeroed[0, 1, 0, 0] = zeroed[0, -1, 0, 0] = 0.0
    assert np.max(np.abs(zeroed)) < 1e-14


def test_forward_matches_direct_dft_oracle():
    g = Grid(8)
    samples = random_vector_samples(g, seed=701)
    f = forward_transform(g, samples)
    oracle = dft_oracle(samples)
    assert np.max(np.abs(f.coeffs - oracle)) <= 1e-12 * np.max(np.abs(oracle))


@pytest.mark.parametrize("m", [8, 16, 32])
def test_round_trip_and_parseval(m):
    g = Grid(m)
    samples = random_vector_samples(g, seed=100 + m)
    f = forward_transform(g, samples)
    back = inverse_transform(f)
    assert np.max(np.abs(back - samples)) <= 1e-12 * np.max(np.abs(samples))
    phys = np.sum(samples**2) / m**3
    spec = np.sum(np.abs(f.coeffs) ** 2)
    assert abs(phys - spec) <= 1e-12 * phys


def test_dimension_mismatch_is_configuration_error():
    g = Grid(8)
    with pytest.raises(GridMismatchError):
        forward_transform(g, np.zeros((3, 4, 4, 4)))


def test_leray_annihilates_gradients():
    g = Grid(8)
    s = forward_transform(g, np.random.Generator(np.random.Philox(key=3)).standard_normal((8, 8, 8)))
    v = gradient(s)
    proj = leray_project(v)
    # the mean mode of a gradient is zero, so the whole projection vanishes
    assert np.max(np.abs(proj.coeffs)) <= 1e-13 * max(np.max(np.abs(v.coeffs)), 1.0)


def test_leray_idempotent_and_divergence_free():
    g = Grid(8)
    v = random_field(g, seed=11)
    p1 = leray_project(v)
    p2 = leray_project(p1)
    assert np.max(np.abs(p1.coeffs - p2.coeffs)) == 0.0
    assert divergence_residual(p1) <= 1e-12
    assert np.allclose(mean_mode(p1), mean_mode(v))
    already = random_solenoidal(g, seed=12)
    again = leray_project(already)
    assert np.max(np.abs(again.coeffs - already.coeffs)) <= 1e-13 * np.max(np.abs(already.coeffs))


def test_leray_matches_per_mode_matrix_oracle():
    g = Grid(8)
    v = random_field(g, seed=13)
    proj = leray_project(v)
    n = g.wavenumbers
    out = np.empty_like(v.coeffs)
    for ix in np.ndindex(8, 8, 8):
        nv = np.array([n[0][ix], n[1][ix], n[2][ix]])
        k2 = nv @ nv
        mat = np.eye(3) if k2 == 0 else np.eye(3) - np.outer(nv, nv) / k2
        out[(slice(None),) + ix] = mat @ v.coeffs[(slice(None),) + ix]
    assert np.max(np.abs(out - proj.coeffs)) <= 1e-12 * np.max(np.abs(v.coeffs))


def test_pressure_zero_cases():
    g = Grid(8)
    const = np.zeros((3, 8, 8, 8))
    const[1] = 2.5
    u = forward_transform(g, const)
    assert np.max(np.abs(solve_pressure(u).coeffs)) < 1e-14
    zero = SpectralField(g, np.zeros((3, 8, 8, 8), dtype=complex))
    assert np.max(np.abs(solve_pressure(zero).coeffs)) < 1e-15


def test_pressure_single_mode_oracle():
    # shear flow: T = u (x) u depends on y only through T_00, and n^T T n
    # vanishes for n along the y axis, so the pressure is exactly zero
    g = Grid(16)
    x = g.points()
    samples = np.zeros((3, 16, 16, 16))
    samples[0] = np.sin(2 * np.pi * x[1])
    u = forward_transform(g, samples)
    p = solve_pressure(u)
    assert np.max(np.abs(p.coeffs)) < 1e-14

    # Taylor-Green field: explicit mode-arithmetic oracle
    u = taylor_green(g)
    p = solve_pressure(u)
    from lsns.spectral import advection_tensor, laplacian

    t_hat = advection_tensor(u, u)
    n = g.wavenumbers
    lhs = laplacian(p).coeffs
    rhs = (2 * np.pi * 1j) ** 2 * np.einsum("ixyz,ijxyz,jxyz->xyz", n, t_hat, n)
    scale = np.max(np.abs(rhs))
    assert np.max(np.abs(lhs + rhs)) <= 1e-11 * scale  # Delta p = -div div T
    # explicit per-mode oracle
    k2 = g.k2.copy()
    k2[0, 0, 0] = 1.0
    oracle = -np.einsum("ixyz,ijxyz,jxyz->xyz", n, t_hat, n) / k2
    oracle[0, 0, 0] = 0.0
    assert np.max(np.abs(oracle - p.coeffs)) <= 1e-12 * max(np.max(np.abs(oracle)), 1e-30)
    assert p.coeffs[0, 0, 0] == 0.0


def test_nonlinear_zero_and_constant_advection():
    g = Grid(8)
    zero = SpectralField(g, np.zeros((3, 8, 8, 8), dtype=complex))
    v = random_solenoidal(g, seed=21)
    assert np.max(np.abs(nonlinear_term(zero, v).coeffs)) == 0.0

    # constant advecting velocity, single-mode u: pure transport 2 pi i (n.v) u_hat
    const = np.zeros((3, 8, 8, 8))
    const[0], const[1], const[2] = 0.3, -1.1, 0.7
    vconst = forward_transform(g, const)
    x = g.points()
    samples = np.zeros((3, 8, 8, 8))
    samples[2] = np.cos(2 * np.pi * (x[0] + x[1]))  # mode n = (1,1,0), u = e_z comp
    u = forward_transform(g, samples)
    out = nonlinear_term(u, vconst)
    nv = np.array([0.3, -1.1, 0.7])
    expected = u.coeffs * 0.0
    for nvec in [(1, 1, 0), (-1, -1, 0)]:
        fac = 2 * np.pi * 1j * (nv @ np.array(nvec))
        expected[2][nvec] = fac * u.coeffs[2][nvec]
    assert np.max(np.abs(out.coeffs - expected)) <= 1e-12 * np.max(np.abs(expected))


def test_nonlinear_matches_convolution_oracle():
    g = Grid(8)
    u = random_solenoidal(g, seed=31)
    v = random_solenoidal(g, seed=32)
    from lsns.spectral import advection_tensor

    t_hat = advection_tensor(u, v)
    for i in range(3):
        for j in range(3):
            oracle = convolution_oracle(v.coeffs[i], u.coeffs[j], g.dealias_cutoff)
            assert np.max(np.abs(t_hat[i, j] - oracle)) <= 1e-12 * np.max(np.abs(oracle))


def test_nonlinear_skew_symmetry():
    g = Grid(8)
    for seed in range(41, 44):
        u = random_solenoidal(g, seed=seed)
        v = random_solenoidal(g, seed=seed + 100)
        adv = nonlinear_term(u, v)
        inner = np.sum(np.conj(u.coeffs) * adv.coeffs).real
        scale = l2_norm(u) * l2_norm(adv)
        assert abs(inner) <= 1e-10 * max(scale, 1e-30)


def test_curl_cases():
    g = Grid(8)
    const = np.zeros((3, 8, 8, 8))
    const[0] = 1.0
    assert np.max(np.abs(curl(forward_transform(g, const)).coeffs)) < 1e-15

    x = g.points()
    samples = np.zeros((3, 8, 8, 8))
    samples[1] = np.sin(2 * np.pi * x[0])
    w = curl(forward_transform(g, samples))
    expected = np.zeros((3, 8, 8, 8))
    expected[2] = 2 * np.pi * np.cos(2 * np.pi * x[0])
    assert np.max(np.abs(inverse_transform(w) - expected)) <= 1e-12 * 2 * np.pi

    u = random_field(g, seed=51)
    w = curl(u)
    dw = divergence(w)
    assert np.max(np.abs(dw.coeffs)) <= 1e-12 * max(np.max(np.abs(w.coeffs)), 1e-30)


def test_synthesize_refines_exactly():
    g = Grid(8)
    u = random_solenoidal(g, seed=61)
    fine = synthesize(u, 16)
    # exact trig interpolation: subsampling the fine grid returns the coarse one
    coarse = inverse_transform(u)
    assert np.max(np.abs(fine[:, ::2, ::2, ::2] - coarse)) <= 1e-12 * np.max(np.abs(coarse))


def test_dealias_masks_high_modes():
    g = Grid(8)
    u = random_field(g, seed=71)
    d = dealias(u)
    assert np.max(np.abs(d.coeffs[:, ~g.dealias_mask])) == 0.0
