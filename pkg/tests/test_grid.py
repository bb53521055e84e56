import math

import numpy as np
import pytest
from scipy import integrate as sint

from chemotaxsim.errors import ContractViolation, DataIntegrityError, ParameterError
from chemotaxsim.grid import (GridSpec, cell_grad_sq, div_flux, face_gradient, grad_l2_sq, integrate,
                              laplacian, lp_norm, read_field, write_field)


def test_gridspec_validation():
    with pytest.raises(ParameterError):
        GridSpec((1, 4), (1.0, 1.0))
    with pytest.raises(ParameterError):
        GridSpec((4, 4), (1.0, 0.0))
    with pytest.raises(ParameterError):
        GridSpec((4, 4, 4, 4), (1.0,) * 4)
    with pytest.raises(ParameterError):
        GridSpec((4, 4), (1.0,))
    g = GridSpec((4, 8), (2.0, 1.0))
    assert g.spacing == (0.5, 0.125)
    assert g.cell_volume == 0.0625
    assert g.size == 32


def test_integrate_constant_and_one_cell_bump():
    g = GridSpec.uniform(2, 4, 2.0)
    assert integrate(g, g.full(3.0)) == pytest.approx(12.0, rel=1e-15)
    f = np.zeros(g.cells)
    f[1, 2] = 1.0
    assert integrate(g, f) == g.cell_volume


def test_integrate_smooth_against_quadrature():
    g = GridSpec((40, 30), (2.0, 1.5))
    x, y = g.mesh()
    f = np.exp(-x) * np.sin(y) + 1.0
    exact, _ = sint.dblquad(lambda yy, xx: np.exp(-xx) * np.sin(yy) + 1.0, 0, 2.0, 0, 1.5)
    # midpoint rule is second order
    assert integrate(g, f) == pytest.approx(exact, rel=2e-4)


def test_integrate_rejects_nonfinite_and_bad_shape():
    g = GridSpec.uniform(1, 5)
    f = g.full(1.0)
    f[2] = np.nan
    with pytest.raises(DataIntegrityError):
        integrate(g, f)
    with pytest.raises(ParameterError):
        integrate(g, np.ones(6))


def test_lp_norm():
    g = GridSpec.uniform(2, 4, 1.0)
    f = g.full(-2.0)
    assert lp_norm(g, f, 1) == pytest.approx(2.0)
    assert lp_norm(g, f, 3) == pytest.approx(2.0)
    assert lp_norm(g, f, math.inf) == 2.0
    with pytest.raises(ParameterError):
        lp_norm(g, f, 0.5)


def test_face_gradient_walls_are_zero():
    g = GridSpec((5, 3), (1.0, 1.0))
    x, y = g.mesh()
    gx, gy = face_gradient(g, np.broadcast_to(x * x + y, g.cells))
    assert gx.shape == (6, 3) and gy.shape == (5, 4)
    assert np.all(gx[0] == 0) and np.all(gx[-1] == 0)
    assert np.all(gy[:, 0] == 0) and np.all(gy[:, -1] == 0)
    assert np.allclose(gy[:, 1:-1], 1.0)


def test_grad_l2_sq_linear_field():
    # f = a x: every interior x-face carries gradient a; there are (n - 1) of them per row.
    n, L, a = 10, 2.0, 3.0
    g = GridSpec((n, n), (L, L))
    x, _ = g.mesh()
    f = np.broadcast_to(a * x, g.cells)
    assert grad_l2_sq(g, f) == pytest.approx(a * a * (n - 1) / n * L * L, rel=1e-13)
    assert integrate(g, cell_grad_sq(g, f)) == pytest.approx(grad_l2_sq(g, f), rel=1e-13)


def test_grad_l2_sq_converges_for_cosine():
    L = 1.0
    errs = []
    for n in (16, 32, 64):
        g = GridSpec.uniform(2, n, L)
        x, y = g.mesh()
        f = np.cos(math.pi * x) * np.cos(math.pi * y)
        errs.append(abs(grad_l2_sq(g, f) - math.pi**2 / 2))
    assert math.log2(errs[0] / errs[1]) > 1.8
    assert math.log2(errs[1] / errs[2]) > 1.8


def test_div_flux_and_laplacian():
    g = GridSpec((6, 5, 4), (1.0, 2.0, 0.5))
    rng = np.random.default_rng(1)
    f = rng.random(g.cells)
    lap = laplacian(g, f)
    assert np.allclose(lap, div_flux(g, face_gradient(g, f)), atol=1e-11)
    # discrete conservation: the Laplacian integrates to zero
    assert abs(integrate(g, lap)) < 1e-12 * np.abs(lap).sum()


def test_div_flux_contract():
    g = GridSpec.uniform(2, 4)
    flux = [np.zeros((5, 4)), np.zeros((4, 5))]
    flux[0][0, 1] = 1.0
    with pytest.raises(ContractViolation):
        div_flux(g, flux)
    with pytest.raises(ParameterError):
        div_flux(g, [np.zeros((4, 4)), np.zeros((4, 5))])


def test_field_roundtrip(tmp_path):
    g = GridSpec((3, 4), (1.5, 0.25))
    f = np.random.default_rng(3).normal(size=g.cells) * 1e-7
    write_field(tmp_path / "u.chemofield", g, f, 0.1)
    g2, f2, t = read_field(tmp_path / "u.chemofield")
    assert g2 == g and t == 0.1
    assert np.array_equal(f, f2)
    head = (tmp_path / "u.chemofield").read_text().splitlines()[0]
    assert head == "CHEMOFIELD v1 dim=2 cells=3,4 lengths=1.5,0.25 t=0.10000000000000001"
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_read_field_rejects_truncated(tmp_path):
    g = GridSpec.uniform(1, 4)
    p = tmp_path / "f"
    write_field(p, g, g.full(1.0), 0.0)
    p.write_text("\n".join(p.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(DataIntegrityError):
        read_field(p)
