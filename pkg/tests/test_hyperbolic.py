import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from magbottle.eigencount import dense_spectrum, inertia_count
from magbottle.fields import FieldModel
from magbottle.hyperbolic import (LABEL, LogGrid, LogRectangle, MeshTooLarge, PipelineError, SolverPolicy,
                                  TruncationError, adapted_partition, assemble_from_form, assemble_operator,
                                  build_mesh, cell_field_ratio, count_eigenvalues, discretize, flux_area_cap,
                                  sample_link_potential, sublevel_region, truncation_domain)

J1 = FieldModel.from_spec("bottle-j1")


def test_constant_field_has_no_truncation():
    with pytest.raises(TruncationError):
        truncation_domain(FieldModel.constant(1), 5.0)


def test_t_extent_lambda20():
    # y + 1/y <= 40 on the axis x = 0: y = 20 -+ sqrt(399)
    reg = sublevel_region(J1, 40.0)
    t_hi = math.log(20 + math.sqrt(399))
    lo, hi = reg.t_extent
    assert abs(hi - t_hi) <= reg.dt and abs(lo + t_hi) <= reg.dt
    dom = truncation_domain(J1, 20.0)
    assert dom.t_hi > t_hi and dom.t_lo < -t_hi


def test_domain_grows_with_lambda():
    small = truncation_domain(J1, 20.0)
    big = truncation_domain(J1, 40.0)
    assert big.contains(small)
    assert big.area > small.area
    assert big.t_hi > small.t_hi and big.x_hi > small.x_hi


def test_low_field_no_subdivision():
    part = adapted_partition(LogRectangle(0.0, 0.0, 3.0, 2.0), FieldModel.constant(0.8))
    assert np.all(part.eps == 1.0)


def test_partition_covers_and_bounds():
    dom = truncation_domain(J1, 10.0)
    part = adapted_partition(dom, J1)
    assert part.area() == pytest.approx(dom.area, rel=1e-12)
    lo, hi = part.eps_bounds()
    assert np.all(part.eps <= hi * (1 + 1e-12))
    assert np.all(part.eps >= lo)


def test_partition_cells_disjoint():
    dom = LogRectangle(0.0, 0.5, 4.0, 1.5)
    part = adapted_partition(dom, J1)
    # every point of a fine lattice lies in exactly one closed-open cell
    xs = np.linspace(dom.x_lo + 1e-6, dom.x_hi - 1e-6, 97)
    ts = np.linspace(dom.t_lo + 1e-6, dom.t_hi - 1e-6, 89)
    X, T = np.meshgrid(xs, ts)
    X, T = X.ravel(), T.ravel()
    hits = ((part.x_lo[:, None] <= X) & (X < part.x_hi[:, None])
            & (part.t_lo[:, None] <= T) & (T < part.t_hi[:, None])).sum(axis=0)
    assert np.all(hits == 1)


def test_cell_comparability():
    reg = sublevel_region(J1, 40.0)
    part = adapted_partition(reg.bounding, J1, region=reg)
    ratio = cell_field_ratio(part, J1, samples=5)
    assert ratio[part.b_center > 1].max() <= 4.0


def test_flux_cap_arithmetic():
    assert flux_area_cap(50.0) == pytest.approx(math.pi / 100)
    assert flux_area_cap(1.0) == pytest.approx(math.pi / 2)


def test_uniform_mesh_low_flux():
    dom = LogRectangle(0.0, 0.0, 5.0, 5.0)
    part = adapted_partition(dom, FieldModel.constant(1.0))
    grid = build_mesh(dom, part, FieldModel.constant(1.0), graded=False, ppc=3)
    assert grid.hx[0] * grid.ht <= math.pi / 2


def test_mesh_cap_error_names_cap():
    reg = sublevel_region(J1, 40.0)
    dom = reg.bounding
    part = adapted_partition(dom, J1, region=reg)
    with pytest.raises(MeshTooLarge, match="max_nodes=1000"):
        build_mesh(dom, part, J1, region=reg, max_nodes=1000)


def test_free_stub_is_dirichlet_laplacian():
    nx, nt = 9, 7
    dom = LogRectangle(0.0, 0.0, 1.0, 1.0)
    grid = LogGrid.uniform(dom, nx, nt)
    op = assemble_from_form(sample_link_potential(grid, None, weight_fn=lambda t: 1.0))
    hx, ht = grid.hx[0], grid.ht
    lap = lambda m, h: (2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)) / h ** 2
    ref = np.kron(lap(nt, ht), np.eye(nx)) + np.kron(np.eye(nt), lap(nx, hx)) + 0.25 * np.eye(nx * nt)
    np.testing.assert_allclose(op.matrix.toarray(), ref, rtol=1e-13, atol=1e-12)


def test_assembly_exactly_hermitian():
    d = discretize(J1, 6.0, SolverPolicy(), h=0.15)
    m = d.operator.matrix
    assert (m - m.conj().T).count_nonzero() == 0


def test_lowest_eigenvalue_above_field_minus_half():
    grid = LogGrid.uniform(LogRectangle(0.0, 0.0, 1.5, 1.0), 30, 30)
    op = assemble_operator(J1, grid)
    x, t = grid.nodes()
    assert dense_spectrum(op)[0] >= J1.intensity(x, np.exp(t)).min() - 0.5


def test_spectrum_above_quarter():
    d = discretize(J1, 4.0, SolverPolicy(), h=0.17)
    assert dense_spectrum(d.operator)[0] >= 0.25 - 10 * 0.17 ** 2


def test_small_hyperbolic_matrix_dense_oracle():
    d = discretize(J1, 4.0, SolverPolicy(), h=0.17)
    assert d.grid.n <= 2000
    spec = dense_spectrum(d.operator)
    for lam in (2.0, 4.0, 7.5, 12.0, 30.0):
        for method in ("dense", "band", "sparse"):
            assert inertia_count(d.operator, lam, method=method).N == int(np.sum(spec < lam))


def _node_keys(grid):
    x, t = grid.nodes()
    return {(round(a / grid.h * 1024), round(b / grid.h)): i for i, (a, b) in enumerate(zip(x, t))}


def test_domain_enlargement_is_principal_submatrix():
    h = 0.15
    small = discretize(J1, 5.0, SolverPolicy(), h=h)
    big = discretize(J1, 5.0, SolverPolicy(), kappa=4.0, h=h)
    ks, kb = _node_keys(small.grid), _node_keys(big.grid)
    assert set(ks) <= set(kb)
    idx = np.array([kb[k] for k in ks])
    order = np.array(list(ks.values()))
    sub = big.operator.matrix[idx][:, idx]
    ref = small.operator.matrix[order][:, order]
    assert abs(sub - ref).max() < 1e-9
    for lam in (3.0, 5.0, 9.0):
        assert inertia_count(big.operator, lam).N >= inertia_count(small.operator, lam).N


def test_count_below_quarter_is_zero():
    res = count_eigenvalues(J1, 0.25)
    assert res.N == 0 and res.method == "form-bound"


def test_count_failure_is_stage_tagged():
    with pytest.raises(PipelineError) as info:
        count_eigenvalues(FieldModel.constant(2.0), 5.0)
    assert info.value.stage == "truncation"


def test_count_small_lambda_reports_indicators():
    res = count_eigenvalues(J1, 6.0)
    assert res.label == LABEL
    assert res.N == 6
    assert res.N_err_domain == 0 and res.N_err_mesh == 0
    assert set(res.runs) == {"base", "enlarged", "refined"}


@pytest.mark.slow
def test_count_lambda20_against_arpack():
    d = discretize(J1, 20.0, SolverPolicy())
    N = inertia_count(d.operator, 20.0).N
    w = np.sort(spla.eigsh(d.operator.matrix, k=N + 8, sigma=0.0, which="LM", return_eigenvectors=False))
    assert N == int(np.sum(w < 20.0))
    assert N == 79
