import numpy as np
import pytest
import scipy.sparse.linalg as spla

from hystfem.fem import (
    FeFunction,
    apply_dirichlet,
    assemble_lumped_mass,
    assemble_mass,
    assemble_stiffness,
    build_uniform_mesh,
    error_norms,
    prolong_to,
)


class TestMesh:
    def test_1d(self):
        m = build_uniform_mesh(1, 4)
        assert m.n_vertices == 5 and m.n_elements == 4
        assert set(m.boundary_nodes) == {0, 4}

    def test_2d_single_square(self):
        m = build_uniform_mesh(2, 1)
        assert m.n_vertices == 4 and m.n_elements == 2

    def test_3d_kuhn_volumes(self):
        m = build_uniform_mesh(3, 1)
        assert m.n_vertices == 8 and m.n_elements == 6
        X = m.vertices[m.elements]
        E = X[:, 1:, :] - X[:, :1, :]
        vols = np.abs(np.linalg.det(E)) / 6.0
        assert np.allclose(vols, 1.0 / 6.0)
        assert abs(vols.sum() - 1.0) < 1e-14

    def test_rejects_bad_dim(self):
        with pytest.raises(ValueError):
            build_uniform_mesh(4, 2)
        with pytest.raises(ValueError):
            build_uniform_mesh(2, 0)

    def test_element_volumes_positive(self):
        for dim in (1, 2, 3):
            m = build_uniform_mesh(dim, 3)
            X = m.vertices[m.elements]
            E = X[:, 1:, :] - X[:, :1, :]
            det = E[:, 0, 0] if dim == 1 else np.linalg.det(E)
            assert np.all(np.abs(det) > 0)

    def test_text_dump(self):
        txt = build_uniform_mesh(2, 1).to_text()
        assert txt.startswith("dim 2 n 1\nvertices 4\n")
        assert "elements 2" in txt


class TestAssembly:
    def test_1d_exact_matrices(self):
        m = build_uniform_mesh(1, 2)
        h = 0.5
        M = assemble_mass(m).toarray()
        K = assemble_stiffness(m).toarray()
        D = assemble_lumped_mass(m)
        assert np.allclose(M, h / 6 * np.array([[2, 1, 0], [1, 4, 1], [0, 1, 2]]))
        assert np.allclose(K, 1 / h * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]))
        assert np.allclose(D, [h / 2, h, h / 2])

    @pytest.mark.parametrize("dim,n", [(1, 5), (2, 4), (3, 3)])
    def test_row_sums_equal_lumped(self, dim, n):
        m = build_uniform_mesh(dim, n)
        M = assemble_mass(m)
        D = assemble_lumped_mass(m)
        assert np.allclose(np.asarray(M.sum(axis=1)).ravel(), D)
        assert abs(D.sum() - 1.0) < 1e-13  # partition of unity over the unit box

    @pytest.mark.parametrize("dim,n", [(1, 6), (2, 5), (3, 3)])
    def test_stiffness_kills_constants(self, dim, n):
        K = assemble_stiffness(build_uniform_mesh(dim, n))
        assert np.abs(K @ np.ones(K.shape[0])).max() < 1e-12

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_symmetry_and_psd(self, dim, rng):
        m = build_uniform_mesh(dim, 3)
        for A in (assemble_mass(m), assemble_stiffness(m)):
            d = (A - A.T).tocoo()
            asym = np.abs(d.data).max() if d.nnz else 0.0
            assert asym < 1e-14
            for _ in range(5):
                z = rng.normal(size=A.shape[0])
                assert z @ (A @ z) > -1e-12

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_entry_scaling_under_refinement(self, dim):
        # interior diagonal entries scale like h^dim (mass) and h^(dim-2)
        # (stiffness) between the n and 2n meshes
        m1, m2 = build_uniform_mesh(dim, 2), build_uniform_mesh(dim, 4)
        c1 = (np.isclose(m1.vertices, 0.5)).all(axis=1)
        c2 = (np.isclose(m2.vertices, 0.5)).all(axis=1)
        i1 = int(np.nonzero(c1)[0][0]) if dim > 1 else 1
        i2 = int(np.nonzero(c2)[0][0]) if dim > 1 else 2
        M1, M2 = assemble_mass(m1), assemble_mass(m2)
        K1, K2 = assemble_stiffness(m1), assemble_stiffness(m2)
        assert np.isclose(M1[i1, i1] / M2[i2, i2], 2.0**dim)
        assert np.isclose(K1[i1, i1] / K2[i2, i2], 2.0 ** (dim - 2))
        D1, D2 = assemble_lumped_mass(m1), assemble_lumped_mass(m2)
        assert np.isclose(D1[i1] / D2[i2], 2.0**dim)


class TestDirichlet:
    def test_zero_everything(self):
        m = build_uniform_mesh(1, 4)
        A = assemble_stiffness(m)
        A2, b2 = apply_dirichlet(A, np.zeros(5), {0: 0.0, 4: 0.0}, m)
        u = spla.spsolve(A2.tocsc(), b2)
        assert np.allclose(u, 0.0)

    def test_linear_ramp(self):
        m = build_uniform_mesh(1, 8)
        A = assemble_stiffness(m)
        A2, b2 = apply_dirichlet(A, np.zeros(9), {0: 0.0, 8: 1.0}, m)
        u = spla.spsolve(A2.tocsc(), b2)
        assert np.allclose(u, m.vertices[:, 0], atol=1e-13)

    def test_fully_constrained(self):
        m = build_uniform_mesh(1, 2)
        A = assemble_mass(m) + assemble_stiffness(m)
        vals = {0: 1.0, 1: -2.0, 2: 0.5}
        A2, b2 = apply_dirichlet(A, np.zeros(3), vals, None)
        u = spla.spsolve(A2.tocsc(), b2)
        assert np.allclose(u, [1.0, -2.0, 0.5])

    def test_remains_spd_and_symmetric(self, rng):
        m = build_uniform_mesh(2, 4)
        A = assemble_mass(m) + assemble_stiffness(m)
        bc = {int(i): 0.0 for i in m.boundary_nodes}
        A2, _ = apply_dirichlet(A, np.zeros(m.n_vertices), bc, m)
        d = (A2 - A2.T)
        assert (np.abs(d.data).max() if d.nnz else 0.0) < 1e-14
        for _ in range(5):
            z = rng.normal(size=m.n_vertices)
            assert z @ (A2 @ z) > 0

    def test_rejects_bad_nodes(self):
        m = build_uniform_mesh(1, 4)
        A = assemble_mass(m)
        with pytest.raises(ValueError):
            apply_dirichlet(A, np.zeros(5), {99: 0.0}, m)
        with pytest.raises(ValueError):
            apply_dirichlet(A, np.zeros(5), {2: 0.0}, m)  # interior node


class TestErrorNorms:
    def test_identity_gives_zero(self, rng):
        mc, mf = build_uniform_mesh(2, 4), build_uniform_mesh(2, 16)
        uc = FeFunction(mc, rng.normal(size=mc.n_vertices))
        uref = prolong_to(uc, mf)
        l2, h1 = error_norms(uref, uc)
        assert l2 == 0.0 and h1 == 0.0

    def test_constants(self):
        mc, mf = build_uniform_mesh(1, 4), build_uniform_mesh(1, 8)
        l2, h1 = error_norms(FeFunction(mf, np.ones(9)), FeFunction(mc, np.zeros(5)))
        assert abs(l2 - 1.0) < 1e-14
        assert abs(h1 - 1.0) < 1e-14  # gradient of a constant contributes nothing

    def test_rejects_non_nested(self):
        mc, mf = build_uniform_mesh(1, 3), build_uniform_mesh(1, 8)
        with pytest.raises(ValueError):
            error_norms(FeFunction(mf, np.zeros(9)), FeFunction(mc, np.zeros(4)))

    def test_nestedness_roundtrip(self, rng):
        for dim in (1, 2, 3):
            mc = build_uniform_mesh(dim, 2)
            mf = build_uniform_mesh(dim, 8)
            vals = rng.normal(size=mc.n_vertices)
            P = prolong_to(FeFunction(mc, vals), mf)
            shape = mf.lattice_shape()
            back = P.values.reshape(shape)[(slice(None, None, 4),) * dim].ravel()
            assert np.allclose(back, vals)

    def test_linear_functions_prolong_exactly(self):
        for dim in (1, 2, 3):
            mc, mf = build_uniform_mesh(dim, 2), build_uniform_mesh(dim, 8)
            coef = np.arange(1, dim + 1, dtype=float)
            pc = FeFunction(mc, mc.vertices @ coef)
            assert np.allclose(prolong_to(pc, mf).values, mf.vertices @ coef)

    def test_monte_carlo_oracle_2d(self, rng):
        # stratified Monte-Carlo integration of the squared error against the
        # assembled-matrix path, on a random coarse function
        mc, mf = build_uniform_mesh(2, 2), build_uniform_mesh(2, 4)
        uc = FeFunction(mc, rng.normal(size=mc.n_vertices))
        uref = FeFunction(mf, rng.normal(size=mf.n_vertices))
        l2, h1 = error_norms(uref, uc)

        e = uref.values - prolong_to(uc, mf).values
        grid = e.reshape(mf.lattice_shape())
        n = mf.n_per_side
        cells = 62_500  # samples per cell -> 1e6 total over the 4x4 fine grid
        total_sq = 0.0
        total_grad = 0.0
        count = 0
        for i in range(n):
            for j in range(n):
                xs = rng.uniform(size=(cells, 2))
                fx, fy = xs[:, 0], xs[:, 1]
                u00 = grid[i, j]
                u10 = grid[i + 1, j]
                u01 = grid[i, j + 1]
                u11 = grid[i + 1, j + 1]
                lower = fx >= fy
                vals = np.where(
                    lower,
                    u00 + (u10 - u00) * fx + (u11 - u10) * fy,
                    u00 + (u11 - u01) * fx + (u01 - u00) * fy,
                )
                gx = np.where(lower, (u10 - u00), (u11 - u01)) * n
                gy = np.where(lower, (u11 - u10), (u01 - u00)) * n
                total_sq += vals @ vals
                total_grad += gx @ gx + gy @ gy
                count += cells
        l2_mc = np.sqrt(total_sq / count)
        h1_mc = np.sqrt((total_sq + total_grad) / count)
        assert abs(l2_mc - l2) / l2 < 1e-3
        assert abs(h1_mc - h1) / h1 < 1e-3
