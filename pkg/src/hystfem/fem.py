"""Uniform simplicial meshes on (0,1)^d and P1 assembly, d = 1, 2, 3.

Squares split along the main diagonal (lower-left to upper-right) and cubes
split into the six Kuhn tetrahedra around the main diagonal; both patterns
reproduce themselves under halving, so meshes with n and 2n cells per side
give nested P1 spaces and coarse functions prolong exactly onto fine nodes.
Vertices are ordered lexicographically by integer coordinate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class Mesh:
    dim: int
    n_per_side: int
    vertices: np.ndarray       # (n_vertices, dim)
    elements: np.ndarray       # (n_elements, dim + 1) vertex indices
    boundary_nodes: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n_per_side

    def lattice_shape(self) -> tuple[int, ...]:
        return (self.n_per_side + 1,) * self.dim

    def to_text(self) -> str:
        """Line-oriented dump (counts, coordinates, connectivity) for debugging."""
        lines = [f"dim {self.dim} n {self.n_per_side}",
                 f"vertices {self.n_vertices}"]
        lines += [" ".join(f"{c:.17g}" for c in v) for v in self.vertices]
        lines.append(f"elements {self.n_elements}")
        lines += [" ".join(str(i) for i in e) for e in self.elements]
        return "\n".join(lines) + "\n"


def build_uniform_mesh(dim: int, n: int) -> Mesh:
    """n cells per side of the unit interval/square/cube."""
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if n < 1:
        raise ValueError("n must be at least 1")
    axes = [np.arange(n + 1)] * dim
    grids = np.meshgrid(*axes, indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    vertices = idx / float(n)
    boundary = np.nonzero(np.any((idx == 0) | (idx == n), axis=1))[0]

    def flat(multi):
        out = multi[0]
        for k in range(1, dim):
            out = out * (n + 1) + multi[k]
        return out

    cell_axes = [np.arange(n)] * dim
    cells = np.stack([g.ravel() for g in np.meshgrid(*cell_axes, indexing="ij")], axis=1)
    elements = []
    if dim == 1:
        i = cells[:, 0]
        elements = np.stack([i, i + 1], axis=1)
    elif dim == 2:
        i, j = cells[:, 0], cells[:, 1]
        v00 = flat((i, j))
        v10 = flat((i + 1, j))
        v01 = flat((i, j + 1))
        v11 = flat((i + 1, j + 1))
        tris = [np.stack([v00, v10, v11], axis=1), np.stack([v00, v11, v01], axis=1)]
        elements = np.concatenate(tris, axis=0)
    else:
        i, j, k = cells[:, 0], cells[:, 1], cells[:, 2]
        base = np.stack([i, j, k], axis=1)
        eye = np.eye(3, dtype=int)
        tets = []
        for perm in itertools.permutations(range(3)):
            c0 = base
            c1 = c0 + eye[perm[0]]
            c2 = c1 + eye[perm[1]]
            c3 = c2 + eye[perm[2]]
            tets.append(np.stack([
                flat(tuple(c0.T)), flat(tuple(c1.T)), flat(tuple(c2.T)), flat(tuple(c3.T)),
            ], axis=1))
        elements = np.concatenate(tets, axis=0)
    return Mesh(dim, n, vertices, np.asarray(elements, dtype=np.int64), boundary)


def _element_geometry(mesh: Mesh):
    X = mesh.vertices[mesh.elements]            # (ne, d+1, d)
    E = X[:, 1:, :] - X[:, :1, :]               # (ne, d, d) edge vectors as rows
    if mesh.dim == 1:
        det = E[:, 0, 0]
        Einv = 1.0 / det
        grads_rest = Einv[:, None, None]
    else:
        det = np.linalg.det(E)
        Einv = np.linalg.inv(E)
        # grad of barycentric m (m>=1) is column m-1 of E^{-1}
        grads_rest = np.transpose(Einv, (0, 2, 1))
    vol = np.abs(det) / math.factorial(mesh.dim)
    grads = np.empty((mesh.n_elements, mesh.dim + 1, mesh.dim))
    grads[:, 1:, :] = grads_rest
    grads[:, 0, :] = -grads_rest.sum(axis=1)
    return vol, grads


def _assemble(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    d1 = mesh.dim + 1
    ele = mesh.elements
    rows = np.repeat(ele, d1, axis=1).ravel()
    cols = np.tile(ele, (1, d1)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)),
                      shape=(mesh.n_vertices, mesh.n_vertices))
    return A.tocsr()


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix, int psi_i psi_j."""
    vol, _ = _element_geometry(mesh)
    d = mesh.dim
    base = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    local = vol[:, None, None] * base[None, :, :]
    return _assemble(mesh, local)


def assemble_lumped_mass(mesh: Mesh) -> np.ndarray:
    """Diagonal of the row-sum lumped mass matrix (= int I_h psi_i)."""
    vol, _ = _element_geometry(mesh)
    d = mesh.dim
    out = np.zeros(mesh.n_vertices)
    share = np.repeat(vol / (d + 1), d + 1)
    np.add.at(out, mesh.elements.ravel(), share)
    return out


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix, int grad psi_j . grad psi_i."""
    vol, grads = _element_geometry(mesh)
    local = np.einsum("ead,ebd->eab", grads, grads) * vol[:, None, None]
    return _assemble(mesh, local)


def apply_dirichlet(A: sp.csr_matrix, rhs: np.ndarray, boundary_values: dict,
                    mesh: Mesh | None = None) -> tuple[sp.csr_matrix, np.ndarray]:
    """Constrain nodes to prescribed values, symmetrically.

    Constrained rows and columns are eliminated (couplings moved to the
    right-hand side) and replaced by the identity, so the modified matrix
    stays symmetric and positive definite on the free nodes.
    """
    n = rhs.size
    nodes = np.array(sorted(boundary_values), dtype=np.int64)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= n):
        raise ValueError("boundary node index out of range")
    if mesh is not None and nodes.size:
        if not np.isin(nodes, mesh.boundary_nodes).all():
            raise ValueError("some constrained nodes are not mesh boundary nodes")
    xb = np.zeros(n)
    for k, v in boundary_values.items():
        xb[k] = v
    free = np.ones(n)
    free[nodes] = 0.0
    rhs_new = free * (rhs - A @ xb) + xb
    Df = sp.diags(free)
    A_new = (Df @ A @ Df + sp.diags(1.0 - free)).tocsr()
    return A_new, rhs_new


@dataclass
class FeFunction:
    """Nodal values on a mesh, flat in lexicographic vertex order."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError("nodal vector length must equal the vertex count")


def prolong_doubling(values: np.ndarray, dim: int) -> np.ndarray:
    """Exact P1 prolongation from an (n+1)^d lattice to (2n+1)^d.

    Points with an odd index along a subset S of axes sit at the midpoint of
    the main diagonal of the sub-face spanned by S, so their value is the
    average of the two diagonal corner values.
    """
    shape = values.shape
    n = shape[0] - 1
    out = np.zeros(tuple(2 * (s - 1) + 1 for s in shape))
    for pattern in itertools.product((0, 1), repeat=dim):
        target = tuple(slice(1, None, 2) if p else slice(0, None, 2) for p in pattern)
        lo = tuple(slice(0, -1) if p else slice(None) for p in pattern)
        hi = tuple(slice(1, None) if p else slice(None) for p in pattern)
        if any(pattern):
            out[target] = 0.5 * (values[lo] + values[hi])
        else:
            out[target] = values
    return out


def prolong_to(u: FeFunction, fine_mesh: Mesh) -> FeFunction:
    """Prolong a coarse nodal function onto a nested finer mesh."""
    nc, nf = u.mesh.n_per_side, fine_mesh.n_per_side
    if u.mesh.dim != fine_mesh.dim:
        raise ValueError("dimension mismatch")
    ratio = nf / nc
    k = round(math.log2(ratio)) if ratio >= 1 else -1
    if k < 0 or nc * 2**k != nf:
        raise ValueError(
            f"meshes are not nested: fine n={nf} is not a power-of-two multiple of coarse n={nc}"
        )
    vals = u.values.reshape(u.mesh.lattice_shape())
    for _ in range(k):
        vals = prolong_doubling(vals, u.mesh.dim)
    return FeFunction(fine_mesh, vals.ravel())


def error_norms(u_ref: FeFunction, u_coarse: FeFunction) -> tuple[float, float]:
    """L2 and full H1 norms of (u_ref - prolongation of u_coarse).

    Both integrals are exact on the fine mesh: the squared L2 error is
    e' M e and the squared H1 seminorm is e' K e for the fine-mesh mass and
    stiffness matrices.
    """
    P = prolong_to(u_coarse, u_ref.mesh)
    e = u_ref.values - P.values
    M = assemble_mass(u_ref.mesh)
    K = assemble_stiffness(u_ref.mesh)
    l2sq = float(e @ (M @ e))
    h1sq = l2sq + float(e @ (K @ e))
    return math.sqrt(max(l2sq, 0.0)), math.sqrt(max(h1sq, 0.0))
