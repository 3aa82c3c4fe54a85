"""Structured tensor-product P1/Q1 meshes and their precomputed discrete operators.

All finite element integrals on uniform tensor-product cells factorize into products
of three 1D hat-function integrals per axis, so everything is assembled from
closed-form 1D tables (no runtime quadrature).  Edges are grouped into offset
classes (the 3^d - 1 lattice neighbor offsets, one canonical orientation each);
within a class every node appears at most once as either endpoint, which makes
scatter-accumulation plain vectorized indexing.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .physics import E_S, LAMBDA_MAX, Material, pv


def _axis_mass_table(n: int, h: float) -> np.ndarray:
    """1D hat-function mass integrals M[k, off] for offsets -1, 0, +1."""
    m = np.zeros((n, 3))
    m[:, 1] = 2.0 * h / 3.0
    m[0, 1] = m[-1, 1] = h / 3.0
    m[1:, 0] = h / 6.0
    m[:-1, 2] = h / 6.0
    return m


def _axis_grad_table(n: int) -> np.ndarray:
    """1D integrals C[k, off] of phi_k * phi'_{k+off} for offsets -1, 0, +1."""
    c = np.zeros((n, 3))
    c[0, 1] = -0.5
    c[-1, 1] = 0.5
    c[1:, 0] = -0.5
    c[:-1, 2] = 0.5
    return c


def _axis_lumped(n: int, h: float) -> np.ndarray:
    ell = np.full(n, h)
    ell[0] = ell[-1] = h / 2.0
    return ell


@dataclass(frozen=True)
class StructuredGrid:
    """Uniform tensor-product grid with lexicographic (x-fastest) node numbering."""

    dim: int
    lows: np.ndarray
    highs: np.ndarray
    shape: tuple[int, ...]  # nodes per axis

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3: {self.dim}")
        if len(self.shape) != self.dim or any(n < 2 for n in self.shape):
            raise ValueError("need at least 2 nodes per axis")
        if np.any(self.highs <= self.lows):
            raise ValueError("extents must have positive length per axis")

    @property
    def h(self) -> np.ndarray:
        return (self.highs - self.lows) / (np.array(self.shape) - 1)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return tuple(n - 1 for n in self.shape)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cell_shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.linspace(self.lows[axis], self.highs[axis], self.shape[axis])

    def node_coords(self) -> np.ndarray:
        """All node coordinates, shape (n_nodes, dim), x varying fastest."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes[::-1], indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh[::-1]], axis=1)

    def node_strides(self) -> np.ndarray:
        """Flat-index strides per axis (x stride 1)."""
        return np.cumprod([1, *self.shape[:-1]])

    def cell_strides(self) -> np.ndarray:
        return np.cumprod([1, *self.cell_shape[:-1]])

    def cell_centers(self) -> np.ndarray:
        axes = [self.axis_coords(a) for a in range(self.dim)]
        centers = [0.5 * (ax[:-1] + ax[1:]) for ax in axes]
        mesh = np.meshgrid(*centers[::-1], indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh[::-1]], axis=1)


def build_grid(dim: int, extents, nodes_per_axis) -> StructuredGrid:
    """Create a uniform tensor-product grid.

    Args:
        dim: 1, 2 or 3
        extents: sequence of (lo, hi) pairs, one per axis
        nodes_per_axis: node count per axis (scalar in 1D or sequence)
    """
    extents = np.atleast_2d(np.asarray(extents, dtype=float))
    if np.isscalar(nodes_per_axis):
        nodes_per_axis = [int(nodes_per_axis)]
    shape = tuple(int(n) for n in np.atleast_1d(nodes_per_axis))
    if extents.shape != (dim, 2):
        raise ValueError(f"extents must be {dim} (lo, hi) pairs, got {extents.shape}")
    return StructuredGrid(dim=dim, lows=extents[:, 0].copy(), highs=extents[:, 1].copy(), shape=shape)


@dataclass
class EdgeBlock:
    """One lattice offset class of node pairs (i, j = i + offset).

    Node indices within a block are unique per endpoint column, so accumulation
    onto nodes is plain fancy-indexed assignment.
    """

    offset: tuple[int, ...]
    i: np.ndarray  # (E,) flat node indices
    j: np.ndarray  # (E,)
    c_ij: np.ndarray  # (E, d) divergence coefficients int(phi_i grad phi_j)
    c_ji: np.ndarray  # (E, d)
    d_ij: np.ndarray  # (E,) graph viscosity = lambda_max * max(|c_ij|, |c_ji|)
    m_ij: np.ndarray  # (E,) consistent mass entries
    scatter_geom: np.ndarray  # (E,) sum over shared cells of int(phi_i phi_j)/X_S


@dataclass
class BoundaryFace:
    axis: int
    side: int  # 0 = low, 1 = high
    nodes: np.ndarray  # (F,) flat node indices
    weight: np.ndarray  # (F,) int_F phi_i ds
    normal: np.ndarray  # (d,) outward unit normal
    coords: np.ndarray  # (F, d) node coordinates


@dataclass
class DiscreteOperators:
    """All precomputed discrete operators for one grid + material layout."""

    grid: StructuredGrid
    lumped_mass: np.ndarray  # (N,) m_i
    edge_blocks: list[EdgeBlock]
    faces: list[BoundaryFace]
    materials: list[Material]
    cell_material: np.ndarray  # (n_cells,) index into materials
    node_material: np.ndarray  # (N,) index into materials (upstream cell rule)
    node_beta: np.ndarray
    node_p: np.ndarray
    node_rho: np.ndarray
    scatter_geom_node: np.ndarray  # (N,) sum over adjacent cells of int(phi_i)/X_S
    boundary_weight: np.ndarray  # (N,) total int_Gamma phi_i ds (0 for interior)
    cfl_geometry: np.ndarray = field(init=False)  # (N,) 2*(sum_j d_ij + d_Gamma)/m_i

    def __post_init__(self):
        sum_d = np.zeros(self.grid.n_nodes)
        for blk in self.edge_blocks:
            sum_d[blk.i] += blk.d_ij
            sum_d[blk.j] += blk.d_ij
        d_gamma = 0.5 * LAMBDA_MAX * self.boundary_weight
        self.cfl_geometry = 2.0 * (sum_d + d_gamma) / self.lumped_mass

    def stopping_power_nodes(self, e: float) -> np.ndarray:
        """Nodal stopping power S_i(e) from each node's material parameters."""
        return e ** (1.0 - self.node_p) / (self.node_beta * self.node_p)

    def scattering_mass(self, e: float) -> np.ndarray:
        """Lumped scattering masses m_i^T = int(T phi_i) at energy e."""
        return (E_S / pv(e)) ** 2 * self.scatter_geom_node

    def edge_scattering_mass(self, blk: EdgeBlock, e: float) -> np.ndarray:
        """Consistent scattering masses m_ij^T for one edge block at energy e."""
        return (E_S / pv(e)) ** 2 * blk.scatter_geom


def _canonical_offsets(dim: int) -> list[tuple[int, ...]]:
    """Half of the 3^d - 1 neighbor offsets: first nonzero component positive."""
    offsets = []
    for off in itertools.product((-1, 0, 1), repeat=dim):
        nz = next((o for o in off if o != 0), 0)
        if nz > 0:
            offsets.append(off)
    return offsets


def _outer_flat(vecs: list[np.ndarray]) -> np.ndarray:
    """Outer product of per-axis vectors (given x, y, z order), flattened x-fastest."""
    out = vecs[-1]
    for v in vecs[-2::-1]:
        out = np.multiply.outer(out, v)
    # out now has axes ordered (slowest ... fastest) = (z, y, x); C-flatten keeps x fastest
    return out.reshape(-1)


def assemble_operators(grid: StructuredGrid, cell_materials) -> DiscreteOperators:
    """Assemble lumped/consistent masses, divergence and viscosity coefficients,
    scattering-mass geometry and boundary weights.

    Args:
        grid: the structured grid
        cell_materials: Material per cell (flat array/list, x-fastest ordering),
            or a single Material for homogeneous media.
    """
    dim = grid.dim
    shape = grid.shape
    h = grid.h
    strides = grid.node_strides()
    cstrides = grid.cell_strides()

    if isinstance(cell_materials, Material):
        cell_materials = [cell_materials] * grid.n_cells
    cell_materials = list(cell_materials)
    if len(cell_materials) != grid.n_cells:
        raise ValueError(f"need one material per cell ({grid.n_cells}), got {len(cell_materials)}")
    materials: list[Material] = []
    mat_index: dict[str, int] = {}
    cell_material = np.empty(grid.n_cells, dtype=np.intp)
    for k, mat in enumerate(cell_materials):
        if mat.name not in mat_index:
            mat_index[mat.name] = len(materials)
            materials.append(mat)
        cell_material[k] = mat_index[mat.name]
    inv_xs_cell = np.array([1.0 / m.x_s for m in materials])[cell_material]

    mass_tab = [_axis_mass_table(shape[a], h[a]) for a in range(dim)]
    grad_tab = [_axis_grad_table(shape[a]) for a in range(dim)]
    lump_tab = [_axis_lumped(shape[a], h[a]) for a in range(dim)]

    lumped = _outer_flat(lump_tab)

    # nodal material via the upstream (lower-index) adjacent cell
    node_idx_axes = [np.arange(shape[a]) for a in range(dim)]
    owning_cell_axes = [np.maximum(idx - 1, 0) for idx in node_idx_axes]
    node_cell = np.zeros(grid.n_nodes, dtype=np.intp)
    for a in range(dim):
        node_cell += _broadcast_axis_int(owning_cell_axes[a] * cstrides[a], a, shape)
    node_material = cell_material[node_cell]
    node_beta = np.array([m.beta for m in materials])[node_material]
    node_p = np.array([m.p for m in materials])[node_material]
    node_rho = np.array([m.rho for m in materials])[node_material]

    # nodal scattering geometry: sum over adjacent cells of (prod_a h_a/2) / X_S
    scatter_node = np.zeros(grid.n_nodes)
    cell_weight = float(np.prod(h / 2.0))
    for cell_off in itertools.product((-1, 0), repeat=dim):
        cell_axes = [node_idx_axes[a] + cell_off[a] for a in range(dim)]
        valid_axes = [(c >= 0) & (c <= shape[a] - 2) for a, c in enumerate(cell_axes)]
        flat_cell = np.zeros(grid.n_nodes, dtype=np.intp)
        valid = np.ones(grid.n_nodes, dtype=bool)
        for a in range(dim):
            flat_cell += _broadcast_axis_int(np.clip(cell_axes[a], 0, shape[a] - 2) * cstrides[a], a, shape)
            valid &= _broadcast_axis_bool(valid_axes[a], a, shape)
        scatter_node += np.where(valid, inv_xs_cell[flat_cell] * cell_weight, 0.0)

    edge_blocks = []
    for off in _canonical_offsets(dim):
        idx_axes = [np.arange(max(0, -off[a]), shape[a] - max(0, off[a])) for a in range(dim)]
        block_shape = tuple(len(ix) for ix in idx_axes)
        n_edges = int(np.prod(block_shape))
        if n_edges == 0:
            continue

        flat_i = np.zeros(n_edges, dtype=np.intp)
        flat_j = np.zeros(n_edges, dtype=np.intp)
        for a in range(dim):
            flat_i += _broadcast_block_int(idx_axes[a] * strides[a], a, block_shape)
            flat_j += _broadcast_block_int((idx_axes[a] + off[a]) * strides[a], a, block_shape)

        m_vals_i = [mass_tab[a][idx_axes[a], off[a] + 1] for a in range(dim)]
        c_vals_i = [grad_tab[a][idx_axes[a], off[a] + 1] for a in range(dim)]
        m_vals_j = [mass_tab[a][idx_axes[a] + off[a], 1 - off[a]] for a in range(dim)]
        c_vals_j = [grad_tab[a][idx_axes[a] + off[a], 1 - off[a]] for a in range(dim)]

        m_ij = _outer_block(m_vals_i, block_shape)
        c_ij = np.stack(
            [_outer_block([c_vals_i[a] if a == b else m_vals_i[a] for a in range(dim)], block_shape)
             for b in range(dim)], axis=1)
        c_ji = np.stack(
            [_outer_block([c_vals_j[a] if a == b else m_vals_j[a] for a in range(dim)], block_shape)
             for b in range(dim)], axis=1)
        d_ij = LAMBDA_MAX * np.maximum(
            np.linalg.norm(c_ij, axis=1), np.linalg.norm(c_ji, axis=1))

        # per-edge scattering geometry: cells shared by phi_i and phi_j
        scatter = np.zeros(n_edges)
        per_axis_options = []
        for a in range(dim):
            if off[a] != 0:
                cell = idx_axes[a] + min(0, off[a])
                per_axis_options.append([(cell, np.ones(len(cell), dtype=bool), h[a] / 6.0)])
            else:
                lo = idx_axes[a] - 1
                hi = idx_axes[a]
                per_axis_options.append([
                    (np.clip(lo, 0, shape[a] - 2), lo >= 0, h[a] / 3.0),
                    (np.clip(hi, 0, shape[a] - 2), hi <= shape[a] - 2, h[a] / 3.0),
                ])
        for combo in itertools.product(*per_axis_options):
            flat_cell = np.zeros(n_edges, dtype=np.intp)
            valid = np.ones(n_edges, dtype=bool)
            weight = 1.0
            for a, (cell, ok, w) in enumerate(combo):
                flat_cell += _broadcast_block_int(cell * cstrides[a], a, block_shape)
                valid &= _broadcast_block_bool(ok, a, block_shape)
                weight *= w
            scatter += np.where(valid, inv_xs_cell[flat_cell] * weight, 0.0)

        edge_blocks.append(EdgeBlock(
            offset=off, i=flat_i, j=flat_j, c_ij=c_ij, c_ji=c_ji,
            d_ij=d_ij, m_ij=m_ij, scatter_geom=scatter))

    coords = grid.node_coords()
    faces = []
    boundary_weight = np.zeros(grid.n_nodes)
    for axis in range(dim):
        for side in (0, 1):
            fixed = 0 if side == 0 else shape[axis] - 1
            idx_axes = [np.arange(shape[a]) if a != axis else np.array([fixed]) for a in range(dim)]
            block_shape = tuple(len(ix) for ix in idx_axes)
            n_face = int(np.prod(block_shape))
            flat = np.zeros(n_face, dtype=np.intp)
            for a in range(dim):
                flat += _broadcast_block_int(idx_axes[a] * strides[a], a, block_shape)
            w_vals = [lump_tab[a][idx_axes[a]] if a != axis else np.ones(1) for a in range(dim)]
            weight = _outer_block(w_vals, block_shape)
            normal = np.zeros(dim)
            normal[axis] = -1.0 if side == 0 else 1.0
            faces.append(BoundaryFace(axis=axis, side=side, nodes=flat, weight=weight,
                                      normal=normal, coords=coords[flat]))
            boundary_weight[flat] += weight

    return DiscreteOperators(
        grid=grid, lumped_mass=lumped, edge_blocks=edge_blocks, faces=faces,
        materials=materials, cell_material=cell_material, node_material=node_material,
        node_beta=node_beta, node_p=node_p, node_rho=node_rho,
        scatter_geom_node=scatter_node, boundary_weight=boundary_weight)


def _broadcast_axis_int(vals: np.ndarray, axis: int, shape: tuple[int, ...]) -> np.ndarray:
    """Broadcast per-axis integers over the full node lattice, flattened x-fastest."""
    dim = len(shape)
    view = [1] * dim
    view[dim - 1 - axis] = len(vals)
    return np.broadcast_to(vals.reshape(view), tuple(shape[::-1])).reshape(-1)


def _broadcast_axis_bool(vals: np.ndarray, axis: int, shape: tuple[int, ...]) -> np.ndarray:
    return _broadcast_axis_int(vals.astype(np.intp), axis, shape).astype(bool)


def _broadcast_block_int(vals: np.ndarray, axis: int, block_shape: tuple[int, ...]) -> np.ndarray:
    dim = len(block_shape)
    view = [1] * dim
    view[dim - 1 - axis] = len(vals)
    return np.broadcast_to(np.asarray(vals).reshape(view), tuple(block_shape[::-1])).reshape(-1).copy()


def _broadcast_block_bool(vals: np.ndarray, axis: int, block_shape: tuple[int, ...]) -> np.ndarray:
    if np.isscalar(vals) or vals.shape == ():
        return np.full(int(np.prod(block_shape)), bool(vals))
    return _broadcast_block_int(np.asarray(vals).astype(np.intp), axis, block_shape).astype(bool)


def _outer_block(vecs: list[np.ndarray], block_shape: tuple[int, ...]) -> np.ndarray:
    out = _outer_flat(vecs)
    assert out.size == int(np.prod(block_shape))
    return out
