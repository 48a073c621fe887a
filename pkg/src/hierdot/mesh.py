"""
Triangular disk meshes, boundary source/detector patches and the graph
structures (difference operator, spanning-tree reconstruction, element loops)
used by the difference prior.

All indices are 0-based. Coordinates are in millimetres.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import Delaunay, cKDTree

from .errors import MeshError, ValidationError

__all__ = [
    "TriMesh",
    "Patch",
    "SourceDetectorLayout",
    "DifferenceStructure",
    "build_disk_mesh",
    "boundary_patches",
    "build_difference_structure",
    "chain_difference_structure",
    "interpolate_field",
    "save_mesh",
    "load_mesh",
]

# seed spacing relative to the requested edge length; keeps ring diagonals
# (sqrt(dr^2 + ds^2) in the worst case) below target_edge_length
_SEED_FRACTION = 0.68


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Counter-clockwise oriented triangulation of a planar disk.

    Parameters
    ----------
    nodes : ndarray, shape (n, 2)
        Node coordinates.
    elements : ndarray, shape (m, 3)
        Node indices of each triangle, counter-clockwise.
    """

    nodes: np.ndarray
    elements: np.ndarray

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError(f"nodes must have shape (n, 2), got {nodes.shape}")
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise MeshError(f"elements must have shape (m, 3), got {elements.shape}")
        if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
            raise MeshError("element index out of range")
        nodes.setflags(write=False)
        elements.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def b(self) -> int:
        return self.boundary_edges.shape[0]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def gradients(self) -> np.ndarray:
        """Gradients of the P1 hat functions, shape (m, 3, 2)."""
        p = self.nodes[self.elements]
        area2 = 2.0 * self.signed_areas
        # grad(phi_i) = perp(p_{i+2} - p_{i+1}) / (2A), perp(v) = (-v_y, v_x)
        grads = np.empty((self.n_elements, 3, 2))
        for i in range(3):
            v = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
            grads[:, i, 0] = -v[:, 1] / area2
            grads[:, i, 1] = v[:, 0] / area2
        return grads

    @cached_property
    def _edge_table(self):
        local = self.elements[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        lo = local.min(axis=1)
        hi = local.max(axis=1)
        keys = np.stack([lo, hi], axis=1)
        edges, inverse, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(self.n_elements, 3)
        # +1 when the element traverses the stored edge (i, j), i < j, forwards
        signs = np.where(local[:, 0] < local[:, 1], 1, -1).reshape(self.n_elements, 3)
        return edges, inverse, signs, counts

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (i, j) with i < j, lexicographically sorted."""
        return self._edge_table[0]

    @property
    def element_edges(self) -> np.ndarray:
        """Edge index of the local edges (0,1), (1,2), (2,0) of each element."""
        return self._edge_table[1]

    @property
    def element_edge_signs(self) -> np.ndarray:
        return self._edge_table[2]

    @property
    def edge_multiplicity(self) -> np.ndarray:
        """Number of elements sharing each edge."""
        return self._edge_table[3]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Hull edges as (from, to) node pairs, chained counter-clockwise."""
        edges, inverse, signs, counts = self._edge_table
        on_hull = counts[inverse] == 1
        local = self.elements[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
        directed = local[on_hull]
        if len(directed) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        nxt = {int(a): int(b) for a, b in directed}
        if len(nxt) != len(directed):
            raise MeshError("boundary is not a simple closed curve")
        start = int(directed[:, 0].min())
        chain = [start]
        while True:
            following = nxt[chain[-1]]
            if following == start:
                break
            chain.append(following)
            if len(chain) > len(directed):
                break
        if len(chain) != len(directed):
            raise MeshError("boundary consists of more than one loop")
        chain = np.array(chain, dtype=np.int64)
        return np.stack([chain, np.roll(chain, -1)], axis=1)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return self.boundary_edges[:, 0]

    @cached_property
    def _locator(self):
        centroids = self.nodes[self.elements].mean(axis=1)
        return cKDTree(centroids)

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Find the containing element and barycentric coordinates of points.

        Points outside every element are assigned to the nearest element
        (largest minimal barycentric coordinate among nearby candidates);
        their barycentric coordinates are then left unclamped, so evaluating
        with them extrapolates that element's linear polynomial.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(12, self.n_elements)
        _, cand = self._locator.query(pts, k=k)
        cand = np.asarray(cand).reshape(len(pts), k)
        p = self.nodes[self.elements[cand]]  # (N, k, 3, 2)
        v0 = p[..., 1, :] - p[..., 0, :]
        v1 = p[..., 2, :] - p[..., 0, :]
        v2 = pts[:, None, :] - p[..., 0, :]
        det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
        l1 = (v2[..., 0] * v1[..., 1] - v2[..., 1] * v1[..., 0]) / det
        l2 = (v0[..., 0] * v2[..., 1] - v0[..., 1] * v2[..., 0]) / det
        lam = np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
        best = np.argmax(lam.min(axis=-1), axis=1)
        rows = np.arange(len(pts))
        return cand[rows, best], lam[rows, best]

    def evaluate(self, field, points) -> np.ndarray:
        """Evaluate a nodal P1 field at arbitrary points."""
        field = np.asarray(field)
        if field.shape[0] != self.n:
            raise ValidationError(
                f"field has length {field.shape[0]}, mesh has {self.n} nodes"
            )
        elem, lam = self.locate(points)
        return np.einsum("pk,pk...->p...", lam, field[self.elements[elem]])

    def check_invariants(self) -> None:
        """Raise MeshError unless orientation, manifoldness and Euler hold."""
        if np.any(self.signed_areas <= 0):
            bad = int(np.argmin(self.signed_areas))
            raise MeshError(f"element {bad} has non-positive signed area")
        if np.any(self.edge_multiplicity > 2):
            raise MeshError("an edge is shared by more than two elements")
        n_edges = len(self.edges)
        expected = 3 * (self.n - 1) - self.b
        if n_edges != expected:
            raise MeshError(
                f"edge count {n_edges} violates E = 3(n-1) - b = {expected}"
            )


def build_disk_mesh(radius: float, target_edge_length: float) -> TriMesh:
    """Mesh a disk centred at the origin.

    Nodes are seeded on concentric rings (node 0 at the centre, the last
    ring exactly on the circle) and connected by a Delaunay triangulation.
    No edge is longer than ``target_edge_length``.

    Parameters
    ----------
    radius : float
        Disk radius (mm).
    target_edge_length : float
        Upper bound on the edge length (mm), must be below ``radius``.

    Returns
    -------
    TriMesh
    """
    if not (radius > 0 and 0 < target_edge_length < radius):
        raise MeshError(
            "need radius > 0 and 0 < target_edge_length < radius, got "
            f"radius={radius!r}, target_edge_length={target_edge_length!r}"
        )
    spacing = _SEED_FRACTION * target_edge_length
    n_rings = int(np.ceil(radius / spacing))
    dr = radius / n_rings
    points = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        r = radius if k == n_rings else k * dr
        m = max(6, int(np.ceil(2 * np.pi * r / spacing)))
        # stagger interior rings; the boundary ring starts at angle 0
        phase = 0.0 if (k == n_rings or k % 2 == 0) else np.pi / m
        ang = phase + 2 * np.pi * np.arange(m) / m
        points.append(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1))
    nodes = np.concatenate(points)
    try:
        tri = Delaunay(nodes)
    except Exception as exc:  # qhull errors
        raise MeshError(
            f"triangulation failed for radius={radius}, "
            f"target_edge_length={target_edge_length}: {exc}"
        ) from exc
    elements = tri.simplices.astype(np.int64)
    p = nodes[elements]
    u, v = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    flip = area < 0
    elements[flip] = elements[flip][:, [0, 2, 1]]
    keep = np.abs(area) > 1e-12 * radius**2
    mesh = TriMesh(nodes, elements[keep])
    try:
        mesh.check_invariants()
    except MeshError as exc:
        raise MeshError(
            f"{exc} (radius={radius}, target_edge_length={target_edge_length})"
        ) from exc
    return mesh


@dataclass(frozen=True, eq=False)
class Patch:
    """A contiguous stretch of boundary used as a source or detector.

    ``weights[i]`` is the boundary integral of hat function ``i`` over the
    patch, so ``weights @ f`` integrates a nodal field over the patch.
    """

    center_angle: float
    width: float
    edges: np.ndarray
    weights: np.ndarray
    interval: tuple = (0.0, 0.0)

    @property
    def arc_length(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class SourceDetectorLayout:
    sources: tuple
    detectors: tuple
    omega: float
    strength: float = 1.0

    @property
    def n_src(self) -> int:
        return len(self.sources)

    @property
    def n_det(self) -> int:
        return len(self.detectors)

    @property
    def n_measurements(self) -> int:
        return 2 * self.n_src * self.n_det

    def source_matrix(self) -> np.ndarray:
        return np.stack([p.weights for p in self.sources], axis=1)

    def detector_matrix(self) -> np.ndarray:
        return np.stack([p.weights for p in self.detectors], axis=1)


def _boundary_polyline(mesh: TriMesh):
    be = mesh.boundary_edges
    a = mesh.nodes[be[:, 0]]
    b = mesh.nodes[be[:, 1]]
    lengths = np.linalg.norm(b - a, axis=1)
    offsets = np.concatenate([[0.0], np.cumsum(lengths)])
    return be, a, b, lengths, offsets


def _arc_position(angle, a, b, offsets):
    """Arclength coordinate where the ray at ``angle`` meets the boundary."""
    d = np.array([np.cos(angle), np.sin(angle)])
    # ray p = t d meets segment a + s (b - a)
    e = b - a
    den = d[0] * (-e[:, 1]) - d[1] * (-e[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (a[:, 0] * (-e[:, 1]) - a[:, 1] * (-e[:, 0])) / den
        s = (d[0] * a[:, 1] - d[1] * a[:, 0]) / den
    ok = (t > 0) & (s >= -1e-12) & (s <= 1 + 1e-12)
    idx = int(np.flatnonzero(ok)[0])
    s = float(np.clip(s[idx], 0.0, 1.0))
    return offsets[idx] + s * (offsets[idx + 1] - offsets[idx])


def _make_patch(mesh, angle, width, polyline) -> Patch:
    be, a, b, lengths, offsets = polyline
    perimeter = offsets[-1]
    centre = _arc_position(angle, a, b, offsets)
    lo, hi = centre - width / 2, centre + width / 2
    weights = np.zeros(mesh.n)
    touched = []
    for shift in (-perimeter, 0.0, perimeter):
        s0 = np.maximum(offsets[:-1] + shift, lo)
        s1 = np.minimum(offsets[1:] + shift, hi)
        for k in np.flatnonzero(s1 > s0):
            L = lengths[k]
            # local coordinates in [0, 1] along edge k
            u0 = (s0[k] - offsets[k] - shift) / L
            u1 = (s1[k] - offsets[k] - shift) / L
            # integral of (1 - u) and u over [u0, u1], times L
            w_end = 0.5 * (u1**2 - u0**2) * L
            w_start = (u1 - u0) * L - w_end
            weights[be[k, 0]] += w_start
            weights[be[k, 1]] += w_end
            touched.append(k)
    return Patch(
        float(angle),
        float(width),
        np.array(sorted(set(touched))),
        weights,
        (float(lo), float(hi)),
    )


def _check_overlap(patches, perimeter, label):
    for i in range(len(patches)):
        for j in range(i + 1, len(patches)):
            (a0, a1), (b0, b1) = patches[i].interval, patches[j].interval
            for shift in (-perimeter, 0.0, perimeter):
                if a0 < b1 + shift and b0 + shift < a1:
                    raise ValidationError(f"{label} patches {i} and {j} overlap")


def boundary_patches(
    mesh: TriMesh,
    n_src: int,
    n_det: int,
    width: float,
    q: float = 1.0,
    omega: float = 2 * np.pi * 1e8,
    det_offset: float = 0.0,
) -> SourceDetectorLayout:
    """Equispaced source and detector patches on the mesh boundary.

    Source ``k`` is centred at angle ``2 pi k / n_src``; detector ``k`` at
    ``2 pi k / n_det + det_offset``.
    """
    if n_src < 1 or n_det < 1:
        raise ValidationError("need at least one source and one detector")
    polyline = _boundary_polyline(mesh)
    perimeter = polyline[-1][-1]
    if not width > 0:
        raise ValidationError(f"patch width must be positive, got {width}")
    if width >= perimeter / max(n_src, n_det):
        raise ValidationError(
            f"patch width {width} too large for {max(n_src, n_det)} patches on a "
            f"boundary of length {perimeter:.4g}"
        )
    sources = tuple(
        _make_patch(mesh, 2 * np.pi * k / n_src, width, polyline) for k in range(n_src)
    )
    detectors = tuple(
        _make_patch(mesh, 2 * np.pi * k / n_det + det_offset, width, polyline)
        for k in range(n_det)
    )
    _check_overlap(sources, perimeter, "source")
    _check_overlap(detectors, perimeter, "detector")
    return SourceDetectorLayout(sources, detectors, float(omega), float(q))


@dataclass(frozen=True, eq=False)
class DifferenceStructure:
    """Difference parametrisation d = B x of a nodal field.

    Row ``gauge_row`` of ``B`` is the gauge difference x_root - 0 against a
    virtual zero node; every other row is x_i - x_j for one mesh edge.

    Attributes
    ----------
    pairs : ndarray, shape (q - 1, 2)
        Node pairs (i, j) of the non-gauge differences d = x_i - x_j.
    B : sparse (q, n)
    P : sparse (n, q)
        Spanning-tree reconstruction, P @ B = I.
    M : sparse (p, q)
        Loop operator, one row per element, M @ B = 0.
    """

    pairs: np.ndarray
    B: sparse.csr_matrix
    P: sparse.csr_matrix
    M: sparse.csr_matrix
    root: int = 0
    gauge_row: int = 0

    @property
    def q(self) -> int:
        return self.B.shape[0]

    @property
    def p(self) -> int:
        return self.M.shape[0]

    @property
    def n(self) -> int:
        return self.B.shape[1]

    @property
    def gauge_mask(self) -> np.ndarray:
        mask = np.zeros(self.q, dtype=bool)
        mask[self.gauge_row] = True
        return mask


def _incidence(pairs, n, root):
    q = len(pairs) + 1
    rows = np.concatenate([[0], np.arange(1, q), np.arange(1, q)])
    cols = np.concatenate([[root], pairs[:, 0], pairs[:, 1]])
    vals = np.concatenate([[1.0], np.ones(q - 1), -np.ones(q - 1)])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(q, n))


def _tree_reconstruction(pairs, n, root):
    q = len(pairs) + 1
    adj = sparse.csr_matrix(
        (np.arange(1, q, dtype=float), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    )
    order, pred = csgraph.breadth_first_order(
        adj, root, directed=False, return_predecessors=True
    )
    if len(order) != n:
        raise MeshError(
            f"mesh is disconnected: spanning tree reaches {len(order)} of {n} nodes"
        )
    lookup = {}
    for t, (i, j) in enumerate(pairs, start=1):
        lookup[(int(i), int(j))] = t
    paths = {root: (np.array([0]), np.array([1.0]))}
    for node in order[1:]:
        parent = int(pred[node])
        node = int(node)
        # d_t = x_i - x_j, so x_child = x_parent + sign * d_t
        if (node, parent) in lookup:
            t, sign = lookup[(node, parent)], 1.0
        else:
            t, sign = lookup[(parent, node)], -1.0
        cols, vals = paths[parent]
        paths[node] = (np.append(cols, t), np.append(vals, sign))
    rows = np.concatenate([np.full(len(paths[k][0]), k) for k in range(n)])
    cols = np.concatenate([paths[k][0] for k in range(n)])
    vals = np.concatenate([paths[k][1] for k in range(n)])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, q))


def build_difference_structure(mesh: TriMesh, root: int = 0) -> DifferenceStructure:
    """Differences over all mesh edges plus a gauge entry at ``root``."""
    pairs = mesh.edges
    n, q = mesh.n, len(pairs) + 1
    B = _incidence(pairs, n, root)
    P = _tree_reconstruction(pairs, n, root)
    # loop around each counter-clockwise element; edge t sits in column t + 1
    m = mesh.n_elements
    M = sparse.csr_matrix(
        (
            mesh.element_edge_signs.ravel().astype(float),
            (np.repeat(np.arange(m), 3), mesh.element_edges.ravel() + 1),
        ),
        shape=(m, q),
    )
    return DifferenceStructure(pairs, B, P, M, root=root)


def chain_difference_structure(n: int) -> DifferenceStructure:
    """Differences of a 1-D chain x_0 - x_1, ..., x_{n-2} - x_{n-1}; no loops."""
    pairs = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    B = _incidence(pairs, n, 0)
    P = _tree_reconstruction(pairs, n, 0)
    M = sparse.csr_matrix((0, n))
    return DifferenceStructure(pairs, B, P, M, root=0)


def interpolate_field(from_mesh: TriMesh, to_mesh: TriMesh, field) -> np.ndarray:
    """Piecewise-linear transfer of a nodal field between meshes."""
    field = np.asarray(field, dtype=float)
    if field.shape[0] != from_mesh.n:
        raise ValidationError(
            f"field has length {field.shape[0]}, source mesh has {from_mesh.n} nodes"
        )
    if from_mesh is to_mesh:
        return field.copy()
    return from_mesh.evaluate(field, to_mesh.nodes)


def save_mesh(mesh: TriMesh, path) -> None:
    lines = [f"nodes {mesh.n} elements {mesh.n_elements}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.elements]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> TriMesh:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "nodes" or header[2] != "elements":
            raise ValidationError(f"{path}: bad mesh header {' '.join(header)!r}")
        n, m = int(header[1]), int(header[3])
        body = fh.read().split("\n")
    nodes = np.array([line.split() for line in body[:n]], dtype=float)
    elements = np.array([line.split() for line in body[n : n + m]], dtype=np.int64)
    return TriMesh(nodes.reshape(n, 2), elements.reshape(m, 3))
