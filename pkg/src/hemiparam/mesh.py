"""Triangle meshes with a single boundary loop: topology checks, geometry, I/O."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)


class MeshError(ValueError):
    """Base class for invalid-mesh diagnostics."""


class MeshParseError(MeshError):
    pass


class ClosedSurfaceError(MeshError):
    pass


class MultipleBoundaryError(MeshError):
    pass


class GenusError(MeshError):
    pass


class NonManifoldError(MeshError):
    pass


class DegenerateGeometryError(MeshError):
    pass


FORMATS = ("obj", "ply", "off")


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh of a simply connected open surface.

    ``vertices`` is ``(V, 3)`` float, ``faces`` is ``(F, 3)`` int with a
    consistent orientation. Use :meth:`from_arrays` to validate raw data;
    the plain constructor trusts its input (used internally when the
    topology is known to be unchanged).
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64, copy=True)
        f = np.array(self.faces, dtype=np.int64, copy=True)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {f.shape}")
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @classmethod
    def from_arrays(cls, vertices, faces, repair_orientation: bool = True) -> "TriMesh":
        """Build a mesh and check every open-surface invariant."""
        v = np.asarray(vertices, dtype=np.float64)
        f = np.asarray(faces, dtype=np.int64)
        if f.ndim != 2 or f.shape[1] != 3 or len(f) == 0:
            raise MeshError("mesh needs at least one triangular face")
        if f.min() < 0 or f.max() >= len(v):
            raise MeshError("face index out of range")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinate")
        bad = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        if bad.any():
            raise MeshError(f"degenerate face (repeated vertex index) at face {int(np.flatnonzero(bad)[0])}")
        if len(np.unique(f)) != len(v):
            raise MeshError("mesh has unreferenced vertices")
        f = _check_edges_and_orient(f, len(v), repair_orientation)
        mesh = cls(v, f)
        mesh.topology()  # raises on boundary/genus/vertex-manifold problems
        return mesh

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as ``(E, 2)`` with ``i < j``."""
        he = _half_edges(self.faces)
        return np.unique(np.sort(he, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_faces

    def topology(self) -> list[np.ndarray]:
        """Return the boundary cycles, raising if the mesh is not a disk."""
        cycles = _boundary_cycles(self.faces, self.n_vertices)
        if not cycles:
            raise ClosedSurfaceError("no boundary loop (closed surface)")
        ncomp = _face_components(self.faces, self.n_vertices)
        if ncomp > 1:
            raise MeshError(f"mesh has {ncomp} connected components")
        if len(cycles) > 1:
            raise MultipleBoundaryError(f"mesh has {len(cycles)} boundary loops, expected 1")
        chi = self.euler_characteristic()
        if chi != 1:
            genus = (1 - chi) // 2
            raise GenusError(f"Euler characteristic {chi} with one boundary loop (genus {genus})")
        return cycles

    def with_vertices(self, vertices) -> "TriMesh":
        """Same connectivity, new positions."""
        return TriMesh(vertices, self.faces)


@dataclass(frozen=True)
class BoundaryLoop:
    indices: np.ndarray
    edge_lengths: np.ndarray

    def __len__(self):
        return len(self.indices)


def _half_edges(faces: np.ndarray) -> np.ndarray:
    return np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])


def _edge_keys(he: np.ndarray, nv: int) -> np.ndarray:
    lo = np.minimum(he[:, 0], he[:, 1])
    hi = np.maximum(he[:, 0], he[:, 1])
    return lo * nv + hi


def _check_edges_and_orient(faces: np.ndarray, nv: int, repair: bool) -> np.ndarray:
    he = _half_edges(faces)
    keys = _edge_keys(he, nv)
    _, counts = np.unique(keys, return_counts=True)
    if counts.max() > 2:
        raise NonManifoldError(f"non-manifold edge shared by {counts.max()} faces")
    # Two faces on one edge must traverse it in opposite directions.
    directed = np.unique(he[:, 0] * nv + he[:, 1])
    if len(directed) == len(he):
        return faces
    if not repair:
        raise NonManifoldError("inconsistent face orientation")
    return _repair_orientation(faces, nv)


def _repair_orientation(faces: np.ndarray, nv: int) -> np.ndarray:
    nf = len(faces)
    he = _half_edges(faces)
    keys = _edge_keys(he, nv)
    face_of = np.tile(np.arange(nf), 3)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    pair = np.flatnonzero(sk[1:] == sk[:-1])
    a, b = order[pair], order[pair + 1]
    # same_dir: the two half-edges point the same way, so the faces disagree.
    same_dir = he[a, 0] == he[b, 0]
    nbrs: list[list[tuple[int, bool]]] = [[] for _ in range(nf)]
    for fa, fb, s in zip(face_of[a], face_of[b], same_dir):
        nbrs[fa].append((fb, bool(s)))
        nbrs[fb].append((fa, bool(s)))
    flip = np.full(nf, -1, dtype=np.int8)
    for seed in range(nf):
        if flip[seed] >= 0:
            continue
        flip[seed] = 0
        queue = deque([seed])
        while queue:
            cur = queue.popleft()
            for nb, s in nbrs[cur]:
                want = flip[cur] ^ int(s)
                if flip[nb] < 0:
                    flip[nb] = want
                    queue.append(nb)
                elif flip[nb] != want:
                    raise NonManifoldError("surface is not orientable")
    out = faces.copy()
    rev = flip == 1
    out[rev] = out[rev][:, ::-1]
    logger.info("repaired orientation of %d faces", int(rev.sum()))
    return out


def _boundary_cycles(faces: np.ndarray, nv: int) -> list[np.ndarray]:
    he = _half_edges(faces)
    fwd = he[:, 0] * nv + he[:, 1]
    bwd = he[:, 1] * nv + he[:, 0]
    is_bd = ~np.isin(fwd, bwd)
    bd = he[is_bd]
    if len(bd) == 0:
        return []
    starts, counts = np.unique(bd[:, 0], return_counts=True)
    if counts.max() > 1:
        v = int(starts[np.argmax(counts)])
        raise NonManifoldError(f"non-manifold vertex {v} (pinched boundary)")
    _check_vertex_fans(faces, nv)
    nxt = dict(zip(bd[:, 0].tolist(), bd[:, 1].tolist()))
    seen: set[int] = set()
    cycles = []
    for s in sorted(nxt):
        if s in seen:
            continue
        cyc = [s]
        seen.add(s)
        cur = nxt[s]
        while cur != s:
            if cur in seen or cur not in nxt:
                raise NonManifoldError("boundary edges do not form closed cycles")
            cyc.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        cycles.append(np.array(cyc, dtype=np.int64))
    return cycles


def _check_vertex_fans(faces: np.ndarray, nv: int) -> None:
    # Corners (face, local slot) around a vertex are linked through shared
    # edges; a manifold vertex has exactly one connected fan of corners.
    nf = len(faces)
    corner = np.arange(3 * nf).reshape(nf, 3)
    rows, cols = [], []
    he = _half_edges(faces)
    slot_a = np.concatenate([corner[:, 0], corner[:, 1], corner[:, 2]])
    slot_b = np.concatenate([corner[:, 1], corner[:, 2], corner[:, 0]])
    keys = _edge_keys(he, nv)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    pair = np.flatnonzero(sk[1:] == sk[:-1])
    a, b = order[pair], order[pair + 1]
    # Half-edges a and b are opposite: a = (u, w), b = (w, u).
    rows += [slot_a[a], slot_b[a]]
    cols += [slot_b[b], slot_a[b]]
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    g = sparse.coo_matrix((np.ones(len(r)), (r, c)), shape=(3 * nf, 3 * nf))
    ncomp, labels = connected_components(g, directed=False)
    if ncomp != nv:
        fans = np.zeros(nv, dtype=np.int64)
        vert_of_label = np.empty(ncomp, dtype=np.int64)
        vert_of_label[labels] = faces.ravel()
        np.add.at(fans, vert_of_label, 1)
        v = int(np.flatnonzero(fans > 1)[0])
        raise NonManifoldError(f"non-manifold vertex {v} ({fans[v]} separate fans)")


def _face_components(faces: np.ndarray, nv: int) -> int:
    nf = len(faces)
    r = np.repeat(np.arange(nf), 3)
    g = sparse.coo_matrix((np.ones(3 * nf), (r, faces.ravel())), shape=(nf, nv)).tocsr()
    adj = sparse.bmat([[None, g], [g.T, None]])
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp


def boundary_loop(mesh: TriMesh) -> BoundaryLoop:
    """The boundary cycle, surface on the left, starting at its lowest index."""
    (cyc,) = mesh.topology()
    start = int(np.argmin(cyc))
    idx = np.roll(cyc, -start)
    p = mesh.vertices[idx]
    lengths = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    if np.any(lengths <= 0):
        raise DegenerateGeometryError("zero-length boundary edge")
    return BoundaryLoop(idx, lengths)


def triangle_areas(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unsigned areas of triangles given 2D or 3D vertex positions."""
    p = np.asarray(points, dtype=np.float64)
    e1 = p[faces[:, 1]] - p[faces[:, 0]]
    e2 = p[faces[:, 2]] - p[faces[:, 0]]
    if p.shape[1] == 2:
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def signed_areas_2d(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    e1 = points[faces[:, 1]] - points[faces[:, 0]]
    e2 = points[faces[:, 2]] - points[faces[:, 0]]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def face_areas(mesh: TriMesh) -> np.ndarray:
    areas = triangle_areas(mesh.vertices, mesh.faces)
    nzero = int(np.count_nonzero(areas == 0))
    if nzero:
        logger.warning("%d zero-area faces", nzero)
    return areas


def triangle_angles(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Corner angles in degrees, ``(F, 3)``, corner k opposite edge (k+1, k+2)."""
    p = np.asarray(points, dtype=np.float64)
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    out = np.empty(faces.shape)
    for k in range(3):
        a = p[faces[:, k]]
        u = p[faces[:, (k + 1) % 3]] - a
        w = p[faces[:, (k + 2) % 3]] - a
        nu = np.linalg.norm(u, axis=1)
        nw = np.linalg.norm(w, axis=1)
        if np.any(nu == 0) or np.any(nw == 0):
            raise DegenerateGeometryError("zero-length edge")
        out[:, k] = np.arctan2(np.linalg.norm(np.cross(u, w), axis=1), np.einsum("ij,ij->i", u, w))
    return np.degrees(out)


def corner_angles(mesh: TriMesh) -> np.ndarray:
    return triangle_angles(mesh.vertices, mesh.faces)


def vertex_face_incidence(faces: np.ndarray, nv: int) -> sparse.csr_matrix:
    """Sparse ``(V, F)`` 0/1 incidence."""
    nf = len(faces)
    return sparse.csr_matrix(
        (np.ones(3 * nf), (faces.ravel(), np.repeat(np.arange(nf), 3))), shape=(nv, nf)
    )


def face_adjacency(faces: np.ndarray) -> np.ndarray:
    """Pairs of faces sharing an edge, ``(K, 2)``."""
    nv = int(faces.max()) + 1
    he = _half_edges(faces)
    keys = _edge_keys(he, nv)
    face_of = np.tile(np.arange(len(faces)), 3)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    pair = np.flatnonzero(sk[1:] == sk[:-1])
    return np.column_stack([face_of[order[pair]], face_of[order[pair + 1]]])


def weld_vertices(mesh_vertices, faces, tol_factor: float = 1e-8):
    """Merge vertices closer than ``tol_factor`` times the bounding-box diagonal."""
    from scipy.spatial import cKDTree

    v = np.asarray(mesh_vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    diag = np.linalg.norm(v.max(axis=0) - v.min(axis=0))
    pairs = cKDTree(v).query_pairs(tol_factor * diag, output_type="ndarray")
    n = len(v)
    g = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    # Representative of each cluster is its first vertex in input order.
    first = np.full(labels.max() + 1, n)
    np.minimum.at(first, labels, np.arange(n))
    keep = np.sort(first)
    remap = np.empty(labels.max() + 1, dtype=np.int64)
    remap[labels[keep]] = np.arange(len(keep))
    nf = remap[labels[f]]
    ok = (nf[:, 0] != nf[:, 1]) & (nf[:, 1] != nf[:, 2]) & (nf[:, 2] != nf[:, 0])
    return v[keep], nf[ok]


# ---------------------------------------------------------------- file I/O


def _format_from_path(path, fmt):
    if fmt is None:
        fmt = Path(path).suffix.lower().lstrip(".")
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise MeshParseError(f"unsupported mesh format {fmt!r}; expected one of {FORMATS}")
    return fmt


def _fan(poly):
    return [(poly[0], poly[k], poly[k + 1]) for k in range(1, len(poly) - 1)]


def _read_obj(text: str):
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(verts[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    k = int(tok.split("/")[0])
                    idx.append(k - 1 if k > 0 else len(verts) + k)
                if len(idx) < 3:
                    raise ValueError("face needs at least 3 vertices")
                faces.extend(_fan(idx))
        except ValueError as exc:
            raise MeshParseError(f"OBJ line {lineno}: {exc}") from None
    return verts, faces


def _read_off(text: str):
    lines = [ln.split("#")[0].split() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0][0] != "OFF":
        raise MeshParseError("missing OFF header")
    counts = lines[0][1:] or lines[1]
    body = lines[1:] if lines[0][1:] else lines[2:]
    try:
        nv, nf = int(counts[0]), int(counts[1])
        verts = [[float(x) for x in ln[:3]] for ln in body[:nv]]
        faces = []
        for ln in body[nv : nv + nf]:
            n = int(ln[0])
            # Anything after the n indices is an optional face colour.
            faces.extend(_fan([int(t) for t in ln[1 : 1 + n]]))
    except (IndexError, ValueError) as exc:
        raise MeshParseError(f"malformed OFF body: {exc}") from None
    if len(verts) != nv or any(len(p) != 3 for p in verts):
        raise MeshParseError("OFF vertex count mismatch")
    return verts, faces


def _read_ply(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshParseError("missing PLY magic")
    elements: list[tuple[str, int, list[tuple]]] = []
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise MeshParseError("only ASCII PLY is supported")
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            elements[-1][2].append(tuple(parts[1:]))
        elif parts[0] == "end_header":
            break
    body = iter(ln for ln in lines[i:] if ln.strip())
    verts, faces = [], []
    try:
        for name, count, props in elements:
            for _ in range(count):
                vals = next(body).split()
                if name == "vertex":
                    names = [p[-1] for p in props]
                    verts.append([float(vals[names.index(k)]) for k in ("x", "y", "z")])
                elif name == "face":
                    n = int(vals[0])
                    faces.extend(_fan([int(t) for t in vals[1 : 1 + n]]))
    except (StopIteration, ValueError) as exc:
        raise MeshParseError(f"malformed PLY body: {exc!r}") from None
    return verts, faces


def load_mesh(path, fmt: str | None = None, weld: bool = False) -> TriMesh:
    """Read an OBJ, ASCII PLY or ASCII OFF file into a validated mesh."""
    fmt = _format_from_path(path, fmt)
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError:
        raise MeshParseError(f"{path}: not a text mesh file") from None
    reader = {"obj": _read_obj, "ply": _read_ply, "off": _read_off}[fmt]
    verts, faces = reader(text)
    if not verts or not faces:
        raise MeshParseError(f"{path}: no vertices or faces")
    v = np.array(verts, dtype=np.float64)
    f = np.array(faces, dtype=np.int64)
    if weld:
        v, f = weld_vertices(v, f)
    return TriMesh.from_arrays(v, f)


def save_mesh(mesh: TriMesh, path, fmt: str | None = None) -> None:
    fmt = _format_from_path(path, fmt)
    v, f = mesh.vertices, mesh.faces
    vlines = "\n".join(f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in v)
    if fmt == "obj":
        out = "\n".join("v " + ln for ln in vlines.split("\n")) + "\n"
        out += "\n".join(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in f) + "\n"
    elif fmt == "off":
        out = f"OFF\n{len(v)} {len(f)} 0\n{vlines}\n"
        out += "\n".join(f"3 {a} {b} {c}" for a, b, c in f) + "\n"
    else:
        out = (
            "ply\nformat ascii 1.0\n"
            f"element vertex {len(v)}\nproperty double x\nproperty double y\nproperty double z\n"
            f"element face {len(f)}\nproperty list uchar int vertex_indices\nend_header\n"
        )
        out += vlines + "\n" + "\n".join(f"3 {a} {b} {c}" for a, b, c in f) + "\n"
    Path(path).write_text(out)
