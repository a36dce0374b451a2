"""Conforming triangulations with oriented edges, region ids and boundary tags."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DIRICHLET_U = "DIRICHLET_U"

# local edge k is opposite local vertex k and runs from LOCAL_EDGES[k][0]
# to LOCAL_EDGES[k][1]
LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))


class MeshGenerationFailure(RuntimeError):
    pass


class InvalidMesh(ValueError):
    pass


class DegenerateCell(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


@dataclass(eq=False)
class Mesh:
    """Triangle mesh.

    Cells are counterclockwise vertex triples.  Edges are stored with the
    lower vertex index first; ``cell_edge_signs[c, k]`` is +1 when local
    edge ``k`` of cell ``c`` runs in the global direction.  ``boundary_tags``
    maps boundary edge indices to a tag string.
    """

    vertices: np.ndarray
    cells: np.ndarray
    cell_regions: np.ndarray
    boundary_tags: dict = field(default_factory=dict)
    edges: np.ndarray = field(init=False)
    cell_edges: np.ndarray = field(init=False)
    cell_edge_signs: np.ndarray = field(init=False)
    edge_cells: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        self.cell_regions = np.ascontiguousarray(self.cell_regions, dtype=np.int64)
        for arr in (self.vertices, self.cells, self.cell_regions):
            arr.setflags(write=False)
        self._build_edges()

    @classmethod
    def from_arrays(cls, vertices, cells, cell_regions=None, boundary_tag_by_pair=None,
                    default_tag: str | None = DIRICHLET_U) -> "Mesh":
        """Build a mesh, tagging boundary edges by vertex pair or a default tag."""
        cells = np.asarray(cells, dtype=np.int64)
        if cell_regions is None:
            cell_regions = np.zeros(len(cells), dtype=np.int64)
        m = cls(vertices, cells, cell_regions)
        tags = {}
        pairs = boundary_tag_by_pair or {}
        for e in m.boundary_edges():
            key = tuple(int(v) for v in m.edges[e])
            if key in pairs:
                tags[int(e)] = pairs[key]
            elif default_tag is not None:
                tags[int(e)] = default_tag
        m.boundary_tags = tags
        return m

    def _build_edges(self):
        c = self.cells
        loc = np.array(LOCAL_EDGES)
        a = c[:, loc[:, 0]]
        b = c[:, loc[:, 1]]
        lo = np.minimum(a, b).ravel()
        hi = np.maximum(a, b).ravel()
        keys = lo * max(len(self.vertices), 1) + hi
        uniq, inv = np.unique(keys, return_inverse=True)
        first = np.zeros(len(uniq), dtype=np.int64)
        first[inv[::-1]] = np.arange(len(inv))[::-1]
        self.edges = np.column_stack([lo[first], hi[first]])
        self.cell_edges = inv.reshape(-1, 3)
        self.cell_edge_signs = np.where(a < b, 1, -1).astype(np.int64)
        counts = np.bincount(inv, minlength=len(uniq))
        ec = -np.ones((len(uniq), 2), dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        cell_of = order // 3
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        ec[:, 0] = cell_of[starts]
        two = counts >= 2
        ec[two, 1] = cell_of[starts[two] + 1]
        self.edge_cells = ec
        self._edge_counts = counts

    # --- basic queries ---------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self._edge_counts == 1)

    def tagged_edges(self, tag: str) -> np.ndarray:
        return np.array(sorted(e for e, t in self.boundary_tags.items() if t == tag), dtype=np.int64)

    def jacobians(self) -> np.ndarray:
        """Affine map Jacobians ``J = [x1 - x0, x2 - x0]`` per cell."""
        x = self.vertices[self.cells]
        return np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=-1)

    def signed_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.det(self.jacobians())

    def region_area(self, region: int) -> float:
        return float(self.signed_areas()[self.cell_regions == region].sum())

    def diameter(self) -> float:
        """Largest edge length."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((d**2).sum(1)).max())

    def map_points(self, ref: np.ndarray, cells=None) -> np.ndarray:
        """Physical coordinates of reference points ``(xi, eta)`` per cell."""
        cells = slice(None) if cells is None else cells
        x0 = self.vertices[self.cells[cells, 0]]
        J = self.jacobians()[cells]
        return x0[:, None, :] + np.einsum("cij,qj->cqi", J, ref)

    # --- validation -------------------------------------------------------
    def holes(self) -> int:
        """Number of holes, from the number of boundary loops."""
        be = self.boundary_edges()
        if len(be) == 0:
            return 0
        parent = {}

        def find(v):
            while parent.setdefault(v, v) != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for e in be:
            a, b = self.edges[e]
            parent[find(a)] = find(b)
        loops = len({find(v) for v in parent})
        return loops - 1

    def validate(self) -> None:
        """Check positive areas, edge manifoldness, Euler count and interface conformity."""
        areas = self.signed_areas()
        if np.any(areas <= 0):
            bad = int(np.flatnonzero(areas <= 0)[0])
            raise InvalidMesh(f"cell {bad} has non-positive signed area {areas[bad]:.3e}")
        if np.any(self._edge_counts > 2):
            bad = int(np.flatnonzero(self._edge_counts > 2)[0])
            raise InvalidMesh(f"edge {tuple(self.edges[bad])} is shared by more than two cells")
        if len(np.unique(np.sort(self.cells, axis=1), axis=0)) != self.n_cells:
            raise InvalidMesh("duplicate cells")
        used = np.unique(self.cells)
        if len(used) != self.n_vertices:
            raise InvalidMesh("mesh has unreferenced vertices")
        euler = self.n_vertices - self.n_edges + self.n_cells
        if euler != 1 - self.holes():
            raise InvalidMesh(f"Euler characteristic {euler} inconsistent with {self.holes()} holes")
        for e in self.boundary_tags:
            if self._edge_counts[e] != 1:
                raise InvalidMesh(f"tagged edge {e} is not on the boundary")

    def interface_edges(self) -> np.ndarray:
        """Interior edges whose two cells belong to different regions."""
        ec = self.edge_cells
        inner = ec[:, 1] >= 0
        diff = np.zeros(self.n_edges, dtype=bool)
        diff[inner] = self.cell_regions[ec[inner, 0]] != self.cell_regions[ec[inner, 1]]
        return np.flatnonzero(diff)

    def same_as(self, other: "Mesh") -> bool:
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.cells, other.cells)
                and np.array_equal(self.cell_regions, other.cell_regions)
                and self.boundary_tags == other.boundary_tags)


# --- generators -------------------------------------------------------------

def square_mesh(half_width: float, n: int) -> Mesh:
    """Uniform mesh of [-a, a]^2 with diagonals from bottom-left to top-right."""
    if n < 1:
        raise ValueError("n must be at least 1")
    t = np.linspace(-half_width, half_width, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh.from_arrays(verts, cells)


def _ring_strip(ia: np.ndarray, ta: np.ndarray, ib: np.ndarray, tb: np.ndarray) -> list:
    """Triangulate between two closed rings by merging their angles."""
    na, nb = len(ia), len(ib)
    two_pi = 2 * np.pi
    ta_un = ta[0] + np.mod(ta - ta[0], two_pi)
    ta_un = np.append(ta_un, ta_un[0] + two_pi)
    # ring b starts at its last vertex not past ta[0]
    j0 = int(np.argmin(np.mod(ta[0] - tb, two_pi)))
    order = (j0 + np.arange(nb)) % nb
    tb_un = ta[0] - np.mod(ta[0] - tb[j0], two_pi) + np.mod(tb[order] - tb[j0], two_pi)
    tb_un = np.append(tb_un, tb_un[0] + two_pi)
    tris = []
    i = j = 0
    while i < na or j < nb:
        a0, b0 = ia[i % na], ib[order[j % nb]]
        if j >= nb or (i < na and ta_un[i + 1] <= tb_un[j + 1]):
            tris.append((a0, ia[(i + 1) % na], b0))
            i += 1
        else:
            tris.append((a0, ib[order[(j + 1) % nb]], b0))
            j += 1
    return tris


def _area_preserving_radius(r: float, n: int) -> float:
    return r * np.sqrt(2 * np.pi / (n * np.sin(2 * np.pi / n)))


def _disc_rings(r_inner, r_outer, h, radial):
    """Ring radii and vertex counts for arc spacing ``h`` and radial spacing ``radial``."""
    m_in = max(1, int(round(r_inner / radial)))
    m_out = max(1, int(round((r_outer - r_inner) / radial)))
    radii = [r_inner * k / m_in for k in range(1, m_in + 1)]
    radii += [r_inner + (r_outer - r_inner) * k / m_out for k in range(1, m_out + 1)]
    counts = [max(6, int(round(2 * np.pi * r / h))) for r in radii]
    for k in range(1, len(counts)):
        counts[k] = max(counts[k], counts[k - 1])
    return radii, counts, m_in


def _disc_cell_count(counts) -> int:
    return counts[0] + sum(a + b for a, b in zip(counts[:-1], counts[1:]))


def disc_two_material(r_inner: float, r_outer: float, target_cells: int) -> Mesh:
    """Two-region disc meshed ring by ring.

    Region 1 is the inner disc and region 0 the surrounding annulus.  The
    interface and outer polygons use an area-preserving radius so both region
    areas equal those of the true circles.
    """
    if not 0 < r_inner < r_outer:
        raise ValueError("need 0 < r_inner < r_outer")
    if target_cells < 24:
        raise ValueError("target_cells must be at least 24")
    area = np.pi * r_outer**2
    h0 = np.sqrt(area / (np.sqrt(3) / 4 * target_cells))
    best = None
    for s in np.linspace(0.6, 1.6, 101):
        for aspect in np.linspace(0.7, 1.4, 15):
            radii, counts, m_in = _disc_rings(r_inner, r_outer, h0 * s, h0 * s * aspect * np.sqrt(3) / 2)
            n = _disc_cell_count(counts)
            score = (round(abs(n - target_cells) / target_cells, 2), abs(np.log(aspect)))
            if best is None or score < best[0]:
                best = (score, n, radii, counts, m_in)
    _, n, radii, counts, m_in = best
    if abs(n - target_cells) > 0.3 * target_cells:
        raise MeshGenerationFailure(f"cannot reach {target_cells} cells within 30% (best {n})")

    verts = [np.zeros(2)]
    rings, angles = [], []
    for k, (r, n) in enumerate(zip(radii, counts)):
        rho = r
        if k == m_in - 1 or k == len(radii) - 1:
            rho = _area_preserving_radius(r, n)
        th = 2 * np.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        start = len(verts)
        verts.extend(np.column_stack([rho * np.cos(th), rho * np.sin(th)]))
        rings.append(np.arange(start, start + n))
        angles.append(th)
    verts = np.array(verts)

    cells, regions = [], []
    n0 = counts[0]
    for i in range(n0):
        cells.append((0, rings[0][i], rings[0][(i + 1) % n0]))
        regions.append(1)
    for k in range(len(rings) - 1):
        strip = _ring_strip(rings[k], angles[k], rings[k + 1], angles[k + 1])
        cells.extend(strip)
        regions.extend([1 if k + 1 < m_in else 0] * len(strip))
    cells = np.array(cells, dtype=np.int64)
    x = verts[cells]
    det = ((x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1])
           - (x[:, 1, 1] - x[:, 0, 1]) * (x[:, 2, 0] - x[:, 0, 0]))
    flip = det < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    mesh = Mesh.from_arrays(verts, cells, np.array(regions))
    mesh.validate()
    # the interface must be exactly the inner polygon
    iface = mesh.interface_edges()
    ring_if = set(rings[m_in - 1].tolist())
    if len(iface) != counts[m_in - 1] or any(int(v) not in ring_if for v in mesh.edges[iface].ravel()):
        raise MeshGenerationFailure("material interface is not a union of mesh edges")
    return mesh


# --- Clough-Tocher split ----------------------------------------------------

@dataclass(frozen=True)
class CloughTocherSplit:
    """Barycentric split of one cell.

    ``points`` lists the three parent vertices followed by the barycenter
    (local index 3).  Subcell ``i`` is the one opposite parent vertex ``i``;
    internal edge ``i`` runs from parent vertex ``i`` to the barycenter.
    """

    parent: int
    points: np.ndarray
    subcells: tuple = ((1, 2, 3), (2, 0, 3), (0, 1, 3))
    internal_edges: tuple = ((0, 3), (1, 3), (2, 3))

    @property
    def barycenter(self) -> np.ndarray:
        return self.points[3]

    def subcell_vertices(self, i: int) -> np.ndarray:
        return self.points[list(self.subcells[i])]

    def subcell_areas(self) -> np.ndarray:
        out = []
        for i in range(3):
            x = self.subcell_vertices(i)
            d1, d2 = x[1] - x[0], x[2] - x[0]
            out.append(0.5 * (d1[0] * d2[1] - d1[1] * d2[0]))
        return np.array(out)


def clough_tocher(mesh: Mesh, cell: int) -> CloughTocherSplit:
    x = mesh.vertices[mesh.cells[cell]]
    return split_triangle(x, parent=cell)


def split_triangle(x: np.ndarray, parent: int = -1) -> CloughTocherSplit:
    x = np.asarray(x, dtype=float)
    pts = np.vstack([x, x.mean(axis=0)])
    return CloughTocherSplit(parent, pts)


# --- file I/O ---------------------------------------------------------------

_HEADER = "micromorph2d-mesh 1"


def write_mesh(mesh: Mesh, path) -> None:
    lines = [_HEADER, f"vertices {mesh.n_vertices}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"cells {mesh.n_cells}")
    lines += [f"{a} {b} {c} {r}" for (a, b, c), r in zip(mesh.cells, mesh.cell_regions)]
    tags = sorted(mesh.boundary_tags.items())
    lines.append(f"boundary {len(tags)}")
    lines += [f"{mesh.edges[e][0]} {mesh.edges[e][1]} {t}" for e, t in tags]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    text = Path(path).read_text().splitlines()
    pos = 0

    def take():
        nonlocal pos
        while pos < len(text) and not text[pos].strip():
            pos += 1
        if pos >= len(text):
            raise ParseError("unexpected end of file", pos + 1, 1)
        pos += 1
        return pos, text[pos - 1]

    def fields(line):
        out, col = [], 0
        for tok in line.split():
            col = line.index(tok, col)
            out.append((tok, col + 1))
            col += len(tok)
        return out

    def section(name):
        ln, line = take()
        f = fields(line)
        if len(f) != 2 or f[0][0] != name:
            raise ParseError(f"expected '{name} <count>'", ln, 1)
        try:
            n = int(f[1][0])
        except ValueError:
            raise ParseError(f"invalid count '{f[1][0]}'", ln, f[1][1]) from None
        if n < 0:
            raise ParseError("negative count", ln, f[1][1])
        return n

    def parse(tok, col, ln, kind):
        try:
            return kind(tok)
        except ValueError:
            raise ParseError(f"cannot parse '{tok}' as {kind.__name__}", ln, col) from None

    ln, line = take()
    if line.strip() != _HEADER:
        raise ParseError(f"missing header '{_HEADER}'", ln, 1)
    nv = section("vertices")
    verts = np.empty((nv, 2))
    for i in range(nv):
        ln, line = take()
        f = fields(line)
        if len(f) != 2:
            raise ParseError("vertex line needs 2 coordinates", ln, 1)
        verts[i] = [parse(t, c, ln, float) for t, c in f]
    nc = section("cells")
    cells = np.empty((nc, 3), dtype=np.int64)
    regions = np.empty(nc, dtype=np.int64)
    seen = {}
    for i in range(nc):
        ln, line = take()
        f = fields(line)
        if len(f) != 4:
            raise ParseError("cell line needs 3 vertex indices and a region", ln, 1)
        vals = [parse(t, c, ln, int) for t, c in f]
        for (t, c), v in zip(f[:3], vals[:3]):
            if not 0 <= v < nv:
                raise ParseError(f"vertex index {v} out of range", ln, c)
        key = tuple(sorted(vals[:3]))
        if len(set(key)) != 3:
            raise ParseError("cell repeats a vertex", ln, 1)
        if key in seen:
            raise ParseError(f"duplicate cell (same vertices as line {seen[key]})", ln, 1)
        seen[key] = ln
        cells[i] = vals[:3]
        regions[i] = vals[3]
    nb = section("boundary")
    pairs = {}
    for _ in range(nb):
        ln, line = take()
        f = fields(line)
        if len(f) != 3:
            raise ParseError("boundary line needs 2 vertex indices and a tag", ln, 1)
        a, b = (parse(t, c, ln, int) for t, c in f[:2])
        pairs[(min(a, b), max(a, b))] = (f[2][0], ln)
    mesh = Mesh(verts, cells, regions)
    bset = set(mesh.boundary_edges().tolist())
    lookup = {tuple(int(v) for v in mesh.edges[e]): e for e in bset}
    tags = {}
    for key, (tag, ln) in pairs.items():
        if key not in lookup:
            raise ParseError(f"edge {key} is not a boundary edge", ln, 1)
        tags[int(lookup[key])] = tag
    mesh.boundary_tags = tags
    return mesh
