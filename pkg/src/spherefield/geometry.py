"""
Points, caps, evaluation grids and the nested nearest-center partition of S^2.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SpherePoint:
    """A point on the unit sphere in (colatitude, longitude) radians."""

    colatitude: float
    longitude: float

    def __post_init__(self):
        th, ph = float(self.colatitude), float(self.longitude)
        if not (0.0 <= th <= math.pi):
            raise ValueError(f"colatitude {th} outside [0, pi]")
        if not (0.0 <= ph < TWO_PI):
            raise ValueError(f"longitude {ph} outside [0, 2pi)")
        object.__setattr__(self, "colatitude", th)
        object.__setattr__(self, "longitude", ph)

    @property
    def xyz(self) -> np.ndarray:
        s = math.sin(self.colatitude)
        return np.array([s * math.cos(self.longitude), s * math.sin(self.longitude),
                         math.cos(self.colatitude)])

    @classmethod
    def from_vector(cls, v) -> "SpherePoint":
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if not np.isfinite(n) or n == 0:
            raise ValueError("cannot normalise a zero or non-finite vector")
        x, y, z = v / n
        th = math.atan2(math.hypot(x, y), z)
        ph = math.atan2(y, x) % TWO_PI
        if ph >= TWO_PI:
            ph = 0.0
        return cls(th, ph)


NORTH = SpherePoint(0.0, 0.0)
SOUTH = SpherePoint(math.pi, 0.0)


def _angle_between(u, v):
    # atan2 form keeps precision at both tiny and near-antipodal separations
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.arctan2(cross, dot)


def geodesic_distance(p: SpherePoint, q: SpherePoint) -> float:
    """Great-circle distance in radians, always in [0, pi]."""
    return float(np.clip(_angle_between(p.xyz, q.xyz), 0.0, math.pi))


def angles_to(xyz, center) -> np.ndarray:
    """Geodesic distance from each row of ``xyz`` (n, 3) to the unit vector ``center``."""
    xyz = np.asarray(xyz, dtype=float)
    c = np.asarray(center, dtype=float)
    return np.clip(_angle_between(xyz, c[None, :]), 0.0, math.pi)


def cap_area(r) -> float:
    """Area 2 pi (1 - cos r) of a cap of geodesic radius r in (0, pi]."""
    r = float(r)
    if not (0.0 < r <= math.pi):
        raise ValueError(f"cap radius {r} outside (0, pi]")
    # 1 - cos r = 2 sin^2(r/2) avoids cancellation at small r
    return 4.0 * math.pi * math.sin(0.5 * r) ** 2


@dataclass(frozen=True)
class Cap:
    center: SpherePoint
    radius: float

    def __post_init__(self):
        if not (0.0 < float(self.radius) <= math.pi):
            raise ValueError(f"cap radius {self.radius} outside (0, pi]")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def area(self) -> float:
        return cap_area(self.radius)

    def contains(self, xyz) -> np.ndarray:
        """Boolean mask of the rows of ``xyz`` lying in the closed cap."""
        return angles_to(xyz, self.center.xyz) <= self.radius


def whole_sphere() -> Cap:
    return Cap(NORTH, math.pi)


class EquiangularGrid:
    """
    Equiangular colatitude rows times uniform longitude columns.

    Row centres sit at the midpoints ``(i + 1/2) pi / n_theta`` so no sample
    falls on a pole. Each point carries the exact area of its latitude-longitude
    cell, hence the weights sum to ``4 pi``. Points are flattened row-major.
    """

    kind = 0

    def __init__(self, n_theta, n_phi):
        n_theta, n_phi = int(n_theta), int(n_phi)
        if n_theta < 2 or n_phi < 1:
            raise ValueError("grid needs n_theta >= 2 and n_phi >= 1")
        self.n_theta = n_theta
        self.n_phi = n_phi
        edges = np.linspace(0.0, math.pi, n_theta + 1)
        self.theta = 0.5 * (edges[:-1] + edges[1:])
        self.phi = TWO_PI * np.arange(n_phi) / n_phi
        ring = TWO_PI * (np.cos(edges[:-1]) - np.cos(edges[1:]))
        self.row_weights = ring / n_phi
        self._xyz = None

    @classmethod
    def for_band_limit(cls, l_max, oversample=1):
        """Smallest alias-free grid for degree ``l_max`` (times ``oversample``)."""
        n_phi = oversample * (2 * int(l_max) + 2)
        return cls(n_phi // 2, n_phi)

    @property
    def size(self):
        return self.n_theta * self.n_phi

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    @property
    def spacing(self):
        """Largest geodesic step between neighbouring samples."""
        return max(math.pi / self.n_theta, TWO_PI / self.n_phi)

    @property
    def weights(self) -> np.ndarray:
        return np.repeat(self.row_weights, self.n_phi)

    @property
    def colatitudes(self) -> np.ndarray:
        return np.repeat(self.theta, self.n_phi)

    @property
    def longitudes(self) -> np.ndarray:
        return np.tile(self.phi, self.n_theta)

    @property
    def xyz(self) -> np.ndarray:
        if self._xyz is None:
            st = np.sin(self.theta)[:, None]
            xyz = np.empty((self.n_theta, self.n_phi, 3))
            xyz[..., 0] = st * np.cos(self.phi)[None, :]
            xyz[..., 1] = st * np.sin(self.phi)[None, :]
            xyz[..., 2] = np.cos(self.theta)[:, None]
            self._xyz = xyz.reshape(-1, 3)
            self._xyz.setflags(write=False)
        return self._xyz

    def rows_within(self, radius):
        """Indices of the rows whose colatitude is at most ``radius``."""
        return np.nonzero(self.theta <= radius)[0]

    def edges(self):
        """Neighbour pairs (flat indices): longitude-wise with wrap, then colatitude-wise."""
        idx = np.arange(self.size).reshape(self.shape)
        a1 = idx.ravel()
        b1 = np.roll(idx, -1, axis=1).ravel()
        if self.n_phi == 1:
            a1 = b1 = np.empty(0, dtype=np.int64)
        a2 = idx[:-1].ravel()
        b2 = idx[1:].ravel()
        return np.concatenate([a1, a2]), np.concatenate([b1, b2])

    def describe(self):
        return {"kind": "equiangular", "n_theta": self.n_theta, "n_phi": self.n_phi}


class PolarCapGrid(EquiangularGrid):
    """
    The rows of an equiangular grid that lie within ``radius`` of the north pole.

    Used to synthesise a field only where a polar cap needs it; the samples
    are bit-identical to the corresponding rows of the full grid.
    """

    kind = 2

    def __init__(self, n_theta, n_phi, radius):
        super().__init__(n_theta, n_phi)
        keep = self.theta <= float(radius)
        if keep.sum() < 1:
            raise ValueError("no grid row inside the cap")
        self.full_n_theta = int(n_theta)
        self.radius = float(radius)
        self.theta = self.theta[keep]
        self.row_weights = self.row_weights[keep]
        self.n_theta = int(keep.sum())

    @property
    def spacing(self):
        return max(math.pi / self.full_n_theta, TWO_PI / self.n_phi)

    def describe(self):
        return {"kind": "polar-cap", "n_theta": self.full_n_theta, "n_phi": self.n_phi,
                "radius": self.radius}


class PointSet:
    """Explicit list of sphere points with optional quadrature weights."""

    kind = 1

    def __init__(self, xyz, weights=None):
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        if xyz.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        norms = np.linalg.norm(xyz, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero vector in point set")
        self._xyz = xyz / norms[:, None]
        self._xyz.setflags(write=False)
        self.colatitudes = np.arctan2(np.hypot(self._xyz[:, 0], self._xyz[:, 1]), self._xyz[:, 2])
        self.longitudes = np.arctan2(self._xyz[:, 1], self._xyz[:, 0]) % TWO_PI
        if weights is None:
            weights = np.full(len(xyz), 4.0 * math.pi / len(xyz))
        self.weights = np.asarray(weights, dtype=float)
        self.n_theta, self.n_phi = len(xyz), 1

    @classmethod
    def from_points(cls, points):
        return cls(np.array([p.xyz for p in points]))

    @property
    def xyz(self):
        return self._xyz

    @property
    def size(self):
        return self._xyz.shape[0]

    @property
    def shape(self):
        return (self.size,)

    @property
    def spacing(self):
        return float("nan")

    def describe(self):
        return {"kind": "points", "n": self.size}


def _group_offsets(labels, n_groups):
    order = np.argsort(labels, kind="stable").astype(np.int64)
    counts = np.bincount(labels, minlength=n_groups)
    offsets = np.zeros(n_groups + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return order, offsets


@dataclass
class HierarchyLevel:
    k: int
    centers: np.ndarray          # (n_k, 3) unit vectors
    parents: np.ndarray          # (n_k,) index into the previous level, -1 at level 1
    labels: np.ndarray = field(repr=False)  # (n_points,) cell index of every grid point

    @property
    def n_cells(self):
        return self.centers.shape[0]

    def center_points(self):
        return [SpherePoint.from_vector(c) for c in self.centers]


class VoronoiHierarchy:
    """
    Nested partition of the evaluation grid into nearest-center cells.

    Level 1 splits the sphere between the two poles. At level k every parent
    cell is packed greedily (farthest point first, starting from the grid
    point closest to the parent center) with grid points at mutual distance
    at least ``2**-k``; each grid point then joins its nearest new center
    among the children of its own parent, so cells nest by construction.
    """

    def __init__(self, grid, levels):
        self.grid = grid
        self.levels = levels

    @property
    def k_max(self):
        return len(self.levels)

    def level(self, k) -> HierarchyLevel:
        if not (1 <= k <= self.k_max):
            raise ValueError(f"level {k} outside 1..{self.k_max}")
        return self.levels[k - 1]

    def cell_of(self, k, point_index):
        return self.level(k).labels[point_index]

    def cell_counts(self):
        return [lv.n_cells for lv in self.levels]

    def to_json(self):
        out = {"k_max": self.k_max, "grid": self.grid.describe(), "levels": []}
        for lv in self.levels:
            out["levels"].append({
                "k": lv.k,
                "centers": np.round(lv.centers, 15).tolist(),
                "parents": lv.parents.tolist(),
            })
        return json.dumps(out)

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


def build_voronoi_hierarchy(k_max, grid) -> VoronoiHierarchy:
    """
    Build levels 1..k_max on ``grid``.

    Raises ``ValueError`` when the grid spacing exceeds half the finest
    separation ``2**-k_max``, since then the packing cannot be certified.
    """
    k_max = int(k_max)
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    spacing = grid.spacing
    if np.isfinite(spacing) and spacing > 0.5 * 2.0 ** (-k_max):
        raise ValueError(
            f"grid spacing {spacing:.3g} too coarse to certify separation 2^-{k_max}")
    xyz = np.ascontiguousarray(grid.xyz)
    poles = np.array([NORTH.xyz, SOUTH.xyz])
    labels = np.where(xyz[:, 2] >= 0.0, 0, 1).astype(np.int64)
    levels = [HierarchyLevel(1, poles, np.full(2, -1, dtype=np.int64), labels)]
    for k in range(2, k_max + 1):
        prev = levels[-1]
        order, offsets = _group_offsets(prev.labels, prev.n_cells)
        cos_sep = math.cos(2.0 ** (-k))
        idx, par = kernels.fps_pack(xyz, order, offsets, np.ascontiguousarray(prev.centers), cos_sep)
        # fps_pack emits centers grouped by parent in increasing order
        child_counts = np.bincount(par, minlength=prev.n_cells)
        child_offsets = np.zeros(prev.n_cells + 1, dtype=np.int64)
        np.cumsum(child_counts, out=child_offsets[1:])
        centers = np.ascontiguousarray(xyz[idx])
        lab = kernels.assign_children(xyz, order, offsets, child_offsets, centers)
        levels.append(HierarchyLevel(k, centers, par, lab))
    return VoronoiHierarchy(grid, levels)


def covering_number(cap: Cap, eps) -> int:
    """
    Greedy eps-net size for a cap.

    Candidates are polar rings around the cap center, ``2^j`` rings with
    ``2^j >= max(64, 4 r / eps)``. The net starts at the center and repeatedly
    adds the candidate farthest from the current net until every candidate
    lies within ``eps``. The farthest-point order does not depend on ``eps``,
    so for a fixed candidate set (every eps >= r / 16) the count is exactly
    non-increasing in ``eps``.
    """
    eps = float(eps)
    r = cap.radius
    if not (0.0 < eps <= r):
        raise ValueError("need 0 < eps <= cap radius")
    n_rings = 2 ** max(6, int(math.ceil(math.log2(4.0 * r / eps))))
    h = r / n_rings
    rho = np.linspace(0.0, r, n_rings + 1)
    pts = [np.array([[0.0, 0.0, 1.0]])]
    for p in rho[1:]:
        n_az = max(6, int(math.ceil(TWO_PI * math.sin(p) / h)))
        az = TWO_PI * np.arange(n_az) / n_az
        pts.append(np.column_stack([math.sin(p) * np.cos(az), math.sin(p) * np.sin(az),
                                    np.full(n_az, math.cos(p))]))
    local = np.concatenate(pts)
    xyz = local @ _rotation_to(cap.center.xyz).T
    order = np.arange(xyz.shape[0], dtype=np.int64)
    offsets = np.array([0, xyz.shape[0]], dtype=np.int64)
    centers, _ = kernels.fps_pack(np.ascontiguousarray(xyz), order, offsets,
                                  cap.center.xyz[None, :].copy(), math.cos(eps * (1.0 + 1e-12)))
    return int(centers.size)


def _rotation_to(target):
    """Rotation matrix taking the north pole to the unit vector ``target``."""
    z = np.asarray(target, dtype=float)
    z = z / np.linalg.norm(z)
    helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(helper, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def random_points(n, rng) -> np.ndarray:
    """Uniform points on the sphere as an (n, 3) array."""
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_rotation(rng) -> np.ndarray:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    a, b, c, d = q
    return np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
    ])
