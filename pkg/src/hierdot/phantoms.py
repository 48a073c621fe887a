"""
Piecewise-constant test targets, reconstruction error metrics, nodal field
files and grayscale image export.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .forward import OpticalField
from .mesh import TriMesh, interpolate_field

__all__ = [
    "Inclusion",
    "Phantom",
    "rasterize",
    "two_inclusion_phantom",
    "difference_phantom",
    "positive_phantom",
    "relative_error",
    "write_field",
    "read_field",
    "export_image",
    "read_pgm",
]


@dataclass(frozen=True)
class Inclusion:
    """A sharp-edged region added to the background.

    ``size`` is the radius of a disk, or the circumradius of a regular
    polygon with ``sides`` corners rotated by ``rotation`` radians.
    """

    center: tuple
    size: float
    d_mua: float = 0.0
    d_mus: float = 0.0
    shape: str = "disk"
    sides: int = 4
    rotation: float = 0.0

    def __post_init__(self):
        if self.shape not in ("disk", "polygon"):
            raise ValidationError(f"inclusion shape must be 'disk' or 'polygon', got {self.shape!r}")
        if not self.size > 0:
            raise ValidationError(f"inclusion size must be positive, got {self.size}")
        if self.shape == "polygon" and self.sides < 3:
            raise ValidationError(f"polygon needs at least 3 sides, got {self.sides}")
        if len(self.center) != 2:
            raise ValidationError(f"inclusion center must be (x, y), got {self.center!r}")

    def vertices(self) -> np.ndarray:
        ang = self.rotation + 2 * np.pi * np.arange(self.sides) / self.sides
        return np.asarray(self.center, float) + self.size * np.column_stack(
            [np.cos(ang), np.sin(ang)]
        )

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float) - np.asarray(self.center, float)
        if self.shape == "disk":
            return np.hypot(p[:, 0], p[:, 1]) <= self.size
        # regular polygons are convex: inside every edge half-plane
        v = self.vertices() - np.asarray(self.center, float)
        inside = np.ones(len(p), dtype=bool)
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            cross = (b[0] - a[0]) * (p[:, 1] - a[1]) - (b[1] - a[1]) * (p[:, 0] - a[0])
            inside &= cross >= 0
        return inside


@dataclass(frozen=True)
class Phantom:
    background: tuple = (0.01, 1.0)
    inclusions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.background) != 2 or min(self.background) <= 0:
            raise ValidationError(f"background (mua, mus) must be positive, got {self.background!r}")

    @property
    def sign(self) -> str:
        deltas = [d for inc in self.inclusions for d in (inc.d_mua, inc.d_mus)]
        return "positive" if all(d >= 0 for d in deltas) else "mixed"


def rasterize(phantom: Phantom, mesh: TriMesh) -> OpticalField:
    """Nodal optical field: background plus the deltas of covering inclusions."""
    mua = np.full(mesh.n, float(phantom.background[0]))
    mus = np.full(mesh.n, float(phantom.background[1]))
    covers = []
    for inc in phantom.inclusions:
        inside = inc.contains(mesh.nodes)
        mua[inside] += inc.d_mua
        mus[inside] += inc.d_mus
        covers.append(inside)
    bad = (mua <= 0) | (mus <= 0)
    if np.any(bad):
        culprits = [k for k, c in enumerate(covers) if np.any(c & bad)]
        raise ValidationError(
            f"phantom gives nonpositive coefficients at {int(bad.sum())} nodes; "
            f"offending inclusions {culprits}"
        )
    return OpticalField(mua, mus)


def two_inclusion_phantom(background=(0.01, 1.0)) -> Phantom:
    """Mixed-sign target: a larger +50% and a smaller -30% inclusion."""
    a, s = background
    return Phantom(
        background,
        (
            Inclusion((-8.0, 6.0), 5.0, 0.5 * a, 0.5 * s),
            Inclusion((9.0, -7.0), 3.0, -0.3 * a, -0.3 * s),
        ),
    )


def difference_phantom(background=(0.01, 1.0)) -> Phantom:
    """Sharp-edged mixed-sign target with somewhat larger inclusions."""
    a, s = background
    return Phantom(
        background,
        (
            Inclusion((-8.0, 6.0), 6.5, 0.5 * a, 0.5 * s),
            Inclusion((9.0, -7.0), 4.5, -0.3 * a, -0.3 * s),
        ),
    )


def positive_phantom(background=(0.01, 1.0), contrast=4.0) -> Phantom:
    """Two equal positive inclusions placed symmetrically about the centre."""
    a, s = background
    return Phantom(
        background,
        (
            Inclusion((-10.0, 0.0), 5.0, contrast * a, contrast * s),
            Inclusion((10.0, 0.0), 5.0, contrast * a, contrast * s),
        ),
    )


def relative_error(x_true, true_mesh: TriMesh, x_map, map_mesh: TriMesh, common_mesh=None):
    """Relative errors (percent) of (mua, mus) after transfer to a common mesh.

    Fields are OpticalField or stacked (mua, mus) vectors. The common mesh
    defaults to the mesh of ``x_true``.
    """
    common = true_mesh if common_mesh is None else common_mesh
    out = []
    pairs = zip(_as_classes(x_true, true_mesh), _as_classes(x_map, map_mesh))
    for t, m in pairs:
        t_c = interpolate_field(true_mesh, common, t)
        m_c = interpolate_field(map_mesh, common, m)
        norm = np.linalg.norm(t_c)
        if norm == 0:
            raise ValidationError("true field is identically zero")
        out.append(100.0 * float(np.linalg.norm(t_c - m_c) / norm))
    return tuple(out)


def _as_classes(x, mesh):
    if isinstance(x, OpticalField):
        if x.n != mesh.n:
            raise ValidationError(f"field has {x.n} nodes, mesh has {mesh.n}")
        return x.mua, x.mus
    x = np.asarray(x, dtype=float)
    if x.shape != (2 * mesh.n,):
        raise ValidationError(f"stacked field has length {x.size}, mesh has {mesh.n} nodes")
    return x[: mesh.n], x[mesh.n :]


def write_field(path, mesh: TriMesh, field: OpticalField) -> None:
    """Nodal CSV with columns ``node,x,y,mua,mus``."""
    if field.n != mesh.n:
        raise ValidationError(f"field has {field.n} nodes, mesh has {mesh.n}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "x", "y", "mua", "mus"])
        for k, ((x, y), a, s) in enumerate(zip(mesh.nodes, field.mua, field.mus)):
            w.writerow([k, repr(float(x)), repr(float(y)), repr(float(a)), repr(float(s))])


def read_field(path) -> OpticalField:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"node", "x", "y", "mua", "mus"}:
        raise ValidationError(f"{path}: expected columns node,x,y,mua,mus")
    idx = np.array([int(r["node"]) for r in rows])
    if not np.array_equal(idx, np.arange(len(rows))):
        raise ValidationError(f"{path}: node indices must run 0..n-1 in order")
    return OpticalField(
        np.array([float(r["mua"]) for r in rows]), np.array([float(r["mus"]) for r in rows])
    )


def _pixel_grid(mesh, size):
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    span = float(max(hi - lo))
    step = span / size
    xs = lo[0] + (np.arange(size) + 0.5) * step
    ys = hi[1] - (np.arange(size) + 0.5) * step  # first row at the top
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def export_image(values, mesh: TriMesh, path, clip=(1.0, 99.0), size=256, sampling="nearest"):
    """Write a nodal field as an 8-bit PGM image plus a ``.txt`` sidecar.

    Pixels outside the mesh are 0; mesh pixels map the clipped value range
    linearly onto gray levels 1..255. ``sampling`` is ``"nearest"`` (nearest
    node, so only nodal values appear) or ``"linear"``. Returns the gray
    image array.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n,):
        raise ValidationError(f"image field has length {values.size}, mesh has {mesh.n} nodes")
    if not (0 <= clip[0] <= clip[1] <= 100):
        raise ValidationError(f"clip percentiles must satisfy 0 <= low <= high <= 100, got {clip}")
    if sampling not in ("nearest", "linear"):
        raise ValidationError(f"unknown sampling {sampling!r}")
    pts = _pixel_grid(mesh, size)
    _, bary = mesh.locate(pts)
    inside = bary.min(axis=1) >= -1e-9
    if sampling == "nearest":
        _, nearest = cKDTree(mesh.nodes).query(pts[inside])
        sampled = values[nearest]
    else:
        sampled = mesh.evaluate(values, pts[inside])
    vmin, vmax = float(values.min()), float(values.max())
    lo, hi = (float(v) for v in np.percentile(values, clip))
    gray = np.zeros(size * size, dtype=np.uint8)
    if hi > lo:
        scaled = (np.clip(sampled, lo, hi) - lo) / (hi - lo)
        gray[inside] = 1 + np.rint(254 * scaled).astype(np.uint8)
    else:
        gray[inside] = 128
    gray = gray.reshape(size, size)
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{size} {size}\n255\n".encode("ascii"))
            fh.write(gray.tobytes())
        with open(f"{path}.txt", "w") as fh:
            fh.write(f"min = {vmin!r}\nmax = {vmax!r}\n")
            fh.write(f"clip_percentiles = {clip[0]!r} {clip[1]!r}\n")
            fh.write(f"clip_low = {lo!r}\nclip_high = {hi!r}\n")
            fh.write(f"sampling = {sampling}\n")
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc
    return gray


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM as written by :func:`export_image`."""
    with open(path, "rb") as fh:
        data = fh.read()
    header = data.split(b"\n", 3)
    if header[0] != b"P5" or len(header) < 4:
        raise ValidationError(f"{path}: not a binary PGM file")
    w, h = (int(v) for v in header[1].split())
    if int(header[2]) != 255:
        raise ValidationError(f"{path}: only 8-bit images are supported")
    return np.frombuffer(header[3], dtype=np.uint8, count=w * h).reshape(h, w)
