"""Screen geometry: corner extraction from masks, homography estimation, perspective warp.

The rectification path is: segmentation mask -> ordered screen quad ->
homography onto the canonical frame -> inverse-mapped bilinear warp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from .core import BinaryMask, ImageBuffer, Point2D, ScreenQuad, VitalscanError

__all__ = [
    "Point2D",
    "ScreenQuad",
    "CanonicalFrame",
    "Homography",
    "EmptyMask",
    "DegenerateShape",
    "SingularSystem",
    "order_corners",
    "extract_corners",
    "compute_homography",
    "warp_perspective",
    "warp_arrays",
    "fill_quad",
]


class EmptyMask(VitalscanError):
    """The mask contains no foreground pixels."""


class DegenerateShape(VitalscanError):
    """The foreground is too small or too flat to yield four distinct corners."""


class SingularSystem(VitalscanError):
    """The correspondence system is rank-deficient or the matrix is not invertible."""


#: Minimum component area, in pixels, considered a plausible screen.
MIN_COMPONENT_AREA = 64


@dataclass(frozen=True)
class CanonicalFrame:
    """The standardized destination view screens are rectified into."""

    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("canonical frame must be at least 2x2")

    @property
    def quad(self) -> ScreenQuad:
        w, h = self.width - 1, self.height - 1
        return ScreenQuad(
            (Point2D(0.0, 0.0), Point2D(float(w), 0.0), Point2D(float(w), float(h)), Point2D(0.0, float(h)))
        )


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective map, normalized so the bottom-right coefficient is 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise SingularSystem("homography coefficients must be finite")
        if abs(m[2, 2]) < 1e-12:
            raise SingularSystem("cannot normalize: h33 is zero")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-9:
            raise SingularSystem("homography is not invertible")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, points) -> np.ndarray:
        """Project Nx2 points and dehomogenize."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        ones = np.ones((pts.shape[0], 1))
        proj = np.hstack([pts, ones]) @ self.matrix.T
        w = proj[:, 2:3]
        if np.any(np.abs(w) < 1e-12):
            raise SingularSystem("point projects to infinity")
        return proj[:, :2] / w

    def __eq__(self, other) -> bool:
        if not isinstance(other, Homography):
            return NotImplemented
        return bool(np.array_equal(self.matrix, other.matrix))

    __hash__ = None  # type: ignore[assignment]


def order_corners(points: Union[Sequence[Point2D], np.ndarray]) -> ScreenQuad:
    """Canonicalize 4 unordered points into TL, TR, BR, BL clockwise order.

    The ring is the angular order around the centroid; the starting corner is
    the ring member minimizing x + y (ties broken by y, then x). Pure function
    of the point set: every permutation of the same 4 points yields an
    identical quad.
    """
    if isinstance(points, np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
    else:
        pts = np.array([[p.x, p.y] for p in points], dtype=np.float64)
    if pts.shape != (4, 2):
        raise DegenerateShape(f"expected 4 points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateShape("corner coordinates must be finite")
    for i in range(4):
        for j in range(i + 1, 4):
            if np.hypot(*(pts[i] - pts[j])) < 1e-9:
                raise DegenerateShape("duplicate corner points")

    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    rad = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1])
    ring = pts[np.lexsort((rad, ang))]  # ascending angle = clockwise with y down

    area2 = 0.0
    for i in range(4):
        a, b = ring[i], ring[(i + 1) % 4]
        area2 += a[0] * b[1] - b[0] * a[1]
    if abs(area2) < 1e-9:
        raise DegenerateShape("points are collinear")
    if area2 < 0:
        ring = ring[::-1]

    keys = [(ring[i, 0] + ring[i, 1], ring[i, 1], ring[i, 0]) for i in range(4)]
    start = min(range(4), key=lambda i: keys[i])
    ring = np.roll(ring, -start, axis=0)
    try:
        return ScreenQuad.from_array(ring)
    except ValueError as e:
        raise DegenerateShape(str(e)) from e


def compute_homography(src: ScreenQuad, dst: ScreenQuad) -> Homography:
    """Solve the 8-unknown linear system mapping the 4 src corners onto dst.

    Each correspondence (x, y) -> (u, v) contributes two equations in the
    eight unknown coefficients (the ninth is fixed to 1). The solution is
    verified by reprojection before being returned.
    """
    s = src.as_array()
    d = dst.as_array()
    a = np.zeros((8, 8), dtype=np.float64)
    b = np.zeros(8, dtype=np.float64)
    for i in range(4):
        x, y = s[i]
        u, v = d[i]
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as e:
        raise SingularSystem(f"degenerate corner correspondence: {e}") from e
    mat = np.array(
        [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]], dtype=np.float64
    )
    hom = Homography(mat)
    err = np.max(np.hypot(*(hom.apply(s) - d).T))
    if not err < 1e-6:
        raise SingularSystem(f"ill-conditioned correspondence, reprojection error {err:.3g} px")
    return hom


# ---------------------------------------------------------------------------
# corner extraction from a segmentation mask


_TRACE_DIRS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
_DIR_INDEX = {d: i for i, d in enumerate(_TRACE_DIRS)}


def _trace_boundary(comp: np.ndarray) -> np.ndarray:
    """Moore-neighbor trace of the outer boundary of a connected component.

    Returns the boundary pixels in clockwise order (image coordinates) as an
    (N, 2) float array of (x, y).
    """
    h, w = comp.shape
    ys, xs = np.nonzero(comp)
    first = np.lexsort((xs, ys))[0]  # topmost, then leftmost
    sx, sy = int(xs[first]), int(ys[first])

    def fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(comp[y, x])

    if not any(fg(sx + dx, sy + dy) for dx, dy in _TRACE_DIRS):
        return np.array([[sx, sy]], dtype=np.float64)

    contour: list[tuple[int, int]] = []
    seen: dict[tuple[int, int, int], int] = {}
    px, py, back = sx, sy, 4  # backtrack starts at the (background) west neighbor
    while True:
        state = (px, py, back)
        if state in seen:
            contour = contour[seen[state]:]
            break
        seen[state] = len(contour)
        contour.append((px, py))
        for k in range(1, 9):
            idx = (back + k) % 8
            nx, ny = px + _TRACE_DIRS[idx][0], py + _TRACE_DIRS[idx][1]
            if fg(nx, ny):
                bx = px + _TRACE_DIRS[(back + k - 1) % 8][0]
                by = py + _TRACE_DIRS[(back + k - 1) % 8][1]
                px, py = nx, ny
                back = _DIR_INDEX[(bx - px, by - py)]
                break
    return np.array(contour, dtype=np.float64)


def _chord_distances(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    norm = math.hypot(d[0], d[1])
    if norm < 1e-12:
        return np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1])
    return np.abs((pts[:, 0] - a[0]) * d[1] - (pts[:, 1] - a[1]) * d[0]) / norm


def _dp_indices(pts: np.ndarray, eps: float) -> np.ndarray:
    """Ramer-Douglas-Peucker on an open polyline; returns kept indices, sorted."""
    n = len(pts)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        dists = _chord_distances(pts[i + 1 : j], pts[i], pts[j])
        k = int(np.argmax(dists))
        if dists[k] > eps:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return np.nonzero(keep)[0]


def _simplify_closed(contour: np.ndarray, eps: float) -> np.ndarray:
    """Simplify a closed contour by splitting at the two most distant anchors."""
    p0 = contour[0]
    j = int(np.argmax(np.hypot(contour[:, 0] - p0[0], contour[:, 1] - p0[1])))
    if j == 0:
        return contour[:1]
    first = contour[: j + 1]
    second = np.vstack([contour[j:], contour[:1]])
    k1 = _dp_indices(first, eps)
    k2 = _dp_indices(second, eps)
    return np.vstack([first[k1[:-1]], second[k2[:-1]]])


def _four_corner_dp(contour: np.ndarray, max_steps: int = 20) -> np.ndarray | None:
    """Bisect the DP tolerance seeking exactly 4 vertices. None if unattainable."""
    if len(contour) < 4:
        return None
    # Anchor the closed-polyline split at a true extreme point: chain endpoints
    # survive every DP pass, so a mid-edge anchor would displace a real corner.
    centroid = contour.mean(axis=0)
    i0 = int(np.argmax(np.hypot(contour[:, 0] - centroid[0], contour[:, 1] - centroid[1])))
    contour = np.roll(contour, -i0, axis=0)
    closed = np.vstack([contour, contour[:1]])
    arc = float(np.sum(np.hypot(*np.diff(closed, axis=0).T)))
    lo, hi = 0.005 * arc, 0.08 * arc
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        verts = _simplify_closed(contour, mid)
        if len(verts) == 4:
            return verts
        if len(verts) > 4:
            lo = mid
        else:
            hi = mid
    return None


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull; returns hull vertices without repetition."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                a, b = out[-1] - out[-2], p - out[-2]
                if a[0] * b[1] - a[1] * b[0] > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _min_area_rect(points: np.ndarray) -> np.ndarray:
    """Minimum-area enclosing rectangle via rotating calipers over hull edges."""
    hull = _convex_hull(points)
    if len(hull) < 3:
        raise DegenerateShape("foreground is collinear; no enclosing rectangle")
    best_area = math.inf
    best: np.ndarray | None = None
    edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
    for e in edges:
        norm = math.hypot(e[0], e[1])
        if norm < 1e-12:
            continue
        u = e / norm
        v = np.array([-u[1], u[0]])
        xs = hull @ u
        ys = hull @ v
        x0, x1 = xs.min(), xs.max()
        y0, y1 = ys.min(), ys.max()
        area = (x1 - x0) * (y1 - y0)
        if area < best_area:
            best_area = area
            best = np.array(
                [
                    u * x0 + v * y0,
                    u * x1 + v * y0,
                    u * x1 + v * y1,
                    u * x0 + v * y1,
                ]
            )
    if best is None or best_area < 1e-9:
        raise DegenerateShape("degenerate enclosing rectangle")
    return best


def _refine_corners(contour: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Sub-pixel corner refinement: fit a line to each boundary edge between
    approximate corners (trimming the corner neighborhoods) and intersect
    adjacent lines.

    Rasterization truncates acute corner tips, so the raw boundary vertex can
    sit several pixels inside the true corner along a shallow edge; the edge
    lines themselves are unaffected, which makes their intersections the
    better estimate.
    """
    n = len(contour)
    idx = sorted(
        int(np.argmin(np.hypot(contour[:, 0] - v[0], contour[:, 1] - v[1]))) for v in verts
    )
    if len(set(idx)) != 4:
        return verts
    lines: list[tuple[np.ndarray, np.ndarray]] = []
    for k in range(4):
        i, j = idx[k], idx[(k + 1) % 4]
        seg = contour[i : j + 1] if j > i else np.vstack([contour[i:], contour[: j + 1]])
        trim = max(2, int(0.08 * len(seg)))
        core = seg[trim:-trim] if len(seg) > 2 * trim + 2 else seg
        centroid = core.mean(axis=0)
        centered = core - centroid
        if len(core) < 2:
            return verts
        # total-least-squares direction: principal axis of the edge points
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        lines.append((centroid, vt[0]))
    corners = np.zeros((4, 2))
    for k in range(4):
        (p1, d1) = lines[k - 1]
        (p2, d2) = lines[k]
        denom = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(denom) < 1e-9:
            return verts
        t = ((p2[0] - p1[0]) * d2[1] - (p2[1] - p1[1]) * d2[0]) / denom
        corners[k] = p1 + t * d1
    # refinement must stay near the boundary vertices; otherwise distrust it
    for corner in corners:
        nearest = np.hypot(verts[:, 0] - corner[0], verts[:, 1] - corner[1]).min()
        if nearest > 12.0:
            return verts
    return corners


def extract_corners(mask: BinaryMask) -> ScreenQuad:
    """Derive the 4 ordered corners of the largest foreground component.

    Douglas-Peucker simplification of the outer boundary is tried first, with
    the tolerance bisected toward exactly four vertices; the minimum-area
    rotated rectangle of the boundary is the fallback. Either way the corners
    are refined by edge-line intersection.
    """
    data = mask.data
    if not data.any():
        raise EmptyMask("mask has no foreground pixels")

    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])  # 4-connectivity
    labelled, n = ndimage.label(data, structure=structure)
    counts = np.bincount(labelled.ravel())
    counts[0] = 0
    best_count = counts.max()
    candidates = np.nonzero(counts == best_count)[0]
    if len(candidates) == 1:
        chosen = int(candidates[0])
    else:
        # tie-break: topmost, then leftmost bounding box
        slices = ndimage.find_objects(labelled)
        chosen = int(
            min(candidates, key=lambda c: (slices[c - 1][0].start, slices[c - 1][1].start))
        )
    if best_count < MIN_COMPONENT_AREA:
        raise DegenerateShape(
            f"largest component covers {best_count} px, below {MIN_COMPONENT_AREA}"
        )

    comp = labelled == chosen
    contour = _trace_boundary(comp)

    verts = _four_corner_dp(contour)
    if verts is not None:
        try:
            return order_corners(_refine_corners(contour, verts))
        except DegenerateShape:
            pass
    rect = _min_area_rect(contour)
    try:
        return order_corners(_refine_corners(contour, rect))
    except DegenerateShape:
        return order_corners(rect)


# ---------------------------------------------------------------------------
# perspective warping


def warp_arrays(
    src: np.ndarray, matrix: np.ndarray, out_width: int, out_height: int
) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-map an RGB array through a homography with bilinear sampling.

    matrix maps source coordinates onto output coordinates; pixels whose
    inverse-mapped sample falls outside the source are zeroed. Returns the
    uint8 output and the validity mask.
    """
    hinv = np.linalg.inv(np.asarray(matrix, dtype=np.float64))
    h, w = src.shape[:2]
    xs = np.arange(out_width, dtype=np.float64)[None, :]
    ys = np.arange(out_height, dtype=np.float64)[:, None]
    denom = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / denom
        sy = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / denom
    valid = (
        np.isfinite(sx)
        & np.isfinite(sy)
        & (np.abs(denom) > 1e-12)
        & (sx >= 0.0)
        & (sx <= w - 1.0)
        & (sy >= 0.0)
        & (sy <= h - 1.0)
    )
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    x0 = np.clip(np.floor(sx).astype(np.intp), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(sy).astype(np.intp), 0, max(h - 2, 0))
    fx = (sx - x0).astype(np.float32)[..., None]
    fy = (sy - y0).astype(np.float32)[..., None]
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    img = np.ascontiguousarray(src, dtype=np.float32)
    top = img[y0, x0]
    top += (img[y0, x1] - top) * fx
    bot = img[y1, x0]
    bot += (img[y1, x1] - bot) * fx
    top += (bot - top) * fy
    top[~valid] = 0.0
    np.rint(top, out=top)
    return top.clip(0, 255).astype(np.uint8), valid


def warp_perspective(img: ImageBuffer, h: Homography, frame: CanonicalFrame) -> ImageBuffer:
    """Rectify an image into the canonical frame through homography h (src -> dst)."""
    out, _ = warp_arrays(img.pixels, h.matrix, frame.width, frame.height)
    return ImageBuffer(out)


def fill_quad(quad: ScreenQuad, width: int, height: int) -> BinaryMask:
    """Rasterize a quad into a mask; a pixel is foreground when its integer
    coordinate lies inside the polygon (even-odd rule)."""
    pts = quad.as_array()
    xs = np.arange(width, dtype=np.float64)[None, :]
    ys = np.arange(height, dtype=np.float64)[:, None]
    inside = np.zeros((height, width), dtype=bool)
    for i in range(4):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % 4]
        if ay == by:
            continue
        cond = (ay > ys) != (by > ys)
        xcross = (bx - ax) * (ys - ay) / (by - ay) + ax
        inside ^= cond & (xs < xcross)
    return BinaryMask(inside)
