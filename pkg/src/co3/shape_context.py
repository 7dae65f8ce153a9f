"""Local shape-context histograms and their finalized target distributions.

Partitions follow the reference batch routine: two distance shells
([r1, r2) and [r2, inf)), ``nbins_xy`` sectors of atan2(y, x) over a full
turn and ``nbins_zy`` sectors of atan2(y, z) folded onto half a turn.
Neighbours closer than r1 (the query itself included) are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ScConfig:
    r1: float = 0.125
    r2: float = 2.0
    nbins_xy: int = 2
    nbins_zy: int = 2

    def __post_init__(self):
        if not 0 < self.r1 < self.r2:
            raise ValueError(f"need 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")
        if self.nbins_xy < 1 or self.nbins_zy < 1:
            raise ValueError("nbins_xy and nbins_zy must be >= 1")

    @property
    def n_bins(self) -> int:
        return self.nbins_xy * self.nbins_zy * 2

    @classmethod
    def compact(cls) -> "ScConfig":
        """8 partitions: r1=0.125, r2=2, 2 x 2 sectors, 2 shells."""
        return cls(0.125, 2.0, 2, 2)

    @classmethod
    def standard(cls) -> "ScConfig":
        """32 partitions with R1=0.5 m, R2=4 m: 4 xy sectors x 4 zy sectors x 2 shells."""
        return cls(0.5, 4.0, 4, 4)

    @classmethod
    def planar(cls) -> "ScConfig":
        """32 partitions purely in the x-y plane: 16 azimuth sectors x 2 shells."""
        return cls(0.5, 4.0, 16, 1)


@dataclass(frozen=True, eq=False)
class ShapeContext:
    histograms: np.ndarray
    kind: str = "raw"

    def __post_init__(self):
        if self.kind not in ("raw", "distribution"):
            raise ValueError(f"unknown shape-context kind {self.kind!r}")

    def __len__(self) -> int:
        return self.histograms.shape[0]


def partition_ids(rel: np.ndarray, cfg: ScConfig) -> np.ndarray:
    """Vectorised partition id for relative positions ``rel`` of shape (..., 3); -1 inside r1."""
    rel = np.asarray(rel, dtype=np.float64)
    x, y, z = rel[..., 0], rel[..., 1], rel[..., 2]
    ang_xy = np.fmod(np.arctan2(y, x) + TWO_PI, TWO_PI)
    ang_zy = np.fmod(np.arctan2(y, z) + TWO_PI, math.pi)
    xy_bin = np.minimum(np.floor(ang_xy / (TWO_PI / cfg.nbins_xy)), cfg.nbins_xy - 1)
    zy_bin = np.minimum(np.floor(ang_zy / (math.pi / cfg.nbins_zy)), cfg.nbins_zy - 1)
    angle_bin = xy_bin * cfg.nbins_zy + zy_bin
    dist = np.sqrt(x * x + y * y + z * z)
    dist_bin = np.where(dist < cfg.r1, -1, np.where(dist < cfg.r2, 0, 1))
    ids = dist_bin * (cfg.nbins_xy * cfg.nbins_zy) + angle_bin
    return np.where(dist_bin < 0, -1, ids).astype(np.int64)


def partition_id(rel, cfg: ScConfig) -> int:
    return int(partition_ids(np.asarray(rel, dtype=np.float64).reshape(1, 3), cfg)[0])


class CountTree:
    """k-d tree over neighbour points whose nodes carry point counts and tight bounding boxes.

    A query adds a whole node in one step when the node's box provably sits
    inside a single partition and only descends into nodes straddling a
    shell or sector boundary; leaves that still straddle are resolved point
    by point, so results match the all-pairs computation exactly.
    """

    def __init__(self, points: np.ndarray, leaf_size: int = 16):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.points = pts
        self.leaf_size = int(leaf_size)
        perm = np.arange(len(pts))
        lo, hi, start, stop, left, right = [], [], [], [], [], []

        def build(a: int, b: int) -> int:
            node = len(start)
            block = pts[perm[a:b]]
            lo.append(block.min(axis=0))
            hi.append(block.max(axis=0))
            start.append(a)
            stop.append(b)
            left.append(-1)
            right.append(-1)
            if b - a > self.leaf_size:
                axis = int(np.argmax(hi[node] - lo[node]))
                mid = (b - a) // 2
                part = np.argpartition(block[:, axis], mid, kind="introselect")
                perm[a:b] = perm[a:b][part]
                left[node] = build(a, a + mid)
                right[node] = build(a + mid, b)
            return node

        if len(pts):
            build(0, len(pts))
        self.perm = perm
        self.box_min = np.array(lo).reshape(-1, 3)
        self.box_max = np.array(hi).reshape(-1, 3)
        self.start = np.array(start, dtype=np.int64)
        self.stop = np.array(stop, dtype=np.int64)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.start)

    @property
    def counts(self) -> np.ndarray:
        return self.stop - self.start


def _wedge_of_boxes(alo, ahi, blo, bhi, n_wedges: int) -> np.ndarray:
    """Wedge shared by every point of each 2-D box in the (a, b) plane, angle = atan2(b, a).

    Wedges have width 2*pi/n_wedges and start at angle 0. A box is assigned
    a wedge only when all four corners clear both boundary rays by a
    relative margin; the boundary tests are linear in the point, so every
    point of the box clears them too. Returns -1 where undecided.
    """
    width = TWO_PI / n_wedges
    centre = np.fmod(np.arctan2(0.5 * (blo + bhi), 0.5 * (alo + ahi)) + TWO_PI, TWO_PI)
    k = np.minimum(np.floor(centre / width), n_wedges - 1)
    t0, t1 = k * width, (k + 1) * width
    c0, s0, c1, s1 = np.cos(t0), np.sin(t0), np.cos(t1), np.sin(t1)
    scale = np.maximum(np.maximum(np.abs(alo), np.abs(ahi)), np.maximum(np.abs(blo), np.abs(bhi)))
    margin = 1e-9 * scale
    ok = np.ones(k.shape, dtype=bool)
    for a in (alo, ahi):
        for b in (blo, bhi):
            ok &= c0 * b - s0 * a > margin
            ok &= a * s1 - b * c1 > margin
    return np.where(ok, k, -1.0)


def _classify_boxes(lo: np.ndarray, hi: np.ndarray, cfg: ScConfig):
    """For relative boxes (P, 3): (fully_masked, pure_bin) with pure_bin -1 when mixed."""
    dist_eps = 1e-9 * max(1.0, cfg.r2)
    near = np.where(lo > 0, lo, np.where(hi < 0, -hi, 0.0))
    far = np.maximum(np.abs(lo), np.abs(hi))
    dmin = np.sqrt(np.sum(near * near, axis=-1))
    dmax = np.sqrt(np.sum(far * far, axis=-1))
    masked = dmax < cfg.r1 - dist_eps
    shell = np.full(dmin.shape, -1.0)
    shell[(dmin >= cfg.r1 + dist_eps) & (dmax < cfg.r2 - dist_eps)] = 0.0
    shell[dmin >= cfg.r2 + dist_eps] = 1.0
    bins = shell * (cfg.nbins_xy * cfg.nbins_zy)
    undecided = shell < 0
    if cfg.nbins_xy > 1:
        xy = _wedge_of_boxes(lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1], cfg.nbins_xy)
        bins += xy * cfg.nbins_zy
        undecided |= xy < 0
    if cfg.nbins_zy > 1:
        # folded zy bins: unfolded wedge w of 2n maps to w mod n
        zy = _wedge_of_boxes(lo[:, 2], hi[:, 2], lo[:, 1], hi[:, 1], 2 * cfg.nbins_zy)
        bins += np.mod(zy, cfg.nbins_zy)
        undecided |= zy < 0
    return masked, np.where(undecided | masked, -1, bins).astype(np.int64)


def _count_block(queries: np.ndarray, tree: CountTree, cfg: ScConfig) -> np.ndarray:
    nb = cfg.n_bins
    flat = np.zeros(len(queries) * nb, dtype=np.int64)
    counts = tree.counts
    fq = np.arange(len(queries))
    fn = np.zeros(len(queries), dtype=np.int64)
    while len(fq):
        q = queries[fq]
        masked, bins = _classify_boxes(tree.box_min[fn] - q, tree.box_max[fn] - q, cfg)
        pure = bins >= 0
        flat += np.bincount(
            fq[pure] * nb + bins[pure], weights=counts[fn[pure]], minlength=len(flat)
        ).astype(np.int64)
        mixed = ~pure & ~masked
        leaf = mixed & (tree.left[fn] < 0)
        if np.any(leaf):
            lq, ln = fq[leaf], fn[leaf]
            sizes = counts[ln]
            rep_q = np.repeat(lq, sizes)
            offs = np.arange(sizes.sum()) - np.repeat(np.cumsum(sizes) - sizes, sizes)
            members = tree.perm[np.repeat(tree.start[ln], sizes) + offs]
            ids = partition_ids(tree.points[members] - queries[rep_q], cfg)
            keep = ids >= 0
            flat += np.bincount(rep_q[keep] * nb + ids[keep], minlength=len(flat))
        inner = mixed & (tree.left[fn] >= 0)
        fq = np.concatenate([fq[inner], fq[inner]])
        fn = np.concatenate([tree.left[fn[inner]], tree.right[fn[inner]]])
    return flat


def raw_histograms(
    points: np.ndarray,
    neighbors: np.ndarray,
    cfg: ScConfig,
    tree: CountTree | None = None,
    chunk: int = 256,
) -> ShapeContext:
    """Count, for every query point, the neighbours falling in each partition.

    Pass a prebuilt ``tree`` over ``neighbors`` to reuse it across calls.
    """
    queries = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    nb = cfg.n_bins
    flat = np.zeros(len(queries) * nb, dtype=np.int64)
    if len(queries) == 0 or len(neighbors) == 0:
        return ShapeContext(flat.reshape(len(queries), nb), "raw")
    if tree is None:
        tree = CountTree(neighbors)
    for a in range(0, len(queries), chunk):
        block = slice(a, min(a + chunk, len(queries)))
        flat[block.start * nb : block.stop * nb] = _count_block(queries[block], tree, cfg)
    return ShapeContext(flat.reshape(len(queries), nb), "raw")


def finalize_distribution(raw: ShapeContext, sf_csp: float = 4.0) -> ShapeContext:
    """Row-wise softmax(sf_csp * counts / row_sum); all-zero rows become uniform."""
    counts = np.asarray(raw.histograms, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("raw shape-context counts must be non-negative")
    total = counts.sum(axis=1, keepdims=True)
    normed = np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)
    logits = normed * sf_csp
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return ShapeContext(e / e.sum(axis=1, keepdims=True), "distribution")
