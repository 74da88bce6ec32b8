"""Normalized-cut bipartitions and iterative cut-out of foreground objects.

``ncut_bipartition`` is the usual spectral relaxation: take the second
eigenvector of the symmetric normalized Laplacian, map it back through
D^(-1/2), and threshold at the mean. ``maskcut`` applies it repeatedly to a
patch feature map, peeling off one foreground region per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    AmbiguousCutError,
    DegeneratePartitionError,
    EmptyMaskError,
    SizeLimitError,
)
from .graph import (
    BRUTE_FORCE_MAX_NODES,
    PatchGraph,
    _subset_masks,
    adjacency_with_floor,
    is_connected,
    normalized_laplacian,
)
from .linalg import sym_eigendecomposition

#: Spectral gap below which a graph is treated as disconnected for cutting.
CONNECTIVITY_EPS = 1e-10


@dataclass(frozen=True)
class Bipartition:
    """A two-way node split. side_of[i] in {0, 1}; ``foreground`` names a side."""

    side_of: np.ndarray
    foreground: int
    energy: float

    def __post_init__(self):
        side = np.asarray(self.side_of, dtype=np.int8)
        if side.ndim != 1 or not np.isin(side, (0, 1)).all():
            raise ValueError("side_of must be a flat 0/1 array")
        if 0 not in side or 1 not in side:
            raise ValueError("both sides of a bipartition must be nonempty")
        if self.foreground not in (0, 1):
            raise ValueError("foreground must be 0 or 1")
        if not (self.energy >= 0.0):
            raise ValueError("cut energy must be nonnegative")
        object.__setattr__(self, "side_of", side)


@dataclass(frozen=True)
class CutIteration:
    """One peeled region: boolean patch mask, tight bbox, cut diagnostics.

    ``fiedler`` is the second eigenvalue of the *normalized* Laplacian of the
    graph this iteration cut (it falls out of the same decomposition, so it
    costs nothing extra); it measures how separable the remaining map was.
    """

    mask: np.ndarray
    bbox: tuple
    energy: float
    fiedler: float


@dataclass(frozen=True)
class CutResult:
    grid_h: int
    grid_w: int
    iterations: tuple

    @property
    def bboxes(self):
        return [it.bbox for it in self.iterations]

    def to_dict(self):
        return {
            "grid_h": self.grid_h,
            "grid_w": self.grid_w,
            "iterations": [
                {
                    "mask_rle": _rle_encode(it.mask),
                    "bbox": list(it.bbox),
                    "energy": it.energy,
                    "fiedler": it.fiedler,
                }
                for it in self.iterations
            ],
        }

    @classmethod
    def from_dict(cls, d):
        iters = tuple(
            CutIteration(
                mask=_rle_decode(rec["mask_rle"], d["grid_h"], d["grid_w"]),
                bbox=tuple(rec["bbox"]),
                energy=float(rec["energy"]),
                fiedler=float(rec["fiedler"]),
            )
            for rec in d["iterations"]
        )
        return cls(int(d["grid_h"]), int(d["grid_w"]), iters)


def _rle_encode(mask):
    """Row-major run lengths, alternating runs of 0s then 1s (first run may be 0)."""
    flat = np.asarray(mask, dtype=bool).ravel()
    counts = []
    current = False
    run = 0
    for v in flat:
        if v == current:
            run += 1
        else:
            counts.append(run)
            current = v
            run = 1
    counts.append(run)
    return counts


def _rle_decode(counts, grid_h, grid_w):
    total = grid_h * grid_w
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if run:
            flat[pos : pos + run] = value
        pos += run
        value = not value
    if pos != total:
        raise ValueError(f"run lengths cover {pos} cells, expected {total}")
    return flat.reshape(grid_h, grid_w)


def ncut_energy(g, side_of):
    """NCut(A, B) = cut(A,B)/vol(A) + cut(A,B)/vol(B)."""
    side = np.asarray(side_of)
    in_b = side.astype(np.float64)
    in_a = 1.0 - in_b
    cut = float(in_a @ g.adjacency @ in_b)
    vol_a = float(in_a @ g.degrees)
    vol_b = float(in_b @ g.degrees)
    if vol_a <= 0.0 or vol_b <= 0.0:
        raise DegeneratePartitionError("a partition side has zero volume")
    return cut / vol_a + cut / vol_b


def _spectral_split(g):
    """Second eigenvector split. Returns (side_of, u, lambda2_sym)."""
    l_sym = normalized_laplacian(g)
    dec = sym_eigendecomposition(l_sym)
    lam2 = float(dec.eigenvalues[1])
    if lam2 <= CONNECTIVITY_EPS:
        raise AmbiguousCutError(
            f"spectral gap {lam2:.3e} below {CONNECTIVITY_EPS:.0e}; graph is "
            "disconnected or numerically so"
        )
    u = dec.eigenvectors[:, 1] / np.sqrt(g.degrees)
    side = (u > u.mean()).astype(np.int8)
    if side.all() or not side.any():
        side = (u > np.median(u)).astype(np.int8)
    if side.all() or not side.any():
        # Fully degenerate eigenvector; fall back to an index split.
        order = np.argsort(u, kind="stable")
        side = np.zeros(g.n, dtype=np.int8)
        side[order[g.n // 2 :]] = 1
    return side, u, max(0.0, lam2)


def ncut_bipartition(g):
    """Spectral NCut bipartition of a connected graph.

    The foreground is the side holding the largest-magnitude entry of the
    scaled Fiedler vector (small tight clusters get large entries under the
    D^(-1/2) scaling).
    """
    if g.n < 2:
        raise ValueError("cannot bipartition fewer than 2 nodes")
    side, u, _ = _spectral_split(g)
    fg = int(side[int(np.argmax(np.abs(u)))])
    return Bipartition(side, fg, ncut_energy(g, side))


def brute_force_ncut(g):
    """Exact minimum-NCut bipartition by subset enumeration (n <= 14).

    Ties are broken by the lexicographically smallest side_of vector (node 0
    is always on side 0).
    """
    if g.n > BRUTE_FORCE_MAX_NODES:
        raise SizeLimitError(
            f"brute-force NCut limited to {BRUTE_FORCE_MAX_NODES} nodes, got {g.n}"
        )
    if g.n < 2:
        raise ValueError("cannot bipartition fewer than 2 nodes")
    masks = _subset_masks(g.n)  # S always contains node 0
    s = masks.astype(np.float64)
    cuts = np.einsum("si,ij,sj->s", s, g.adjacency, 1.0 - s)
    vol_s = s @ g.degrees
    vol_c = g.degrees.sum() - vol_s
    with np.errstate(divide="ignore", invalid="ignore"):
        energies = np.where(
            (vol_s > 0.0) & (vol_c > 0.0), cuts / vol_s + cuts / vol_c, np.inf
        )
    best = float(energies.min())
    if not np.isfinite(best):
        raise DegeneratePartitionError("every bipartition has a zero-volume side")
    best_side = None
    for idx in np.nonzero(energies == best)[0]:
        side = (~masks[idx]).astype(np.int8)  # node 0 -> side 0
        key = tuple(side.tolist())
        if best_side is None or key < best_side:
            best_side = key
    return Bipartition(np.array(best_side, dtype=np.int8), 1, best)


def mask_to_bbox(mask):
    """Tight inclusive bbox (h1, w1, h2, w2) of a boolean patch mask."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ValueError("mask must be 2-D")
    rows = np.nonzero(m.any(axis=1))[0]
    cols = np.nonzero(m.any(axis=0))[0]
    if rows.size == 0:
        raise EmptyMaskError("mask has no set patches")
    return (int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))


def _corner_ids(grid_h, grid_w):
    return (
        0,
        grid_w - 1,
        (grid_h - 1) * grid_w,
        grid_h * grid_w - 1,
    )


def _grid_component(mask, seed):
    """4-connected component of ``seed`` within a boolean grid mask."""
    out = np.zeros_like(mask)
    stack = [seed]
    out[seed] = True
    h, w = mask.shape
    while stack:
        r, c = stack.pop()
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not out[rr, cc]:
                out[rr, cc] = True
                stack.append((rr, cc))
    return out


def maskcut(fm, kernel, n_iters=3):
    """Iteratively cut out up to ``n_iters`` foreground regions of a feature map.

    Each iteration bipartitions the graph over the not-yet-masked patches and
    picks the foreground side (swapping sides if the chosen one holds >= 3 of
    the 4 grid corners, which flags it as background). The emitted mask is the
    4-connected grid component of the foreground around its strongest patch —
    a scene with several objects puts them all on the foreground side of the
    first cut, and the component step peels them off one per iteration. Stops
    early when fewer than 4 patches remain or the residual graph is
    disconnected.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    corners = _corner_ids(fm.grid_h, fm.grid_w)
    active = np.ones(fm.n, dtype=bool)
    iterations = []
    for _ in range(n_iters):
        idx = np.nonzero(active)[0]
        if idx.size < 4:
            break
        g = adjacency_with_floor(fm.vectors[idx], kernel)
        if not is_connected(g):
            break
        try:
            side, u, lam2 = _spectral_split(g)
        except AmbiguousCutError:
            break
        fg = int(side[int(np.argmax(np.abs(u)))])
        corner_hits = sum(
            1 for c in corners if active[c] and side[np.searchsorted(idx, c)] == fg
        )
        if corner_hits >= 3:
            fg = 1 - fg
        fg_local = np.nonzero(side == fg)[0]
        mask = np.zeros(fm.n, dtype=bool)
        mask[idx[fg_local]] = True
        mask = mask.reshape(fm.grid_h, fm.grid_w)
        seed_local = fg_local[int(np.argmax(np.abs(u[fg_local])))]
        seed = int(idx[seed_local])
        mask = _grid_component(mask, divmod(seed, fm.grid_w))
        iterations.append(
            CutIteration(
                mask=mask,
                bbox=mask_to_bbox(mask),
                energy=ncut_energy(g, side),
                fiedler=lam2,
            )
        )
        active[mask.ravel()] = False
    return CutResult(fm.grid_h, fm.grid_w, tuple(iterations))
