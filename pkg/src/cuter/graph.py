"""Patch graphs: similarity kernels, Laplacians, Fiedler values, Cheeger constant.

A feature map is a grid of patch feature vectors; a patch graph is the dense
weighted similarity graph over those patches. The Fiedler value (second
smallest Laplacian eigenvalue) measures connectivity: well-separated objects
produce near-block-diagonal similarity and a small Fiedler value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateFeatureError, IsolatedNodeError, SizeLimitError
from .linalg import sym_eigendecomposition
from .validation import check_adjacency, symmetric_outer_scale

KERNEL_KINDS = ("gaussian", "cosine-continuous", "cosine-binarized")

#: Largest graph the subset-enumeration oracles accept.
BRUTE_FORCE_MAX_NODES = 14


@dataclass(frozen=True)
class FeatureMap:
    """A grid_h x grid_w grid of feature vectors, stored row-major as (n, dim)."""

    grid_h: int
    grid_w: int
    vectors: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.ndim != 2:
            raise ValueError(f"vectors must be 2-D (n, dim), got shape {vec.shape}")
        if self.grid_h < 1 or self.grid_w < 1:
            raise ValueError("grid dimensions must be positive")
        if vec.shape[0] != self.grid_h * self.grid_w:
            raise ValueError(
                f"expected {self.grid_h * self.grid_w} patch vectors, got {vec.shape[0]}"
            )
        if vec.shape[1] < 1:
            raise ValueError("feature dimension must be positive")
        if not np.isfinite(vec).all():
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "vectors", vec)

    @property
    def n(self):
        return self.grid_h * self.grid_w

    @property
    def dim(self):
        return int(self.vectors.shape[1])

    @classmethod
    def from_grid(cls, grid):
        """Build from an (grid_h, grid_w, dim) array."""
        arr = np.asarray(grid, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"expected (h, w, dim) grid, got shape {arr.shape}")
        h, w, d = arr.shape
        return cls(h, w, arr.reshape(h * w, d))

    def to_grid(self):
        return self.vectors.reshape(self.grid_h, self.grid_w, self.dim)


@dataclass(frozen=True)
class KernelSpec:
    """Similarity kernel configuration.

    kind:
        "gaussian"          exp(-||xi - xj||^2 / (2 sigma^2))
        "cosine-continuous" max(cos(xi, xj), 0)
        "cosine-binarized"  1 if cos >= tau_sim else epsilon_floor
    sigma:
        Bandwidth for the gaussian kernel; either a positive float or the
        string "median" for the median pairwise distance of each feature map.
    """

    kind: str = "gaussian"
    sigma: float | str = "median"
    tau_sim: float = 0.2
    epsilon_floor: float = 1e-5

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if isinstance(self.sigma, str):
            if self.sigma != "median":
                raise ValueError(f"sigma must be positive or 'median', got {self.sigma!r}")
        elif not (float(self.sigma) > 0.0):
            raise ValueError("sigma must be positive")
        if not (0.0 < self.tau_sim < 1.0):
            raise ValueError("tau_sim must lie in (0, 1)")
        if not (0.0 < self.epsilon_floor < self.tau_sim):
            raise ValueError("epsilon_floor must lie in (0, tau_sim)")

    def to_dict(self):
        return {
            "kind": self.kind,
            "sigma": self.sigma,
            "tau_sim": self.tau_sim,
            "epsilon_floor": self.epsilon_floor,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class PatchGraph:
    """Dense weighted graph: symmetric nonnegative adjacency, zero diagonal."""

    adjacency: np.ndarray
    degrees: np.ndarray = field(default=None)

    def __post_init__(self):
        adj = check_adjacency(self.adjacency)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "degrees", adj.sum(axis=1))

    @property
    def n(self):
        return int(self.adjacency.shape[0])


def _pairwise_sq_dists(x):
    # Broadcasted differences keep the matrix exactly symmetric
    # ((xi-xj)^2 and (xj-xi)^2 round identically).
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def median_pairwise_distance(fm):
    """Median over the n(n-1)/2 pairwise patch distances of a feature map."""
    d2 = _pairwise_sq_dists(fm.vectors)
    iu = np.triu_indices(fm.n, k=1)
    return float(np.median(np.sqrt(d2[iu])))


def _cosine_matrix(x):
    norms = np.sqrt((x * x).sum(axis=1))
    bad = norms <= 0.0
    if bad.any():
        raise DegenerateFeatureError(
            f"zero-norm feature vector(s) at patch index {np.nonzero(bad)[0][0]}: "
            "cosine similarity undefined"
        )
    c = x @ x.T
    c = (c + c.T) / 2.0
    return symmetric_outer_scale(c, 1.0 / norms)


def build_adjacency(fm, kernel):
    """Build the patch similarity graph of a feature map under a kernel.

    The diagonal is zero by convention: self-similarity carries no connectivity
    information and a zero diagonal keeps L = D - A independent of it.
    """
    x = fm.vectors
    if kernel.kind == "gaussian":
        d2 = _pairwise_sq_dists(x)
        if isinstance(kernel.sigma, str):
            iu = np.triu_indices(fm.n, k=1)
            sigma = float(np.median(np.sqrt(d2[iu]))) if iu[0].size else 1.0
            if sigma <= 0.0:
                # All patches identical; any bandwidth gives similarity 1.
                sigma = 1.0
        else:
            sigma = float(kernel.sigma)
        a = np.exp(-d2 / (2.0 * sigma * sigma))
    elif kernel.kind == "cosine-continuous":
        a = np.maximum(_cosine_matrix(x), 0.0)
    else:  # cosine-binarized
        c = _cosine_matrix(x)
        a = np.where(c >= kernel.tau_sim, 1.0, kernel.epsilon_floor)
    np.fill_diagonal(a, 0.0)
    return PatchGraph(a)


def adjacency_with_floor(vectors, kernel):
    """Adjacency over a bare (k, dim) vector set, tolerant of zero-norm rows.

    Same kernels as :func:`build_adjacency`, but for the cosine kinds a
    zero-norm feature row gets epsilon_floor similarity to every other node
    instead of raising, which keeps iteratively masked graphs connected
    enough to cut.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if kernel.kind == "gaussian":
        return build_adjacency(FeatureMap(1, n, x), kernel)
    norms = np.sqrt((x * x).sum(axis=1))
    ok = norms > 0.0
    a = np.full((n, n), kernel.epsilon_floor)
    if ok.any():
        c = x[ok] @ x[ok].T
        c = (c + c.T) / 2.0
        c = symmetric_outer_scale(c, 1.0 / norms[ok])
        if kernel.kind == "cosine-continuous":
            block = np.maximum(c, 0.0)
        else:
            block = np.where(c >= kernel.tau_sim, 1.0, kernel.epsilon_floor)
        a[np.ix_(ok, ok)] = block
    np.fill_diagonal(a, 0.0)
    return PatchGraph(a)


def laplacian(g):
    """Unnormalized Laplacian L = D - A."""
    l = -g.adjacency.copy()
    np.fill_diagonal(l, g.degrees)
    return l


def normalized_laplacian(g):
    """Symmetric normalized Laplacian L_sym = I - D^(-1/2) A D^(-1/2)."""
    d = g.degrees
    if np.any(d <= 0.0):
        raise IsolatedNodeError(
            f"node {int(np.nonzero(d <= 0.0)[0][0])} has zero degree; "
            "normalized Laplacian undefined"
        )
    inv_sqrt = 1.0 / np.sqrt(d)
    l = -symmetric_outer_scale(g.adjacency, inv_sqrt)
    np.fill_diagonal(l, 1.0)
    return l


def fiedler_value(g, which="unnormalized"):
    """Second smallest Laplacian eigenvalue (0 for disconnected graphs).

    ``which`` selects the unnormalized L = D - A (default) or the symmetric
    normalized variant. The value is clamped at 0 to absorb eigensolver noise
    on the PSD boundary.
    """
    if g.n < 2:
        raise ValueError("Fiedler value needs at least 2 nodes")
    if which == "unnormalized":
        l = laplacian(g)
    elif which == "normalized":
        l = normalized_laplacian(g)
    else:
        raise ValueError(f"unknown Laplacian kind {which!r}")
    w = sym_eigendecomposition(l).eigenvalues
    return max(0.0, float(w[1]))


def fiedler_vector(g, which="normalized"):
    """Eigenvector for the second smallest eigenvalue, plus the value itself."""
    if g.n < 2:
        raise ValueError("Fiedler vector needs at least 2 nodes")
    l = normalized_laplacian(g) if which == "normalized" else laplacian(g)
    dec = sym_eigendecomposition(l)
    return dec.eigenvectors[:, 1], max(0.0, float(dec.eigenvalues[1]))


def max_degree(g):
    """Largest weighted degree."""
    return float(g.degrees.max()) if g.n else 0.0


def connected_components(g, tol=0.0):
    """Component labels via min-label propagation on edges with weight > tol.

    Each sweep replaces every node's label with the smallest label in its
    closed neighborhood; the fixpoint is reached after at most diameter
    sweeps, and all work is vectorized over the dense adjacency.
    """
    if g.n == 0:
        return np.zeros(0, dtype=int)
    edges = g.adjacency > tol
    labels = np.arange(g.n)
    while True:
        neighbor_min = np.where(edges, labels[None, :], g.n).min(axis=1)
        new = np.minimum(labels, neighbor_min)
        if np.array_equal(new, labels):
            break
        labels = new
    _, relabeled = np.unique(labels, return_inverse=True)
    return relabeled


def is_connected(g, tol=0.0):
    return g.n <= 1 or int(connected_components(g, tol).max()) == 0


def _subset_masks(n):
    """All 2^(n-1) - 1 proper subsets containing node 0, as a boolean matrix."""
    count = 1 << (n - 1)
    ids = np.arange(1, count, dtype=np.uint64)  # skip the full set (complement empty)
    bits = ((ids[:, None] >> np.arange(n - 1, dtype=np.uint64)) & 1).astype(bool)
    masks = np.ones((count - 1, n), dtype=bool)
    masks[:, 1:] = ~bits  # node 0 always in S; others toggle
    # Drop rows where S is the full vertex set.
    keep = masks.sum(axis=1) < n
    return masks[keep]


def cheeger_constant_bruteforce(g):
    """Exact Cheeger constant h(G) = min_S cut(S, S~) / min(|S|, |S~|).

    Enumerates every bipartition (node 0 pinned to one side), so graphs are
    capped at 14 nodes. Uses the cardinality (isoperimetric) normalization,
    which is the one the spectral sandwich lambda_2/2 <= h <= sqrt(2*Delta*lambda_2)
    actually bounds.
    """
    if g.n > BRUTE_FORCE_MAX_NODES:
        raise SizeLimitError(
            f"brute-force Cheeger limited to {BRUTE_FORCE_MAX_NODES} nodes, got {g.n}"
        )
    if g.n < 2:
        raise ValueError("Cheeger constant needs at least 2 nodes")
    masks = _subset_masks(g.n)
    s = masks.astype(np.float64)
    cuts = np.einsum("si,ij,sj->s", s, g.adjacency, 1.0 - s)
    sizes = masks.sum(axis=1)
    denom = np.minimum(sizes, g.n - sizes).astype(np.float64)
    return float((cuts / denom).min())
