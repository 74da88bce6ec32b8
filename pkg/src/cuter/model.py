"""The multi-label classifier: tanh encoder, mean pooling, per-class sigmoid head.

Training minimizes an asymmetric binary loss over *observed* classes only
(unannotated classes simply contribute nothing), optionally plus a structural
penalty R(A) on the Gaussian-kernel adjacency of the encoded patch features.
All gradients are analytic; ``gradient_check`` verifies them against central
finite differences coordinate by coordinate.

Sign note: the asymmetric loss is the negated log-likelihood form, i.e. it is
nonnegative and *minimized* — with both focusing exponents at zero it reduces
exactly to mean binary cross-entropy over the observed classes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import EmptyRegionError
from .graph import FeatureMap, KernelSpec, _pairwise_sq_dists
from .linalg import nuclear_norm, nuclear_norm_subgradient
from .validation import check_rng

PROB_CLAMP = 1e-7

REGULARIZER_KINDS = ("none", "low_rank", "sparse", "smooth")


@dataclass(frozen=True)
class ModelParams:
    """Dense parameters. Head columns beyond ``active_classes`` are inert."""

    encoder_weight: np.ndarray  # (dim_in, dim_feat)
    encoder_bias: np.ndarray  # (dim_feat,)
    head_weight: np.ndarray  # (dim_feat, n_classes_max)
    head_bias: np.ndarray  # (n_classes_max,)
    active_classes: int

    def __post_init__(self):
        ew = np.asarray(self.encoder_weight, dtype=np.float64)
        eb = np.asarray(self.encoder_bias, dtype=np.float64)
        hw = np.asarray(self.head_weight, dtype=np.float64)
        hb = np.asarray(self.head_bias, dtype=np.float64)
        if ew.ndim != 2 or eb.shape != (ew.shape[1],):
            raise ValueError("encoder weight/bias shapes disagree")
        if hw.ndim != 2 or hw.shape[0] != ew.shape[1] or hb.shape != (hw.shape[1],):
            raise ValueError("head weight/bias shapes disagree")
        if not (0 <= self.active_classes <= hw.shape[1]):
            raise ValueError("active_classes out of range")
        for arr in (ew, eb, hw, hb):
            if not np.isfinite(arr).all():
                raise ValueError("parameters contain non-finite values")
        object.__setattr__(self, "encoder_weight", ew)
        object.__setattr__(self, "encoder_bias", eb)
        object.__setattr__(self, "head_weight", hw)
        object.__setattr__(self, "head_bias", hb)

    @property
    def dim_in(self):
        return int(self.encoder_weight.shape[0])

    @property
    def dim_feat(self):
        return int(self.encoder_weight.shape[1])

    @property
    def n_classes_max(self):
        return int(self.head_weight.shape[1])

    def with_active_classes(self, active):
        return replace(self, active_classes=int(active))


@dataclass(frozen=True)
class ParamGrads:
    encoder_weight: np.ndarray
    encoder_bias: np.ndarray
    head_weight: np.ndarray
    head_bias: np.ndarray


@dataclass(frozen=True)
class AsymLossParams:
    gamma_pos: float = 0.0
    gamma_neg: float = 4.0

    def __post_init__(self):
        if self.gamma_pos < 0 or self.gamma_neg < 0:
            raise ValueError("focusing exponents must be nonnegative")

    def to_dict(self):
        return {"gamma_pos": self.gamma_pos, "gamma_neg": self.gamma_neg}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str = "none"
    alpha: float = 0.1

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def init_params(dim_in, dim_feat, n_classes_max, rng, active_classes=0,
                head_bias_init=0.0):
    """Random encoder (unit-variance preactivations for unit-norm inputs),
    zero head weights.

    ``head_bias_init`` sets the initial logit of every class; a negative value
    (e.g. log(1/9) for an initial probability of 0.1) encodes the prior that
    most classes are absent, which keeps unobserved classes from drifting high
    under a negative-focusing loss.
    """
    rng = check_rng(rng)
    return ModelParams(
        encoder_weight=rng.normal(0.0, 1.0, size=(dim_in, dim_feat)),
        encoder_bias=np.zeros(dim_feat),
        head_weight=np.zeros((dim_feat, n_classes_max)),
        head_bias=np.full(n_classes_max, float(head_bias_init)),
        active_classes=active_classes,
    )


def _check_raw(raw):
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"raw patch grid must be (h, w, dim_in), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("raw patch grid contains non-finite values")
    return arr


def encode(params, raw):
    """tanh(W_e x + b_e) per patch -> FeatureMap of the same grid shape."""
    arr = _check_raw(raw)
    h, w, d = arr.shape
    if d != params.dim_in:
        raise ValueError(f"raw dim {d} != model dim_in {params.dim_in}")
    pre = arr.reshape(h * w, d) @ params.encoder_weight + params.encoder_bias
    return FeatureMap(h, w, np.tanh(pre))


def _region_slice(fm, region):
    if region is None:
        return slice(None), fm.n
    h1, w1, h2, w2 = (int(v) for v in region)
    if not (0 <= h1 <= h2 < fm.grid_h and 0 <= w1 <= w2 < fm.grid_w):
        raise EmptyRegionError(
            f"region {region} is empty or outside a {fm.grid_h}x{fm.grid_w} grid"
        )
    rows = np.arange(h1, h2 + 1)
    cols = np.arange(w1, w2 + 1)
    idx = (rows[:, None] * fm.grid_w + cols[None, :]).ravel()
    return idx, idx.size


def pool_features(fm, region=None):
    """Mean patch feature over a region (whole grid when region is None)."""
    idx, count = _region_slice(fm, region)
    return fm.vectors[idx].sum(axis=0) / count


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def predict(params, fm, region=None):
    """Per-class probabilities over the active classes, clamped away from {0,1}."""
    pooled = pool_features(fm, region)
    c = params.active_classes
    z = pooled @ params.head_weight[:, :c] + params.head_bias[:c]
    return np.clip(_sigmoid(z), PROB_CLAMP, 1.0 - PROB_CLAMP)


def asl_loss(probs, y, loss_params, observed=None):
    """Asymmetric loss averaged over observed classes (0 if none observed)."""
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    if observed is None:
        observed = np.ones_like(y, dtype=bool)
    observed = np.asarray(observed, dtype=bool)
    if p.shape != y.shape or p.shape != observed.shape:
        raise ValueError("probs, y, observed must share a shape")
    if not observed.any():
        return 0.0
    po, yo = p[observed], y[observed]
    gp, gn = loss_params.gamma_pos, loss_params.gamma_neg
    terms = yo * (1.0 - po) ** gp * np.log(po) + (1.0 - yo) * po**gn * np.log(1.0 - po)
    return float(-terms.mean())


def _asl_dloss_dp(p, y, gp, gn, n_obs):
    """d(asl)/dp at observed entries (arrays already restricted to observed)."""
    pos = y > 0.5
    d = np.empty_like(p)
    # y = 1: -(1/n)[ -gp (1-p)^(gp-1) ln p + (1-p)^gp / p ]
    pp = p[pos]
    grad_pos = (1.0 - pp) ** gp / pp
    if gp > 0:
        grad_pos = grad_pos - gp * (1.0 - pp) ** (gp - 1.0) * np.log(pp)
    d[pos] = -grad_pos / n_obs
    # y = 0: -(1/n)[ gn p^(gn-1) ln(1-p) - p^gn / (1-p) ]
    pn = p[~pos]
    grad_neg = -(pn**gn) / (1.0 - pn)
    if gn > 0:
        grad_neg = grad_neg + gn * pn ** (gn - 1.0) * np.log(1.0 - pn)
    d[~pos] = -grad_neg / n_obs
    return d


def _resolve_sigma(kernel, d2, n):
    if isinstance(kernel.sigma, str):
        if n < 2:
            return 1.0
        iu = np.triu_indices(n, k=1)
        med = float(np.median(np.sqrt(d2[iu])))
        return med if med > 0.0 else 1.0
    return float(kernel.sigma)


def feature_adjacency(vectors, kernel):
    """Gaussian adjacency of a feature set plus the (frozen) bandwidth used."""
    if kernel.kind != "gaussian":
        raise ValueError(
            "the regularized loss is defined through the gaussian kernel; "
            f"got kernel kind {kernel.kind!r}"
        )
    x = np.asarray(vectors, dtype=np.float64)
    d2 = _pairwise_sq_dists(x)
    sigma = _resolve_sigma(kernel, d2, x.shape[0])
    a = np.exp(-d2 / (2.0 * sigma * sigma))
    np.fill_diagonal(a, 0.0)
    return a, d2, sigma


def regularizer_value(a, d2, kind):
    """R(A): nuclear norm, l1/l2 sparsity ratio, or Laplacian smoothness."""
    if kind == "none":
        return 0.0
    if kind == "low_rank":
        return nuclear_norm(a)
    if kind == "sparse":
        n2 = float(np.sqrt((a * a).sum()))
        return float(np.abs(a).sum() / n2) if n2 > 0 else 0.0
    if kind == "smooth":
        return float(0.5 * (a * d2).sum())
    raise ValueError(f"unknown regularizer kind {kind!r}")


def _regularizer_dA(a, d2, kind):
    """dR/dA as a symmetric matrix (diagonal entries are never used)."""
    if kind == "low_rank":
        return nuclear_norm_subgradient(a)
    if kind == "sparse":
        n1 = float(np.abs(a).sum())
        n2 = float(np.sqrt((a * a).sum()))
        if n2 == 0.0:
            return np.zeros_like(a)
        return np.sign(a) / n2 - (n1 / n2**3) * a
    if kind == "smooth":
        return 0.5 * d2
    raise ValueError(f"unknown regularizer kind {kind!r}")


def _regularizer_dF(f, a, d2, sigma, kind):
    """dR/dfeatures for the Gaussian-kernel adjacency, sigma held constant."""
    g = _regularizer_dA(a, d2, kind)
    m = 2.0 * g * a / (sigma * sigma)
    np.fill_diagonal(m, 0.0)
    df = m @ f - m.sum(axis=1)[:, None] * f
    if kind == "smooth":
        # Direct dependence of sum A_ij ||f_i - f_j||^2 on the features.
        df = df + 2.0 * (a.sum(axis=1)[:, None] * f - a @ f)
    return df


def loss_and_gradients(params, batch, loss_params, kernel=None, reg=None):
    """Batch-mean loss (ASL + alpha * R(A)) and analytic parameter gradients.

    ``batch`` is a list of (raw_grid, y, observed) triples with y/observed
    sized to the active classes. The regularizer, when enabled, is computed
    per sample on the Gaussian-kernel adjacency of that sample's encoded
    features and averaged with the rest of the loss.
    """
    if reg is None:
        reg = RegularizerSpec(kind="none", alpha=0.0)
    if not batch:
        raise ValueError("empty batch")
    c = params.active_classes
    use_reg = reg.kind != "none" and reg.alpha > 0.0
    if use_reg and kernel is None:
        kernel = KernelSpec(kind="gaussian", sigma="median")

    total = 0.0
    g_ew = np.zeros_like(params.encoder_weight)
    g_eb = np.zeros_like(params.encoder_bias)
    g_hw = np.zeros_like(params.head_weight)
    g_hb = np.zeros_like(params.head_bias)

    for raw, y, observed in batch:
        arr = _check_raw(raw)
        h, w, _ = arr.shape
        x = arr.reshape(h * w, params.dim_in)
        f = np.tanh(x @ params.encoder_weight + params.encoder_bias)
        y = np.asarray(y, dtype=np.float64)
        observed = np.asarray(observed, dtype=bool)
        if y.shape != (c,) or observed.shape != (c,):
            raise ValueError(f"labels must have shape ({c},) for the active classes")

        pooled = f.mean(axis=0)
        z = pooled @ params.head_weight[:, :c] + params.head_bias[:c]
        p = np.clip(_sigmoid(z), PROB_CLAMP, 1.0 - PROB_CLAMP)

        d_feat = np.zeros_like(f)
        n_obs = int(observed.sum())
        if n_obs:
            po, yo = p[observed], y[observed]
            gp, gn = loss_params.gamma_pos, loss_params.gamma_neg
            terms = (
                yo * (1.0 - po) ** gp * np.log(po)
                + (1.0 - yo) * po**gn * np.log(1.0 - po)
            )
            total += float(-terms.mean())
            dz = np.zeros(c)
            dz[observed] = _asl_dloss_dp(po, yo, gp, gn, n_obs) * po * (1.0 - po)
            g_hw[:, :c] += np.outer(pooled, dz)
            g_hb[:c] += dz
            d_feat += (params.head_weight[:, :c] @ dz) / f.shape[0]

        if use_reg:
            a, d2, sigma = feature_adjacency(f, kernel)
            total += reg.alpha * regularizer_value(a, d2, reg.kind)
            d_feat += reg.alpha * _regularizer_dF(f, a, d2, sigma, reg.kind)

        d_pre = d_feat * (1.0 - f * f)
        g_ew += x.T @ d_pre
        g_eb += d_pre.sum(axis=0)

    nb = len(batch)
    grads = ParamGrads(g_ew / nb, g_eb / nb, g_hw / nb, g_hb / nb)
    return total / nb, grads


@dataclass(frozen=True)
class SgdState:
    velocity: ParamGrads

    @classmethod
    def zeros_like(cls, params):
        return cls(
            ParamGrads(
                np.zeros_like(params.encoder_weight),
                np.zeros_like(params.encoder_bias),
                np.zeros_like(params.head_weight),
                np.zeros_like(params.head_bias),
            )
        )


def sgd_step(params, grads, lr, momentum=0.9, state=None):
    """Heavy-ball SGD: v <- momentum * v + g; p <- p - lr * v."""
    if state is None:
        state = SgdState.zeros_like(params)
    v = state.velocity
    new_v = ParamGrads(
        momentum * v.encoder_weight + grads.encoder_weight,
        momentum * v.encoder_bias + grads.encoder_bias,
        momentum * v.head_weight + grads.head_weight,
        momentum * v.head_bias + grads.head_bias,
    )
    new_params = ModelParams(
        params.encoder_weight - lr * new_v.encoder_weight,
        params.encoder_bias - lr * new_v.encoder_bias,
        params.head_weight - lr * new_v.head_weight,
        params.head_bias - lr * new_v.head_bias,
        params.active_classes,
    )
    return new_params, SgdState(new_v)


# ---------------------------------------------------------------------------
# Finite-difference verification


def _pack(params):
    return np.concatenate(
        [
            params.encoder_weight.ravel(),
            params.encoder_bias,
            params.head_weight.ravel(),
            params.head_bias,
        ]
    )


def _unpack(vec, like):
    ew_n = like.encoder_weight.size
    eb_n = like.encoder_bias.size
    hw_n = like.head_weight.size
    parts = np.split(vec, [ew_n, ew_n + eb_n, ew_n + eb_n + hw_n])
    return ModelParams(
        parts[0].reshape(like.encoder_weight.shape),
        parts[1],
        parts[2].reshape(like.head_weight.shape),
        parts[3],
        like.active_classes,
    )


def gradient_errors(params, batch, loss_params, kernel, reg, step=1e-5):
    """Worst (relative, absolute) mismatch of analytic vs central-difference grads."""
    _, grads = loss_and_gradients(params, batch, loss_params, kernel, reg)
    analytic = _pack(
        ModelParams(
            grads.encoder_weight,
            grads.encoder_bias,
            grads.head_weight,
            grads.head_bias,
            params.active_classes,
        )
    )
    base = _pack(params)
    fd = np.zeros_like(base)
    for i in range(base.size):
        hi = base.copy()
        lo = base.copy()
        hi[i] += step
        lo[i] -= step
        l_hi, _ = loss_and_gradients(_unpack(hi, params), batch, loss_params, kernel, reg)
        l_lo, _ = loss_and_gradients(_unpack(lo, params), batch, loss_params, kernel, reg)
        fd[i] = (l_hi - l_lo) / (2.0 * step)
    diff = np.abs(fd - analytic)
    big = np.abs(fd) > 1e-6
    rel = float((diff[big] / np.abs(fd[big])).max()) if big.any() else 0.0
    abs_err = float(diff[~big].max()) if (~big).any() else 0.0
    return rel, abs_err


def _random_config(rng, kind):
    """Small random model + batch on which the loss is smooth."""
    dim_in = int(rng.integers(4, 7))
    dim_feat = int(rng.integers(3, 6))
    n_classes = int(rng.integers(2, 5))
    h = int(rng.integers(3, 5))
    w = int(rng.integers(3, 5))
    params = ModelParams(
        rng.normal(0.0, 0.7, size=(dim_in, dim_feat)),
        rng.normal(0.0, 0.2, size=dim_feat),
        rng.normal(0.0, 0.7, size=(dim_feat, n_classes)),
        rng.normal(0.0, 0.2, size=n_classes),
        active_classes=n_classes,
    )
    batch = []
    for _ in range(2):
        raw = rng.normal(0.0, 1.0, size=(h, w, dim_in))
        y = (rng.random(n_classes) < 0.5).astype(float)
        observed = rng.random(n_classes) < 0.8
        batch.append((raw, y, observed))
    # Fixed sigma: the median heuristic is deliberately treated as constant in
    # the analytic path, which finite differences would contradict.
    kernel = KernelSpec(kind="gaussian", sigma=float(rng.uniform(0.8, 1.6)))
    reg = RegularizerSpec(kind=kind, alpha=0.3) if kind != "none" else RegularizerSpec()
    return params, batch, kernel, reg


def _low_rank_safe(params, batch, kernel):
    """Reject configs whose adjacency has a near-zero eigenvalue (subgradient kink)."""
    from .linalg import sym_eigendecomposition

    for raw, _, _ in batch:
        arr = _check_raw(raw)
        x = arr.reshape(-1, params.dim_in)
        f = np.tanh(x @ params.encoder_weight + params.encoder_bias)
        a, _, _ = feature_adjacency(f, kernel)
        w = sym_eigendecomposition(a).eigenvalues
        if np.abs(w).min() < 1e-3:
            return False
    return True


def gradient_check(n_configs=20, seed=0, kinds=("none", "low_rank", "sparse", "smooth")):
    """Run the finite-difference check across random configurations.

    Returns a per-kind dict of the worst relative/absolute errors seen.
    """
    report = {}
    for kind in kinds:
        worst_rel = 0.0
        worst_abs = 0.0
        produced = 0
        attempt = 0
        kind_id = REGULARIZER_KINDS.index(kind)
        while produced < n_configs:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), kind_id, attempt]))
            attempt += 1
            params, batch, kernel, reg = _random_config(rng, kind)
            if kind == "low_rank" and not _low_rank_safe(params, batch, kernel):
                continue
            rel, abs_err = gradient_errors(params, batch, AsymLossParams(), kernel, reg)
            worst_rel = max(worst_rel, rel)
            worst_abs = max(worst_abs, abs_err)
            produced += 1
        report[kind] = {"max_rel_error": worst_rel, "max_abs_error": worst_abs, "configs": produced}
    return report
