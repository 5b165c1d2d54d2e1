"""Loss terms for nullspace tuning, MixMatch(NST) and the consistency baselines.

Probability rows are ``Tensor`` objects of shape ``(n, k)`` (a single row may be
passed as shape ``(k,)``).  Losses over several rows are means over rows.
Functions that accept plain arrays convert them to constant tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad as nd
from .datagen import AugmentPolicy, augment
from .errors import ConfigError, ContractError, DimensionError
from .ndgrad import Tensor
from .nnmodel import MlpParams, predict_proba

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class MixConfig:
    alpha: float = 0.75
    T: float = 0.5
    K: int = 2

    def __post_init__(self):
        if self.alpha <= 0 or self.T <= 0 or self.K < 1:
            raise ConfigError(f"MixConfig needs alpha > 0, T > 0, K >= 1; got {self}")


@dataclass(frozen=True)
class LossWeights:
    lam: float = 1.0       # pair penalty in plain nullspace tuning
    lambda_U: float = 75.0
    lambda_E: float = 1.0

    def __post_init__(self):
        if min(self.lam, self.lambda_U, self.lambda_E) < 0:
            raise ConfigError(f"loss weights must be >= 0; got {self}")


@dataclass(frozen=True)
class MixedBatch:
    x_l: np.ndarray
    y_l: np.ndarray
    x_u: np.ndarray
    q_u: np.ndarray


def _rows(p) -> Tensor:
    p = nd.as_tensor(p)
    if p.ndim == 1:
        p = nd.reshape(p, (1, p.shape[0]))
    return p


def one_hot(y, k) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    out = np.zeros((len(y), k))
    out[np.arange(len(y)), y] = 1.0
    return out


def log_probs(p: Tensor) -> Tensor:
    """log(p), taken exactly from the logits when ``p`` came out of a softmax."""
    if p._logits is not None:
        z = p._logits
        return z - nd.logsumexp(z, keepdims=True)
    return nd.log(nd.clamp_min(p, PROB_FLOOR))


def cross_entropy(probs, targets) -> Tensor:
    """Mean over rows of -sum(target * log(prob)); targets are class ids or probability rows."""
    probs = _rows(probs)
    targets = np.asarray(targets.data if isinstance(targets, Tensor) else targets)
    if targets.ndim <= 1 and np.issubdtype(targets.dtype, np.integer):
        targets = one_hot(np.atleast_1d(targets), probs.shape[1])
    targets = np.atleast_2d(targets).astype(np.float64)
    if targets.shape != probs.shape:
        raise DimensionError(f"cross_entropy: probs {probs.shape} vs targets {targets.shape}")
    if probs.shape[0] == 0:
        raise ContractError("cross_entropy: empty batch")
    return -(log_probs(probs) * targets).sum(axis=-1).mean()


def pair_consistency_loss(p, q) -> Tensor:
    """Mean over rows of the squared Euclidean distance ||p - q||^2."""
    p, q = _rows(p), _rows(q)
    if p.shape != q.shape:
        raise DimensionError(f"pair_consistency_loss: shapes {p.shape} and {q.shape}")
    return nd.sqnorm(p - q, axis=-1).mean()


def nst_loss(params: MlpParams, x_l, y_l, x_j, x_k, lam: float) -> Tensor:
    """Cross-entropy on the labeled batch plus ``lam`` times the mean pair penalty."""
    if len(x_l) == 0:
        raise ContractError("nst_loss: empty labeled batch")
    supervised = cross_entropy(predict_proba(params, x_l), y_l)
    if len(x_j) == 0:
        return supervised
    return supervised + lam * pair_consistency_loss(predict_proba(params, x_j), predict_proba(params, x_k))


def sharpen(p, T: float) -> Tensor:
    # softmax(log p / T) == p^(1/T) / sum p^(1/T), computed stably
    if T <= 0:
        raise ConfigError(f"sharpening temperature must be > 0, got {T}")
    p = nd.as_tensor(p)
    return nd.softmax(nd.log(nd.clamp_min(p, PROB_FLOOR)) * (1.0 / T))


def mean_prediction(params: MlpParams, augmented) -> Tensor:
    """Average of the model's probability rows over a list of augmented batches."""
    mean = predict_proba(params, augmented[0])
    for xa in augmented[1:]:
        mean = mean + predict_proba(params, xa)
    return mean * (1.0 / len(augmented))


def guess_label(params: MlpParams, x_u, K: int, policy: AugmentPolicy, T: float,
                rng: np.random.Generator, augmented=None) -> Tensor:
    """Sharpened mean prediction over ``K`` augmentations of each unlabeled row.

    The result stays attached to the graph; callers detach it where it serves as
    a fixed target.  ``augmented`` supplies precomputed augmentations instead.
    """
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if augmented is None:
        augmented = [augment(x_u, policy, rng) for _ in range(K)]
    return sharpen(mean_prediction(params, augmented), T)


def mixup(x1, p1, x2, p2, alpha: float, rng: np.random.Generator | None = None, lam: float | None = None):
    """Convex combination weighted at least half toward the first argument.

    ``lam`` forces the Beta(alpha, alpha) draw.
    """
    x1, x2, p1, p2 = (np.asarray(a, dtype=np.float64) for a in (x1, x2, p1, p2))
    if x1.shape != x2.shape or p1.shape != p2.shape:
        raise DimensionError(f"mixup: shapes {x1.shape}/{x2.shape} and {p1.shape}/{p2.shape}")
    if alpha <= 0:
        raise ConfigError(f"mixup alpha must be > 0, got {alpha}")
    if lam is None:
        lam = rng.beta(alpha, alpha)
    lam = max(lam, 1.0 - lam)
    return lam * x1 + (1.0 - lam) * x2, lam * p1 + (1.0 - lam) * p2


def mixmatch_batch(params: MlpParams, x_l, y_l, x_u, config: MixConfig, policy: AugmentPolicy,
                   rng: np.random.Generator, paired: bool = True, record: str = "pre-sharpen"):
    """Augment, guess labels, and MixUp labeled and unlabeled rows into one batch.

    With ``paired=True`` rows ``2i`` and ``2i + 1`` of ``x_u`` form an
    equivalence pair and the pair's guesses are returned, before any mixing, as
    differentiable ``(q_j, q_k)`` tensors.  ``record`` selects which guess:
    ``"pre-sharpen"`` (the K-augmentation mean) or ``"post-sharpen"`` (the
    sharpened label that also feeds MixUp).  Otherwise the second return value
    is ``None``.
    """
    if record not in ("pre-sharpen", "post-sharpen"):
        raise ConfigError(f"record must be 'pre-sharpen' or 'post-sharpen', got {record!r}")
    x_l = np.asarray(x_l, dtype=np.float64)
    x_u = np.asarray(x_u, dtype=np.float64)
    n_l, n_u, K = len(x_l), len(x_u), config.K
    if paired and n_u % 2:
        raise ContractError(f"mixmatch_batch: {n_u} unlabeled rows cannot form pairs")
    k = params.n_classes
    y_l = np.asarray(y_l)
    targets_l = one_hot(y_l, k) if y_l.ndim == 1 else y_l.astype(np.float64)

    xl_aug = augment(x_l, policy, rng)
    xu_aug = [augment(x_u, policy, rng) for _ in range(K)]
    mean = mean_prediction(params, xu_aug)
    q = sharpen(mean, config.T)
    recorded = None
    if paired:
        src = mean if record == "pre-sharpen" else q
        recorded = (nd.take(src, np.arange(0, n_u, 2)), nd.take(src, np.arange(1, n_u, 2)))

    # q enters the pool as a constant target
    pool_x = np.concatenate([xl_aug, *xu_aug])
    pool_p = np.concatenate([targets_l, *([q.data] * K)])
    perm = rng.permutation(len(pool_x))
    mixed_x, mixed_p = mixup(pool_x, pool_p, pool_x[perm], pool_p[perm], config.alpha, rng)
    mixed = MixedBatch(mixed_x[:n_l], mixed_p[:n_l], mixed_x[n_l:], mixed_p[n_l:])
    return mixed, recorded


def mixmatch_losses(params: MlpParams, mixed: MixedBatch):
    """(L_X, L_U): cross-entropy on mixed labeled rows, per-class squared error on mixed unlabeled rows."""
    L_X = cross_entropy(predict_proba(params, mixed.x_l), mixed.y_l)
    if len(mixed.x_u) == 0:
        return L_X, Tensor(0.0)
    k = params.n_classes
    L_U = pair_consistency_loss(predict_proba(params, mixed.x_u), mixed.q_u) * (1.0 / k)
    return L_X, L_U


def combined_loss(L_X, L_U, L_E, lambda_U: float, lambda_E: float):
    if lambda_U < 0 or lambda_E < 0:
        raise ConfigError("combined_loss weights must be >= 0")
    return L_X + lambda_U * L_U + lambda_E * L_E


def pi_model_loss(params: MlpParams, x_u, policy: AugmentPolicy, rng: np.random.Generator) -> Tensor:
    a = predict_proba(params, augment(x_u, policy, rng))
    b = predict_proba(params, augment(x_u, policy, rng))
    return pair_consistency_loss(a, b)


def pseudo_label_loss(probs, threshold: float) -> Tensor:
    """Cross-entropy against the argmax for rows whose top probability exceeds ``threshold``.

    Averaged over all rows; rows below the gate contribute zero.
    """
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"pseudo-label threshold must lie in (0, 1], got {threshold}")
    probs = _rows(probs)
    top = probs.data.max(axis=-1)
    gate = (top > threshold).astype(np.float64)
    if not gate.any():
        return (probs * 0.0).sum()
    targets = one_hot(probs.data.argmax(axis=-1), probs.shape[1]) * gate[:, None]
    return -(log_probs(probs) * targets).sum(axis=-1).mean()


def mean_teacher_loss(student_probs, teacher_probs) -> Tensor:
    teacher = teacher_probs.data if isinstance(teacher_probs, Tensor) else np.asarray(teacher_probs)
    return pair_consistency_loss(student_probs, Tensor(teacher))


def _clean_target(params, x):
    p = predict_proba(params, x)
    return p.data, log_probs(p).data


def _kl_to(target, q: Tensor) -> Tensor:
    """Mean over rows of KL(p || q) for a constant ``target = (p, log p)``."""
    p, logp = target
    return ((Tensor(logp) - log_probs(q)) * p).sum(axis=-1).mean()


def _unit_rows(d: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(d, axis=-1, keepdims=True)
    ok = norms[:, 0] > 0
    out = fallback.copy()
    out[ok] = d[ok] / norms[ok]
    return out


def vat_direction(params: MlpParams, x, xi: float, n_power: int, rng: np.random.Generator) -> np.ndarray:
    """Unit rows approximating the most sensitive input direction by power iteration."""
    if xi <= 0 or n_power < 1:
        raise ConfigError(f"VAT needs xi > 0 and n_power >= 1; got xi={xi}, n_power={n_power}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    target = _clean_target(params, x)
    d = rng.normal(size=x.shape)
    d = _unit_rows(d, np.full(x.shape, 1.0 / np.sqrt(x.shape[1])))
    for _ in range(n_power):
        dt = Tensor(d, requires_grad=True)
        kl = _kl_to(target, predict_proba(params, Tensor(x) + dt * xi))
        g = nd.backward(kl, [dt])[dt]
        d = _unit_rows(g, d)
    return d


def vat_loss(params: MlpParams, x, xi: float, eps: float, n_power: int, rng: np.random.Generator) -> Tensor:
    """KL between the clean prediction (held fixed) and the prediction at x + eps * d."""
    if eps < 0:
        raise ConfigError(f"VAT radius must be >= 0, got {eps}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = vat_direction(params, x, xi, n_power, rng)
    target = _clean_target(params, x)
    return _kl_to(target, predict_proba(params, x + eps * d))
