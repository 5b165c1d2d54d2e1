"""Training loop shared by every method, plus schedules, Adam and evaluation."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import losses as L
from . import ndgrad as nd
from .datagen import AugmentPolicy, PartialDataset, augment, sample_equiv_pairs
from .errors import ConfigError, ContractError, DimensionError
from .nnmodel import MlpParams, ModelConfig, ema_update, init_params, predict_proba

METHODS = ("supervised", "nst", "pi-model", "mean-teacher", "pseudo-label", "vat", "mixmatch", "mixmatch-nst")
PAIR_METHODS = ("nst", "mixmatch-nst")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "supervised"
    lr: float = 3e-3
    steps: int = 1000
    batch_labeled: int = 32
    batch_unlabeled: int = 64
    hidden: tuple[int, ...] = (32, 32)
    # loss weights
    lam: float = 1.0
    lambda_U: float = 75.0
    lambda_E: float = 1.0
    # MixMatch
    alpha: float = 0.75
    T: float = 0.5
    K: int = 2
    le_target: str = "pre-sharpen"
    rampup: int = 0
    ema_decay: float = 0.99
    threshold: float = 0.95
    vat_xi: float = 1e-6
    vat_eps: float = 0.5
    vat_power: int = 1
    weight_decay: float = 0.0
    augment: str = "gaussian-jitter"
    aug_sigma: float = 0.05
    aug_flip: float = 0.0
    seed: int = 0
    eval_interval: int = 100

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown method {self.method!r}; expected one of {METHODS}")
        if self.steps < 1:
            raise ConfigError("steps: must be >= 1")
        if self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.rampup < 0:
            raise ConfigError("rampup: must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr: must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay: must be >= 0")
        if self.le_target not in ("pre-sharpen", "post-sharpen"):
            raise ConfigError(f"le_target: expected 'pre-sharpen' or 'post-sharpen', got {self.le_target!r}")
        if self.eval_interval < 1:
            raise ConfigError("eval_interval: must be >= 1")
        # validate the grouped views eagerly
        self.weights, self.mix, self.policy

    @property
    def weights(self) -> L.LossWeights:
        return L.LossWeights(self.lam, self.lambda_U, self.lambda_E)

    @property
    def mix(self) -> L.MixConfig:
        return L.MixConfig(self.alpha, self.T, self.K)

    @property
    def policy(self) -> AugmentPolicy:
        return AugmentPolicy(self.augment, sigma=self.aug_sigma, p=self.aug_flip)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass(frozen=True)
class EvalRecord:
    step: int
    train_loss: float
    validation_error: float | None
    test_error: float | None


@dataclass
class RunResult:
    history: list[EvalRecord]
    final_test_error: float | None
    config: TrainConfig
    seconds: float
    params: MlpParams | None = None
    losses: list[float] = field(default_factory=list)


@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros(cls, params: MlpParams) -> "AdamState":
        arrays = params.arrays()
        return cls(0, [np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def rampup_weight(step: int, rampup_length: int, lam_max: float) -> float:
    """Linear rampup from 0 to ``lam_max`` over ``rampup_length`` steps; 0 length means constant."""
    if step < 0:
        raise ContractError("rampup_weight: step must be >= 0")
    if rampup_length == 0:
        return lam_max
    return lam_max * min(1.0, step / rampup_length)


def optimizer_step(params: MlpParams, grads, state: AdamState, config: TrainConfig,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam step with bias correction followed by decoupled weight decay."""
    t = state.step + 1
    new_arrays, m_out, v_out = [], [], []
    for p, m, v in zip(params.tensors(), state.m, state.v):
        g = grads[p]
        if g.shape != p.shape:
            raise DimensionError(f"optimizer_step: gradient {g.shape} for parameter {p.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = p.data - config.lr * m_hat / (np.sqrt(v_hat) + eps)
        if config.weight_decay:
            theta = theta * (1 - config.lr * config.weight_decay)
        new_arrays.append(theta)
        m_out.append(m)
        v_out.append(v)
    return MlpParams.from_arrays(new_arrays), AdamState(t, m_out, v_out)


def evaluate(params: MlpParams, X, y) -> float:
    """Fraction of rows whose argmax prediction (ties to the lowest index) differs from ``y``."""
    y = np.asarray(y)
    if len(y) == 0:
        raise ContractError("evaluate: empty evaluation set")
    pred = predict_proba(params, X).data.argmax(axis=-1)
    return float(np.mean(pred != y))


def _batch(rng, n, size):
    return rng.choice(n, size=size, replace=size > n)


class _Run:
    """Mutable per-run state; one instance per call to :func:`train`."""

    def __init__(self, config: TrainConfig, data: PartialDataset, rng: np.random.Generator):
        self.config = config
        self.data = data
        # independent streams so that the labeled draws do not depend on the method
        init_rng, self.rng_l, self.rng_u, self.rng_aug = rng.spawn(4)
        widths = (data.dataset.d, *config.hidden, data.k)
        self.params = init_params(ModelConfig(widths, seed=config.seed), init_rng)
        self.teacher = MlpParams.from_arrays(self.params.arrays(), requires_grad=False)
        self.X_u = data.X_unlabeled
        self.has_pairs = data.pair_pool_size() > 0
        self.n_pairs = max(1, config.batch_unlabeled // 2)

    def unlabeled_batch(self):
        return self.X_u[_batch(self.rng_u, len(self.X_u), self.config.batch_unlabeled)]

    def pair_batch(self):
        pb = sample_equiv_pairs(self.data, self.n_pairs, self.rng_u)
        return self.X_u[pb.first], self.X_u[pb.second]

    def loss(self, step: int):
        cfg, p = self.config, self.params
        idx = _batch(self.rng_l, len(self.data.labeled), cfg.batch_labeled)
        x_l, y_l = self.data.X_labeled[idx], self.data.y_labeled[idx]
        w_U = rampup_weight(step, cfg.rampup, cfg.lambda_U)
        method = cfg.method

        if method == "supervised":
            return L.cross_entropy(predict_proba(p, augment(x_l, cfg.policy, self.rng_aug)), y_l)
        if method == "nst":
            x_j, x_k = self.pair_batch()
            x_l = augment(x_l, cfg.policy, self.rng_aug)
            return L.nst_loss(p, x_l, y_l, x_j, x_k, cfg.lam)
        if method in ("mixmatch", "mixmatch-nst"):
            # both variants draw the unlabeled batch as pairs when classes exist,
            # so that they see identical batches
            if self.has_pairs:
                x_j, x_k = self.pair_batch()
                x_u = np.empty((2 * len(x_j), x_j.shape[1]))
                x_u[0::2], x_u[1::2] = x_j, x_k
            else:
                x_u = self.unlabeled_batch()
            mixed, recorded = L.mixmatch_batch(p, x_l, y_l, x_u, cfg.mix, cfg.policy, self.rng_aug,
                                               paired=self.has_pairs, record=cfg.le_target)
            L_X, L_U = L.mixmatch_losses(p, mixed)
            if method == "mixmatch":
                return L.combined_loss(L_X, L_U, 0.0, w_U, 0.0)
            return L.combined_loss(L_X, L_U, L.pair_consistency_loss(*recorded), w_U, cfg.lambda_E)

        x_l = augment(x_l, cfg.policy, self.rng_aug)
        supervised = L.cross_entropy(predict_proba(p, x_l), y_l)
        x_u = self.unlabeled_batch()
        if method == "pi-model":
            extra = L.pi_model_loss(p, x_u, cfg.policy, self.rng_aug)
        elif method == "mean-teacher":
            student = predict_proba(p, augment(x_u, cfg.policy, self.rng_aug))
            teacher = predict_proba(self.teacher, augment(x_u, cfg.policy, self.rng_aug))
            extra = L.mean_teacher_loss(student, teacher)
        elif method == "pseudo-label":
            extra = L.pseudo_label_loss(predict_proba(p, augment(x_u, cfg.policy, self.rng_aug)), cfg.threshold)
        else:
            extra = L.vat_loss(p, x_u, cfg.vat_xi, cfg.vat_eps, cfg.vat_power, self.rng_aug)
        return supervised + w_U * extra

    def predictor(self) -> MlpParams:
        return self.teacher if self.config.method == "mean-teacher" else self.params


def train(config: TrainConfig, data: PartialDataset, rng: np.random.Generator | None = None,
          trajectory: list | None = None) -> RunResult:
    """Train one model with ``config.method`` on ``data``.

    ``rng`` defaults to a generator seeded from ``config.seed``.  When
    ``trajectory`` is a list, the flat parameter arrays after every step are
    appended to it.
    """
    if len(data.labeled) == 0:
        raise ConfigError("train: the labeled set is empty")
    if config.method in PAIR_METHODS and data.pair_pool_size() == 0:
        raise ConfigError(f"train: method {config.method!r} needs equivalence classes with at least two members")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    start = time.perf_counter()
    run = _Run(config, data, rng)
    state = AdamState.zeros(run.params)
    history, step_losses = [], []
    for step in range(config.steps):
        loss = run.loss(step)
        grads = nd.backward(loss, run.params.tensors())
        run.params, state = optimizer_step(run.params, grads, state, config)
        if config.method == "mean-teacher":
            run.teacher = ema_update(run.teacher, run.params, config.ema_decay)
        step_losses.append(loss.item())
        if trajectory is not None:
            trajectory.append([a.copy() for a in run.params.arrays()])
        done = step + 1
        if done % config.eval_interval == 0 or done == config.steps:
            model = run.predictor()
            val = evaluate(model, data.X_validation, data.y_validation) if len(data.validation) else None
            test = evaluate(model, data.X_test, data.y_test) if len(data.test) else None
            history.append(EvalRecord(done, step_losses[-1], val, test))
    return RunResult(
        history=history,
        final_test_error=history[-1].test_error,
        config=config,
        seconds=time.perf_counter() - start,
        params=run.predictor(),
        losses=step_losses,
    )
