"""Training loop: Adam on the negative caption log-likelihood.

Each (layout, caption) reference pair is its own training example; the
batch loss is the mean over pairs.  Gradients are clipped by global norm
before the Adam update, and every source of randomness flows from the
config seed so runs reproduce bit-for-bit.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, backward, finite_difference_check, no_grad
from .data import CaptionedExample, ObjectLayout, scored_token_count
from .decoder import batch_logprobs, greedy_decode
from .encoder import AblationFlags, encode_batch, fuse_auxiliary
from .errors import ConfigError, LayoutcapError, NumericError
from .metrics import EvalPair, MetricReport, evaluate_pairs
from .model import LayoutCaptioner, ModelParams, init_model
from .rng import Rng, derive_seed
from .text import Vocabulary, CategoryVocabulary, tokenize


@dataclass
class TrainConfig:
    learning_rate: float = 4e-4
    beta1: float = 0.8
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    max_iterations: int = 2000
    grad_clip: float = 5.0
    seed: int = 0
    k: int = 128
    aux_dim: int = 0
    ablation: AblationFlags = field(default_factory=AblationFlags)
    eval_every: int = 500
    eval_beam_size: int = 0  # 0 = greedy score histories
    max_caption_len: int = 16
    init_scale: float = 0.08

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError(f"betas must lie in (0,1), got {self.beta1}, {self.beta2}")
        for name in ("learning_rate", "epsilon", "batch_size", "max_iterations", "grad_clip", "k"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    def to_json(self) -> dict:
        obj = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "ablation"}
        obj["ablation"] = self.ablation.to_json()
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        kwargs = dict(obj)
        kwargs["ablation"] = AblationFlags.from_json(kwargs.get("ablation", {}))
        return cls(**kwargs)


# The hyperparameters reported for the original full-scale experiments;
# not part of the desk-scale defaults or the test suite.
FULL_SCALE_PRESET = dict(batch_size=16, max_iterations=400_000,
                         beta1=0.8, beta2=0.999, epsilon=1e-8)


@dataclass
class TrainingPair:
    """One (layout, caption) reference; the unit the loss averages over."""

    example_id: int | str
    layout: ObjectLayout
    caption: list[int]
    aux: np.ndarray | None = None


def flatten_pairs(dataset: Sequence[CaptionedExample]) -> list[TrainingPair]:
    pairs = []
    for ex in dataset:
        for cap in ex.captions:
            pairs.append(TrainingPair(ex.id, ex.layout, cap, ex.aux_features))
    return pairs


def batch_loss(params: ModelParams, batch: Sequence[TrainingPair],
               flags: AblationFlags = AblationFlags()) -> tuple[Tensor, dict]:
    """Mean over pairs of -log p(caption | layout); stats carry the
    per-token mean for logging."""
    if not batch:
        raise ConfigError("batch_loss needs a nonempty batch")
    if params.encoder.w_aux is not None:
        missing = [p.example_id for p in batch if p.aux is None]
        if missing:
            raise ConfigError(f"model expects aux features; missing for examples {missing}")
    try:
        h = encode_batch(params.encoder, [p.layout for p in batch], flags)
        if params.encoder.w_aux is not None:
            h = fuse_auxiliary(params.encoder, h, np.stack([p.aux for p in batch]))
        logprobs = batch_logprobs(params.decoder, h, [p.caption for p in batch])
    except (LayoutcapError, IndexError) as exc:
        ids = [p.example_id for p in batch]
        raise type(exc)(f"{exc} (batch example ids: {ids})") from exc
    loss = ad.neg(ad.mean_all(logprobs))
    n_tokens = sum(scored_token_count(p.caption) for p in batch)
    stats = {
        "loss": float(loss.value[0, 0]),
        "loss_per_token": float(-logprobs.value.sum() / n_tokens),
        "n_tokens": n_tokens,
    }
    return loss, stats


def global_grad_norm(params: Sequence[Parameter]) -> float:
    return math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))


def adam_step(params: Sequence[Parameter], config: TrainConfig, t: int) -> None:
    """Clip by global norm, apply bias-corrected Adam, zero the grads."""
    if t < 1:
        raise ConfigError(f"Adam step count must be >= 1, got {t}")
    for p in params:
        if not np.isfinite(p.grad).all():
            raise NumericError(
                f"non-finite gradient in {p.name!r} at iteration {t} "
                f"(norm {np.linalg.norm(p.grad)})")
    norm = global_grad_norm(params)
    scale = config.grad_clip / norm if norm > config.grad_clip else 1.0
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p in params:
        g = p.grad if scale == 1.0 else p.grad * scale
        p.adam_m *= b1
        p.adam_m += (1.0 - b1) * g
        p.adam_v *= b2
        p.adam_v += (1.0 - b2) * (g * g)
        p.value -= config.learning_rate * (p.adam_m / bc1) / (np.sqrt(p.adam_v / bc2) + config.epsilon)
        p.zero_grad()


# ---------------------------------------------------------------------------
# data ordering
# ---------------------------------------------------------------------------

class _BatchCursor:
    """Seed-shuffled epoch permutations with a resumable (epoch, offset)."""

    def __init__(self, n: int, seed: int, epoch: int = 0, offset: int = 0):
        if n < 1:
            raise ConfigError("cannot iterate an empty training set")
        self.n = n
        self.seed = seed
        self.epoch = epoch
        self.offset = offset
        self._perm = self._epoch_perm(epoch)

    def _epoch_perm(self, epoch: int) -> list[int]:
        return Rng(derive_seed(self.seed, epoch)).permutation(self.n)

    def next_batch(self, batch_size: int) -> list[int]:
        out: list[int] = []
        while len(out) < batch_size:
            take = min(batch_size - len(out), self.n - self.offset)
            out.extend(self._perm[self.offset:self.offset + take])
            self.offset += take
            if self.offset == self.n:
                self.epoch += 1
                self.offset = 0
                self._perm = self._epoch_perm(self.epoch)
        return out

    def state(self) -> tuple[int, int]:
        return (self.epoch, self.offset)


# ---------------------------------------------------------------------------
# evaluation during training
# ---------------------------------------------------------------------------

def decode_dataset(captioner: LayoutCaptioner, dataset: Sequence[CaptionedExample],
                   beam_size: int = 0, max_len: int | None = None) -> list[list[str]]:
    """Candidate caption tokens per example (greedy when beam_size == 0)."""
    max_len = max_len or 16
    out = []
    for ex in dataset:
        if beam_size >= 1:
            hyps = captioner.beam_caption(ex.layout, beam_size, max_len, aux=ex.aux_features)
            out.append(captioner.word_vocab.decode(hyps[0].tokens))
        else:
            out.append(captioner.greedy_caption(ex.layout, max_len, aux=ex.aux_features))
    return out


def eval_metrics(captioner: LayoutCaptioner, dataset: Sequence[CaptionedExample],
                 beam_size: int = 0, max_len: int | None = None) -> MetricReport:
    candidates = decode_dataset(captioner, dataset, beam_size, max_len)
    pairs = [EvalPair(cand, [tokenize(r) for r in ex.raw_captions])
             for cand, ex in zip(candidates, dataset)]
    return evaluate_pairs(pairs)


def dataset_loss(params: ModelParams, pairs: Sequence[TrainingPair],
                 flags: AblationFlags, chunk: int = 64) -> tuple[float, float]:
    """(mean per-pair loss, mean per-token loss) without recording a tape."""
    total = 0.0
    total_tokens = 0
    token_ll = 0.0
    with no_grad():
        for i in range(0, len(pairs), chunk):
            part = pairs[i:i + chunk]
            loss, stats = batch_loss(params, part, flags)
            total += stats["loss"] * len(part)
            token_ll += stats["loss_per_token"] * stats["n_tokens"]
            total_tokens += stats["n_tokens"]
    return total / len(pairs), token_ll / total_tokens


# ---------------------------------------------------------------------------
# checkpoint-facing state and the main loop
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    """Everything needed to resume or serve: params, vocabs, loop state."""

    config: TrainConfig
    word_vocab: Vocabulary
    cat_vocab: CategoryVocabulary
    values: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    iteration: int
    rng_state: int
    cursor: tuple[int, int]
    format_version: int = 1

    def build(self) -> tuple[ModelParams, LayoutCaptioner]:
        params = init_model(self.config.k, self.cat_vocab.size, self.word_vocab.size,
                            Rng(0), self.config.aux_dim)
        params.load_values(self.values)
        for name, p in params.named_parameters():
            p.adam_m[...] = self.adam_m[name]
            p.adam_v[...] = self.adam_v[name]
        captioner = LayoutCaptioner(params, self.word_vocab, self.cat_vocab,
                                    self.config.ablation, self.config.aux_dim)
        return params, captioner


def _snapshot(params: ModelParams, config: TrainConfig, word_vocab, cat_vocab,
              iteration: int, rng: Rng, cursor: _BatchCursor) -> Checkpoint:
    return Checkpoint(
        config=config,
        word_vocab=word_vocab,
        cat_vocab=cat_vocab,
        values=params.copy_values(),
        adam_m={n: p.adam_m.copy() for n, p in params.named_parameters()},
        adam_v={n: p.adam_v.copy() for n, p in params.named_parameters()},
        iteration=iteration,
        rng_state=rng.get_state(),
        cursor=cursor.state(),
    )


@dataclass
class EvalRecord:
    iteration: int
    train_loss: float
    val_loss: float | None
    val_loss_per_token: float | None
    metrics: MetricReport | None


@dataclass
class TrainResult:
    final: Checkpoint
    best: Checkpoint
    history: list[EvalRecord]


def train(dataset: Sequence[CaptionedExample], config: TrainConfig,
          word_vocab: Vocabulary, cat_vocab: CategoryVocabulary,
          val_dataset: Sequence[CaptionedExample] | None = None,
          resume_from: Checkpoint | None = None,
          log_every: int = 0) -> TrainResult:
    if not dataset:
        raise ConfigError("training dataset is empty")
    pairs = flatten_pairs(dataset)
    val_pairs = flatten_pairs(val_dataset) if val_dataset else None

    if resume_from is not None:
        params, _ = resume_from.build()
        rng = Rng(config.seed)
        rng.set_state(resume_from.rng_state)
        cursor = _BatchCursor(len(pairs), config.seed, *resume_from.cursor)
        start = resume_from.iteration
    else:
        rng = Rng(config.seed)
        params = init_model(config.k, cat_vocab.size, word_vocab.size, rng,
                            config.aux_dim, config.init_scale)
        cursor = _BatchCursor(len(pairs), config.seed)
        start = 0

    flags = config.ablation
    history: list[EvalRecord] = []
    best: Checkpoint | None = None
    best_score = -math.inf
    last_train_loss = math.nan

    for t in range(start + 1, config.max_iterations + 1):
        batch = [pairs[i] for i in cursor.next_batch(config.batch_size)]
        loss, stats = batch_loss(params, batch, flags)
        backward(loss)
        adam_step(params.parameters(), config, t)
        last_train_loss = stats["loss"]
        if log_every and t % log_every == 0:
            print(f"iter {t}: train loss {stats['loss']:.4f} "
                  f"({stats['loss_per_token']:.4f}/token)")

        if val_dataset is not None and (t % config.eval_every == 0 or t == config.max_iterations):
            val_loss, val_tok = dataset_loss(params, val_pairs, flags)
            captioner = LayoutCaptioner(params, word_vocab, cat_vocab, flags, config.aux_dim)
            report = eval_metrics(captioner, val_dataset, config.eval_beam_size,
                                  config.max_caption_len)
            history.append(EvalRecord(t, stats["loss"], val_loss, val_tok, report))
            if report.cider > best_score:
                best_score = report.cider
                best = _snapshot(params, config, word_vocab, cat_vocab, t, rng, cursor)

    final = _snapshot(params, config, word_vocab, cat_vocab,
                      config.max_iterations, rng, cursor)
    if best is None:
        best = final
        history = history or [EvalRecord(config.max_iterations, last_train_loss,
                                         None, None, None)]
    return TrainResult(final=final, best=best, history=history)


# ---------------------------------------------------------------------------
# nearest-neighbor baseline
# ---------------------------------------------------------------------------

def category_count_vector(layout: ObjectLayout, num_categories: int) -> np.ndarray:
    return np.bincount(layout.category_ids(), minlength=num_categories).astype(np.float64)


def nn_baseline(train_set: Sequence[CaptionedExample], query_layout: ObjectLayout,
                num_categories: int) -> CaptionedExample:
    """Training example whose bag-of-category counts is nearest (ties: lowest id)."""
    if not train_set:
        raise ConfigError("nn_baseline needs a nonempty training set")
    q = category_count_vector(query_layout, num_categories)

    def id_key(value):
        return (0, value, "") if isinstance(value, (int, float)) else (1, 0, str(value))

    ranked = sorted(
        train_set,
        key=lambda ex: (float(np.sum((category_count_vector(ex.layout, num_categories) - q) ** 2)),
                        id_key(ex.id)),
    )
    return ranked[0]


def nn_baseline_caption(train_set: Sequence[CaptionedExample],
                        query_layout: ObjectLayout, num_categories: int) -> str:
    return nn_baseline(train_set, query_layout, num_categories).raw_captions[0]


# ---------------------------------------------------------------------------
# gradient verification suite
# ---------------------------------------------------------------------------

def gradient_check_suite(seed: int = 0, eps: float = 2e-5,
                         max_coords: int = 48) -> dict[str, float]:
    """Finite-difference errors per parameter tensor on a random 2-pair batch.

    Exercises duplicate categories, the box projection, and the auxiliary
    fusion path.  The instance is scaled so sampled coordinates carry
    measurable gradients: at coordinates whose true gradient sits near
    the 1e-8 floor of the relative-error formula, a central difference in
    float64 measures roundoff noise rather than gradient error.
    """
    rng = Rng(derive_seed(seed, 0xD25))
    k, v, kw, d_aux = 8, 5, 12, 3
    params = init_model(k, v, kw, rng, aux_dim=d_aux, init_scale=0.5)

    def rand_box():
        from .data import BoundingBox
        x, y = rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5)
        w, h = rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5)
        return BoundingBox(x, y, min(w, 1 - x), min(h, 1 - y))

    layout_a = ObjectLayout(((0, rand_box()), (2, rand_box()), (2, rand_box()), (1, rand_box())))
    layout_b = ObjectLayout(((4, rand_box()), (3, rand_box())))
    batch = [
        TrainingPair("a", layout_a, [1, 4, 6, 8, 5, 7, 9, 11, 4, 2], np.array([0.4, -0.2, 0.9])),
        TrainingPair("b", layout_b, [1, 9, 10, 5, 6, 4, 8, 10, 2], np.array([-0.5, 0.1, 0.3])),
    ]

    def f():
        loss, _ = batch_loss(params, batch)
        return loss

    errors = {}
    for name, p in params.named_parameters():
        errors[name] = finite_difference_check(f, p, eps=eps, max_coords=max_coords,
                                               rng=Rng(derive_seed(seed, zlib.crc32(name.encode()))))
    return errors
