"""Full captioning model: parameter registry and a convenience facade."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, Tensor
from .data import ObjectLayout
from .decoder import (DecoderParams, Hypothesis, beam_search, greedy_decode,
                      init_decoder, sequence_logprob)
from .encoder import (AblationFlags, EncoderParams, encode_layout,
                      fuse_auxiliary, init_encoder)
from .rng import Rng
from .text import Vocabulary, CategoryVocabulary


@dataclass
class ModelParams:
    encoder: EncoderParams
    decoder: DecoderParams

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        """Canonical ordering; training and checkpoints rely on it."""
        enc, dec = self.encoder, self.decoder
        named = [
            ("encoder.w_cat", enc.w_cat),
            ("encoder.w_loc", enc.w_loc),
            ("encoder.b_loc", enc.b_loc),
            ("encoder.lstm.w", enc.lstm.w),
            ("encoder.lstm.b", enc.lstm.b),
            ("decoder.w_embed", dec.w_embed),
            ("decoder.lstm.w", dec.lstm.w),
            ("decoder.lstm.b", dec.lstm.b),
            ("decoder.w_out", dec.w_out),
            ("decoder.b_out", dec.b_out),
        ]
        if enc.w_aux is not None:
            named.append(("encoder.w_aux", enc.w_aux))
            named.append(("encoder.b_aux", enc.b_aux))
        return named

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            src = values[name]
            if src.shape != p.value.shape:
                raise ValueError(f"{name}: checkpoint shape {src.shape} != model {p.value.shape}")
            p.value[...] = src


def init_model(k: int, num_categories: int, vocab_size: int, rng: Rng,
               aux_dim: int = 0, init_scale: float = 0.08) -> ModelParams:
    """Uniform(-init_scale, init_scale) weights, zero biases, forget bias +1."""
    encoder = init_encoder(k, num_categories, rng, aux_dim, init_scale)
    decoder = init_decoder(k, vocab_size, rng, init_scale)
    return ModelParams(encoder=encoder, decoder=decoder)


@dataclass
class LayoutCaptioner:
    """Bundle of params + vocabularies wired for inference."""

    params: ModelParams
    word_vocab: Vocabulary
    cat_vocab: CategoryVocabulary
    flags: AblationFlags = field(default_factory=AblationFlags)
    aux_dim: int = 0

    def encode(self, layout: ObjectLayout, aux: np.ndarray | None = None) -> Tensor:
        h = encode_layout(self.params.encoder, layout, self.flags)
        return fuse_auxiliary(self.params.encoder, h, aux)

    def caption_logprob(self, layout: ObjectLayout, tokens, aux=None) -> float:
        return sequence_logprob(self.params.decoder, self.encode(layout, aux), tokens).item()

    def greedy_caption(self, layout: ObjectLayout, max_len: int = 16, aux=None) -> list[str]:
        ids = greedy_decode(self.params.decoder, self.encode(layout, aux), max_len)
        return self.word_vocab.decode(ids)

    def beam_caption(self, layout: ObjectLayout, beam_size: int = 2,
                     max_len: int = 16, aux=None) -> list[Hypothesis]:
        return beam_search(self.params.decoder, self.encode(layout, aux),
                           beam_size, max_len)

    def detokenize(self, ids) -> str:
        return " ".join(self.word_vocab.decode(ids))
