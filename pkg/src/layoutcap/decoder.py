"""Caption decoder: LSTM language model conditioned on a scene vector.

Step ordering: the scene vector is consumed at step 0 as a regular input,
BOS is consumed next, and from then on each position's distribution is
read from the current hidden state *before* the position's token is
consumed.  The same path serves teacher-forced scoring and generation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import CaptionFormatError
from .lstm import LstmParams, RecurrentState, init_lstm, lstm_step, zero_state
from .rng import Rng
from .text import BOS_ID, EOS_ID, PAD_ID, UNK_ID


@dataclass
class DecoderParams:
    w_embed: Parameter  # (k, K) word embedding columns
    lstm: LstmParams
    w_out: Parameter    # (K, k) hidden -> logits
    b_out: Parameter    # (1, K)

    @property
    def hidden_size(self) -> int:
        return self.w_embed.rows

    @property
    def vocab_size(self) -> int:
        return self.w_embed.cols


def init_decoder(k: int, vocab_size: int, rng: Rng, init_scale: float = 0.08) -> DecoderParams:
    w_embed = Parameter(rng.uniform_array((k, vocab_size), -init_scale, init_scale), "decoder.w_embed")
    lstm = init_lstm(k, rng, "decoder.lstm", init_scale)
    w_out = Parameter(rng.uniform_array((vocab_size, k), -init_scale, init_scale), "decoder.w_out")
    b_out = Parameter(np.zeros((1, vocab_size)), "decoder.b_out")
    return DecoderParams(w_embed, lstm, w_out, b_out)


def init_state(params: DecoderParams, h_layout: Tensor) -> RecurrentState:
    """One LSTM step from the zero state with the scene vector as input."""
    state = zero_state(params.hidden_size, batch=h_layout.rows)
    return lstm_step(params.lstm, h_layout, state)


def output_logits(params: DecoderParams, state: RecurrentState) -> Tensor:
    return ad.linear(state.h, params.w_out, params.b_out)


def advance(params: DecoderParams, state: RecurrentState, word_ids) -> RecurrentState:
    """Consume embedded token(s); word_ids is one id per batch row."""
    ids = np.atleast_1d(np.asarray(word_ids, dtype=np.intp))
    if ids.size and ids.max() >= params.vocab_size:
        raise IndexError(f"word id {int(ids.max())} out of range for vocabulary of {params.vocab_size}")
    x = ad.embed_cols(params.w_embed, ids)
    return lstm_step(params.lstm, x, state)


def step(params: DecoderParams, state: RecurrentState, word_id: int):
    """(distribution from the current state, state after consuming word_id)."""
    dist = ad.softmax_rows(output_logits(params, state))
    return dist, advance(params, state, [word_id])


def _validate_caption(tokens, bos_id: int, eos_id: int) -> list[int]:
    toks = [int(t) for t in tokens]
    if len(toks) < 2 or toks[0] != bos_id or toks[-1] != eos_id:
        raise CaptionFormatError(f"caption must be BOS ... EOS, got {toks}")
    return toks


def _score_tokens(params: DecoderParams, h_layout: Tensor, toks: list[int]) -> Tensor:
    """Sum of log p(toks[i] | prefix) for i >= 1; toks[0] is only consumed."""
    state = advance(params, init_state(params, h_layout), [toks[0]])
    total = Tensor(np.zeros((1, 1)))
    for i, target in enumerate(toks[1:]):
        logp = ad.pick_rows(ad.log_softmax_rows(output_logits(params, state)), [target])
        total = ad.add(total, logp)
        if i + 1 < len(toks) - 1:
            state = advance(params, state, [target])
    return total


def sequence_logprob(params: DecoderParams, h_layout: Tensor, tokens,
                     bos_id: int = BOS_ID, eos_id: int = EOS_ID) -> Tensor:
    """Log-likelihood of a BOS..EOS caption; BOS is consumed, never scored."""
    return _score_tokens(params, h_layout, _validate_caption(tokens, bos_id, eos_id))


def batch_logprobs(params: DecoderParams, h_layouts: Tensor,
                   captions: list[list[int]]) -> Tensor:
    """Per-example caption log-likelihoods, (B, 1); lockstep with masking.

    Matches sequence_logprob exactly: padded positions contribute zero.
    """
    caps = [_validate_caption(c, BOS_ID, EOS_ID) for c in captions]
    batch = len(caps)
    if h_layouts.rows != batch:
        raise CaptionFormatError(f"{batch} captions for {h_layouts.rows} encoded layouts")
    max_steps = max(len(c) - 1 for c in caps)
    inputs = np.full((batch, max_steps), PAD_ID, dtype=np.intp)
    targets = np.full((batch, max_steps), PAD_ID, dtype=np.intp)
    mask = np.zeros((batch, max_steps))
    for i, c in enumerate(caps):
        n = len(c) - 1
        inputs[i, :n] = c[:-1]
        targets[i, :n] = c[1:]
        mask[i, :n] = 1.0
    state = init_state(params, h_layouts)
    total = Tensor(np.zeros((batch, 1)))
    for t in range(max_steps):
        state = advance(params, state, inputs[:, t])
        logp = ad.pick_rows(ad.log_softmax_rows(output_logits(params, state)), targets[:, t])
        total = ad.add(total, ad.mul(logp, Tensor(mask[:, t:t + 1])))
    return total


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

@dataclass
class Hypothesis:
    """Partial decode: BOS-prefixed tokens, cumulative logprob, LSTM state."""

    tokens: tuple[int, ...]
    logprob: float
    state: RecurrentState | None

    @property
    def finished(self) -> bool:
        return len(self.tokens) > 1 and self.tokens[-1] == EOS_ID


_DEFAULT_BANNED = (PAD_ID, UNK_ID)


def _masked_logprobs(params: DecoderParams, state: RecurrentState,
                     banned: tuple[int, ...]) -> np.ndarray:
    logits = output_logits(params, state).value[0]
    shifted = logits - logits.max()
    logprobs = shifted - np.log(np.exp(shifted).sum())
    for b in banned:
        logprobs[b] = -np.inf
    return logprobs


def greedy_decode(params: DecoderParams, h_layout: Tensor, max_len: int = 16,
                  banned: tuple[int, ...] = _DEFAULT_BANNED) -> list[int]:
    """Argmax decoding; ties break toward the lowest word id."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    with ad.no_grad():
        state = advance(params, init_state(params, h_layout), [BOS_ID])
        tokens = [BOS_ID]
        for _ in range(max_len):
            logprobs = _masked_logprobs(params, state, banned)
            word = int(np.argmax(logprobs))
            tokens.append(word)
            if word == EOS_ID:
                break
            state = advance(params, state, [word])
    return tokens


def beam_search(params: DecoderParams, h_layout: Tensor, beam_size: int = 2,
                max_len: int = 16,
                banned: tuple[int, ...] = _DEFAULT_BANNED) -> list[Hypothesis]:
    """Breadth-limited search by cumulative logprob.

    Finished hypotheses move to a pool and the live beam refills from the
    remaining ranked expansions; the search stops once the pool holds
    beam_size entries or every live hypothesis reaches max_len.  Returns
    pool plus forcibly-terminated survivors, best first; exact ties order
    lexicographically by token sequence.
    """
    if beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {beam_size}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    with ad.no_grad():
        root = Hypothesis(
            tokens=(BOS_ID,),
            logprob=0.0,
            state=advance(params, init_state(params, h_layout), [BOS_ID]),
        )
        live = [root]
        pool: list[Hypothesis] = []
        for _ in range(max_len):
            candidates = []  # (neg score, tokens, parent, word)
            for hyp in live:
                logprobs = _masked_logprobs(params, hyp.state, banned)
                for word in np.flatnonzero(np.isfinite(logprobs)):
                    word = int(word)
                    candidates.append((
                        -(hyp.logprob + float(logprobs[word])),
                        hyp.tokens + (word,),
                        hyp,
                        word,
                    ))
            candidates.sort(key=lambda c: (c[0], c[1]))
            new_live = []
            for rank, (neg_score, tokens, parent, word) in enumerate(candidates):
                if word == EOS_ID:
                    if rank < beam_size and len(pool) < beam_size:
                        pool.append(Hypothesis(tokens, -neg_score, None))
                elif len(new_live) < beam_size:
                    new_live.append(Hypothesis(tokens, -neg_score,
                                               advance(params, parent.state, [word])))
                if len(pool) >= beam_size:
                    break
            if len(pool) >= beam_size or not new_live:
                live = []
                break
            live = new_live
        results = pool + [Hypothesis(h.tokens, h.logprob, None) for h in live]
    results.sort(key=lambda h: (-h.logprob, h.tokens))
    return results
