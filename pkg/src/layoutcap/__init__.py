"""layoutcap: caption generation for object layouts.

An LSTM encoder turns a sequence of (category, bounding box) pairs into
a scene vector; an LSTM language model decodes it into text.  Everything
runs on a small numpy-backed reverse-mode autodiff kernel in float64.
"""

from .autodiff import (Parameter, Tensor, backward, finite_difference_check,
                       matmul, no_grad, sigmoid, softmax_rows, tanh)
from .data import (BoundingBox, CaptionedExample, ObjectLayout, RawExample,
                   encode_dataset, normalize_bbox, read_dataset, split,
                   write_dataset)
from .decoder import (DecoderParams, Hypothesis, beam_search, greedy_decode,
                      init_state, sequence_logprob, step)
from .encoder import (AblationFlags, EncoderParams, embed_step, encode_layout,
                      fuse_auxiliary)
from .metrics import EvalPair, MetricReport, bleu, cider, evaluate_pairs, rouge_l
from .model import LayoutCaptioner, ModelParams, init_model
from .rng import Rng
from .synthetic import SyntheticConfig, generate_synthetic, render_caption
from .text import Vocabulary, CategoryVocabulary, build_vocabulary, tokenize
from .training import (Checkpoint, TrainConfig, TrainResult, adam_step,
                       batch_loss, gradient_check_suite, nn_baseline, train)
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"
