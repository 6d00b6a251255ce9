"""Command-line workflow: gen-data -> build-vocab -> train -> caption/evaluate/serve."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .coco import load_coco
from .data import (RawExample, category_vocabulary, encode_dataset,
                   normalize_bbox, ObjectLayout, read_dataset, split,
                   write_dataset)
from .errors import LayoutcapError
from .metrics import EvalPair, evaluate_pairs
from .model import LayoutCaptioner
from .encoder import AblationFlags
from .service import LoadedModel, caption_layout, create_app, model_id_for
from .synthetic import SyntheticConfig, generate_synthetic
from .text import Vocabulary, CategoryVocabulary, build_vocabulary, tokenize
from .training import (TrainConfig, decode_dataset, gradient_check_suite,
                       nn_baseline_caption, train)

DEFAULT_FRACTIONS = (0.8, 0.1, 0.1)


def _write_json(path: str, obj) -> None:
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_fractions(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _load_vocabs(path: str) -> tuple[Vocabulary, CategoryVocabulary]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return Vocabulary.from_json(obj["words"]), CategoryVocabulary.from_json(obj["categories"])


def _split_dataset(examples, args):
    fractions = _parse_fractions(args.fractions)
    return split(examples, fractions, args.split_seed)


def _select_split(examples, args):
    if args.split == "all":
        return examples
    parts = dict(zip(("train", "val", "test"), _split_dataset(examples, args)))
    return parts[args.split]


def _add_split_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", choices=["train", "val", "test", "all"], default="all",
                   help="portion of --data to use (seed-deterministic split)")
    p.add_argument("--fractions", default="0.8,0.1,0.1")
    p.add_argument("--split-seed", type=int, default=0)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    config = SyntheticConfig(
        template_variants=args.with_variants,
        emit_aux=args.with_aux,
    )
    examples = generate_synthetic(args.seed, args.n, config)
    write_dataset(args.out, examples)
    print(f"wrote {len(examples)} examples to {args.out}")
    return 0


def cmd_import_coco(args) -> int:
    examples, _ = load_coco(args.instances, args.captions)
    write_dataset(args.out, examples)
    print(f"wrote {len(examples)} examples to {args.out}")
    return 0


def cmd_build_vocab(args) -> int:
    examples = read_dataset(args.data)
    captions = [c for ex in examples for c in ex.captions]
    word_vocab = build_vocabulary(captions, args.min_count)
    cat_vocab = category_vocabulary(examples)
    _write_json(args.out, {"words": word_vocab.to_json(),
                           "categories": cat_vocab.to_json()})
    print(f"vocabulary: {word_vocab.size} words, {cat_vocab.size} categories -> {args.out}")
    return 0


def cmd_train(args) -> int:
    examples = read_dataset(args.data)
    if args.vocab:
        word_vocab, cat_vocab = _load_vocabs(args.vocab)
    else:
        word_vocab = build_vocabulary((c for ex in examples for c in ex.captions),
                                      args.min_count)
        cat_vocab = category_vocabulary(examples)

    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = TrainConfig.from_json(json.load(fh))
    else:
        config = TrainConfig()
    overrides = dict(
        seed=args.seed, k=args.k, max_iterations=args.iterations,
        aux_dim=args.aux_dim,
        ablation=AblationFlags(args.no_locations, args.no_counts),
    )
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)

    train_part, val_part, _ = _split_dataset(examples, args)
    train_set = encode_dataset(train_part, word_vocab, cat_vocab, config.max_caption_len,
                               order=args.object_order, order_seed=config.seed)
    val_set = encode_dataset(val_part, word_vocab, cat_vocab, config.max_caption_len,
                             order=args.object_order, order_seed=config.seed) or None
    resume = load_checkpoint(args.resume) if args.resume else None
    result = train(train_set, config, word_vocab, cat_vocab, val_set,
                   resume_from=resume, log_every=args.log_every)
    save_checkpoint(result.final, args.out_checkpoint)
    if args.out_best:
        save_checkpoint(result.best, args.out_best)
    if result.history and result.history[-1].metrics is not None:
        last = result.history[-1]
        print(f"final: val loss {last.val_loss:.4f}, "
              f"CIDEr {last.metrics.cider:.4f}, BLEU-4 {last.metrics.bleu[3]:.4f}")
    print(f"checkpoint -> {args.out_checkpoint}")
    return 0


def _load_captioner(path: str) -> LayoutCaptioner:
    _, captioner = load_checkpoint(path).build()
    return captioner


def cmd_caption(args) -> int:
    captioner = _load_captioner(args.checkpoint)
    with open(args.layout_json, encoding="utf-8") as fh:
        request = json.load(fh)
    width, height = request.get("image_size", [1.0, 1.0])
    entries = []
    for spec in request["objects"]:
        cid = captioner.cat_vocab.category_id(spec["category"])
        entries.append((cid, normalize_bbox(spec["bbox"], width, height)))
    text, candidates = caption_layout(captioner, ObjectLayout(tuple(entries)),
                                      args.beam_size)
    print(json.dumps({
        "caption": text,
        "candidates": candidates,
        "model_id": model_id_for(captioner.flags, captioner.aux_dim),
    }, indent=2))
    return 0


def cmd_evaluate(args) -> int:
    examples = _select_split(read_dataset(args.data), args)
    if not examples:
        print("selected split is empty", file=sys.stderr)
        return 1
    if args.candidates:
        with open(args.candidates, encoding="utf-8") as fh:
            by_id = {}
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    by_id[rec["id"]] = rec["caption"]
        missing = [ex.id for ex in examples if ex.id not in by_id]
        if missing:
            print(f"candidates file lacks ids: {missing[:5]}...", file=sys.stderr)
            return 1
        candidates = [tokenize(by_id[ex.id]) for ex in examples]
    else:
        captioner = _load_captioner(args.checkpoint)
        encoded = encode_dataset(examples, captioner.word_vocab, captioner.cat_vocab)
        candidates = decode_dataset(captioner, encoded, args.beam_size)
    pairs = [EvalPair(cand, [tokenize(c) for c in ex.captions])
             for cand, ex in zip(candidates, examples)]
    report = evaluate_pairs(pairs).to_json()
    report["n_examples"] = len(examples)
    _write_json(args.out_report, report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_grad_check(args) -> int:
    errors = gradient_check_suite(args.seed)
    worst = max(errors.values())
    for name, err in sorted(errors.items()):
        status = "ok" if err < args.tolerance else "FAIL"
        print(f"{status}  {name:24s} {err:.3e}")
    if worst >= args.tolerance:
        print(f"gradient check failed: worst {worst:.3e} >= {args.tolerance}",
              file=sys.stderr)
        return 1
    print(f"gradient check passed: worst {worst:.3e} < {args.tolerance}")
    return 0


def cmd_nn_baseline(args) -> int:
    examples = read_dataset(args.data)
    parts = dict(zip(("train", "val", "test"), _split_dataset(examples, args)))
    train_part = parts["train"]
    query_part = parts[args.split] if args.split != "all" else examples
    word_vocab = build_vocabulary((c for ex in train_part for c in ex.captions),
                                  args.min_count)
    cat_vocab = category_vocabulary(examples)
    train_set = encode_dataset(train_part, word_vocab, cat_vocab)
    query_set = encode_dataset(query_part, word_vocab, cat_vocab)
    tmp = args.out + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            for ex in query_set:
                caption = nn_baseline_caption(train_set, ex.layout, cat_vocab.size)
                fh.write(json.dumps({"id": ex.id, "caption": caption}) + "\n")
        os.replace(tmp, args.out)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    print(f"wrote {len(query_set)} nearest-neighbor captions to {args.out}")
    return 0


def cmd_serve(args) -> int:
    models = [LoadedModel(model_id_for(c.flags, c.aux_dim), c)
              for c in map(_load_captioner, [args.checkpoint] + (args.checkpoint_ablated or []))]
    app = create_app(models)
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layoutcap",
                                     description="object-layout captioning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic spatial-caption dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--with-variants", action="store_true",
                   help="sample alternative surface templates per scene")
    p.add_argument("--with-aux", action="store_true",
                   help="emit one-hot template-variant auxiliary features")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("import-coco", help="convert COCO instances+captions JSON")
    p.add_argument("--instances", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_import_coco)

    p = sub.add_parser("build-vocab", help="build word + category vocabularies")
    p.add_argument("--data", required=True)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_vocab)

    p = sub.add_parser("train", help="train a captioning model")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--vocab", help="vocabulary file from build-vocab")
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--out-best", help="also save the best-validation checkpoint")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--no-locations", action="store_true")
    p.add_argument("--no-counts", action="store_true")
    p.add_argument("--aux-dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--object-order", choices=["source", "by-category", "by-position", "shuffled"],
                   default="source")
    p.add_argument("--log-every", type=int, default=0)
    _add_split_args(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("caption", help="caption one layout JSON file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layout-json", required=True)
    p.add_argument("--beam-size", type=int, default=2)
    p.set_defaults(fn=cmd_caption)

    p = sub.add_parser("evaluate", help="score generated captions against references")
    p.add_argument("--checkpoint")
    p.add_argument("--candidates", help="JSONL {'id','caption'} instead of decoding")
    p.add_argument("--data", required=True)
    p.add_argument("--beam-size", type=int, default=2)
    p.add_argument("--out-report", required=True)
    _add_split_args(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(fn=cmd_grad_check)

    p = sub.add_parser("nn-baseline", help="bag-of-category nearest-neighbor captions")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=5)
    _add_split_args(p)
    p.set_defaults(fn=cmd_nn_baseline)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--checkpoint-ablated", action="append",
                   help="additional ablated checkpoints (repeatable)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (LayoutcapError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
