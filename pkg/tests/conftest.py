import json

import pytest

from layoutcap.checkpoint import save_checkpoint
from layoutcap.data import category_vocabulary, encode_dataset
from layoutcap.synthetic import generate_synthetic
from layoutcap.text import build_vocabulary
from layoutcap.training import TrainConfig, train
from layoutcap.encoder import AblationFlags


@pytest.fixture(scope="session")
def tiny_corpus_path(tmp_path_factory):
    from layoutcap.data import write_dataset

    path = tmp_path_factory.mktemp("data") / "tiny.jsonl"
    write_dataset(str(path), generate_synthetic(21, 60))
    return str(path)


def _train_tiny(flags=AblationFlags(), seed=5):
    raw = generate_synthetic(21, 60)
    wv = build_vocabulary((c for e in raw for c in e.captions), min_count=1)
    cv = category_vocabulary(raw)
    ds = encode_dataset(raw, wv, cv)
    config = TrainConfig(seed=seed, k=16, max_iterations=150, batch_size=8,
                         eval_every=10 ** 9, ablation=flags)
    return train(ds, config, wv, cv)


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A small (barely trained) checkpoint for CLI/service wiring tests."""
    path = tmp_path_factory.mktemp("ckpt") / "tiny.ckpt"
    save_checkpoint(_train_tiny().final, str(path))
    return str(path)


@pytest.fixture(scope="session")
def tiny_ablated_checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "tiny-noloc.ckpt"
    save_checkpoint(_train_tiny(AblationFlags(no_locations=True)).final, str(path))
    return str(path)


@pytest.fixture()
def layout_request(tmp_path):
    request = {
        "objects": [
            {"category": "dog", "bbox": [0.1, 0.4, 0.2, 0.2]},
            {"category": "ball", "bbox": [0.7, 0.4, 0.1, 0.1]},
        ],
        "image_size": [1, 1],
    }
    path = tmp_path / "layout.json"
    path.write_text(json.dumps(request))
    return str(path), request
