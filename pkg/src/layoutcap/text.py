"""Tokenization and vocabularies.

Word vocabulary reserves PAD=0, BOS=1, EOS=2, UNK=3; content tokens get
ids 4.. in order of first qualifying appearance.  Category names live in
their own unreserved vocabulary.
"""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable, Sequence

from .errors import ConfigError

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3

PAD_TOKEN = "<pad>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"

_RESERVED = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

_STRIP_RE = re.compile(r"[^a-z0-9 ]")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop everything outside [a-z0-9 ], split on whitespace."""
    cleaned = _STRIP_RE.sub("", text.lower())
    return cleaned.split()


class Vocabulary:
    """Bijective token<->id map over non-reserved tokens."""

    def __init__(self, tokens: Sequence[str]):
        self._id_to_token: list[str] = list(_RESERVED)
        self._token_to_id: dict[str, int] = {t: i for i, t in enumerate(_RESERVED)}
        for tok in tokens:
            if tok in self._token_to_id:
                raise ConfigError(f"duplicate or reserved token {tok!r}")
            self._token_to_id[tok] = len(self._id_to_token)
            self._id_to_token.append(tok)

    @property
    def size(self) -> int:
        return len(self._id_to_token)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def token_id(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < self.size:
            raise IndexError(f"token id {token_id} out of range for vocabulary of {self.size}")
        return self._id_to_token[token_id]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        """Token ids with BOS/EOS sentinels; unknown tokens become UNK."""
        return [BOS_ID] + [self.token_id(t) for t in tokens] + [EOS_ID]

    def decode(self, ids: Iterable[int]) -> list[str]:
        """Tokens without sentinels or padding."""
        out = []
        for i in ids:
            if i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            out.append(self.token(i))
        return out

    def content_tokens(self) -> list[str]:
        return self._id_to_token[len(_RESERVED):]

    def to_json(self) -> dict:
        return {"tokens": self.content_tokens()}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(obj["tokens"])


def build_vocabulary(captions: Iterable[str], min_count: int = 5) -> Vocabulary:
    """Vocabulary of tokens whose corpus frequency reaches min_count."""
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    order: dict[str, int] = {}
    n_captions = 0
    for caption in captions:
        n_captions += 1
        for tok in tokenize(caption):
            counts[tok] += 1
            order.setdefault(tok, len(order))
    if n_captions == 0:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=order.__getitem__)
    return Vocabulary(kept)


class CategoryVocabulary:
    """Bijective category-name<->id map (no reserved entries)."""

    def __init__(self, names: Sequence[str] = ()):
        self._id_to_name: list[str] = []
        self._name_to_id: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        if name in self._name_to_id:
            return self._name_to_id[name]
        self._name_to_id[name] = len(self._id_to_name)
        self._id_to_name.append(name)
        return self._name_to_id[name]

    @property
    def size(self) -> int:
        return len(self._id_to_name)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, name: str) -> bool:
        return name in self._name_to_id

    def category_id(self, name: str) -> int:
        if name not in self._name_to_id:
            raise KeyError(f"unknown category {name!r}")
        return self._name_to_id[name]

    def name(self, category_id: int) -> str:
        if not 0 <= category_id < self.size:
            raise IndexError(f"category id {category_id} out of range for {self.size} categories")
        return self._id_to_name[category_id]

    def names(self) -> list[str]:
        return list(self._id_to_name)

    def to_json(self) -> dict:
        return {"categories": self.names()}

    @classmethod
    def from_json(cls, obj: dict) -> "CategoryVocabulary":
        return cls(obj["categories"])
