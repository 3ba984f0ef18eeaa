"""Labeled multi-domain datasets: loading, stratified splits, synthetic corpora."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyDatasetError, LabelError, ParseError, SpecError, StratificationError

POSITIVE = "positive"
NEGATIVE = "negative"
POLARITIES = (POSITIVE, NEGATIVE)

_POLARITY_TOKENS = {
    "positive": POSITIVE, "pos": POSITIVE, "1": POSITIVE,
    "negative": NEGATIVE, "neg": NEGATIVE, "0": NEGATIVE,
}


def parse_polarity(token) -> str:
    label = _POLARITY_TOKENS.get(str(token).strip().lower())
    if label is None:
        raise LabelError(f"unknown polarity {token!r}")
    return label


@dataclass(frozen=True)
class LabeledDocument:
    text: str
    polarity: str
    domain: str

    def __post_init__(self):
        if not self.text.strip():
            raise ParseError("document text is empty")
        if self.polarity not in POLARITIES:
            raise LabelError(f"polarity must be one of {POLARITIES}, got {self.polarity!r}")


@dataclass(frozen=True)
class Dataset:
    documents: tuple
    domains: tuple = field(default=None)

    def __post_init__(self):
        docs = tuple(self.documents)
        object.__setattr__(self, "documents", docs)
        if self.domains is None:
            object.__setattr__(self, "domains", tuple(dict.fromkeys(d.domain for d in docs)))
        else:
            object.__setattr__(self, "domains", tuple(self.domains))
        if len(set(self.domains)) != len(self.domains):
            raise ValueError(f"duplicate domain names in {self.domains}")
        known = set(self.domains)
        for doc in docs:
            if doc.domain not in known:
                raise ValueError(f"document domain {doc.domain!r} not in declared domains")

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def texts(self):
        return [d.text for d in self.documents]

    @property
    def polarities(self):
        return [d.polarity for d in self.documents]

    @property
    def domain_labels(self):
        return [d.domain for d in self.documents]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.documents[i] for i in indices), self.domains)

    def for_domain(self, domain) -> "Dataset":
        return Dataset(tuple(d for d in self.documents if d.domain == domain), self.domains)

    def counts(self):
        """``{(domain, polarity): count}`` for every non-empty cell."""
        out = {}
        for d in self.documents:
            out[(d.domain, d.polarity)] = out.get((d.domain, d.polarity), 0) + 1
        return out


# ------------------------------------------------------------------- loading

def _record_to_doc(record, line):
    if not isinstance(record, dict):
        raise ParseError("record is not an object", line)
    missing = [k for k in ("text", "polarity", "domain") if k not in record]
    if missing:
        raise ParseError(f"missing field(s) {', '.join(missing)}", line)
    try:
        polarity = parse_polarity(record["polarity"])
    except LabelError as exc:
        raise LabelError(str(exc), line) from None
    text, domain = record["text"], record["domain"]
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty or non-string text", line)
    if not isinstance(domain, str) or not domain:
        raise ParseError("empty or non-string domain", line)
    return LabeledDocument(text, polarity, domain)


def load_dataset(path, format=None) -> Dataset:
    """Read a JSONL or CSV dataset; ``format`` defaults to the file extension."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "jsonl").lower()
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unsupported dataset format {fmt!r}")
    content = path.read_text(encoding="utf-8")
    docs = []
    if fmt == "jsonl":
        for lineno, line in enumerate(content.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            docs.append(_record_to_doc(record, lineno))
    else:
        reader = csv.DictReader(io.StringIO(content))
        if reader.fieldnames is None:
            raise EmptyDatasetError(f"{path}: empty dataset")
        header = [h.strip() for h in reader.fieldnames]
        if sorted(header) != ["domain", "polarity", "text"]:
            raise ParseError(f"CSV header must be text,polarity,domain, got {','.join(header)}", 1)
        reader.fieldnames = header
        for row in reader:
            docs.append(_record_to_doc(row, reader.line_num))
    if not docs:
        raise EmptyDatasetError(f"{path}: empty dataset")
    return Dataset(tuple(docs))


def save_dataset(data: Dataset, path):
    """Write canonical JSONL: one record per line, UTF-8, domains in dataset order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in data:
            fh.write(json.dumps({"text": doc.text, "polarity": doc.polarity, "domain": doc.domain},
                                ensure_ascii=False) + "\n")


# ------------------------------------------------------------------- splits

def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split(data: Dataset, test_fraction=0.2, seed=0):
    """Stratified train/test split over (domain, polarity) cells."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    cells = {}
    for i, doc in enumerate(data):
        cells.setdefault((data.domains.index(doc.domain), doc.polarity), []).append(i)
    rng = np.random.default_rng(seed)
    test_idx = []
    for key in sorted(cells):
        members = cells[key]
        if len(members) < 2:
            raise StratificationError(
                f"cell (domain={data.domains[key[0]]!r}, polarity={key[1]}) has {len(members)} document(s); need >= 2")
        n_test = min(max(_round_half_up(test_fraction * len(members)), 1), len(members) - 1)
        picked = rng.permutation(len(members))[:n_test]
        test_idx.extend(members[j] for j in picked)
    test_set = set(test_idx)
    train = [i for i in range(len(data)) if i not in test_set]
    return data.subset(train), data.subset(sorted(test_set))


def kfold_indices(n, folds, seed=0):
    """Shuffled, near-equal folds of ``range(n)``."""
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk).tolist() for chunk in np.array_split(order, folds)]


# ---------------------------------------------------------------- synthetic

_DOMAIN_NAMES = ("shoes", "perfume", "phone", "cream", "printer",
                 "dress", "book", "bed", "shaver", "jewelry")


@dataclass(frozen=True)
class SyntheticSpec:
    num_domains: int = 3
    docs_per_domain: int = 40
    domain_vocab_size: int = 40
    sentiment_lexicon_size: int = 6
    vocab_overlap: float = 0.0
    imbalance_ratio: float = 1.0
    doc_length_range: tuple = (6, 14)
    seed: int = 0
    majority: str = POSITIVE
    mixed_sentiment: bool = False

    def validate(self):
        for name in ("num_domains", "docs_per_domain", "domain_vocab_size", "sentiment_lexicon_size"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be >= 1")
        if self.sentiment_lexicon_size < 2:
            raise SpecError("sentiment_lexicon_size must be >= 2 (both polarities need a token)")
        if not 0.0 <= self.vocab_overlap <= 1.0:
            raise SpecError("vocab_overlap must lie in [0, 1]")
        if self.imbalance_ratio <= 0:
            raise SpecError("imbalance_ratio must be positive")
        lo, hi = self.doc_length_range
        if lo < 3 or hi < lo:
            raise SpecError(f"doc_length_range must satisfy 3 <= min <= max, got {self.doc_length_range}")
        if self.majority not in POLARITIES:
            raise SpecError(f"majority must be one of {POLARITIES}")

    def class_counts(self):
        """``(majority, minority)`` documents per domain."""
        minority = max(1, _round_half_up(self.docs_per_domain / (1.0 + self.imbalance_ratio)))
        minority = min(minority, self.docs_per_domain)
        return self.docs_per_domain - minority, minority


def domain_name(i):
    return _DOMAIN_NAMES[i] if i < len(_DOMAIN_NAMES) else f"domain{i}"


def synthetic_vocabularies(spec: SyntheticSpec):
    """Per-domain content vocabularies plus the positive and negative lexicons."""
    n_shared = _round_half_up(spec.vocab_overlap * spec.domain_vocab_size)
    shared = [f"common{k:03d}" for k in range(n_shared)]
    vocabs = []
    for i in range(spec.num_domains):
        own = [f"{domain_name(i)}{k:03d}" for k in range(spec.domain_vocab_size - n_shared)]
        vocabs.append(shared + own)
    n_pos = (spec.sentiment_lexicon_size + 1) // 2
    positive = [f"good{k:02d}" for k in range(n_pos)]
    negative = [f"bad{k:02d}" for k in range(spec.sentiment_lexicon_size - n_pos)]
    return vocabs, positive, negative


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Documents mixing domain tokens with a strict majority of one sentiment sign."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    vocabs, positive, negative = synthetic_vocabularies(spec)
    n_major, n_minor = spec.class_counts()
    minority = NEGATIVE if spec.majority == POSITIVE else POSITIVE
    lo, hi = spec.doc_length_range
    docs = []
    for i, vocab in enumerate(vocabs):
        labels = [spec.majority] * n_major + [minority] * n_minor
        labels = [labels[j] for j in rng.permutation(len(labels))]
        for label in labels:
            length = int(rng.integers(lo, hi + 1))
            n_sent = max(1, length // 3)
            # opposite-sign tokens stay a strict minority
            n_contra = int(rng.integers(0, (n_sent - 1) // 2 + 1)) if spec.mixed_sentiment else 0
            same, other = (positive, negative) if label == POSITIVE else (negative, positive)
            tokens = list(rng.choice(same, size=n_sent - n_contra))
            tokens += list(rng.choice(other, size=n_contra))
            tokens += list(rng.choice(vocab, size=length - n_sent))
            tokens = [str(tokens[j]) for j in rng.permutation(len(tokens))]
            docs.append(LabeledDocument(" ".join(tokens), label, domain_name(i)))
    return Dataset(tuple(docs), tuple(domain_name(i) for i in range(spec.num_domains)))


def sentiment_sign(tokens: Sequence[str]) -> str | None:
    """Label implied by the majority of ``good*``/``bad*`` tokens; None on a tie."""
    pos = sum(t.startswith("good") for t in tokens)
    neg = sum(t.startswith("bad") for t in tokens)
    if pos == neg:
        return None
    return POSITIVE if pos > neg else NEGATIVE
