"""Domain belonging degree: per-word TF x IDF against each domain, averaged per document.

Both ratios share the in-domain count in the numerator::

    tf(T, i)  = n[T, i] / N[i]
    idf(T, i) = n[T, i] / sum_j n[T, j]
    dbd(T, i) = tf(T, i) * idf(T, i)

so ``idf`` here is the share of a token's occurrences that fall in domain i,
not the classical log inverse document frequency.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ContractError, StatsError
from .text import PipelineConfig, preprocess
from .validation import check_domains, check_texts

AGGREGATIONS = ("mean", "sum")


@dataclass(frozen=True)
class DomainStats:
    domains: tuple
    counts: dict  # token -> tuple of per-domain occurrence counts
    totals: tuple

    def __post_init__(self):
        m = len(self.domains)
        sums = [0] * m
        for token, row in self.counts.items():
            if len(row) != m or any(c < 0 for c in row):
                raise StatsError(f"bad count row for {token!r}: {row}")
            for i, c in enumerate(row):
                sums[i] += c
        if tuple(sums) != tuple(self.totals):
            raise StatsError("per-domain totals disagree with the token counts")
        for name, total in zip(self.domains, self.totals):
            if total <= 0:
                raise StatsError(f"domain {name!r} has no tokens")

    @property
    def num_domains(self):
        return len(self.domains)

    def count(self, token, i) -> int:
        row = self.counts.get(token)
        return 0 if row is None else row[i]

    def scaled(self, factor: int) -> "DomainStats":
        return DomainStats(self.domains, {t: tuple(c * factor for c in row) for t, row in self.counts.items()},
                           tuple(n * factor for n in self.totals))


def build_domain_stats(train, config: PipelineConfig = PipelineConfig()) -> DomainStats:
    """Stats over the preprocessed (unpadded) tokens of a :class:`Dataset`."""
    if len(train) == 0:
        raise StatsError("cannot build domain statistics from an empty dataset")
    return count_domain_tokens([preprocess(d.text, config) for d in train], train.domain_labels, train.domains)


def count_domain_tokens(token_lists: Iterable[Sequence[str]], domain_labels: Sequence[str],
                        domains: Sequence[str]) -> DomainStats:
    """Count token occurrences per domain over already-preprocessed documents."""
    domains = tuple(domains)
    pos = {d: i for i, d in enumerate(domains)}
    per_domain = [Counter() for _ in domains]
    for tokens, label in zip(token_lists, domain_labels, strict=True):
        if label not in pos:
            raise StatsError(f"unknown domain {label!r}")
        per_domain[pos[label]].update(tokens)
    vocab = sorted(set().union(*per_domain))
    counts = {t: tuple(c[t] for c in per_domain) for t in vocab}
    totals = tuple(sum(c.values()) for c in per_domain)
    for name, total in zip(domains, totals):
        if total == 0:
            raise StatsError(f"domain {name!r} has no tokens after preprocessing")
    return DomainStats(domains, counts, totals)


def word_dbd(token, i, stats: DomainStats):
    """``(tf, idf, dbd)`` of ``token`` for domain ``i``; all zero for unseen tokens."""
    if not 0 <= i < stats.num_domains:
        raise ContractError(f"domain index {i} out of range")
    row = stats.counts.get(token)
    if row is None or row[i] == 0:
        return 0.0, 0.0, 0.0
    tf = row[i] / stats.totals[i]
    idf = row[i] / sum(row)
    return tf, idf, tf * idf


def word_dbd_vector(token, stats: DomainStats) -> np.ndarray:
    row = stats.counts.get(token)
    if row is None:
        return np.zeros(stats.num_domains)
    n = np.asarray(row, dtype=np.float64)
    return (n / np.asarray(stats.totals, dtype=np.float64)) * (n / n.sum())


def document_dbd(tokens: Sequence[str], stats: DomainStats, aggregation="mean") -> np.ndarray:
    """Domain weight vector D; unknown tokens contribute 0, empty input gives zeros."""
    if aggregation not in AGGREGATIONS:
        raise ContractError(f"aggregation must be one of {AGGREGATIONS}")
    out = np.zeros(stats.num_domains)
    if not tokens:
        return out
    for t in tokens:
        out += word_dbd_vector(t, stats)
    return out / len(tokens) if aggregation == "mean" else out


def identify_domain(D) -> int:
    """Index of the largest entry (0-based); the first one wins ties."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 1 or D.size == 0:
        raise ContractError("D must be a non-empty vector")
    return int(np.argmax(D))


def dbd_table(stats: DomainStats):
    """Rows ``(token, domain, tf, idf, dbd)`` for every nonzero (token, domain) pair."""
    for token in sorted(stats.counts):
        for i, name in enumerate(stats.domains):
            tf, idf, d = word_dbd(token, i, stats)
            if tf:
                yield token, name, tf, idf, d


class DbdTransformer(TransformerMixin, BaseEstimator):
    """Texts -> (n_samples, n_domains) matrix of domain belonging degrees.

    ``fit`` needs the domain label of every training text.
    """

    def __init__(self, stopwords=None, lowercase=True, aggregation="mean"):
        self.stopwords = stopwords
        self.lowercase = lowercase
        self.aggregation = aggregation

    def _config(self):
        return PipelineConfig(stopwords=frozenset(self.stopwords or ()), lowercase=self.lowercase)

    def fit(self, X, domains=None, domain_order=None):
        X = check_texts(X)
        labels = check_domains(domains, len(X))
        order = tuple(domain_order) if domain_order is not None else tuple(dict.fromkeys(labels))
        cfg = self._config()
        self.stats_ = count_domain_tokens([preprocess(t, cfg) for t in X], labels, order)
        self.domains_ = order
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        cfg = self._config()
        rows = [document_dbd(preprocess(t, cfg), self.stats_, self.aggregation) for t in check_texts(X)]
        return np.vstack(rows) if rows else np.zeros((0, len(self.domains_)))

    def predict(self, X):
        """Domain name with the largest belonging degree for each text."""
        return np.array([self.domains_[identify_domain(row)] for row in self.transform(X)], dtype=object)
