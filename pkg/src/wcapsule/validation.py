"""Input checks shared by the estimators."""

import numpy as np

from .corpus import parse_polarity
from .errors import ContractError


def check_texts(X):
    """Return ``X`` as a list of strings, rejecting scalars and non-string entries."""
    if isinstance(X, str):
        raise ContractError("expected a sequence of documents, got a single string")
    try:
        texts = list(X)
    except TypeError:
        raise ContractError(f"expected a sequence of documents, got {type(X).__name__}") from None
    for i, t in enumerate(texts):
        if not isinstance(t, str):
            raise ContractError(f"document {i} is {type(t).__name__}, expected str")
    return texts


def check_polarities(y, n):
    labels = [parse_polarity(v) for v in np.asarray(y, dtype=object).ravel()]
    if len(labels) != n:
        raise ContractError(f"got {len(labels)} labels for {n} documents")
    return labels


def check_domains(domains, n):
    if domains is None:
        raise ContractError("domain labels are required")
    labels = [str(d) for d in np.asarray(domains, dtype=object).ravel()]
    if len(labels) != n:
        raise ContractError(f"got {len(labels)} domain labels for {n} documents")
    return labels
