"""One capsule network per domain, combined through domain belonging degrees.

For a document, every domain network votes a signed confidence ``c_i``
(``+Pos_i`` when it leans positive, ``-Neg_i`` otherwise); the document's
belonging degrees ``D`` pick the domain (argmax) and weight the votes
(``score = D . C``, positive when ``score >= 0``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from .corpus import NEGATIVE, POSITIVE, Dataset, kfold_indices
from .dbd import DbdTransformer, document_dbd, identify_domain
from .errors import ContractError, TrainingError
from .layers import DomainNetwork, NetworkConfig
from .metrics import (ConfusionMatrix, CostState, compute_metrics, cost_sensitive_weights,
                      cross_entropy_tensor)
from .text import PipelineConfig, TextVectorizer, embed, load_embeddings, random_embeddings
from .validation import check_domains, check_polarities, check_texts

log = logging.getLogger(__name__)

CLASS_INDEX = {POSITIVE: 0, NEGATIVE: 1}
DEFAULT_BATCH_SIZE = 8
DEFAULT_COST_BATCH_SIZE = 128


# ----------------------------------------------------------------- combining

def polarity_vector(per_domain_probs) -> np.ndarray:
    """``c_i = Pos_i`` if ``Pos_i >= Neg_i`` else ``-Neg_i``."""
    probs = np.asarray(per_domain_probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != 2:
        raise ContractError(f"expected (M, 2) probability pairs, got shape {probs.shape}")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise ContractError("each (Pos, Neg) pair must be non-negative and sum to 1")
    pos, neg = probs[:, 0], probs[:, 1]
    return np.where(pos >= neg, pos, -neg)


@dataclass(frozen=True)
class Combined:
    domain_index: int
    polarity: str
    score: float


def combine(D, C) -> Combined:
    D, C = np.asarray(D, dtype=np.float64), np.asarray(C, dtype=np.float64)
    if D.shape != C.shape or D.ndim != 1:
        raise ContractError(f"D and C must be vectors of equal length, got {D.shape} and {C.shape}")
    score = float(np.dot(D, C))
    return Combined(identify_domain(D), POSITIVE if score >= 0 else NEGATIVE, score)


# ------------------------------------------------------------------ training

class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            if g is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            self.params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train_network(x, labels, config: NetworkConfig, *, epochs=10, batch_size=8, learning_rate=1e-3,
                  seed=0, cost_state: CostState | None = None):
    """Fit one :class:`DomainNetwork` on embedded documents ``x`` (n, M, E).

    Returns the network and the mean training loss of every epoch.  With a
    ``cost_state`` the objective is the lambda-weighted class-averaged loss,
    with lambda refreshed from each batch's own predictions.
    """
    net = DomainNetwork.initialize(config, seed)
    opt = Adam(net.params, learning_rate)
    rng = np.random.default_rng(seed)
    targets = np.array([CLASS_INDEX[l] for l in labels])
    labels = np.array(labels, dtype=object)
    history = []
    for _ in range(epochs):
        losses = []
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            params = {k: ad.Tensor(v, requires_grad=True) for k, v in net.params.items()}
            probs = net.forward(x[idx], params)
            per_sample = cross_entropy_tensor(probs, targets[idx])
            if cost_state is None:
                loss = ad.mean(per_sample)
            else:
                pred = np.where(probs.data[:, 0] >= probs.data[:, 1], POSITIVE, NEGATIVE)
                cost_state = cost_state.updated(list(labels[idx]), list(pred))
                loss = ad.sum(per_sample * cost_sensitive_weights(list(labels[idx]), cost_state))
            loss.backward()
            opt.step({k: p.grad for k, p in params.items()})
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    return net, history


# ----------------------------------------------------------------- estimator

class WCapsuleEnsemble(ClassifierMixin, BaseEstimator):
    """Multi-domain sentiment classifier: per-domain Bi-GRU capsule networks + DBD weighting.

    ``fit(X, y, domains)`` takes raw texts, polarity labels and domain labels.
    ``predict`` returns polarity labels; ``predict_domain`` the identified
    domain names; ``decision_function`` the signed score ``D . C``.
    """

    def __init__(self, *, embed_dim=32, hidden_dim=64, n_capsules=4, capsule_dim=8,
                 routing_iterations=3, epochs=10, batch_size=None, learning_rate=1e-2,
                 cost_sensitive=False, minority_label=None, min_count=2, max_len="auto",
                 stopwords=None, embeddings=None, candidate="tanh", softmax_mode="standard",
                 routing_grad="full", dbd_aggregation="mean", random_state=42):
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.n_capsules = n_capsules
        self.capsule_dim = capsule_dim
        self.routing_iterations = routing_iterations
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.cost_sensitive = cost_sensitive
        self.minority_label = minority_label
        self.min_count = min_count
        self.max_len = max_len
        self.stopwords = stopwords
        self.embeddings = embeddings
        self.candidate = candidate
        self.softmax_mode = softmax_mode
        self.routing_grad = routing_grad
        self.dbd_aggregation = dbd_aggregation
        self.random_state = random_state

    @property
    def effective_batch_size(self):
        if self.batch_size is not None:
            return self.batch_size
        return DEFAULT_COST_BATCH_SIZE if self.cost_sensitive else DEFAULT_BATCH_SIZE

    def _validate_params(self):
        for name in ("embed_dim", "hidden_dim", "n_capsules", "capsule_dim", "routing_iterations",
                     "epochs", "effective_batch_size", "min_count"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ContractError(f"{name} must be a positive integer, got {value!r}")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")

    def fit(self, X, y, domains=None, domain_order=None):
        self._validate_params()
        X = check_texts(X)
        y = check_polarities(y, len(X))
        domains = check_domains(domains, len(X))
        order = tuple(domain_order) if domain_order is not None else tuple(dict.fromkeys(domains))
        seen = {}
        for d, label in zip(domains, y):
            seen.setdefault(d, set()).add(label)
        for d in order:
            missing = {POSITIVE, NEGATIVE} - seen.get(d, set())
            if missing:
                raise TrainingError(f"domain {d!r} has no {'/'.join(sorted(missing))} training documents")

        stop = frozenset(self.stopwords or ())
        self.vectorizer_ = TextVectorizer(stop, self.min_count, self.max_len).fit(X)
        vocab = self.vectorizer_.vocabulary_
        if self.embeddings:
            cfg = PipelineConfig(stop, self.min_count, self.max_len, self.embed_dim)
            self.embedding_table_ = load_embeddings(self.embeddings, vocab, cfg, self.random_state)
        else:
            self.embedding_table_ = random_embeddings(vocab, self.embed_dim, self.random_state)
        self.dbd_ = DbdTransformer(stop, aggregation=self.dbd_aggregation).fit(X, domains, order)

        self.domains_ = order
        self.classes_ = np.array([NEGATIVE, POSITIVE], dtype=object)
        self.network_config_ = NetworkConfig(
            embed_dim=self.embed_dim, max_len=self.vectorizer_.max_len_, hidden_dim=self.hidden_dim,
            n_capsules=self.n_capsules, capsule_dim=self.capsule_dim,
            routing_iterations=self.routing_iterations, candidate=self.candidate,
            softmax_mode=self.softmax_mode, routing_grad=self.routing_grad)
        self.cost_state_ = CostState.from_labels(y, self.minority_label) if self.cost_sensitive else None

        x_all = embed(self.vectorizer_.transform(X), self.embedding_table_)
        labels = np.array(y, dtype=object)
        dom = np.array(domains, dtype=object)
        self.networks_, self.history_ = [], []
        for i, name in enumerate(order):
            mask = dom == name
            log.info("training domain %s on %d documents", name, int(mask.sum()))
            net, history = train_network(
                x_all[mask], list(labels[mask]), self.network_config_, epochs=self.epochs,
                batch_size=self.effective_batch_size, learning_rate=self.learning_rate,
                seed=[int(self.random_state), i], cost_state=self.cost_state_)
            self.networks_.append(net)
            self.history_.append(history)
        return self

    def fit_dataset(self, data: Dataset):
        return self.fit(data.texts, data.polarities, data.domain_labels, domain_order=data.domains)

    # inference

    def domain_probabilities(self, X, chunk=256) -> np.ndarray:
        """(n_samples, n_domains, 2) array of per-domain ``(Pos, Neg)``."""
        check_is_fitted(self, "networks_")
        idx = self.vectorizer_.transform(X)
        out = np.empty((len(idx), len(self.networks_), 2))
        for start in range(0, len(idx), chunk):
            x = embed(idx[start:start + chunk], self.embedding_table_)
            for j, net in enumerate(self.networks_):
                out[start:start + chunk, j] = net.predict_proba(x)
        return out

    def predict_details(self, X) -> list:
        """Full diagnostics per text: domain, polarity, score, D, C and a no-evidence flag."""
        X = check_texts(X)
        probs = self.domain_probabilities(X)
        tokens = self.vectorizer_.tokenize(X)
        out = []
        for toks, pr in zip(tokens, probs):
            D = document_dbd(toks, self.dbd_.stats_, self.dbd_aggregation)
            C = polarity_vector(pr)
            res = combine(D, C)
            out.append({
                "domain": self.domains_[res.domain_index],
                "polarity": res.polarity,
                "score": res.score,
                "D": D.tolist(),
                "C": C.tolist(),
                "no_evidence": not np.any(D > 0),
            })
        return out

    def predict(self, X):
        return np.array([d["polarity"] for d in self.predict_details(X)], dtype=object)

    def predict_domain(self, X):
        return np.array([d["domain"] for d in self.predict_details(X)], dtype=object)

    def decision_function(self, X):
        return np.array([d["score"] for d in self.predict_details(X)])

    def save(self, path):
        from .persistence import save_model
        save_model(self, path)

    @classmethod
    def load(cls, path):
        from .persistence import load_model
        return load_model(path)


def train_ensemble(train: Dataset, **params) -> WCapsuleEnsemble:
    return WCapsuleEnsemble(**params).fit_dataset(train)


def predict(model: WCapsuleEnsemble, text: str) -> dict:
    return model.predict_details([text])[0]


# ---------------------------------------------------------------- evaluation

def _domain_metrics(true, pred, domains):
    per_class, tp_total = {}, 0
    for d in domains:
        tp = sum(1 for t, p in zip(true, pred) if t == d and p == d)
        n_pred = sum(1 for p in pred if p == d)
        n_true = sum(1 for t in true if t == d)
        tp_total += tp
        per_class[d] = {"precision": tp / n_pred if n_pred else 0.0,
                        "recall": tp / n_true if n_true else 0.0,
                        "support": n_true}
    n = len(true)
    macro = {k: float(np.mean([v[k] for v in per_class.values()])) for k in ("precision", "recall")}
    # single-label multiclass: micro precision = micro recall = accuracy
    micro = {"precision": tp_total / n, "recall": tp_total / n}
    return {"accuracy": tp_total / n, "macro": macro, "micro": micro, "per_class": per_class}


def score_predictions(test: Dataset, predictions: list) -> dict:
    """Polarity, domain and per-domain metrics for predictions aligned with ``test``."""
    if len(test) == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    y_true, d_true = test.polarities, test.domain_labels
    y_pred = [p["polarity"] for p in predictions]
    d_pred = [p["domain"] for p in predictions]
    cm = ConfusionMatrix.from_labels(y_true, y_pred, positive=POSITIVE)
    per_domain = {}
    for d in test.domains:
        rows = [i for i, t in enumerate(d_true) if t == d]
        if not rows:
            continue
        per_domain[d] = {
            "n": len(rows),
            "polarity_accuracy": sum(y_true[i] == y_pred[i] for i in rows) / len(rows),
            "domain_accuracy": sum(d_pred[i] == d for i in rows) / len(rows),
        }
    dump = [{"index": i, "domain_true": d_true[i], "domain_pred": d_pred[i],
             "polarity_true": y_true[i], "polarity_pred": y_pred[i],
             "score": float(predictions[i].get("score", 0.0))} for i in range(len(test))]
    return {
        "n_documents": len(test),
        "polarity": {**compute_metrics(cm).to_dict(),
                     "confusion": {"tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn}},
        "domain": _domain_metrics(d_true, d_pred, test.domains),
        "per_domain": per_domain,
        "predictions": dump,
    }


def evaluate(model, test: Dataset, folds=None, seed=0) -> dict:
    """Score ``model`` on ``test``; with ``folds=k`` retrain a clone per fold on the complement."""
    if len(test) == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    if folds is None:
        return score_predictions(test, model.predict_details(test.texts))
    if not 2 <= folds <= len(test):
        raise ContractError(f"folds must lie in [2, {len(test)}], got {folds}")
    reports = []
    all_idx = set(range(len(test)))
    for held in kfold_indices(len(test), folds, seed):
        rest = sorted(all_idx - set(held))
        fold_model = clone(model).fit_dataset(test.subset(rest))
        held_out = test.subset(held)
        reports.append(score_predictions(held_out, fold_model.predict_details(held_out.texts)))
    keys = ("accuracy", "precision", "recall", "f1", "g_mean")
    return {
        "folds": reports,
        "mean": {
            "polarity": {k: float(np.mean([r["polarity"][k] for r in reports])) for k in keys},
            "domain_accuracy": float(np.mean([r["domain"]["accuracy"] for r in reports])),
        },
    }
