"""Bi-GRU encoder, capsule layer with dynamic routing, and the softmax head.

Every layer function accepts either numpy arrays or :class:`Tensor` objects
for its parameters, so the same code serves inference (plain arrays) and
training (tensors that require gradients).  Inputs may carry a leading batch
axis.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ShapeError

CANDIDATE_ACTIVATIONS = ("tanh", "sigmoid")
SOFTMAX_MODES = ("standard", "literal")


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class _ParamGroup:
    """Mixin for dataclasses whose fields are all parameter arrays."""

    def to_mapping(self, prefix=""):
        return {f"{prefix}{f.name}": getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_mapping(cls, mapping: Mapping, prefix=""):
        return cls(**{f.name: mapping[f"{prefix}{f.name}"] for f in fields(cls)})


@dataclass
class GruParams(_ParamGroup):
    W_z: object
    W_r: object
    W_h: object
    U_z: object
    U_r: object
    U_n: object
    b_z: object
    b_r: object
    b_h: object

    def __post_init__(self):
        hidden = np.shape(self.U_z)[0]
        for name in ("U_z", "U_r", "U_n"):
            if np.shape(getattr(self, name)) != (hidden, hidden):
                raise ShapeError(f"GRU {name} must be {hidden}x{hidden}, got {np.shape(getattr(self, name))}")
        in_dim = np.shape(self.W_z)[1]
        for name in ("W_z", "W_r", "W_h"):
            if np.shape(getattr(self, name)) != (hidden, in_dim):
                raise ShapeError(f"GRU {name} must be {hidden}x{in_dim}, got {np.shape(getattr(self, name))}")
        for name in ("b_z", "b_r", "b_h"):
            if np.shape(getattr(self, name)) != (hidden,):
                raise ShapeError(f"GRU {name} must have length {hidden}")

    @property
    def hidden_dim(self):
        return np.shape(self.U_z)[0]

    @property
    def input_dim(self):
        return np.shape(self.W_z)[1]

    @classmethod
    def initialize(cls, input_dim, hidden_dim, rng):
        w = {n: _uniform(rng, (hidden_dim, input_dim), input_dim) for n in ("W_z", "W_r", "W_h")}
        u = {n: _uniform(rng, (hidden_dim, hidden_dim), hidden_dim) for n in ("U_z", "U_r", "U_n")}
        b = {n: _uniform(rng, (hidden_dim,), hidden_dim) for n in ("b_z", "b_r", "b_h")}
        return cls(**w, **u, **b)

    @classmethod
    def zeros(cls, input_dim, hidden_dim):
        return cls(**{n: np.zeros((hidden_dim, input_dim)) for n in ("W_z", "W_r", "W_h")},
                   **{n: np.zeros((hidden_dim, hidden_dim)) for n in ("U_z", "U_r", "U_n")},
                   **{n: np.zeros(hidden_dim) for n in ("b_z", "b_r", "b_h")})


@dataclass
class BiGruParams:
    forward: GruParams
    backward: GruParams

    def __post_init__(self):
        if self.forward.hidden_dim != self.backward.hidden_dim:
            raise ShapeError("forward and backward GRUs must share the hidden dimension")

    @property
    def output_dim(self):
        return 2 * self.forward.hidden_dim

    def to_mapping(self, prefix=""):
        return {**self.forward.to_mapping(f"{prefix}fwd."), **self.backward.to_mapping(f"{prefix}bwd.")}

    @classmethod
    def from_mapping(cls, mapping, prefix=""):
        return cls(GruParams.from_mapping(mapping, f"{prefix}fwd."),
                   GruParams.from_mapping(mapping, f"{prefix}bwd."))


@dataclass
class CapsuleParams(_ParamGroup):
    """``W[i, j]`` is the (capsule_dim x in_dim) matrix mapping position i to capsule j."""

    W: object

    @property
    def num_positions(self):
        return np.shape(self.W)[0]

    @property
    def num_capsules(self):
        return np.shape(self.W)[1]

    @property
    def capsule_dim(self):
        return np.shape(self.W)[2]

    @property
    def in_dim(self):
        return np.shape(self.W)[3]

    @classmethod
    def initialize(cls, num_positions, in_dim, num_capsules, capsule_dim, rng):
        return cls(_uniform(rng, (num_positions, num_capsules, capsule_dim, in_dim), in_dim))


@dataclass
class HeadParams(_ParamGroup):
    W_dense: object
    b_dense: object

    @classmethod
    def initialize(cls, in_dim, num_classes, rng):
        return cls(_uniform(rng, (num_classes, in_dim), in_dim), _uniform(rng, (num_classes,), in_dim))


# ---------------------------------------------------------------------- GRU

def _check_activation(candidate):
    if candidate not in CANDIDATE_ACTIVATIONS:
        raise ContractError(f"candidate activation must be one of {CANDIDATE_ACTIVATIONS}")


def _step(xz, xr, xh, h_prev, UzT, UrT, UnT, candidate):
    """One GRU update given the precomputed input projections (biases included)."""
    z = ad.sigmoid(xz + h_prev @ UzT)
    r = ad.sigmoid(xr + h_prev @ UrT)
    pre = xh + (r * h_prev) @ UnT
    h_cand = ad.tanh(pre) if candidate == "tanh" else ad.sigmoid(pre)
    return (1.0 - z) * h_prev + z * h_cand


def gru_step(x_t, h_prev, params: GruParams, candidate="tanh") -> Tensor:
    """``h_t`` from ``x_t`` and ``h_{t-1}``; both may be vectors or batches of rows."""
    _check_activation(candidate)
    x_t, h_prev = ad.as_tensor(x_t), ad.as_tensor(h_prev)
    if x_t.shape[-1] != params.input_dim or h_prev.shape[-1] != params.hidden_dim:
        raise ShapeError(f"gru_step: x {x_t.shape} / h {h_prev.shape} do not match "
                         f"input {params.input_dim}, hidden {params.hidden_dim}")
    p = {k: ad.as_tensor(v) for k, v in params.to_mapping().items()}
    xz = x_t @ p["W_z"].T + p["b_z"]
    xr = x_t @ p["W_r"].T + p["b_r"]
    xh = x_t @ p["W_h"].T + p["b_h"]
    return _step(xz, xr, xh, h_prev, p["U_z"].T, p["U_r"].T, p["U_n"].T, candidate)


def gru_sequence(x, params: GruParams, candidate="tanh", reverse=False) -> Tensor:
    """Run a GRU from a zero state over ``x`` of shape (..., M, E).

    Returns hidden states of shape (..., M, H), aligned with input positions
    even when ``reverse`` is set.
    """
    _check_activation(candidate)
    x = ad.as_tensor(x)
    if x.ndim not in (2, 3) or x.shape[-1] != params.input_dim:
        raise ShapeError(f"gru_sequence: expected (..., M, {params.input_dim}), got {x.shape}")
    p = {k: ad.as_tensor(v) for k, v in params.to_mapping().items()}
    steps, hidden = x.shape[-2], params.hidden_dim
    lead = x.shape[:-2]
    flat = ad.reshape(x, (-1, params.input_dim))

    def project(W, b):
        return ad.reshape(flat @ W.T + b, lead + (steps, hidden))

    xz, xr, xh = project(p["W_z"], p["b_z"]), project(p["W_r"], p["b_r"]), project(p["W_h"], p["b_h"])
    UzT, UrT, UnT = p["U_z"].T, p["U_r"].T, p["U_n"].T
    h = Tensor(np.zeros(lead + (hidden,)))
    out = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        at = (Ellipsis, t, slice(None))
        h = _step(xz[at], xr[at], xh[at], h, UzT, UrT, UnT, candidate)
        out[t] = h
    return ad.stack(out, axis=-2)


def bigru_forward(embedded, params: BiGruParams, candidate="tanh") -> Tensor:
    """Rows ``(h_fwd_t, h_bwd_t)`` for each position t; shape (..., M, 2H)."""
    fwd = gru_sequence(embedded, params.forward, candidate)
    bwd = gru_sequence(embedded, params.backward, candidate, reverse=True)
    return ad.concat([fwd, bwd], axis=-1)


# ------------------------------------------------------------------ capsules

def squash(s, axis=-1):
    """Plain-array squash; see :func:`wcapsule.autodiff.squash` for the graph op."""
    return ad.squash(Tensor(s), axis=axis).data


def dynamic_routing(u_hat, iterations=3):
    """Routing-by-agreement over predictions ``u_hat`` of shape (..., N, J, D).

    Returns ``(v, c)``: output capsules (..., J, D) and the coupling
    coefficients (..., N, J) used for the final weighted sum.
    """
    if iterations < 1:
        raise ContractError(f"routing iterations must be >= 1, got {iterations}")
    u_hat = np.asarray(u_hat, dtype=np.float64)
    if u_hat.ndim < 3:
        raise ShapeError(f"dynamic_routing: u_hat must be (..., N, J, D), got {u_hat.shape}")
    logits = np.zeros(u_hat.shape[:-1])
    for it in range(iterations):
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        c = e / e.sum(axis=-1, keepdims=True)
        s = np.einsum("...nj,...njd->...jd", c, u_hat)
        v = squash(s)
        if it < iterations - 1:
            logits = logits + np.einsum("...njd,...jd->...nj", u_hat, v)
    return v, c


def predictions(hidden, params: CapsuleParams) -> Tensor:
    """Prediction vectors ``W[i, j] @ h_i`` of shape (..., N, J, D)."""
    hidden = ad.as_tensor(hidden)
    W = ad.as_tensor(params.W)
    if hidden.ndim not in (2, 3) or hidden.shape[-2:] != (params.num_positions, params.in_dim):
        raise ShapeError(f"capsule layer: hidden {hidden.shape} does not match "
                         f"({params.num_positions}, {params.in_dim})")
    batched = hidden.ndim == 3
    h3 = hidden if batched else ad.reshape(hidden, (1,) + hidden.shape)
    u_hat = ad.einsum("njdk,bnk->bnjd", W, h3)
    return u_hat if batched else ad.reshape(u_hat, u_hat.shape[1:])


ROUTING_GRADIENTS = ("full", "detach")


def _route_in_graph(u_hat, iterations):
    logits = Tensor(np.zeros(u_hat.shape[:-1]))
    for it in range(iterations):
        c = ad.softmax(logits, axis=-1)
        s = ad.einsum("bnj,bnjd->bjd", c, u_hat)
        v = ad.squash(s, axis=-1)
        if it < iterations - 1:
            logits = logits + ad.einsum("bnjd,bjd->bnj", u_hat, v)
    return v, c.data


def capsule_layer(hidden, params: CapsuleParams, iterations=3, routing_grad="full",
                  return_coupling=False):
    """Output capsules (..., J, D).

    With ``routing_grad="full"`` the routing iterations are part of the graph
    and gradients are exact.  ``"detach"`` freezes the coupling coefficients
    found by routing and differentiates only the final weighted sum.
    """
    if iterations < 1:
        raise ContractError(f"routing iterations must be >= 1, got {iterations}")
    if routing_grad not in ROUTING_GRADIENTS:
        raise ContractError(f"routing_grad must be one of {ROUTING_GRADIENTS}")
    u_hat = predictions(hidden, params)
    batched = u_hat.ndim == 4
    if not batched:
        u_hat = ad.reshape(u_hat, (1,) + u_hat.shape)
    if routing_grad == "full":
        v, c = _route_in_graph(u_hat, iterations)
    else:
        _, c = dynamic_routing(u_hat.data, iterations)
        v = ad.squash(ad.einsum("bnj,bnjd->bjd", Tensor(c), u_hat), axis=-1)
    if not batched:
        v, c = ad.reshape(v, v.shape[1:]), c[0]
    return (v, c) if return_coupling else v


# ---------------------------------------------------------------------- head

def dense_softmax(features, params: HeadParams, mode="standard") -> Tensor:
    """Class probabilities from flattened capsules; ``mode="literal"`` uses softmin."""
    if mode not in SOFTMAX_MODES:
        raise ContractError(f"softmax mode must be one of {SOFTMAX_MODES}")
    features = ad.as_tensor(features)
    W, b = ad.as_tensor(params.W_dense), ad.as_tensor(params.b_dense)
    if features.shape[-1] != W.shape[1]:
        raise ShapeError(f"dense head: features {features.shape} vs weights {W.shape}")
    logits = features @ W.T + b
    return ad.softmax(logits, axis=-1, negate=(mode == "literal"))


# ------------------------------------------------------------------- network

@dataclass(frozen=True)
class NetworkConfig:
    embed_dim: int
    max_len: int
    hidden_dim: int = 64
    n_capsules: int = 4
    capsule_dim: int = 8
    routing_iterations: int = 3
    n_classes: int = 2
    candidate: str = "tanh"
    softmax_mode: str = "standard"
    routing_grad: str = "full"


class DomainNetwork:
    """Embedded sequence -> Bi-GRU -> capsules -> flatten -> dense softmax.

    Parameters live in a flat ``{name: ndarray}`` dict so optimizers and the
    model file can treat them uniformly.
    """

    def __init__(self, config: NetworkConfig, params: dict):
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: NetworkConfig, seed):
        rng = np.random.default_rng(seed)
        h = config.hidden_dim
        bigru = BiGruParams(GruParams.initialize(config.embed_dim, h, rng),
                            GruParams.initialize(config.embed_dim, h, rng))
        caps = CapsuleParams.initialize(config.max_len, 2 * h, config.n_capsules, config.capsule_dim, rng)
        head = HeadParams.initialize(config.n_capsules * config.capsule_dim, config.n_classes, rng)
        params = {**bigru.to_mapping("bigru."), **caps.to_mapping("caps."), **head.to_mapping("head.")}
        return cls(config, params)

    def forward(self, x, params: Mapping | None = None) -> Tensor:
        """Probabilities (..., n_classes) for embedded input (..., M, E)."""
        p = self.params if params is None else params
        cfg = self.config
        hidden = bigru_forward(x, BiGruParams.from_mapping(p, "bigru."), cfg.candidate)
        caps = capsule_layer(hidden, CapsuleParams.from_mapping(p, "caps."), cfg.routing_iterations,
                             cfg.routing_grad)
        flat = ad.flatten(caps, start_axis=caps.ndim - 2)
        return dense_softmax(flat, HeadParams.from_mapping(p, "head."), cfg.softmax_mode)

    def predict_proba(self, x) -> np.ndarray:
        return self.forward(np.asarray(x, dtype=np.float64)).data
