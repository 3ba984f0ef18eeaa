"""Single-file model container.

Layout::

    b"WCAPSULE"                     8-byte magic
    uint32 little-endian            header length
    header (UTF-8 JSON)             {"format_version", "checksum", "payload_size", "sections"}
    payload                         concatenated section bytes

Each section is either a JSON document or a raw little-endian array whose
dtype and shape are recorded in the header.  ``checksum`` is the SHA-256 of
the payload, so truncation or corruption is detected before anything is
decoded.  Floats are stored as raw IEEE-754 doubles, which round-trips
exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .dbd import DbdTransformer, DomainStats
from .errors import IntegrityError, VersionError
from .layers import DomainNetwork, NetworkConfig
from .metrics import CostState
from .text import EmbeddingTable, TextVectorizer, Vocabulary

MAGIC = b"WCAPSULE"
FORMAT_VERSION = 1


def _dumps(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


class _Writer:
    def __init__(self):
        self.sections, self.chunks, self.offset = [], [], 0

    def _add(self, entry, data: bytes):
        entry.update(offset=self.offset, nbytes=len(data))
        self.sections.append(entry)
        self.chunks.append(data)
        self.offset += len(data)

    def json(self, name, obj):
        self._add({"name": name, "kind": "json"}, _dumps(obj))

    def array(self, name, arr):
        arr = np.asarray(arr)
        dtype = "<f8" if arr.dtype.kind == "f" else "<i8"
        self._add({"name": name, "kind": "array", "dtype": dtype, "shape": list(arr.shape)},
                  np.ascontiguousarray(arr, dtype=dtype).tobytes())

    def to_bytes(self):
        payload = b"".join(self.chunks)
        header = _dumps({"format_version": FORMAT_VERSION,
                         "checksum": hashlib.sha256(payload).hexdigest(),
                         "payload_size": len(payload),
                         "sections": self.sections})
        return MAGIC + struct.pack("<I", len(header)) + header + payload


def save_model(model, path):
    """Write a fitted :class:`~wcapsule.ensemble.WCapsuleEnsemble` to ``path``."""
    params = model.get_params()
    if params.get("stopwords") is not None:
        params["stopwords"] = sorted(params["stopwords"])
    params["embeddings"] = None  # vectors are stored below; the source file is not needed
    w = _Writer()
    w.json("estimator", {
        "params": params,
        "domains": list(model.domains_),
        "max_len": int(model.vectorizer_.max_len_),
        "network": vars(model.network_config_),
        "cost_state": None if model.cost_state_ is None else vars(model.cost_state_),
        "history": model.history_,
    })
    w.json("vocabulary", list(model.vectorizer_.vocabulary_.tokens))
    w.array("embeddings", model.embedding_table_.matrix)
    stats = model.dbd_.stats_
    tokens = sorted(stats.counts)
    w.json("dbd.tokens", tokens)
    w.array("dbd.counts", np.array([stats.counts[t] for t in tokens], dtype=np.int64)
            .reshape(len(tokens), stats.num_domains))
    for i, net in enumerate(model.networks_):
        for name in sorted(net.params):
            w.array(f"domain/{i}/{name}", net.params[name])
    with open(path, "wb") as fh:
        fh.write(w.to_bytes())


def read_container(path):
    """Validate the container and return ``(header, {section name: value})``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise IntegrityError(f"{path}: not a model file (bad magic)")
    try:
        (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
        start = len(MAGIC) + 4
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: unreadable header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {header.get('format_version')!r}, "
                           f"expected {FORMAT_VERSION}")
    payload = blob[start + hlen:]
    if len(payload) != header.get("payload_size") or \
            hashlib.sha256(payload).hexdigest() != header.get("checksum"):
        raise IntegrityError(f"{path}: checksum mismatch (file truncated or corrupted)")
    sections = {}
    for s in header["sections"]:
        raw = payload[s["offset"]:s["offset"] + s["nbytes"]]
        if s["kind"] == "json":
            sections[s["name"]] = json.loads(raw.decode("utf-8"))
        else:
            sections[s["name"]] = np.frombuffer(raw, dtype=s["dtype"]).reshape(s["shape"]).copy()
    return header, sections


def load_model(path):
    from .ensemble import WCapsuleEnsemble

    _, sec = read_container(path)
    meta = sec["estimator"]
    model = WCapsuleEnsemble(**meta["params"])
    stop = frozenset(model.stopwords or ())

    vec = TextVectorizer(stop, model.min_count, model.max_len)
    vec.vocabulary_ = Vocabulary(tuple(sec["vocabulary"]))
    vec.max_len_ = meta["max_len"]
    model.vectorizer_ = vec
    model.embedding_table_ = EmbeddingTable(sec["embeddings"])

    domains = tuple(meta["domains"])
    counts = sec["dbd.counts"]
    dbd = DbdTransformer(stop, aggregation=model.dbd_aggregation)
    dbd.stats_ = DomainStats(domains,
                             {t: tuple(int(c) for c in row) for t, row in zip(sec["dbd.tokens"], counts)},
                             tuple(int(n) for n in counts.sum(axis=0)))
    dbd.domains_ = domains
    model.dbd_ = dbd

    model.domains_ = domains
    model.classes_ = np.array(["negative", "positive"], dtype=object)
    model.network_config_ = NetworkConfig(**meta["network"])
    model.cost_state_ = None if meta["cost_state"] is None else CostState(**meta["cost_state"])
    model.history_ = meta["history"]
    model.networks_ = []
    for i in range(len(domains)):
        prefix = f"domain/{i}/"
        params = {k[len(prefix):]: v for k, v in sec.items() if k.startswith(prefix)}
        model.networks_.append(DomainNetwork(model.network_config_, params))
    return model
