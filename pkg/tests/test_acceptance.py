"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""

import time

import numpy as np
import pytest

from oracles import brute_force_dbd, brute_force_document_dbd, brute_force_scores, random_corpus
from wcapsule import autodiff as ad
from wcapsule.corpus import NEGATIVE, POSITIVE, SyntheticSpec, generate_synthetic, split
from wcapsule.dbd import count_domain_tokens, document_dbd, word_dbd
from wcapsule.ensemble import combine, evaluate, train_ensemble
from wcapsule.layers import (BiGruParams, CapsuleParams, DomainNetwork, GruParams, NetworkConfig,
                             bigru_forward, capsule_layer, dynamic_routing, gru_step)
from wcapsule.metrics import ConfusionMatrix, compute_metrics, cross_entropy_tensor
from wcapsule.persistence import load_model, save_model


def verdict(number, title, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})")
    assert ok, detail


def test_criterion_1_worked_example():
    res = combine((0.03, 0.75, 0.40), (0.06, 0.08, -0.03))
    ok = res.domain_index == 1 and res.polarity == POSITIVE and abs(res.score - 0.049) <= 1e-3 \
        and abs(res.score - 0.0498) <= 1e-12
    verdict(1, "worked example", ok, f"domain index {res.domain_index} (0-based), {res.polarity}, "
                                     f"score {res.score:.4f}")


# gradient graphs ----------------------------------------------------------

E, H = 3, 2


def _gru_graph(rng):
    params = GruParams.initialize(E, H, rng).to_mapping()
    w = rng.normal(size=H)

    def fn(i, p):
        return ad.sum(gru_step(i["x"], i["h"], GruParams.from_mapping(p)) * w)

    return ad.Graph(fn, params, ("x", "h")), {"x": rng.normal(size=E), "h": rng.uniform(-1, 1, size=H)}


def _bigru_graph(rng):
    params = BiGruParams(GruParams.initialize(E, H, rng), GruParams.initialize(E, H, rng)).to_mapping()
    w = rng.normal(size=(3, 2 * H))

    def fn(i, p):
        return ad.sum(bigru_forward(i["x"], BiGruParams.from_mapping(p)) * w)

    return ad.Graph(fn, params, ("x",)), {"x": rng.normal(size=(3, E))}


def _capsule_graph(rng):
    N, J, D, K = 3, 2, 3, 4
    params = {"W": rng.normal(size=(N, J, D, K))}
    w = rng.normal(size=(J, D))

    def fn(i, p):
        return ad.sum(capsule_layer(i["h"], CapsuleParams(p["W"]), iterations=3) * w)

    return ad.Graph(fn, params, ("h",)), {"h": rng.normal(size=(N, K))}


def _stack_graph(rng):
    cfg = NetworkConfig(embed_dim=E, max_len=4, hidden_dim=H, n_capsules=2, capsule_dim=2)
    net = DomainNetwork.initialize(cfg, int(rng.integers(2**31)))
    targets = list(rng.integers(0, 2, size=2))

    def fn(i, p):
        return ad.mean(cross_entropy_tensor(net.forward(i["x"], p), targets))

    return ad.Graph(fn, dict(net.params), ("x",)), {"x": rng.normal(size=(2, 4, E))}


def test_criterion_2_gradient_integrity():
    start = time.perf_counter()
    worst = {}
    for name, build in (("gru_step", _gru_graph), ("bigru_3", _bigru_graph),
                        ("capsule_r3", _capsule_graph), ("full_stack", _stack_graph)):
        for seed in range(10):
            graph, bindings = build(np.random.default_rng(seed))
            report = ad.finite_difference_check(graph, bindings, tolerance=1e-4)
            worst[name] = max(worst.get(name, 0.0), report.worst)
    elapsed = time.perf_counter() - start
    ok = all(v <= 1e-4 for v in worst.values()) and elapsed < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(2, "gradient integrity", ok, f"max rel err {detail}; {elapsed:.1f}s")


def test_criterion_3_routing_invariants():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    max_sum_err, min_c, max_norm = 0.0, 1.0, 0.0
    for _ in range(1000):
        n, j, d = (int(v) for v in rng.integers(1, 9, size=3))
        u = rng.normal(scale=float(rng.uniform(0.1, 5.0)), size=(n, j, d))
        v, c = dynamic_routing(u, int(rng.integers(1, 6)))
        max_sum_err = max(max_sum_err, float(np.abs(c.sum(axis=-1) - 1).max()))
        min_c = min(min_c, float(c.min()))
        max_norm = max(max_norm, float(np.linalg.norm(v, axis=-1).max()))
    elapsed = time.perf_counter() - start
    ok = max_sum_err <= 1e-12 and min_c >= 0 and max_norm < 1 and elapsed < 10
    verdict(3, "routing invariants", ok, f"sum err {max_sum_err:.1e}, min c {min_c:.2e}, "
                                         f"max |v| {max_norm:.6f}; {elapsed:.1f}s")


def test_criterion_4_dbd_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, count_mismatch, checked = 0.0, 0, 0
    for _ in range(20):
        docs, domains = random_corpus(rng, max_docs=100, max_domains=10)
        stats = count_domain_tokens([d for d, _ in docs], [l for _, l in docs], domains)
        counts, totals, table = brute_force_dbd(docs, domains)
        count_mismatch += stats.totals != tuple(totals[d] for d in domains)
        for (tok, dom), exact in table.items():
            i = domains.index(dom)
            count_mismatch += stats.count(tok, i) != counts.get((tok, dom), 0)
            got = word_dbd(tok, i, stats)
            worst = max(worst, *(abs(g - float(x)) for g, x in zip(got, exact)))
            checked += 1
        for tokens, _ in docs:
            want = brute_force_document_dbd(tokens, domains, table)
            got = document_dbd(tokens, stats)
            worst = max(worst, float(np.abs(got - np.array([float(x) for x in want])).max()))
    elapsed = time.perf_counter() - start
    ok = count_mismatch == 0 and worst <= 1e-15 and elapsed < 10
    verdict(4, "DBD oracle equivalence", ok, f"{checked} word/domain pairs, count mismatches {count_mismatch}, "
                                             f"max float err {worst:.1e}; {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_5_synthetic_end_to_end():
    start = time.perf_counter()
    data = generate_synthetic(SyntheticSpec(num_domains=10, docs_per_domain=40, vocab_overlap=0,
                                            imbalance_ratio=1, seed=0))
    train, test = split(data, 0.2, seed=0)
    model = train_ensemble(train)
    report = evaluate(model, test)
    dom, pol = report["domain"]["accuracy"], report["polarity"]["accuracy"]
    elapsed = time.perf_counter() - start
    ok = dom >= 0.99 and pol >= 0.90 and elapsed <= 300
    verdict(5, "synthetic end-to-end", ok, f"domain acc {dom:.4f}, polarity acc {pol:.4f} on {len(test)} "
                                           f"held-out docs; {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_6_cost_sensitivity():
    start = time.perf_counter()
    rows, wins = [], 0
    for seed in range(5):
        data = generate_synthetic(SyntheticSpec(num_domains=3, docs_per_domain=200, imbalance_ratio=9, seed=seed))
        train, test = split(data, 0.2, seed=seed)
        recall = []
        for cost in (False, True):
            model = train_ensemble(train, cost_sensitive=cost, batch_size=8, random_state=seed)
            cm = ConfusionMatrix.from_labels(test.polarities, model.predict(test.texts), positive=NEGATIVE)
            recall.append(compute_metrics(cm).recall)
        wins += recall[1] >= recall[0]
        rows.append(f"seed {seed}: {recall[0]:.3f} -> {recall[1]:.3f}")
    elapsed = time.perf_counter() - start
    ok = wins >= 4 and elapsed <= 600
    verdict(6, "cost-sensitivity", ok, f"{wins}/5 seeds with recall not lower; " + "; ".join(rows)
            + f"; {elapsed:.1f}s")


def test_criterion_7_metrics():
    rng = np.random.default_rng(7)
    labels = np.array([POSITIVE, NEGATIVE], dtype=object)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        y_true = list(labels[rng.integers(0, 2, size=n)])
        y_pred = list(labels[rng.integers(0, 2, size=n)])
        got = compute_metrics(ConfusionMatrix.from_labels(y_true, y_pred)).to_dict()
        want = brute_force_scores(y_true, y_pred, POSITIVE)
        mismatches += any(got[k] != v for k, v in want.items())
    y = [POSITIVE] * 6 + [NEGATIVE] * 4
    perfect = compute_metrics(ConfusionMatrix.from_labels(y, y))
    perfect_ok = all(getattr(perfect, k) == 1.0 for k in ("accuracy", "precision", "recall", "f1", "g_mean"))
    verdict(7, "metric correctness", mismatches == 0 and perfect_ok,
            f"{mismatches} mismatches over 1000 sets; perfect classifier all ones: {perfect_ok}")


def test_criterion_8_determinism_and_persistence(tmp_path):
    data = generate_synthetic(SyntheticSpec(num_domains=2, docs_per_domain=30, seed=8))
    train, test = split(data, 0.2, seed=8)
    params = dict(hidden_dim=8, embed_dim=8, epochs=2, random_state=11)
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save_model(train_ensemble(train, **params), a)
    save_model(train_ensemble(train, **params), b)
    identical = a.read_bytes() == b.read_bytes()
    model = train_ensemble(train, **params)
    texts = (data.texts * 2)[:50]
    save_model(model, tmp_path / "m.bin")
    same = load_model(tmp_path / "m.bin").predict_details(texts) == model.predict_details(texts)
    verdict(8, "determinism and persistence", identical and same,
            f"train-twice files identical: {identical}; 50 predictions unchanged after reload: {same}")
