import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wcapsule.corpus import SyntheticSpec, generate_synthetic  # noqa: E402
from wcapsule.ensemble import train_ensemble  # noqa: E402


SMALL_PARAMS = dict(hidden_dim=6, embed_dim=8, n_capsules=2, capsule_dim=3, epochs=2)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic(SyntheticSpec(num_domains=2, docs_per_domain=20, seed=3))


@pytest.fixture(scope="session")
def small_model(small_corpus):
    return train_ensemble(small_corpus, random_state=5, **SMALL_PARAMS)
