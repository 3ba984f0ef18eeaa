"""Multi-domain sentiment analysis with per-domain Bi-GRU capsule networks
combined through domain belonging degrees (DBD)."""

from .corpus import Dataset, LabeledDocument, SyntheticSpec, generate_synthetic, load_dataset, split
from .dbd import DbdTransformer, DomainStats, build_domain_stats, document_dbd, identify_domain, word_dbd
from .ensemble import WCapsuleEnsemble, combine, evaluate, polarity_vector, predict, train_ensemble
from .metrics import ConfusionMatrix, CostState, compute_metrics, cost_sensitive_loss, lambda_weight
from .persistence import load_model, save_model
from .text import PipelineConfig, TextVectorizer

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix", "CostState", "Dataset", "DbdTransformer", "DomainStats", "LabeledDocument",
    "PipelineConfig", "SyntheticSpec", "TextVectorizer", "WCapsuleEnsemble", "build_domain_stats",
    "combine", "compute_metrics", "cost_sensitive_loss", "document_dbd", "evaluate",
    "generate_synthetic", "identify_domain", "lambda_weight", "load_dataset", "load_model",
    "polarity_vector", "predict", "save_model", "split", "train_ensemble", "word_dbd",
]
