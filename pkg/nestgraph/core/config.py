"""Training configuration for nestgraph"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .exceptions import ValidationError

ABLATIONS = ("minus_lambda", "minus_Q", "minus_reg")

# fields that change parameter shapes or forward semantics
ARCHITECTURE_FIELDS = (
    "layers", "groups", "dims", "heads", "disable_lambda", "membership_agnostic_q",
    "self_loops", "hard_group_lookup", "membership_context", "renormalize_attention",
)


@dataclass
class TrainConfig:
    """Every hyperparameter of a training run.

    Defaults follow the experiment protocol: two layers of 64 dims each
    (128-dim embeddings), 12 fine and 5 coarse groups, 25/25 fan-out,
    50 walks per node, window 2 and one negative per positive.
    """
    layers: int = 2
    groups: List[int] = field(default_factory=lambda: [12, 5])
    dims: List[int] = field(default_factory=lambda: [64, 64])
    heads: int = 4

    tau: float = 0.5
    tau_anneal: bool = False
    tau_start: float = 1.0
    tau_end: float = 0.1
    gumbel_noise_space: str = "probability"
    membership_context: str = "node"
    stochastic_membership: bool = False
    hard_group_lookup: bool = False

    gamma: float = 1.0
    beta: float = 0.1
    link_cap_must: int = 256
    link_cap_cannot: int = 256

    fanouts: List[int] = field(default_factory=lambda: [25, 25])
    self_loops: bool = True
    walks_per_node: int = 50
    walk_length: int = 5
    window: int = 2
    negative_ratio: int = 1
    regenerate_walks: bool = False

    lr: float = 0.005
    weight_decay: float = 5e-4
    epochs: int = 200
    patience: int = 20
    batch_size: int = 256
    seed: int = 0
    deterministic: bool = False
    prefetch_batches: int = 1

    disable_lambda: bool = False
    membership_agnostic_q: bool = False
    disable_reg: bool = False

    classification_weight: float = 1.0
    two_phase: bool = False
    finetune_epochs: int = 50

    activation: str = "elu"
    renormalize_attention: bool = False
    membership_weight: float = 0.0
    link_holdout: float = 0.0
    link_negatives: int = 100
    allow_single_group: bool = False

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ValidationError(f"unknown configuration key {key!r}", field=key)
        config = cls(**{k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in data.items()})
        config.validate()
        return config

    @classmethod
    def load(cls, path) -> "TrainConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ValidationError(f"config file {path} does not exist", field="config") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}", field="config") from None
        if not isinstance(data, dict):
            raise ValidationError("config document must be a JSON object", field="config")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def replace(self, **changes) -> "TrainConfig":
        config = dataclasses.replace(self, **changes)
        config.validate()
        return config

    def validate(self):
        """Validate every field; raises ValidationError naming the field"""
        def require(condition, message, name):
            if not condition:
                raise ValidationError(message, field=name)

        require(isinstance(self.layers, int) and self.layers >= 1, "layers must be a positive integer", "layers")
        for name in ("groups", "dims", "fanouts"):
            values = getattr(self, name)
            require(isinstance(values, list) and len(values) == self.layers,
                    f"{name} needs one entry per layer ({self.layers})", name)
            require(all(isinstance(v, int) and v >= 1 for v in values), f"{name} entries must be positive integers", name)
        if not self.allow_single_group:
            require(all(k >= 2 for k in self.groups), "every layer needs at least 2 groups", "groups")
        require(all(a > b for a, b in zip(self.groups, self.groups[1:])),
                "group counts must strictly decrease across layers", "groups")
        for name in ("heads", "walks_per_node", "negative_ratio", "batch_size", "epochs",
                     "patience", "link_negatives", "link_cap_must", "link_cap_cannot", "window"):
            value = getattr(self, name)
            require(isinstance(value, int) and value >= 1, f"{name} must be a positive integer", name)
        require(isinstance(self.walk_length, int) and self.walk_length >= 2, "walk_length must be at least 2", "walk_length")
        require(isinstance(self.finetune_epochs, int) and self.finetune_epochs >= 0, "finetune_epochs must be >= 0", "finetune_epochs")
        require(isinstance(self.prefetch_batches, int) and self.prefetch_batches >= 0, "prefetch_batches must be >= 0", "prefetch_batches")
        require(self.tau > 0, "tau must be positive", "tau")
        require(self.tau_start > 0 and self.tau_end > 0, "annealed temperatures must be positive", "tau_start")
        require(self.gamma >= 0, "gamma must be non-negative", "gamma")
        require(self.beta >= 0, "beta must be non-negative", "beta")
        require(self.lr > 0, "lr must be positive", "lr")
        require(self.weight_decay >= 0, "weight_decay must be non-negative", "weight_decay")
        require(self.classification_weight >= 0, "classification_weight must be non-negative", "classification_weight")
        require(0 <= self.link_holdout < 1, "link_holdout must lie in [0, 1)", "link_holdout")
        require(self.activation in ("elu", "identity"), "activation must be 'elu' or 'identity'", "activation")
        require(self.gumbel_noise_space in ("probability", "log"),
                "gumbel_noise_space must be 'probability' or 'log'", "gumbel_noise_space")
        require(self.membership_context in ("node", "neighborhood"),
                "membership_context must be 'node' or 'neighborhood'", "membership_context")
        require(self.membership_weight >= 0, "membership_weight must be non-negative", "membership_weight")
        require(isinstance(self.seed, int), "seed must be an integer", "seed")
        return True

    @property
    def embedding_dim(self) -> int:
        return sum(self.dims)

    def temperature(self, epoch: int, total_epochs: Optional[int] = None) -> float:
        """Gumbel-softmax temperature for an epoch (linear anneal when enabled)"""
        if not self.tau_anneal:
            return self.tau
        total = total_epochs or self.epochs
        if total <= 1:
            return self.tau_end
        progress = min(max(epoch, 0), total - 1) / (total - 1)
        return self.tau_start + (self.tau_end - self.tau_start) * progress

    def for_ablation(self, which: str) -> "TrainConfig":
        if which == "minus_lambda":
            return self.replace(disable_lambda=True)
        if which == "minus_Q":
            return self.replace(membership_agnostic_q=True)
        if which == "minus_reg":
            return self.replace(disable_reg=True)
        raise ValidationError(f"unknown ablation {which!r}; expected one of {', '.join(ABLATIONS)}", field="which")

    def config_hash(self, node_count: int, feature_dim: int, class_count: int) -> str:
        payload = {name: getattr(self, name) for name in ARCHITECTURE_FIELDS}
        payload.update(node_count=node_count, feature_dim=feature_dim, class_count=class_count)
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
