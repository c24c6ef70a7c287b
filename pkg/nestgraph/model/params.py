"""Trainable parameters and their seeded initialization"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..core.config import TrainConfig
from ..core.exceptions import DimensionError
from ..core.seeding import rng_for
from ..numerics import Tensor


def glorot_uniform(shape, rng: np.random.Generator, fans=None) -> np.ndarray:
    fan_out, fan_in = fans or ((shape[-2], shape[-1]) if len(shape) >= 2 else (shape[0], 1))
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class GroupEmbeddings:
    """Group vectors of one layer; ``phi`` is K x d_in"""
    layer: int
    phi: Tensor

    @property
    def group_count(self) -> int:
        return self.phi.shape[0]


@dataclass
class LayerParams:
    """Per-head projections and attention vectors of one layer.

    ``weights`` is M x d_out x d_in; ``a_node`` and ``a_grp`` are M x 2*d_out,
    first half scoring the target, second half the neighbor.
    """
    layer: int
    weights: Tensor
    a_node: Tensor
    a_grp: Tensor

    @property
    def heads(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[2]

    def validate(self):
        m, d_out, _ = self.weights.shape
        for vector in (self.a_node, self.a_grp):
            if vector.shape != (m, 2 * d_out):
                raise DimensionError(f"layer {self.layer} attention vector", vector.shape, (m, 2 * d_out))


@dataclass
class ContextTable:
    """Context vectors of one layer: Q[j, k] = q_node[j] + q_grp[k]"""
    layer: int
    q_node: Tensor
    q_grp: Tensor


@dataclass
class ClassifierHead:
    weight: Tensor
    bias: Tensor

    @property
    def class_count(self) -> int:
        return self.weight.shape[0]


@dataclass
class ModelParams:
    groups: List[GroupEmbeddings]
    layers: List[LayerParams]
    contexts: List[ContextTable]
    head: Optional[ClassifierHead] = None

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def named_tensors(self) -> Dict[str, Tensor]:
        tensors: Dict[str, Tensor] = {}
        for group, layer, table in zip(self.groups, self.layers, self.contexts):
            prefix = f"layer{layer.layer}"
            tensors[f"{prefix}.phi"] = group.phi
            tensors[f"{prefix}.W"] = layer.weights
            tensors[f"{prefix}.a_node"] = layer.a_node
            tensors[f"{prefix}.a_grp"] = layer.a_grp
            tensors[f"{prefix}.q_node"] = table.q_node
            tensors[f"{prefix}.q_grp"] = table.q_grp
        if self.head is not None:
            tensors["head.weight"] = self.head.weight
            tensors["head.bias"] = self.head.bias
        return tensors

    def trainable(self, include_head: bool = True) -> List[Tensor]:
        return [t for name, t in self.named_tensors().items() if include_head or not name.startswith("head.")]

    @staticmethod
    def decays(name: str) -> bool:
        """Weight decay applies to projections and attention vectors only"""
        return name.endswith((".W", ".a_node", ".a_grp"))

    @staticmethod
    def group_of(name: str) -> str:
        """Parameter family used in gradient-check reports"""
        suffix = name.split(".", 1)[1]
        return {"phi": "phi", "W": "W", "a_node": "a", "a_grp": "a", "q_node": "Q", "q_grp": "Q",
                "weight": "head", "bias": "head"}[suffix]

    def load_values(self, values: Dict[str, np.ndarray]):
        for name, tensor in self.named_tensors().items():
            tensor.value = np.array(values[name], dtype=np.float64).reshape(tensor.shape)


def layer_shapes(config: TrainConfig, feature_dim: int) -> List[Dict[str, int]]:
    shapes = []
    d_in = feature_dim
    for index, (groups, d_out) in enumerate(zip(config.groups, config.dims), start=1):
        shapes.append({"layer": index, "groups": groups, "d_in": d_in, "d_out": d_out})
        d_in = d_out
    return shapes


def init_params(config: TrainConfig, node_count: int, feature_dim: int, class_count: int = 0,
                seed: Optional[int] = None) -> ModelParams:
    """Glorot-uniform initialization, one seeded stream per tensor"""
    seed = config.seed if seed is None else seed
    groups, layers, contexts = [], [], []
    for shape in layer_shapes(config, feature_dim):
        l, k, d_in, d_out = shape["layer"], shape["groups"], shape["d_in"], shape["d_out"]
        m = config.heads

        def draw(name, dims, fans=None):
            values = glorot_uniform(dims, rng_for(seed, "init", l, name), fans)
            return Tensor.parameter(values, f"layer{l}.{name}")

        groups.append(GroupEmbeddings(layer=l, phi=draw("phi", (k, d_in))))
        layer = LayerParams(layer=l, weights=draw("W", (m, d_out, d_in)),
                            a_node=draw("a_node", (m, 2 * d_out), (1, 2 * d_out)),
                            a_grp=draw("a_grp", (m, 2 * d_out), (1, 2 * d_out)))
        layer.validate()
        layers.append(layer)
        contexts.append(ContextTable(layer=l, q_node=draw("q_node", (node_count, d_out)),
                                     q_grp=draw("q_grp", (k, d_out))))
    head = None
    if class_count > 0:
        weight = glorot_uniform((class_count, config.embedding_dim), rng_for(seed, "init", "head"))
        head = ClassifierHead(weight=Tensor.parameter(weight, "head.weight"),
                              bias=Tensor.parameter(np.zeros(class_count), "head.bias"))
    return ModelParams(groups=groups, layers=layers, contexts=contexts, head=head)
