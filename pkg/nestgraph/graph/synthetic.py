"""Nested stochastic block model with planted fine and coarse groups"""

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import networkx as nx
import numpy as np
import pandas as pd

from ..core.exceptions import ValidationError
from ..core.seeding import derive_seed, rng_for
from .io import Graph

logger = logging.getLogger(__name__)


@dataclass
class SyntheticSpec:
    """Parameters of a two-level nested SBM.

    ``nesting[f]`` is the coarse group of fine group f. Features are
    ``means[fine] + noise_scale * N(0, I)``; without explicit means each fine
    group gets ``separation * (e_fine + e_{n_fine + coarse})``.
    """
    n_fine: int = 4
    n_coarse: int = 2
    nesting: List[int] = field(default_factory=lambda: [0, 0, 1, 1])
    nodes_per_fine: int = 50
    p_intra_fine: float = 0.3
    p_intra_coarse: float = 0.05
    p_inter_coarse: float = 0.005
    feature_dim: int = 16
    feature_means: Optional[List[List[float]]] = None
    separation: float = 2.0
    noise_scale: float = 1.0
    seed: int = 0

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SyntheticSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ValidationError(f"unknown synthetic spec key {key!r}", field=key)
        spec = cls(**data)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "SyntheticSpec":
        path = Path(path)
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except FileNotFoundError:
            raise ValidationError(f"synthetic spec {path} does not exist", field="spec") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"synthetic spec {path} is not valid JSON: {exc}", field="spec") from None

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def validate(self):
        if self.n_fine < 1 or self.n_coarse < 1 or self.nodes_per_fine < 1:
            raise ValidationError("group counts and group sizes must be positive", field="n_fine")
        if len(self.nesting) != self.n_fine or any(not 0 <= c < self.n_coarse for c in self.nesting):
            raise ValidationError("nesting must map every fine group to a coarse group", field="nesting")
        probabilities = (self.p_intra_fine, self.p_intra_coarse, self.p_inter_coarse)
        if any(not 0 <= p <= 1 for p in probabilities):
            raise ValidationError("edge probabilities must lie in [0, 1]", field="p_intra_fine")
        if not self.p_intra_fine > self.p_intra_coarse > self.p_inter_coarse:
            raise ValidationError("need p_intra_fine > p_intra_coarse > p_inter_coarse", field="p_intra_coarse")
        if self.noise_scale < 0:
            raise ValidationError("noise_scale must be non-negative", field="noise_scale")
        if self.feature_means is not None:
            shape = np.shape(self.feature_means)
            if shape != (self.n_fine, self.feature_dim):
                raise ValidationError(f"feature_means must be {self.n_fine} x {self.feature_dim}", field="feature_means")
        elif self.feature_dim < self.n_fine + self.n_coarse:
            raise ValidationError("feature_dim must cover n_fine + n_coarse for the default means",
                                  field="feature_dim")
        return True

    @property
    def node_count(self) -> int:
        return self.n_fine * self.nodes_per_fine

    def block_probabilities(self) -> np.ndarray:
        nesting = np.asarray(self.nesting)
        same_coarse = nesting[:, None] == nesting[None, :]
        probs = np.where(same_coarse, self.p_intra_coarse, self.p_inter_coarse)
        np.fill_diagonal(probs, self.p_intra_fine)
        return probs

    def means(self) -> np.ndarray:
        if self.feature_means is not None:
            return np.asarray(self.feature_means, dtype=np.float64)
        means = np.zeros((self.n_fine, self.feature_dim))
        for fine, coarse in enumerate(self.nesting):
            means[fine, fine] = self.separation
            means[fine, self.n_fine + coarse] = self.separation
        return means

    def expected_edge_count(self) -> float:
        size = self.nodes_per_fine
        probs = self.block_probabilities()
        within = np.trace(probs) * size * (size - 1) / 2
        across = (probs.sum() - np.trace(probs)) / 2 * size * size
        return float(within + across)


@dataclass(frozen=True)
class SyntheticGraph:
    graph: Graph
    fine: np.ndarray
    coarse: np.ndarray

    def save(self, directory) -> Path:
        """Write edges.csv, features.csv, labels.csv and planted.csv"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        g = self.graph
        ids = list(g.node_ids)
        pd.DataFrame({"src": [ids[i] for i in g.edges[:, 0]], "dst": [ids[j] for j in g.edges[:, 1]]}) \
            .to_csv(directory / "edges.csv", index=False)
        features = pd.DataFrame(g.features, columns=[f"f{k}" for k in range(g.feature_dim)])
        features.insert(0, "node_id", ids)
        features.to_csv(directory / "features.csv", index=False, float_format="%.10g")
        pd.DataFrame({"node_id": ids, "label": self.fine}).to_csv(directory / "labels.csv", index=False)
        pd.DataFrame({"node_id": ids, "fine": self.fine, "coarse": self.coarse}) \
            .to_csv(directory / "planted.csv", index=False)
        return directory


def generate_synthetic(spec: SyntheticSpec) -> SyntheticGraph:
    """Sample the nested SBM; labels are the planted fine groups"""
    spec.validate()
    sizes = [spec.nodes_per_fine] * spec.n_fine
    sbm = nx.stochastic_block_model(sizes, spec.block_probabilities().tolist(),
                                    seed=derive_seed(spec.seed, "sbm") % (2 ** 32))
    fine = np.repeat(np.arange(spec.n_fine), spec.nodes_per_fine)
    coarse = np.asarray(spec.nesting)[fine]
    noise = rng_for(spec.seed, "features").standard_normal((spec.node_count, spec.feature_dim))
    features = spec.means()[fine] + spec.noise_scale * noise
    graph = Graph.build([str(v) for v in range(spec.node_count)], list(sbm.edges()), features,
                        labels=fine, label_names=[str(k) for k in range(spec.n_fine)], name="synthetic")
    logger.info("synthetic nested SBM: %d nodes, %d edges (expected %.1f)",
                graph.node_count, graph.edge_count, spec.expected_edge_count())
    return SyntheticGraph(graph=graph, fine=fine, coarse=coarse)


def load_planted(path, graph: Graph) -> Dict[str, np.ndarray]:
    """Read planted.csv back into fine/coarse arrays aligned with the graph"""
    frame = pd.read_csv(path, dtype={"node_id": str})
    order = [graph.index_of(v) for v in frame["node_id"]]
    planted = {}
    for column in ("fine", "coarse"):
        values = np.empty(graph.node_count, dtype=np.int64)
        values[order] = frame[column].to_numpy()
        planted[column] = values
    return planted


FIXTURE_SPEC = SyntheticSpec(n_fine=4, n_coarse=2, nesting=[0, 0, 1, 1], nodes_per_fine=5, p_intra_fine=0.7,
                             p_intra_coarse=0.2, p_inter_coarse=0.05, feature_dim=8, separation=1.0, seed=0)


def fixture_graph(seed: int = 0) -> SyntheticGraph:
    """20-node nested SBM used by gradient checks and fast tests"""
    return generate_synthetic(dataclasses.replace(FIXTURE_SPEC, seed=seed))
