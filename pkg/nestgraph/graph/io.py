"""Graph storage, dataset loading and node splits"""

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from ..core.exceptions import DanglingReferenceError, ParseError, ValidationError
from ..core.seeding import rng_for

logger = logging.getLogger(__name__)

FORMATS = ("citation", "edgelist")
IDENTITY_FEATURE_LIMIT = 4096


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with dense node features.

    Node ids are dense (0..n-1); ``node_ids`` maps them back to the ids found
    in the source files. Edges are stored once with ``i < j``; adjacency is a
    CSR pair (``indptr``, ``indices``) with sorted neighbor lists.
    """
    node_ids: Tuple[str, ...]
    edges: np.ndarray
    features: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    labels: Optional[np.ndarray] = None
    label_names: Tuple[str, ...] = ()
    raw_edge_rows: int = 0
    name: str = ""
    _id_index: Dict[str, int] = field(default=None, repr=False, compare=False)

    @classmethod
    def build(cls, node_ids: Sequence[str], edge_pairs, features, labels=None,
              label_names: Sequence[str] = (), raw_edge_rows: Optional[int] = None, name: str = "") -> "Graph":
        """Symmetrise, drop self-loops and duplicates, and freeze the arrays"""
        node_ids = tuple(str(v) for v in node_ids)
        n = len(node_ids)
        pairs = np.asarray(edge_pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise ValidationError("edge endpoint outside the node range", field="edges")
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        pairs = np.sort(pairs, axis=1)
        edges = np.unique(pairs, axis=0) if pairs.size else np.zeros((0, 2), dtype=np.int64)

        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n:
            raise ValidationError(f"features must be a {n} x d matrix, got {features.shape}", field="features")
        if not np.all(np.isfinite(features)):
            raise ValidationError("features contain NaN or Inf", field="features")

        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValidationError("one label per node is required", field="labels")
            class_count = len(label_names) if label_names else int(labels.max()) + 1 if n else 0
            if n and (labels.min() < 0 or labels.max() >= class_count):
                raise ValidationError("label index outside the class range", field="labels")
            if not label_names:
                label_names = tuple(str(c) for c in range(class_count))

        both = np.concatenate([edges, edges[:, ::-1]]) if edges.size else np.zeros((0, 2), dtype=np.int64)
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        counts = np.bincount(both[:, 0], minlength=n) if both.size else np.zeros(n, dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        indices = both[:, 1].astype(np.int64)

        for array in (edges, features, indptr, indices, labels):
            if array is not None:
                array.setflags(write=False)
        return cls(node_ids=node_ids, edges=edges, features=features, indptr=indptr, indices=indices,
                   labels=labels, label_names=tuple(label_names), name=name,
                   raw_edge_rows=int(raw_edge_rows if raw_edge_rows is not None else len(edge_pairs)),
                   _id_index={v: i for i, v in enumerate(node_ids)})

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def class_count(self) -> int:
        return len(self.label_names) if self.labels is not None else 0

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    @cached_property
    def neighborhood_features(self) -> np.ndarray:
        """Mean feature row over each node's closed neighborhood"""
        n = self.node_count
        rows = np.repeat(np.arange(n), self.degrees)
        totals = self.features.copy()
        np.add.at(totals, rows, self.features[self.indices])
        smoothed = totals / (self.degrees + 1)[:, None]
        smoothed.setflags(write=False)
        return smoothed

    @property
    def adjacency(self) -> List[List[int]]:
        return [self.neighbors(i).tolist() for i in range(self.node_count)]

    def has_edge(self, i: int, j: int) -> bool:
        row = self.neighbors(i)
        k = np.searchsorted(row, j)
        return bool(k < row.size and row[k] == j)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.node_count))
        graph.add_edges_from(self.edges.tolist())
        return graph

    def index_of(self, node_id) -> int:
        try:
            return self._id_index[str(node_id)]
        except KeyError:
            raise DanglingReferenceError(node_id) from None

    def summary(self) -> Dict[str, object]:
        return {"name": self.name, "nodes": self.node_count, "edges": self.edge_count,
                "feature_dim": self.feature_dim, "classes": self.class_count}

    def without_edges(self, removed: np.ndarray) -> "Graph":
        """Copy of the graph with the given (i < j) edges removed"""
        removed = np.sort(np.asarray(removed, dtype=np.int64).reshape(-1, 2), axis=1)
        n = self.node_count
        keys = self.edges[:, 0] * n + self.edges[:, 1]
        keep = ~np.isin(keys, removed[:, 0] * n + removed[:, 1])
        return Graph.build(self.node_ids, self.edges[keep], self.features, self.labels,
                           self.label_names, raw_edge_rows=int(keep.sum()), name=self.name)


@dataclass(frozen=True)
class SplitRoles:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class SplitAssignment:
    """Fold index per node; fold f is test, fold f+1 validation, the rest train"""
    fold_count: int
    folds: np.ndarray
    seed: int = 0

    def roles(self, fold: int) -> SplitRoles:
        if not 0 <= fold < self.fold_count:
            raise ValidationError(f"fold {fold} outside 0..{self.fold_count - 1}", field="fold")
        test = np.flatnonzero(self.folds == fold)
        if self.fold_count >= 3:
            val_fold = (fold + 1) % self.fold_count
            val = np.flatnonzero(self.folds == val_fold)
            train = np.flatnonzero((self.folds != fold) & (self.folds != val_fold))
        else:
            val = np.zeros(0, dtype=np.int64)
            train = np.flatnonzero(self.folds != fold)
        return SplitRoles(train=train, val=val, test=test)

    def fold_sizes(self) -> List[int]:
        return np.bincount(self.folds, minlength=self.fold_count).tolist()

    def to_csv(self, path, graph: Graph) -> Path:
        path = Path(path)
        pd.DataFrame({"node_id": list(graph.node_ids), "fold": self.folds}).to_csv(path, index=False)
        return path

    @classmethod
    def from_csv(cls, path, graph: Graph) -> "SplitAssignment":
        frame = pd.read_csv(path, dtype={"node_id": str})
        if list(frame.columns) != ["node_id", "fold"]:
            raise ParseError("split file needs the columns node_id,fold", line=1, path=path)
        folds = np.full(graph.node_count, -1, dtype=np.int64)
        for node_id, fold in zip(frame["node_id"], frame["fold"]):
            folds[graph.index_of(node_id)] = int(fold)
        if (folds < 0).any():
            raise ValidationError("split file does not cover every node", field="fold")
        return cls(fold_count=int(folds.max()) + 1, folds=folds)


def split_nodes(g: Graph, fold_count: int, seed: int) -> SplitAssignment:
    """Uniform random partition of the nodes into folds of size floor/ceil(n/F)"""
    if fold_count < 2:
        raise ValidationError("fold_count must be at least 2", field="fold_count")
    if fold_count > g.node_count:
        raise ValidationError(f"{fold_count} folds requested for {g.node_count} nodes", field="fold_count")
    order = rng_for(seed, "folds").permutation(g.node_count)
    folds = np.empty(g.node_count, dtype=np.int64)
    folds[order] = np.arange(g.node_count) % fold_count
    folds.setflags(write=False)
    return SplitAssignment(fold_count=fold_count, folds=folds, seed=seed)


def holdout_edges(g: Graph, fraction: float, seed: int) -> Tuple[Graph, np.ndarray]:
    """Remove a deterministic fraction of edges; returns (reduced graph, held-out edges)"""
    if not 0 <= fraction < 1:
        raise ValidationError("holdout fraction must lie in [0, 1)", field="holdout")
    count = int(round(fraction * g.edge_count))
    if count == 0:
        return g, np.zeros((0, 2), dtype=np.int64)
    chosen = np.sort(rng_for(seed, "holdout").choice(g.edge_count, size=count, replace=False))
    held = np.array(g.edges[chosen])
    return g.without_edges(held), held


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

_LINE = re.compile(r"line (\d+)")


def _read_table(path: Path, sep: Optional[str] = None) -> pd.DataFrame:
    if not path.exists():
        raise ValidationError(f"data file {path} does not exist", field=str(path))
    try:
        if sep is None:
            return pd.read_csv(path, sep=r"[,\t]", engine="python", header=None, dtype=str, comment="#",
                               skip_blank_lines=True)
        return pd.read_csv(path, sep=sep, header=None, dtype=str, comment="#", skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        return pd.DataFrame()
    except pd.errors.ParserError as exc:
        match = _LINE.search(str(exc))
        raise ParseError(str(exc).strip(), line=int(match.group(1)) if match else None, path=path) from None


def _drop_header(frame: pd.DataFrame, first_cell: str) -> Tuple[pd.DataFrame, int]:
    if len(frame) and str(frame.iloc[0, 0]).strip().lower() == first_cell:
        return frame.iloc[1:].reset_index(drop=True), 1
    return frame, 0


def _parse_floats(frame: pd.DataFrame, path: Path, line_offset: int) -> np.ndarray:
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError("non-numeric feature value", line=row + 1 + line_offset, path=path)
    return numeric.to_numpy(dtype=np.float64)


def _index_labels(raw: Sequence[str]) -> Tuple[np.ndarray, Tuple[str, ...]]:
    names = sorted(set(raw))
    try:
        names = sorted(names, key=float)
    except ValueError:
        pass
    lookup = {name: i for i, name in enumerate(names)}
    return np.array([lookup[v] for v in raw], dtype=np.int64), tuple(names)


def _edge_rows(frame: pd.DataFrame, path: Path, line_offset: int, index: Dict[str, int],
               on_dangling: str) -> np.ndarray:
    if frame.empty:
        return np.zeros((0, 2), dtype=np.int64)
    if frame.shape[1] != 2 or frame.isna().any(axis=None):
        bad = np.flatnonzero(frame.isna().any(axis=1).to_numpy()) if frame.shape[1] >= 2 else [0]
        raise ParseError("edge rows need exactly two columns", line=int(bad[0]) + 1 + line_offset if len(bad) else None,
                         path=path)
    pairs, dropped = [], 0
    for row, (a, b) in enumerate(zip(frame[0].str.strip(), frame[1].str.strip())):
        missing = a if a not in index else b if b not in index else None
        if missing is not None:
            if on_dangling == "drop":
                dropped += 1
                continue
            raise DanglingReferenceError(missing, line=row + 1 + line_offset)
        pairs.append((index[a], index[b]))
    if dropped:
        logger.warning("dropped %d edge rows of %s with unknown endpoints", dropped, path)
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def load_graph(content_path, edges_path, format: str = "citation", labels_path=None,
               on_dangling: str = "error", name: str = "") -> Graph:
    """Load a graph from a citation (content + cites) or edgelist dataset.

    Citation content rows are ``id f1 .. fd label``; cites rows are
    ``cited_id citing_id``. Edgelist rows are ``src,dst`` with an optional
    feature CSV (``node_id,f1..fd``) as ``content_path`` and label CSV
    (``node_id,label``).
    """
    if format not in FORMATS:
        raise ValidationError(f"unknown graph format {format!r}", field="format")
    if on_dangling not in ("error", "drop"):
        raise ValidationError("on_dangling must be 'error' or 'drop'", field="on_dangling")
    edges_path = Path(edges_path)

    if format == "citation":
        content_path = Path(content_path)
        content = _read_table(content_path, sep=r"\s+")
        if content.shape[1] < 3:
            raise ParseError("content rows need an id, at least one feature and a label", line=1, path=content_path)
        if content.isna().any(axis=None):
            row = int(np.flatnonzero(content.isna().any(axis=1).to_numpy())[0])
            raise ParseError("row has missing columns", line=row + 1, path=content_path)
        node_ids = content[0].str.strip().tolist()
        if len(set(node_ids)) != len(node_ids):
            raise ParseError("duplicate node id in content file", path=content_path)
        features = _parse_floats(content.iloc[:, 1:-1], content_path, 0)
        labels, label_names = _index_labels(content.iloc[:, -1].str.strip().tolist())
        index = {v: i for i, v in enumerate(node_ids)}
        raw_edges = _read_table(edges_path, sep=r"\s+")
        pairs = _edge_rows(raw_edges, edges_path, 0, index, on_dangling)
        graph = Graph.build(node_ids, pairs, features, labels, label_names, raw_edge_rows=len(raw_edges), name=name)
        logger.info("loaded %s: %d nodes, %d undirected edges (%d rows), %d classes",
                    content_path.name, graph.node_count, graph.edge_count, graph.raw_edge_rows, graph.class_count)
        return graph

    raw_edges, edge_offset = _drop_header(_read_table(edges_path), "src")
    if content_path is not None:
        content_path = Path(content_path)
        content, offset = _drop_header(_read_table(content_path), "node_id")
        node_ids = content[0].str.strip().tolist()
        features = _parse_floats(content.iloc[:, 1:], content_path, offset)
    else:
        endpoints = pd.unique(raw_edges.iloc[:, :2].to_numpy().ravel()) if len(raw_edges) else []
        node_ids = [str(v).strip() for v in endpoints]
        try:
            node_ids = sorted(set(node_ids), key=int)
        except ValueError:
            node_ids = sorted(set(node_ids))
        if len(node_ids) > IDENTITY_FEATURE_LIMIT:
            raise ValidationError(
                f"{len(node_ids)} nodes without a feature file; identity features are limited to "
                f"{IDENTITY_FEATURE_LIMIT} nodes", field="features")
        features = np.eye(len(node_ids))
    index = {v: i for i, v in enumerate(node_ids)}
    pairs = _edge_rows(raw_edges, edges_path, edge_offset, index, on_dangling)

    labels, label_names = None, ()
    if labels_path is not None:
        labels_path = Path(labels_path)
        frame, offset = _drop_header(_read_table(labels_path), "node_id")
        by_id = dict(zip(frame[0].str.strip(), frame[1].str.strip()))
        missing = [v for v in node_ids if v not in by_id]
        if missing:
            raise ValidationError(f"no label for node {missing[0]!r}", field="labels")
        labels, label_names = _index_labels([by_id[v] for v in node_ids])
    graph = Graph.build(node_ids, pairs, features, labels, label_names, raw_edge_rows=len(raw_edges), name=name)
    logger.info("loaded %s: %d nodes, %d undirected edges", edges_path.name, graph.node_count, graph.edge_count)
    return graph


def detect_dataset(directory) -> Dict[str, object]:
    """Find the dataset files in a directory and return load_graph kwargs"""
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"data directory {directory} does not exist", field="data")
    contents = sorted(directory.glob("*.content"))
    cites = sorted(directory.glob("*.cites"))
    if contents and cites:
        return {"content_path": contents[0], "edges_path": cites[0], "format": "citation",
                "name": contents[0].stem}
    edges = directory / "edges.csv"
    if edges.exists():
        features = directory / "features.csv"
        labels = directory / "labels.csv"
        return {"content_path": features if features.exists() else None, "edges_path": edges,
                "format": "edgelist", "labels_path": labels if labels.exists() else None,
                "name": directory.name}
    raise ValidationError(f"{directory} holds neither *.content/*.cites nor edges.csv", field="data")
