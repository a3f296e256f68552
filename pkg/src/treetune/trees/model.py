"""Fitted decision tree stored as flat node arrays."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._kernels import apply_tree

LEAF = 0
NUMERIC_SPLIT = 1
CATEGORICAL_SPLIT = 2


@dataclass(frozen=True)
class Surrogate:
    """Backup split used when the primary feature is missing.

    ``goes_left`` semantics: a numeric surrogate sends ``x < threshold`` to
    the left child unless ``reverse`` is set; a categorical surrogate sends
    categories with ``route[c] == 0`` left and ``1`` right (``-1`` unknown).
    """

    feature: int
    threshold: float = np.nan
    reverse: bool = False
    route: tuple = ()
    agreement: float = 0.0

    def side(self, value: float) -> int:
        """0 = left, 1 = right, -1 = undecided (missing or unknown level)."""
        if np.isnan(value):
            return -1
        if self.route:
            c = int(value)
            return self.route[c] if 0 <= c < len(self.route) else -1
        left = value < self.threshold
        if self.reverse:
            left = not left
        return 0 if left else 1

    def to_dict(self) -> dict:
        d = {"feature": self.feature, "agreement": self.agreement}
        if self.route:
            d["route"] = list(self.route)
        else:
            d["threshold"] = self.threshold
            d["reverse"] = self.reverse
        return d


@dataclass(frozen=True)
class Node:
    """Read-only view of one node."""

    index: int
    feature: int | None
    threshold: float | None
    routes: tuple | None
    children: tuple[int, ...]
    class_counts: np.ndarray
    depth: int
    laplace: bool

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def split(self):
        if self.is_leaf:
            return None
        return (self.feature, self.threshold if self.routes is None else self.routes)


class TreeModel:
    """Decision tree with numeric threshold and categorical routing splits.

    Nodes are stored in preorder. A numeric node sends ``x < threshold`` to
    child 0 and the rest to child 1. A categorical node maps each category
    index to a child position through ``routes``; unseen categories and
    missing values go to ``missing_child``.

    Parameters
    ----------
    learner : str
    n_features, n_classes : int
    kind, feature, threshold, missing_child, depth : arrays of length n_nodes
    child_offset : int array of length n_nodes + 1
        Children of node ``t`` are ``child_index[child_offset[t]:child_offset[t+1]]``.
    route_offset, route_child : int arrays
        Category routing table of categorical nodes in CSR layout.
    counts : (n_nodes, n_classes) float array
        Training class counts per node.
    surrogates : dict, optional
        Node index to list of :class:`Surrogate`.
    laplace : bool
        Leaf probabilities use add-one smoothing.
    """

    def __init__(self, learner, n_features, n_classes, kind, feature, threshold, child_offset,
                 child_index, route_offset, route_child, missing_child, counts, depth,
                 surrogates=None, laplace=False, params=None):
        self.learner = learner
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.kind = np.asarray(kind, dtype=np.int64)
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.child_offset = np.asarray(child_offset, dtype=np.int64)
        self.child_index = np.asarray(child_index, dtype=np.int64)
        self.route_offset = np.asarray(route_offset, dtype=np.int64)
        self.route_child = np.asarray(route_child, dtype=np.int64)
        self.missing_child = np.asarray(missing_child, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=float).reshape(len(self.kind), self.n_classes)
        self.depth = np.asarray(depth, dtype=np.int64)
        self.surrogates = {int(k): list(v) for k, v in (surrogates or {}).items() if v}
        self.laplace = bool(laplace)
        self.params = dict(params or {})
        for a in (self.kind, self.feature, self.threshold, self.child_offset, self.child_index,
                  self.route_offset, self.route_child, self.missing_child, self.counts, self.depth):
            a.setflags(write=False)
        self._proba = self._leaf_probabilities()

    # -- structure ------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.kind)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.kind == LEAF))

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    root = 0

    def children(self, t: int) -> np.ndarray:
        return self.child_index[self.child_offset[t]:self.child_offset[t + 1]]

    def routes(self, t: int) -> np.ndarray:
        return self.route_child[self.route_offset[t]:self.route_offset[t + 1]]

    def parent_array(self) -> np.ndarray:
        parent = np.full(self.n_nodes, -1, dtype=np.int64)
        for t in range(self.n_nodes):
            parent[self.children(t)] = t
        return parent

    @property
    def nodes(self) -> list[Node]:
        out = []
        for t in range(self.n_nodes):
            k = self.kind[t]
            out.append(Node(
                t,
                None if k == LEAF else int(self.feature[t]),
                float(self.threshold[t]) if k == NUMERIC_SPLIT else None,
                tuple(int(r) for r in self.routes(t)) if k == CATEGORICAL_SPLIT else None,
                tuple(int(c) for c in self.children(t)),
                self.counts[t].copy(), int(self.depth[t]), self.laplace))
        return out

    def _leaf_probabilities(self) -> np.ndarray:
        """Per-node class probabilities; empty nodes inherit from the nearest nonempty ancestor."""
        parent = self.parent_array()
        proba = np.zeros((self.n_nodes, self.n_classes))
        for t in range(self.n_nodes):  # preorder: parents are filled first
            c = self.counts[t]
            total = c.sum()
            if total > 0:
                proba[t] = (c + 1.0) / (total + self.n_classes) if self.laplace else c / total
            elif parent[t] >= 0:
                proba[t] = proba[parent[t]]
            else:
                proba[t] = 1.0 / self.n_classes
        return proba

    # -- prediction -----------------------------------------------------------
    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"instance arity {X.shape[1]} does not match training arity {self.n_features}")
        return X

    def _route_one(self, x: np.ndarray) -> int:
        t = 0
        while self.kind[t] != LEAF:
            kids = self.children(t)
            v = x[self.feature[t]]
            pos = -1
            if not np.isnan(v):
                if self.kind[t] == NUMERIC_SPLIT:
                    pos = 0 if v < self.threshold[t] else 1
                else:
                    r = self.routes(t)
                    c = int(v)
                    pos = int(r[c]) if 0 <= c < len(r) else -1
            elif t in self.surrogates:
                for s in self.surrogates[t]:
                    pos = s.side(x[s.feature])
                    if pos >= 0:
                        break
            if pos < 0:
                pos = int(self.missing_child[t])
            t = int(kids[pos])
        return t

    def apply(self, X) -> np.ndarray:
        """Index of the leaf reached by each row."""
        X = self._check(X)
        leaves = apply_tree(X, self.kind, self.feature, self.threshold, self.child_offset,
                            self.child_index, self.route_offset, self.route_child, self.missing_child)
        if self.surrogates:
            rows = np.flatnonzero(np.isnan(X).any(axis=1))
            for i in rows:
                leaves[i] = self._route_one(X[i])
        return leaves

    def predict_proba(self, X) -> np.ndarray:
        return self._proba[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    # -- serialization ----------------------------------------------------------
    def to_dict(self) -> dict:
        nodes = []
        for t in range(self.n_nodes):
            rec = {"id": t, "depth": int(self.depth[t]), "counts": self.counts[t].tolist()}
            k = self.kind[t]
            if k != LEAF:
                rec["feature"] = int(self.feature[t])
                if k == NUMERIC_SPLIT:
                    rec["threshold"] = float(self.threshold[t])
                else:
                    rec["routes"] = [int(r) for r in self.routes(t)]
                rec["children"] = [int(c) for c in self.children(t)]
                rec["missing_child"] = int(self.missing_child[t])
                if t in self.surrogates:
                    rec["surrogates"] = [s.to_dict() for s in self.surrogates[t]]
            nodes.append(rec)
        return {"learner": self.learner, "n_features": self.n_features, "n_classes": self.n_classes,
                "laplace": self.laplace, "params": self.params, "nodes": nodes}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeModel":
        nodes = sorted(doc["nodes"], key=lambda r: r["id"])
        n = len(nodes)
        kind = np.zeros(n, dtype=np.int64)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.full(n, np.nan)
        missing = np.full(n, -1, dtype=np.int64)
        child_offset = [0]
        child_index: list[int] = []
        route_offset = [0]
        route_child: list[int] = []
        surrogates = {}
        for t, rec in enumerate(nodes):
            if "children" in rec:
                feature[t] = rec["feature"]
                missing[t] = rec["missing_child"]
                child_index.extend(rec["children"])
                if "routes" in rec:
                    kind[t] = CATEGORICAL_SPLIT
                    route_child.extend(rec["routes"])
                else:
                    kind[t] = NUMERIC_SPLIT
                    threshold[t] = rec["threshold"]
                if "surrogates" in rec:
                    surrogates[t] = [Surrogate(s["feature"], s.get("threshold", np.nan),
                                               s.get("reverse", False), tuple(s.get("route", ())),
                                               s.get("agreement", 0.0)) for s in rec["surrogates"]]
            child_offset.append(len(child_index))
            route_offset.append(len(route_child))
        return cls(doc["learner"], doc["n_features"], doc["n_classes"], kind, feature, threshold,
                   child_offset, child_index, route_offset, route_child, missing,
                   [r["counts"] for r in nodes], [r["depth"] for r in nodes], surrogates,
                   doc.get("laplace", False), doc.get("params"))

    @classmethod
    def from_json(cls, text: str) -> "TreeModel":
        return cls.from_dict(json.loads(text))

    def describe(self, feature_names=None, class_names=None) -> str:
        """Indented text rendering, one line per branch and leaf."""
        fn = feature_names or [f"x{j}" for j in range(self.n_features)]
        cn = class_names or [str(c) for c in range(self.n_classes)]
        lines = []

        def leaf_text(t):
            counts = self.counts[t]
            shown = counts.astype(int).tolist() if np.all(counts == np.round(counts)) else counts.tolist()
            return f"{cn[int(np.argmax(self._proba[t]))]} {shown}"

        def walk(t, indent):
            f = fn[self.feature[t]]
            kids = self.children(t)
            if self.kind[t] == NUMERIC_SPLIT:
                labels = [f"{f} < {self.threshold[t]:.6g}", f"{f} >= {self.threshold[t]:.6g}"]
            else:
                r = self.routes(t)
                labels = [f"{f} in {{{','.join(str(c) for c in np.flatnonzero(r == i))}}}"
                          for i in range(len(kids))]
            for lab, c in zip(labels, kids):
                c = int(c)
                if self.kind[c] == LEAF:
                    lines.append("  " * indent + f"{lab}: {leaf_text(c)}")
                else:
                    lines.append("  " * indent + lab)
                    walk(c, indent + 1)

        if self.kind[0] == LEAF:
            return leaf_text(0)
        walk(0, 0)
        return "\n".join(lines)

    def __repr__(self) -> str:
        return f"TreeModel({self.learner}, nodes={self.n_nodes}, depth={self.max_depth})"
