"""Argument handling shared by the tree learners."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..data import Dataset, Schema
from ..space import builtin_space, validate
from .model import CATEGORICAL_SPLIT, LEAF, NUMERIC_SPLIT, TreeModel


def training_arrays(data) -> tuple[np.ndarray, np.ndarray, Schema]:
    """``(X, y, schema)`` from a Dataset or an ``(X, y, schema)`` triple."""
    if isinstance(data, Dataset):
        return data.X, data.y, data.schema
    X, y, schema = data
    return np.asarray(X, dtype=float), np.asarray(y, dtype=np.int64), schema


def resolve_params(learner: str, params: Mapping | None, n_features: int) -> dict:
    """Validated parameter dict with inactive/omitted values filled from defaults."""
    space = builtin_space(learner, n_features)
    given = dict(params or {})
    config = dict(space.default())
    # switching a parent flag changes which children are active
    for p in space.params:
        if p.name in given:
            config[p.name] = given[p.name]
    for p in space.params:
        if not space.is_active(p, config):
            config.pop(p.name, None)
        elif p.name not in config:
            config[p.name] = p.default
    problems = validate(space, config)
    if problems:
        raise ValueError(f"invalid {learner} parameters: {'; '.join(problems)}")
    return config


def binary_model(learner, n_features, n_classes, new_index, feature, threshold, left, right,
                 counts, depth, routes=None, missing_side=None, surrogates=None, laplace=False,
                 params=None) -> TreeModel:
    """Assemble a :class:`TreeModel` from binary node arrays and a preorder map.

    ``new_index[t]`` is the preorder position of node ``t`` or -1 when the
    node was pruned away. Nodes whose children were pruned become leaves.
    """
    kept = np.flatnonzero(new_index >= 0)
    kept = kept[np.argsort(new_index[kept])]
    n = len(kept)
    kind = np.zeros(n, dtype=np.int64)
    feat = np.full(n, -1, dtype=np.int64)
    thr = np.full(n, np.nan)
    missing = np.full(n, -1, dtype=np.int64)
    child_offset = np.zeros(n + 1, dtype=np.int64)
    child_index = []
    route_offset = np.zeros(n + 1, dtype=np.int64)
    route_child = []
    surr = {}
    for k, t in enumerate(kept):
        lt = left[t]
        if lt >= 0 and new_index[lt] >= 0:
            feat[k] = feature[t]
            child_index.extend((new_index[lt], new_index[right[t]]))
            missing[k] = 0 if missing_side is None else missing_side[t]
            if routes is not None and routes[t] is not None:
                kind[k] = CATEGORICAL_SPLIT
                route_child.extend(int(r) for r in routes[t])
            else:
                kind[k] = NUMERIC_SPLIT
                thr[k] = threshold[t]
            if surrogates is not None and surrogates.get(int(t)):
                surr[k] = surrogates[int(t)]
        else:
            kind[k] = LEAF
        child_offset[k + 1] = len(child_index)
        route_offset[k + 1] = len(route_child)
    if missing_side is None:
        # missing values follow the child with more training instances
        for k in np.flatnonzero(kind != LEAF):
            a, b = child_index[child_offset[k]], child_index[child_offset[k] + 1]
            ca, cb = counts[kept[a]].sum(), counts[kept[b]].sum()
            missing[k] = 0 if ca >= cb else 1
    return TreeModel(learner, n_features, n_classes, kind, feat, thr, child_offset, child_index,
                     route_offset, route_child, missing, np.asarray(counts)[kept],
                     np.asarray(depth)[kept], surr, laplace, params)
