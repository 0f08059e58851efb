"""Depth-limited axis-aligned policy trees and policy adapters.

Serialization is a pre-order JSON node list: internal nodes carry
``{"feature": j, "threshold": t}`` (0-based feature, go left when
``x[feature] <= threshold``), leaves carry ``{"action": a}`` with a
1-based action index matching the CSV convention.  Round-trips are
bit-exact because thresholds serialize via Python's shortest-roundtrip
float repr.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = ["Leaf", "Split", "PolicyTree", "as_policy", "constant_policy"]


@dataclass(frozen=True)
class Leaf:
    action: int  # 0-based


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: Union["Split", Leaf]
    right: Union["Split", Leaf]


@dataclass(frozen=True)
class PolicyTree:
    root: Union[Split, Leaf]

    @property
    def depth(self) -> int:
        def walk(node):
            if isinstance(node, Leaf):
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.empty(len(x), dtype=np.int64)

        def fill(node, idx):
            if isinstance(node, Leaf):
                out[idx] = node.action
                return
            go_left = x[idx, node.feature] <= node.threshold
            fill(node.left, idx[go_left])
            fill(node.right, idx[~go_left])

        fill(self.root, np.arange(len(x)))
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.predict(x)

    def to_dict(self) -> dict:
        nodes = []

        def emit(node):
            if isinstance(node, Leaf):
                nodes.append({"action": int(node.action) + 1})
            else:
                nodes.append({"feature": int(node.feature), "threshold": float(node.threshold)})
                emit(node.left)
                emit(node.right)

        emit(self.root)
        return {"depth": self.depth, "nodes": nodes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_dict(payload: dict) -> "PolicyTree":
        nodes = payload["nodes"]
        pos = 0

        def consume():
            nonlocal pos
            if pos >= len(nodes):
                raise ValueError("truncated policy tree: ran out of nodes")
            node = nodes[pos]
            pos += 1
            if "action" in node:
                return Leaf(int(node["action"]) - 1)
            return Split(int(node["feature"]), float(node["threshold"]), consume(), consume())

        root = consume()
        if pos != len(nodes):
            raise ValueError(f"malformed policy tree: {len(nodes) - pos} trailing nodes")
        return PolicyTree(root)

    @staticmethod
    def from_json(text: str) -> "PolicyTree":
        return PolicyTree.from_dict(json.loads(text))


def constant_policy(action: int) -> PolicyTree:
    return PolicyTree(Leaf(int(action)))


def as_policy(policy, n_actions: int) -> Callable[[np.ndarray], np.ndarray]:
    """Normalize a policy (tree, callable, or fixed action) to a vectorized map."""
    if isinstance(policy, PolicyTree):
        fn = policy.predict
    elif isinstance(policy, (int, np.integer)):
        a = int(policy)

        def fn(x):
            return np.full(len(np.atleast_2d(x)), a, dtype=np.int64)

    elif callable(policy):
        raw = policy

        def fn(x):
            return np.asarray(raw(np.atleast_2d(x)), dtype=np.int64)

    else:
        raise TypeError(f"cannot interpret {policy!r} as a policy")

    def checked(x):
        acts = fn(x)
        if len(acts) and (acts.min() < 0 or acts.max() >= n_actions):
            raise ValueError("policy produced an action index out of range")
        return acts

    return checked
