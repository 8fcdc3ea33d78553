"""Bundled public datasets."""

from __future__ import annotations

from importlib import resources

from .graph import Graph, load_edge_list, load_labels

CORA_CLASSES = 7


def load_cora() -> Graph:
    """Featureless Cora citation graph (2708 nodes) with its 7 subject labels.

    Citations are treated as undirected; duplicate reciprocal citations merge
    into one edge.
    """
    root = resources.files("modgae") / "data"
    with resources.as_file(root / "cora_edges.tsv") as edges, resources.as_file(root / "cora_labels.tsv") as labels:
        g = load_edge_list(edges)
        return g.with_labels(load_labels(labels, g.n))
