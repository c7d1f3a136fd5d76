"""Knowledge-graph data model, triple conversion, node serialization and
adjacency targets.

A graph is an ordered list of unique node strings plus directed labeled
edges between node indices. Graphs convert losslessly to and from
(subject, predicate, object) triples as long as every node takes part in
at least one edge; datasets may additionally carry an explicit node list
so that mention-only (edge-free) nodes survive the round trip.
"""
from __future__ import annotations

import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, DataError

logger = logging.getLogger(__name__)

Triple = tuple[str, str, str]


@dataclass(frozen=True)
class SpecialTokens:
    """The distinguished vocabulary symbols used in targets and decoding."""

    pad: str = "<pad>"
    eos: str = "</s>"
    node_sep: str = "<node_sep>"
    no_node: str = "<no_node>"
    no_edge: str = "<no_edge>"
    unk: str = "<unk>"

    def all(self) -> tuple[str, ...]:
        return (self.pad, self.eos, self.node_sep, self.no_node, self.no_edge, self.unk)


SPECIALS = SpecialTokens()
NO_EDGE = SPECIALS.no_edge
NO_NODE = SPECIALS.no_node


# ---------------------------------------------------------------------------
# Text normalization
# ---------------------------------------------------------------------------

_QUOTE_CHARS = "'\"‘’“”«»"

_PUNCT_FOLD = {
    "‘": "'", "’": "'", "“": '"', "”": '"',
    "–": "-", "—": "-", "…": "...", " ": " ",
}


def _build_fold_table() -> dict[str, str]:
    # Latin-1 Supplement and Latin Extended-A letters folded to ASCII.
    # Letters without a combining-mark decomposition get explicit entries.
    explicit = {
        "ß": "ss", "æ": "ae", "Æ": "AE", "œ": "oe",
        "Œ": "OE", "ø": "o", "Ø": "O", "đ": "d",
        "Đ": "D", "ð": "d", "Ð": "D", "þ": "th",
        "Þ": "Th", "ł": "l", "Ł": "L", "ħ": "h",
        "Ħ": "H", "ŋ": "ng", "Ŋ": "NG", "ı": "i",
        "ĸ": "k", "ſ": "s", "ĳ": "ij", "Ĳ": "IJ",
        "ŉ": "'n",
    }
    table = dict(_PUNCT_FOLD)
    for code in range(0x00C0, 0x0180):
        ch = chr(code)
        if ch in explicit:
            table[ch] = explicit[ch]
            continue
        base = "".join(
            c for c in unicodedata.normalize("NFD", ch) if not unicodedata.combining(c)
        )
        if base and base != ch and base.isascii():
            table[ch] = base
    table.update(explicit)
    return table


_FOLD_TABLE = _build_fold_table()
_unmapped_tally: Counter[str] = Counter()


def unmapped_tally() -> Counter[str]:
    """Characters dropped by normalize_text so far, with counts."""
    return Counter(_unmapped_tally)


def reset_unmapped_tally() -> None:
    _unmapped_tally.clear()


def normalize_text(raw: str) -> str:
    """Normalize a raw string: underscores to spaces, surrounding quotes
    stripped, non-ASCII letters folded to their closest ASCII form.

    Characters with no fold entry are dropped and counted in a tally
    (see unmapped_tally). Idempotent.
    """
    s = raw.replace("_", " ").strip()
    while len(s) >= 2 and s[0] in _QUOTE_CHARS and s[-1] in _QUOTE_CHARS:
        s = s[1:-1].strip()
    out = []
    for ch in s:
        if ch.isascii():
            out.append(ch)
        elif ch in _FOLD_TABLE:
            out.append(_FOLD_TABLE[ch])
        else:
            _unmapped_tally[ch] += 1
            logger.debug("normalize_text: dropping unmappable character %r", ch)
    return " ".join("".join(out).split())


# ---------------------------------------------------------------------------
# Graph model
# ---------------------------------------------------------------------------


@dataclass
class KnowledgeGraph:
    """Ordered unique node strings plus directed labeled edges.

    Edges are (src, label, dst) with node indices; self-edges and multiple
    edges on the same ordered pair are rejected.
    """

    nodes: list[str] = field(default_factory=list)
    edges: list[tuple[int, str, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if any(not isinstance(n, str) or not n for n in self.nodes):
            raise DataError("graph nodes must be non-empty strings")
        if len(set(self.nodes)) != len(self.nodes):
            raise DataError("graph node strings must be unique")
        seen_pairs: set[tuple[int, int]] = set()
        n = len(self.nodes)
        for src, label, dst in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise DataError(f"edge ({src}, {label!r}, {dst}) references a missing node")
            if src == dst:
                raise DataError(f"self-edge on node {self.nodes[src]!r} is not allowed")
            if not label:
                raise DataError("edge labels must be non-empty")
            if (src, dst) in seen_pairs:
                raise DataError(
                    f"multiple edges between nodes {src} and {dst}; "
                    "at most one edge per ordered pair"
                )
            seen_pairs.add((src, dst))

    def edge_label(self, src: int, dst: int) -> str | None:
        for s, label, d in self.edges:
            if s == src and d == dst:
                return label
        return None


def graph_to_triples(g: KnowledgeGraph) -> list[Triple]:
    """Flatten a graph to (subject, predicate, object) string triples."""
    return [(g.nodes[s], label, g.nodes[d]) for s, label, d in g.edges]


def triples_to_graph(triples: list[Triple] | list[list[str]]) -> KnowledgeGraph:
    """Build a graph from triples; nodes ordered by first appearance.

    Duplicate node strings merge into one node. The same ordered node pair
    appearing with two different predicates is rejected.
    """
    nodes: list[str] = []
    index: dict[str, int] = {}
    edges: list[tuple[int, str, int]] = []
    pair_label: dict[tuple[int, int], str] = {}

    def node_id(name: str) -> int:
        if not name:
            raise DataError("triple subject/object must be non-empty")
        if name not in index:
            index[name] = len(nodes)
            nodes.append(name)
        return index[name]

    for t in triples:
        if len(t) != 3:
            raise DataError(f"triple must have 3 elements, got {t!r}")
        subj, pred, obj = t
        s, d = node_id(subj), node_id(obj)
        if s == d:
            raise DataError(f"triple {t!r} relates a node to itself")
        if (s, d) in pair_label:
            if pair_label[(s, d)] != pred:
                raise DataError(
                    f"conflicting predicates {pair_label[(s, d)]!r} and {pred!r} "
                    f"for pair ({subj!r}, {obj!r})"
                )
            continue
        pair_label[(s, d)] = pred
        edges.append((s, pred, d))
    return KnowledgeGraph(nodes=nodes, edges=edges)


# ---------------------------------------------------------------------------
# Node serialization
# ---------------------------------------------------------------------------


def serialize_nodes(nodes: list[str] | KnowledgeGraph, n_max: int) -> str:
    """Render node strings as one token string with exactly n_max slots.

    Format: pad token, slots joined by the separator token (missing slots
    filled with the no-node token), closed by the end token.
    """
    if isinstance(nodes, KnowledgeGraph):
        nodes = nodes.nodes
    if len(nodes) > n_max:
        raise CapacityError(f"{len(nodes)} nodes exceed the {n_max}-slot capacity")
    slots = list(nodes) + [NO_NODE] * (n_max - len(nodes))
    sep = f" {SPECIALS.node_sep} "
    return f"{SPECIALS.pad} {sep.join(slots)} {SPECIALS.eos}"


def deserialize_nodes(s: str, n_max: int) -> list[str]:
    """Parse a (possibly malformed) node token string back into n_max slots.

    Splits on the separator token, strips pad/end tokens, truncates or pads
    with the no-node token. Never raises: malformed input degrades to fewer
    or empty slots.
    """
    tokens = s.split()
    if SPECIALS.eos in tokens:
        tokens = tokens[: tokens.index(SPECIALS.eos)]
    tokens = [t for t in tokens if t != SPECIALS.pad]
    segments: list[list[str]] = [[]]
    for tok in tokens:
        if tok == SPECIALS.node_sep:
            segments.append([])
        else:
            segments[-1].append(tok)
    slots: list[str] = []
    drop = {SPECIALS.no_node, SPECIALS.no_edge, SPECIALS.unk}
    for seg in segments:
        words = [t for t in seg if t not in drop]
        slots.append(" ".join(words) if words else NO_NODE)
    slots = slots[:n_max]
    slots += [NO_NODE] * (n_max - len(slots))
    return slots


def active_slots(slots: list[str]) -> list[bool]:
    """True for slots holding a real node string."""
    return [s != NO_NODE and bool(s) for s in slots]


# ---------------------------------------------------------------------------
# Adjacency targets
# ---------------------------------------------------------------------------


@dataclass
class AdjacencyTargets:
    """n x n grid of edge labels (or the no-edge marker) plus a loss mask.

    The mask never includes diagonal cells or cells touching an empty node
    slot; sparsification may drop no-edge cells but never a real edge.
    """

    n: int
    labels: list[list[str]]
    mask: np.ndarray  # bool (n, n)

    def masked_cells(self) -> list[tuple[int, int, str]]:
        """(i, j, label) for every mask-true cell, row-major order."""
        out = []
        for i in range(self.n):
            for j in range(self.n):
                if self.mask[i, j]:
                    out.append((i, j, self.labels[i][j]))
        return out

    def real_edge_cells(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j, lab in self.masked_cells() if lab != NO_EDGE]


def build_adjacency(
    g: KnowledgeGraph, n_max: int, node_order: list[int] | None = None
) -> AdjacencyTargets:
    """Fill the n_max x n_max edge-label grid for a graph.

    node_order[i] gives the slot of node i (defaults to identity, i.e.
    first-appearance order). Cells on the diagonal or touching an
    unoccupied slot are excluded from the mask.
    """
    k = len(g.nodes)
    if node_order is None:
        node_order = list(range(k))
    if len(node_order) != k or len(set(node_order)) != k:
        raise ValueError("node_order must assign each node a distinct slot")
    if any(not (0 <= s < n_max) for s in node_order):
        raise ValueError(f"node_order slot out of range for {n_max} slots")

    labels = [[NO_EDGE] * n_max for _ in range(n_max)]
    occupied = np.zeros(n_max, dtype=bool)
    for slot in node_order:
        occupied[slot] = True
    for src, label, dst in g.edges:
        labels[node_order[src]][node_order[dst]] = label
    mask = occupied[:, None] & occupied[None, :]
    np.fill_diagonal(mask, False)
    return AdjacencyTargets(n=n_max, labels=labels, mask=mask)


def sparsify_adjacency(
    adj: AdjacencyTargets, k_noedge: int, rng: np.random.Generator
) -> AdjacencyTargets:
    """Keep every real-edge cell and a uniform sample of k_noedge no-edge cells."""
    if k_noedge < 0:
        raise ValueError("k_noedge must be >= 0")
    noedge_cells = [
        (i, j) for i, j, lab in adj.masked_cells() if lab == NO_EDGE
    ]
    keep = min(k_noedge, len(noedge_cells))
    mask = np.zeros_like(adj.mask)
    for i, j in adj.real_edge_cells():
        mask[i, j] = True
    if keep:
        chosen = rng.choice(len(noedge_cells), size=keep, replace=False)
        for c in chosen:
            i, j = noedge_cells[int(c)]
            mask[i, j] = True
    return AdjacencyTargets(n=adj.n, labels=adj.labels, mask=mask)


# ---------------------------------------------------------------------------
# Dataset records
# ---------------------------------------------------------------------------


@dataclass
class Example:
    """One dataset record: an input text and its reference graph."""

    text: str
    graph: KnowledgeGraph


def _has_isolated_nodes(g: KnowledgeGraph) -> bool:
    used = {i for s, _, d in g.edges for i in (s, d)}
    return len(used) < len(g.nodes)


def example_to_record(ex: Example) -> dict:
    record: dict = {
        "text": ex.text,
        "triples": [list(t) for t in graph_to_triples(ex.graph)],
    }
    # Triples alone cannot express edge-free nodes; keep the node list when
    # it carries extra information.
    if _has_isolated_nodes(ex.graph):
        record["nodes"] = list(ex.graph.nodes)
    return record


def record_to_example(record: dict, normalize: bool = True) -> Example:
    if "text" not in record:
        raise DataError("dataset record is missing the 'text' field")
    norm = normalize_text if normalize else (lambda s: s)
    text = norm(str(record["text"]))
    triples = [
        tuple(norm(str(e)) for e in t) for t in record.get("triples", [])
    ]
    graph = triples_to_graph(triples)
    if "nodes" in record:
        names = [norm(str(n)) for n in record["nodes"]]
        if set(graph.nodes) - set(names):
            raise DataError("record 'nodes' field misses nodes used by triples")
        order = {name: i for i, name in enumerate(names)}
        remap = {old: order[name] for old, name in enumerate(graph.nodes)}
        edges = [(remap[s], lab, remap[d]) for s, lab, d in graph.edges]
        graph = KnowledgeGraph(nodes=names, edges=edges)
    return Example(text=text, graph=graph)


def write_dataset(path: str | Path, examples: list[Example]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_record(ex), ensure_ascii=False) + "\n")


def read_dataset(path: str | Path, normalize: bool = True) -> list[Example]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataError(f"{path}:{lineno}: invalid JSON: {err}") from err
            try:
                examples.append(record_to_example(record, normalize=normalize))
            except DataError as err:
                raise DataError(f"{path}:{lineno}: {err}") from err
    return examples
