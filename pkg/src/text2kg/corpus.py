"""Deterministic synthetic corpus of (text, graph) pairs.

Each example is built from relation templates over entity pools: sampled
edges become sentences, optional mention sentences introduce edge-free
nodes, and the shuffled sentence concatenation is the input text. The
node-set of every example is unique across the whole corpus, so the
train/dev/test splits never share an entity combination.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .graphs import Example, KnowledgeGraph, normalize_text

# Structural capacity of the downstream model; spec files may ask for less,
# never for more.
NODE_CAPACITY = 8
EDGE_CAPACITY = 7

MIN_RELATIONS = 10
MAX_RELATIONS = 30


@dataclass
class RelationSpec:
    name: str
    template: str  # contains {s} and {o}
    domain: str  # entity pool for the subject
    range: str  # entity pool for the object


@dataclass
class CorpusSpec:
    relations: list[RelationSpec]
    pools: dict[str, list[str]]
    counts: dict[str, int] = field(
        default_factory=lambda: {"train": 200, "dev": 50, "test": 50}
    )
    min_nodes: int = 2
    max_nodes: int = NODE_CAPACITY
    min_edges: int = 1
    max_edges: int = EDGE_CAPACITY
    reuse_prob: float = 0.35
    mention_template: str = ""  # contains {e}; empty disables mention sentences

    def validate(self) -> None:
        if not (MIN_RELATIONS <= len(self.relations) <= MAX_RELATIONS):
            raise DataError(
                f"relation inventory must have {MIN_RELATIONS}-{MAX_RELATIONS} "
                f"relations, got {len(self.relations)}"
            )
        if self.max_nodes > NODE_CAPACITY:
            raise DataError(
                f"requested graphs of up to {self.max_nodes} nodes exceed the "
                f"capacity of {NODE_CAPACITY}"
            )
        if self.max_edges > EDGE_CAPACITY:
            raise DataError(
                f"requested graphs of up to {self.max_edges} edges exceed the "
                f"capacity of {EDGE_CAPACITY}"
            )
        if not (2 <= self.min_nodes <= self.max_nodes):
            raise DataError("node range must satisfy 2 <= min_nodes <= max_nodes")
        if not (1 <= self.min_edges <= self.max_edges):
            raise DataError("edge range must satisfy 1 <= min_edges <= max_edges")
        if self.min_nodes > self.max_nodes:
            raise DataError("min_nodes exceeds max_nodes")
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise DataError("duplicate relation names in corpus spec")
        for rel in self.relations:
            if "{s}" not in rel.template or "{o}" not in rel.template:
                raise DataError(f"template for {rel.name!r} must use {{s}} and {{o}}")
            for pool in (rel.domain, rel.range):
                if pool not in self.pools:
                    raise DataError(f"relation {rel.name!r} references unknown pool {pool!r}")
        if self.mention_template and "{e}" not in self.mention_template:
            raise DataError("mention_template must use {e}")
        if self.min_nodes > 2 * self.max_edges and not self.mention_template:
            raise DataError(
                "min_nodes cannot exceed twice max_edges without a mention_template"
            )
        for split in ("train", "dev", "test"):
            if self.counts.get(split, 0) < 0:
                raise DataError(f"negative example count for split {split!r}")


@dataclass
class Corpus:
    train: list[Example]
    dev: list[Example]
    test: list[Example]

    def splits(self) -> dict[str, list[Example]]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


def default_spec() -> CorpusSpec:
    """Built-in pools and 14 relations, all strings pre-normalized."""
    pools = {
        "person": [
            "Ada", "Noor", "Ravi", "Mei", "Tomas", "Leila", "Omar", "Ines",
            "Juan Reyes", "Sara Lind", "Kofi Mensah", "Elena Petrova",
            "Hana Sato", "Piotr Nowak", "Amara Diop", "Lucas Faro",
        ],
        "city": [
            "London", "Agra", "Sao Paulo", "Oslo", "Kyoto", "Quito",
            "Dakar", "Split", "Porto", "Hanoi", "Lagos", "Tartu",
        ],
        "country": [
            "India", "Norway", "Brazil", "Japan", "Ecuador", "Senegal",
            "Portugal", "Vietnam",
        ],
        "org": [
            "Orbit Labs", "Vega Press", "Nimbus Works", "Delta Forge",
            "Iris Institute", "Pico Studio", "Atlas Group", "Lyra College",
            "Mori Foundry", "Zenit Bank",
        ],
        "language": ["Hindi", "Norwegian", "Portuguese", "Japanese", "Wolof", "Estonian"],
        "instrument": ["piano", "sitar", "violin", "drums", "flute", "guitar"],
    }
    relations = [
        RelationSpec("birth place", "{s} was born in {o} .", "person", "city"),
        RelationSpec("residence", "{s} lives in {o} .", "person", "city"),
        RelationSpec("employer", "{s} works at {o} .", "person", "org"),
        RelationSpec("founder of", "{s} founded {o} .", "person", "org"),
        RelationSpec("leader of", "{s} leads {o} .", "person", "org"),
        RelationSpec("located in", "{s} is located in {o} .", "org", "country"),
        RelationSpec("capital of", "{s} is the capital of {o} .", "city", "country"),
        RelationSpec("likes", "{s} likes {o} .", "person", "person"),
        RelationSpec("mentor of", "{s} mentored {o} .", "person", "person"),
        RelationSpec("spouse", "{s} is married to {o} .", "person", "person"),
        RelationSpec("plays", "{s} plays the {o} .", "person", "instrument"),
        RelationSpec("speaks", "{s} speaks {o} .", "person", "language"),
        RelationSpec("visited", "{s} visited {o} .", "person", "city"),
        RelationSpec("owner of", "{s} owns {o} .", "person", "org"),
    ]
    return CorpusSpec(relations=relations, pools=pools)


# ---------------------------------------------------------------------------
# Spec file format: flat "key = value" lines (see README for the key list)
# ---------------------------------------------------------------------------


def read_kv_file(path: str | Path) -> dict[str, str]:
    """Parse a flat key = value config file; '#' starts a comment line."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def load_corpus_spec(path: str | Path) -> CorpusSpec:
    kv = read_kv_file(path)
    try:
        relation_names = _split_list(kv.pop("relations"))
    except KeyError:
        raise DataError(f"{path}: corpus spec is missing the 'relations' key")
    pools: dict[str, list[str]] = {}
    relations: list[RelationSpec] = []
    spec = CorpusSpec(relations=relations, pools=pools)
    for name in relation_names:
        try:
            template = kv.pop(f"template.{name}")
            domain = kv.pop(f"domain.{name}")
            range_ = kv.pop(f"range.{name}")
        except KeyError as err:
            raise DataError(f"{path}: relation {name!r} is missing {err}") from err
        relations.append(
            RelationSpec(normalize_text(name), template, domain, range_)
        )
    for key in [k for k in kv if k.startswith("pool.")]:
        pools[key[len("pool."):]] = [normalize_text(e) for e in _split_list(kv.pop(key))]
    int_fields = {
        "train", "dev", "test", "min_nodes", "max_nodes", "min_edges", "max_edges",
    }
    for key in list(kv):
        value = kv.pop(key)
        if key in ("train", "dev", "test"):
            spec.counts[key] = int(value)
        elif key in int_fields:
            setattr(spec, key, int(value))
        elif key == "reuse_prob":
            spec.reuse_prob = float(value)
        elif key == "mention_template":
            spec.mention_template = value
        else:
            raise DataError(f"{path}: unknown corpus spec key {key!r}")
    spec.validate()
    return spec


def save_corpus_spec(spec: CorpusSpec, path: str | Path) -> None:
    lines = [f"relations = {', '.join(r.name for r in spec.relations)}"]
    for r in spec.relations:
        lines.append(f"template.{r.name} = {r.template}")
        lines.append(f"domain.{r.name} = {r.domain}")
        lines.append(f"range.{r.name} = {r.range}")
    for pool, entities in spec.pools.items():
        lines.append(f"pool.{pool} = {', '.join(entities)}")
    for split, count in spec.counts.items():
        lines.append(f"{split} = {count}")
    lines += [
        f"min_nodes = {spec.min_nodes}",
        f"max_nodes = {spec.max_nodes}",
        f"min_edges = {spec.min_edges}",
        f"max_edges = {spec.max_edges}",
        f"reuse_prob = {spec.reuse_prob}",
    ]
    if spec.mention_template:
        lines.append(f"mention_template = {spec.mention_template}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _sample_example(spec: CorpusSpec, rng: np.random.Generator) -> Example | None:
    n_edges = int(rng.integers(spec.min_edges, spec.max_edges + 1))
    n_nodes_target = int(rng.integers(spec.min_nodes, spec.max_nodes + 1))
    nodes: list[str] = []
    node_pool: dict[str, str] = {}
    edges: list[tuple[int, str, int]] = []
    used_pairs: set[tuple[int, int]] = set()
    sentences: list[str] = []

    def pick_entity(pool: str, exclude: set[str]) -> str | None:
        reuse = [n for n in nodes if node_pool[n] == pool and n not in exclude]
        if reuse and rng.random() < spec.reuse_prob:
            return reuse[int(rng.integers(len(reuse)))]
        fresh = [e for e in spec.pools[pool] if e not in exclude]
        if not fresh:
            return None
        return fresh[int(rng.integers(len(fresh)))]

    def node_id(name: str, pool: str) -> int:
        if name not in node_pool:
            node_pool[name] = pool
            nodes.append(name)
        return nodes.index(name)

    for _ in range(n_edges):
        placed = False
        for _attempt in range(12):
            rel = spec.relations[int(rng.integers(len(spec.relations)))]
            subj = pick_entity(rel.domain, exclude=set())
            if subj is None:
                continue
            obj = pick_entity(rel.range, exclude={subj})
            if obj is None:
                continue
            new = {subj, obj} - set(nodes)
            if len(nodes) + len(new) > spec.max_nodes:
                continue
            s, o = node_id(subj, rel.domain), node_id(obj, rel.range)
            if (s, o) in used_pairs:
                continue
            used_pairs.add((s, o))
            edges.append((s, rel.name, o))
            sentences.append(rel.template.format(s=subj, o=obj))
            placed = True
            break
        if not placed and len(edges) >= spec.min_edges:
            break
        if not placed:
            return None

    # Mention sentences introduce edge-free nodes up to the node target.
    if spec.mention_template:
        all_entities = [
            (e, pool) for pool, ents in spec.pools.items() for e in ents
        ]
        guard = 0
        while len(nodes) < n_nodes_target and guard < 40:
            guard += 1
            ent, pool = all_entities[int(rng.integers(len(all_entities)))]
            if ent in node_pool:
                continue
            node_id(ent, pool)
            sentences.append(spec.mention_template.format(e=ent))

    if not (spec.min_nodes <= len(nodes) <= spec.max_nodes):
        return None
    if not (spec.min_edges <= len(edges) <= spec.max_edges):
        return None
    order = rng.permutation(len(sentences))
    text = " ".join(sentences[i] for i in order)
    return Example(text=text, graph=KnowledgeGraph(nodes=nodes, edges=edges))


def generate_corpus(spec: CorpusSpec, seed: int) -> Corpus:
    """Generate the three splits; a pure function of (spec, seed).

    Every example's node set is unique across the corpus, which keeps the
    entity combinations of train, dev and test disjoint.
    """
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(11,)))
    seen_combos: set[frozenset[str]] = set()
    splits: dict[str, list[Example]] = {"train": [], "dev": [], "test": []}
    for split in ("train", "dev", "test"):
        want = spec.counts.get(split, 0)
        attempts = 0
        limit = max(200, want * 200)
        while len(splits[split]) < want:
            attempts += 1
            if attempts > limit:
                raise DataError(
                    f"could not generate {want} unique examples for split "
                    f"{split!r}; pools too small for the requested corpus"
                )
            ex = _sample_example(spec, rng)
            if ex is None:
                continue
            combo = frozenset(ex.graph.nodes)
            if combo in seen_combos:
                continue
            seen_combos.add(combo)
            splits[split].append(ex)
    return Corpus(**splits)
