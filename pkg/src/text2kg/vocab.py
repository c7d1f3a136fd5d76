"""Word-level vocabulary with reserved special-token ids."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .graphs import SPECIALS, Example


@dataclass
class Vocab:
    """Bijective token <-> id mapping; the six special tokens come first."""

    tokens: list[str]
    id_of: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        self.id_of = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.id_of) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        if tuple(self.tokens[:6]) != SPECIALS.all():
            raise ValueError("vocabulary must start with the six special tokens")

    @property
    def size(self) -> int:
        return len(self.tokens)

    # Special ids, fixed by construction.
    @property
    def pad_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    @property
    def node_sep_id(self) -> int:
        return 2

    @property
    def no_node_id(self) -> int:
        return 3

    @property
    def no_edge_id(self) -> int:
        return 4

    @property
    def unk_id(self) -> int:
        return 5

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    def encode(self, s: str, allow_specials: bool = False) -> list[int]:
        """Whitespace-tokenize and map to ids; unknown tokens map to unk.

        Plain text never encodes to a special id: a literal special token in
        ordinary text maps to unk unless allow_specials is set (used for
        serialized targets).
        """
        specials = set(SPECIALS.all())
        ids = []
        for tok in s.split():
            if tok in specials and not allow_specials:
                ids.append(self.unk_id)
            else:
                ids.append(self.id_of.get(tok, self.unk_id))
        return ids

    def decode(self, ids: list[int]) -> str:
        return " ".join(self.tokens[i] for i in ids)

    def oov_count(self, s: str) -> int:
        """Number of whitespace tokens of s absent from the vocabulary."""
        return sum(1 for tok in s.split() if tok not in self.id_of)


def build_vocab(examples: list[Example]) -> Vocab:
    """Collect whitespace tokens of texts, node strings and edge labels.

    Ordering is deterministic: the six specials, then tokens by descending
    frequency with lexicographic tie-break.
    """
    if not examples:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for ex in examples:
        counts.update(ex.text.split())
        for node in ex.graph.nodes:
            counts.update(node.split())
        for _, label, _ in ex.graph.edges:
            counts.update(label.split())
    for special in SPECIALS.all():
        counts.pop(special, None)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab(tokens=list(SPECIALS.all()) + [tok for tok, _ in ordered])
