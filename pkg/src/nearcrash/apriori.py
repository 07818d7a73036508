"""Level-wise Apriori with class-constrained rule generation.

Support counting is vertical: each item carries a bitmask of the transactions
that contain it, and an itemset's count is the popcount of the AND of its
items' masks. The masks can be built per shard of transactions and OR-ed back
together, so counts do not depend on how the database is partitioned.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from nearcrash.model import (
    AssociationRule,
    Item,
    Itemset,
    MiningParams,
    TransactionDatabase,
    ValidationError,
)


def _popcount(x: int) -> int:
    return x.bit_count()


def item_masks(db: TransactionDatabase) -> dict[Item, int]:
    masks: dict[Item, int] = defaultdict(int)
    for pos, t in enumerate(db.transactions):
        bit = 1 << pos
        for item in t.items:
            masks[item] |= bit
    return dict(masks)


def _count(itemset: Iterable[Item], masks: Mapping[Item, int], full: int) -> int:
    m = full
    for item in itemset:
        m &= masks.get(item, 0)
        if not m:
            return 0
    return _popcount(m)


def count_support(db: TransactionDatabase, candidates: Iterable[Itemset]) -> dict[Itemset, int]:
    """Number of transactions containing each candidate (the empty set counts N)."""
    masks = item_masks(db)
    full = (1 << db.n) - 1
    return {c: _count(c, masks, full) for c in candidates}


def join_step(frequent: Iterable[Itemset]) -> list[Itemset]:
    """Merge pairs of (k-1)-itemsets that agree on their first k-2 items."""
    prev = sorted({f.key(): f for f in frequent}.items())
    by_prefix: dict[tuple[str, ...], list[Itemset]] = defaultdict(list)
    for key, f in prev:
        by_prefix[key[:-1]].append(f)
    out: dict[tuple[str, ...], Itemset] = {}
    for group in by_prefix.values():
        for a, b in combinations(group, 2):
            cand = Itemset(a.items + b.items[-1:])
            out[cand.key()] = cand
    return [out[k] for k in sorted(out)]


def prune_step(candidates: Iterable[Itemset], frequent: Iterable[Itemset]) -> list[Itemset]:
    """Drop candidates with an infrequent (k-1)-subset."""
    known = {f.key() for f in frequent}
    kept = []
    for c in candidates:
        keys = c.key()
        if len(keys) <= 1 or all(
            keys[:i] + keys[i + 1 :] in known for i in range(len(keys))
        ):
            kept.append(c)
    return kept


@dataclass
class FrequentItemsetTable:
    """Frequent itemsets by size with their exact transaction counts."""

    n: int
    levels: dict[int, dict[Itemset, int]] = field(default_factory=dict)
    min_support: float = 0.0

    def __iter__(self):
        for k in sorted(self.levels):
            yield from self.levels[k].items()

    def __len__(self) -> int:
        return sum(len(v) for v in self.levels.values())

    def __contains__(self, itemset: Itemset) -> bool:
        return itemset in self.levels.get(len(itemset), {})

    def count(self, itemset: Itemset) -> int:
        if len(itemset) == 0:
            return self.n
        return self.levels[len(itemset)][itemset]

    def as_dict(self) -> dict[Itemset, int]:
        return dict(iter(self))


def _is_frequent(count: int, n: int, min_support: float) -> bool:
    return count / n >= min_support


def mine_frequent(db: TransactionDatabase, min_support: float, max_size: int) -> FrequentItemsetTable:
    """All itemsets of size <= ``max_size`` whose support reaches ``min_support``."""
    if db.n == 0:
        raise ValidationError("cannot mine an empty database")
    if not 0 < min_support <= 1:
        raise ValidationError(f"min_support must be in (0, 1], got {min_support}")
    if max_size < 1:
        raise ValidationError(f"max_size must be >= 1, got {max_size}")
    masks = item_masks(db)
    full = (1 << db.n) - 1
    table = FrequentItemsetTable(db.n, min_support=min_support)

    level: dict[Itemset, int] = {}
    for item in db.item_universe:
        c = _popcount(masks[item])
        if _is_frequent(c, db.n, min_support):
            level[Itemset((item,))] = c
    k = 1
    while level:
        table.levels[k] = level
        if k == max_size:
            break
        k += 1
        candidates = prune_step(join_step(level), level)
        level = {}
        for cand in candidates:
            c = _count(cand, masks, full)
            if _is_frequent(c, db.n, min_support):
                level[cand] = c
    return table


def generate_class_rules(
    table: FrequentItemsetTable, db: TransactionDatabase, params: MiningParams
) -> list[AssociationRule]:
    """Rules ``Z \\ {c} -> c`` for frequent ``Z`` holding exactly one class item ``c``."""
    class_items = {i for i in db.item_universe if i.feature == params.class_feature}
    if not class_items:
        raise ValidationError(f"class feature {params.class_feature!r} not present in database")
    rules = []
    for size in range(params.minlen, params.maxlen + 1):
        for z, count in table.levels.get(size, {}).items():
            cls = [i for i in z if i in class_items]
            if len(cls) != 1:
                continue
            c = cls[0]
            antecedent = Itemset(tuple(i for i in z if i != c))
            a_count = table.count(antecedent)
            if count / a_count < params.min_confidence:
                continue
            rules.append(
                AssociationRule(antecedent, c, count, a_count, table.count(Itemset((c,))), table.n)
            )
    rules.sort(key=lambda r: (str(r.consequent), r.order, r.antecedent.key()))
    return rules


def mine_rules(db: TransactionDatabase, params: MiningParams) -> list[AssociationRule]:
    table = mine_frequent(db, params.min_support, params.maxlen)
    return generate_class_rules(table, db, params)


_KEYS = ("lift", "confidence", "support")


def rank_rules(
    rules: Iterable[AssociationRule],
    key: str = "lift",
    top_k: int | None = None,
    consequent: Item | None = None,
) -> list[AssociationRule]:
    """Sort rules descending by ``key``.

    Ties fall back to confidence, then support (both descending), then the
    antecedent's canonical rendering. ``top_k`` keeps at most that many rules
    per consequent.
    """
    if key not in _KEYS:
        raise ValidationError(f"rank key must be one of {_KEYS}")
    pool = [r for r in rules if consequent is None or r.consequent == consequent]

    # exact fractions keep the order stable under float noise
    def sort_key(r: AssociationRule):
        s, c, lift = r.exact()
        primary = {"support": s, "confidence": c, "lift": lift}[key]
        return (-primary, -c, -s, r.antecedent.key(), str(r.consequent))

    ranked = sorted(pool, key=sort_key)
    if top_k is None:
        return ranked
    seen: dict[Item, int] = defaultdict(int)
    out = []
    for r in ranked:
        if seen[r.consequent] < top_k:
            seen[r.consequent] += 1
            out.append(r)
    return out


@dataclass(frozen=True)
class RuleSummary:
    consequent: Item
    n_rules: int
    support: tuple[float, float, float]  # mean, min, max
    confidence: tuple[float, float, float]
    lift: tuple[float, float, float]


def summarize_rules(rules: Iterable[AssociationRule]) -> list[RuleSummary]:
    groups: dict[Item, list[AssociationRule]] = defaultdict(list)
    for r in rules:
        groups[r.consequent].append(r)

    def stats(values: Sequence[float]) -> tuple[float, float, float]:
        return (fmean(values), min(values), max(values))

    return [
        RuleSummary(
            c,
            len(g),
            stats([r.support for r in g]),
            stats([r.confidence for r in g]),
            stats([r.lift for r in g]),
        )
        for c, g in sorted(groups.items(), key=lambda kv: str(kv[0]))
        if g
    ]
