"""Transaction, itemset and rule data model plus the interestingness measures.

Items are ``feature=level`` pairs. Itemsets keep their items sorted by the
rendered string, which fixes the total order the Apriori join step relies on.
Metrics are always derived from integer counts; rounding only happens when a
report is written (see :func:`round_half_away`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Iterator


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


@dataclass(frozen=True, order=False)
class Item:
    feature: str
    level: str

    def __str__(self) -> str:
        return f"{self.feature}={self.level}"

    def __lt__(self, other: "Item") -> bool:
        return str(self) < str(other)


def canonical_item(feature: str, level: str) -> Item:
    """Build an :class:`Item` with a lowercased feature name.

    >>> str(canonical_item("PEAK", "no"))
    'peak=no'
    """
    if not feature or not str(feature).strip():
        raise ValidationError("item feature must be non-empty")
    if level is None or not str(level).strip():
        raise ValidationError(f"item level for {feature!r} must be non-empty")
    return Item(str(feature).strip().lower(), str(level).strip())


def parse_item(text: str) -> Item:
    feature, sep, level = text.partition("=")
    if not sep:
        raise ValidationError(f"not a feature=level item: {text!r}")
    return canonical_item(feature, level)


@dataclass(frozen=True)
class Itemset:
    """Sorted, duplicate-free collection of items."""

    items: tuple[Item, ...] = ()

    def __post_init__(self) -> None:
        canon = tuple(sorted(set(self.items), key=str))
        object.__setattr__(self, "items", canon)

    @classmethod
    def of(cls, *items: Item | str) -> "Itemset":
        return cls(tuple(i if isinstance(i, Item) else parse_item(i) for i in items))

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self.items)

    def __contains__(self, item: object) -> bool:
        return item in self.items

    def __str__(self) -> str:
        return "{" + ", ".join(str(i) for i in self.items) + "}"

    def issubset(self, other: "Itemset") -> bool:
        return set(self.items) <= set(other.items)

    def key(self) -> tuple[str, ...]:
        return tuple(str(i) for i in self.items)


def itemset_union(a: Itemset, b: Itemset) -> Itemset:
    return Itemset(a.items + b.items)


@dataclass(frozen=True)
class Transaction:
    """One event's items. With a ``class_feature`` it must hold exactly one class item."""

    id: str
    items: Itemset
    class_feature: str | None = None

    def __post_init__(self) -> None:
        if self.class_feature is None:
            return
        n_class = sum(1 for i in self.items if i.feature == self.class_feature)
        if n_class != 1:
            raise ValidationError(
                f"transaction {self.id!r} has {n_class} {self.class_feature} items, expected 1"
            )

    @property
    def class_item(self) -> Item | None:
        return next((i for i in self.items if i.feature == self.class_feature), None)


@dataclass(frozen=True)
class TransactionDatabase:
    transactions: tuple[Transaction, ...]
    item_universe: tuple[Item, ...] = field(init=False)

    def __post_init__(self) -> None:
        universe = {i for t in self.transactions for i in t.items}
        object.__setattr__(self, "item_universe", tuple(sorted(universe, key=str)))

    @classmethod
    def from_itemsets(
        cls, rows: Iterable[Iterable[Item | str]], class_feature: str | None = None
    ) -> "TransactionDatabase":
        return cls(
            tuple(
                Transaction(str(k), Itemset.of(*row), class_feature)
                for k, row in enumerate(rows, 1)
            )
        )

    @property
    def n(self) -> int:
        return len(self.transactions)

    def __len__(self) -> int:
        return len(self.transactions)


@dataclass(frozen=True)
class AssociationRule:
    """A class rule ``antecedent -> consequent`` with exact counts.

    ``count`` is the number of transactions holding antecedent and consequent,
    ``antecedent_count`` and ``consequent_count`` are the marginal counts and
    ``n`` the database size. The float metrics are derived from these.
    """

    antecedent: Itemset
    consequent: Item
    count: int
    antecedent_count: int
    consequent_count: int
    n: int
    support: float = field(init=False)
    confidence: float = field(init=False)
    lift: float = field(init=False)

    def __post_init__(self) -> None:
        if self.consequent in self.antecedent:
            raise ValidationError("consequent may not appear in the antecedent")
        s, c, lift = compute_metrics(
            self.antecedent_count, self.count, self.consequent_count, self.n
        )
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "confidence", c)
        object.__setattr__(self, "lift", lift)

    @property
    def order(self) -> int:
        return len(self.antecedent) + 1

    def exact(self) -> tuple[Fraction, Fraction, Fraction]:
        """Support, confidence and lift as exact fractions."""
        return (
            Fraction(self.count, self.n),
            Fraction(self.count, self.antecedent_count),
            Fraction(self.count * self.n, self.antecedent_count * self.consequent_count),
        )

    def __str__(self) -> str:
        return f"{self.antecedent} => {{{self.consequent}}}"


@dataclass(frozen=True)
class MiningParams:
    min_support: float = 0.1
    min_confidence: float = 0.1
    minlen: int = 3
    maxlen: int = 5
    class_feature: str = "nv_severity"

    def __post_init__(self) -> None:
        if not 0 < self.min_support <= 1:
            raise ValidationError(f"min_support must be in (0, 1], got {self.min_support}")
        if not 0 < self.min_confidence <= 1:
            raise ValidationError(
                f"min_confidence must be in (0, 1], got {self.min_confidence}"
            )
        if not 2 <= self.minlen <= self.maxlen:
            raise ValidationError(
                f"need 2 <= minlen <= maxlen, got minlen={self.minlen} maxlen={self.maxlen}"
            )


def compute_metrics(count_a: int, count_ab: int, count_b: int, n: int) -> tuple[float, float, float]:
    """Support, confidence and lift of ``A -> B`` from integer counts.

    Parameters
    ----------
    count_a : int
        Transactions containing the antecedent.
    count_ab : int
        Transactions containing antecedent and consequent together.
    count_b : int
        Transactions containing the consequent.
    n : int
        Database size.

    Raises
    ------
    ValidationError
        If the counts cannot come from one database.
    """
    for name, v in (("count_a", count_a), ("count_ab", count_ab), ("count_b", count_b), ("n", n)):
        if isinstance(v, bool) or int(v) != v:
            raise ValidationError(f"{name} must be an integer, got {v!r}")
    if n <= 0 or count_a <= 0 or count_b <= 0:
        raise ValidationError("n, count_a and count_b must be positive")
    if not 0 <= count_ab <= min(count_a, count_b) or max(count_a, count_b) > n:
        raise ValidationError(
            f"inconsistent counts: count_a={count_a} count_ab={count_ab} "
            f"count_b={count_b} n={n}"
        )
    support = count_ab / n
    confidence = count_ab / count_a
    lift = (count_ab * n) / (count_a * count_b)
    assert math.isfinite(lift)
    return support, confidence, lift


def round_half_away(value: float | Fraction, ndigits: int = 3) -> str:
    """Format ``value`` with ``ndigits`` decimals, halves rounded away from zero.

    Fractions are rounded exactly; floats go through their shortest repr so
    ``0.0125`` renders as ``0.013``.
    """
    if not isinstance(value, Fraction):
        value = Fraction(Decimal(repr(float(value))))
    scaled = abs(value) * 10**ndigits
    whole = scaled.numerator // scaled.denominator
    if scaled - whole >= Fraction(1, 2):
        whole += 1
    sign = "-" if value < 0 and whole else ""
    digits = str(whole).rjust(ndigits + 1, "0")
    if ndigits == 0:
        return sign + digits
    return f"{sign}{digits[:-ndigits]}.{digits[-ndigits:]}"
