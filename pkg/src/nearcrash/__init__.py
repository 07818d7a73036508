"""Near-crash pattern mining: event extraction, road conflation and class rules."""

from nearcrash.model import (
    AssociationRule,
    Item,
    Itemset,
    MiningParams,
    Transaction,
    TransactionDatabase,
    ValidationError,
    canonical_item,
    compute_metrics,
    itemset_union,
)

__version__ = "0.1.0"

__all__ = [
    "AssociationRule",
    "Item",
    "Itemset",
    "MiningParams",
    "Transaction",
    "TransactionDatabase",
    "ValidationError",
    "canonical_item",
    "compute_metrics",
    "itemset_union",
]
