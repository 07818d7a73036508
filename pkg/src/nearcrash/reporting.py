"""Deterministic CSV writers for frequency tables, rule tables and summaries.

Every writer emits a one-line header, ``\\n`` line endings and fixed number
formatting (half-away-from-zero rounding of the exact rational metrics), so
the same inputs always give byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

from nearcrash.apriori import RuleSummary, rank_rules, summarize_rules
from nearcrash.itemize import FrequencyRow, item_frequencies
from nearcrash.model import AssociationRule, Item, Itemset, TransactionDatabase, parse_item, round_half_away

EMPTY_CELL = "--"


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def metric_cells(rule: AssociationRule) -> tuple[str, str, str]:
    s, c, lift = rule.exact()
    return round_half_away(s, 3), round_half_away(c, 3), round_half_away(lift, 3)


def write_variable_frequencies(path: str | Path, rows: Iterable[FrequencyRow]) -> Path:
    """Per-variable level counts with percentages to two decimals."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["variable", "level", "count", "percentage"])
        for r in rows:
            w.writerow([r.variable, r.level, r.count, round_half_away(r.share * 100, 2) + "%"])
    return path


def item_frequency_rows(db: TransactionDatabase | None, scope: str, top_n: int = 20) -> list[list[str]]:
    if db is None:
        return []
    return [
        [scope, str(item), str(count), round_half_away(freq, 4)]
        for item, count, freq in item_frequencies(db, scope, top_n)
    ]


def write_item_frequencies(
    path: str | Path,
    db: TransactionDatabase | None,
    scopes: Sequence[str] = ("all", "trivial", "non_trivial"),
    top_n: int = 20,
) -> Path:
    """Top ``top_n`` items per scope; one block of rows per scope."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["scope", "item", "count", "relative_frequency"])
        for scope in scopes:
            w.writerows(item_frequency_rows(db, scope, top_n))
    return path


def rule_table_rows(rules: Sequence[AssociationRule], maxlen: int) -> list[list[str]]:
    """Rows of a top-rule table, grouped by rule length (shortest first).

    Each block keeps the incoming (ranked) order.
    """
    width = maxlen - 1
    blocks = [
        ("2-item", [r for r in rules if r.order == 2]),
        ("3-item", [r for r in rules if r.order == 3]),
        (f"4-{maxlen}-item" if maxlen > 4 else "4-item", [r for r in rules if r.order > 3]),
    ]
    rows = []
    idx = 0
    for label, block in blocks:
        for r in block:
            idx += 1
            items = [str(i) for i in r.antecedent]
            items += [EMPTY_CELL] * (width - len(items))
            rows.append([str(idx), label, *items, *metric_cells(r), str(r.count)])
    return rows


def write_rule_table(
    path: str | Path, rules: Sequence[AssociationRule], consequent: Item | None = None, maxlen: int = 5
) -> Path:
    if consequent is not None:
        rules = [r for r in rules if r.consequent == consequent]
    path = Path(path)
    header = ["rule_index", "group", *[f"item_{k}" for k in range(1, maxlen)], "S", "C", "L", "CT"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(header)
        w.writerows(rule_table_rows(rules, maxlen))
    return path


def write_scatter_data(path: str | Path, rules: Iterable[AssociationRule]) -> Path:
    """One row per rule: support, confidence, lift, order, consequent, antecedent."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["support", "confidence", "lift", "order", "consequent", "antecedent"])
        for r in rank_rules(rules, "lift"):
            w.writerow([*metric_cells(r), r.order, str(r.consequent), format_itemset(r.antecedent)])
    return path


def summary_rows(summaries: Iterable[RuleSummary]) -> list[list[str]]:
    rows = []
    for s in summaries:
        cells = [str(s.consequent), str(s.n_rules)]
        for stats in (s.support, s.confidence, s.lift):
            cells += [round_half_away(v, 2) for v in stats]
        rows.append(cells)
    return rows


SUMMARY_HEADER = [
    "consequent",
    "n_rules",
    "support_mean",
    "support_min",
    "support_max",
    "confidence_mean",
    "confidence_min",
    "confidence_max",
    "lift_mean",
    "lift_min",
    "lift_max",
]


def write_rule_summary(path: str | Path, rules: Iterable[AssociationRule]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(SUMMARY_HEADER)
        w.writerows(summary_rows(summarize_rules(rules)))
    return path


# ---------------------------------------------------------------------------
# full-precision rule exchange between the `mine` and `report` commands

RULE_COLUMNS = ["consequent", "antecedent", "order", "count", "antecedent_count", "consequent_count", "n"]
ITEM_SEP = " & "


def format_itemset(itemset: Itemset) -> str:
    return ITEM_SEP.join(str(i) for i in itemset)


def write_rules(path: str | Path, rules: Iterable[AssociationRule]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(RULE_COLUMNS)
        for r in rules:
            w.writerow(
                [str(r.consequent), format_itemset(r.antecedent), r.order, r.count,
                 r.antecedent_count, r.consequent_count, r.n]
            )
    return path


def read_rules(path: str | Path) -> list[AssociationRule]:
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for row in csv.DictReader(fh):
            ante = Itemset.of(*row["antecedent"].split(ITEM_SEP)) if row["antecedent"] else Itemset()
            out.append(
                AssociationRule(
                    ante,
                    parse_item(row["consequent"]),
                    int(row["count"]),
                    int(row["antecedent_count"]),
                    int(row["consequent_count"]),
                    int(row["n"]),
                )
            )
    return out
