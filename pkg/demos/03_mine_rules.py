# Class association rules on a small transaction database
#
# Every event becomes a set of "feature=level" items plus one severity item.
# Apriori finds the frequent itemsets, and the rules keep the severity item
# as the consequent.

# %%
from nearcrash.apriori import mine_frequent, mine_rules, rank_rules
from nearcrash.model import MiningParams, TransactionDatabase

rows = [
    ["median_type=curbed", "traveltime=longer than 2 hours", "nv_severity=non-trivial"],
    ["median_type=curbed", "traveltime=longer than 2 hours", "nv_severity=non-trivial"],
    ["median_type=curbed", "traveltime=less than 20 minutes", "nv_severity=trivial"],
    ["median_type=unprotected", "traveltime=less than 20 minutes", "nv_severity=trivial"],
    ["median_type=unprotected", "traveltime=less than 20 minutes", "nv_severity=trivial"],
    ["median_type=unprotected", "traveltime=longer than 2 hours", "nv_severity=non-trivial"],
    ["median_type=unprotected", "traveltime=less than 20 minutes", "nv_severity=trivial"],
    ["median_type=curbed", "traveltime=longer than 2 hours", "nv_severity=trivial"],
]
db = TransactionDatabase.from_itemsets(rows, class_feature="nv_severity")

# %%
table = mine_frequent(db, min_support=0.25, max_size=3)
for itemset, count in table:
    print(count, itemset.key())

# %%
# Rules need at least three items in total (two antecedent items plus the
# severity level). Support, confidence and lift are exact ratios of counts.

params = MiningParams(min_support=0.25, min_confidence=0.5, minlen=3, maxlen=3)
for r in rank_rules(mine_rules(db, params)):
    s, c, lift = r.exact()
    print(r.antecedent.key(), "->", r.consequent, f"S={float(s):.3f} C={float(c):.3f} L={float(lift):.3f}")
