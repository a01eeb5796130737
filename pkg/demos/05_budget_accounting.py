"""Budget closed forms: the exact epoch cost of a configuration, computable
before any search runs.

Promotion counts never look at accuracies, so the whole charging cascade
can be replayed on counts alone. Every real run asserts its ledger against
this closed form, which makes budget accounting a hard invariant rather
than a reporting convention.
"""

from rankhalving import Schedule, SearchConfig, closed_form_budget
from rankhalving.ranker_train import TrainConfig

DEFAULTS = {
    "12-epoch benchmark ": ((1, 2, 3, 12), 300),
    "200-epoch benchmark": ((10, 50, 100, 200), 300),
    "sparse {12,36,108} ": ((12, 36, 108), 600),
    "50-epoch benchmark ": ((10, 20, 30, 50), 150),
}

print("default configurations (init 48, proposals of 30, ratios 1/3 then 1/2):")
for name, (epochs, pool) in DEFAULTS.items():
    cfg = SearchConfig(
        schedule=Schedule(epochs=epochs,
                          move_ratios=(1 / 3,) + (0.5,) * (len(epochs) - 1)),
        max_pool_size=pool,
        universe_size=pool + 100,
    )
    naive = pool // 3 * epochs[-1]  # fully training every trained candidate
    budget = closed_form_budget(cfg)
    print(f"  {name} E={str(epochs):>20} pool {pool:>3}: "
          f"{budget:>5} epochs  ({budget / naive:.0%} of uniform full training)")

print("\nmove-ratio sweep on the 200-epoch schedule (ratio for levels >= 1):")
for r in (0.3, 0.4, 0.5, 0.6, 0.7):
    cfg = SearchConfig(
        schedule=Schedule(epochs=(10, 50, 100, 200), move_ratios=(1 / 3, r, r, r)),
        max_pool_size=300,
        universe_size=400,
        trainer=TrainConfig(epochs=2),
    )
    print(f"  r = {r}: {closed_form_budget(cfg):>5} epochs")

print("\nschedule sweep at ratio 1/2 (budget follows the epoch ladder):")
for epochs in ((10, 50, 200), (10, 50, 100, 200), (5, 25, 50, 200), (5, 10, 25, 200)):
    cfg = SearchConfig(
        schedule=Schedule(epochs=epochs,
                          move_ratios=(1 / 3,) + (0.5,) * (len(epochs) - 1)),
        max_pool_size=300,
        universe_size=400,
    )
    print(f"  E = {str(epochs):>22}: {closed_form_budget(cfg):>5} epochs")
