"""Drive the halving pyramid by hand: initialization, an update round, and a
resumed candidate.

Level 0 holds untrained candidates ranked by a train-free prior; level l
holds candidates trained exactly schedule.epochs[l-1] epochs. Each pass
promotes the best fraction of every level, newcomers competing against
previously terminated residents, and charges the ledger only for the epoch
deltas actually trained.
"""

from rankhalving import (
    BudgetLedger,
    Pyramid,
    Schedule,
    canonical_key,
    default_synthetic_space,
    generate_synthetic,
    pyramid_pass,
    sample,
)

space = default_synthetic_space()
table = generate_synthetic(space, 600, rank_stability=0.7, noise=0.01,
                           max_epoch=12, rng_seed=1)

schedule = Schedule(epochs=(1, 2, 3, 12), move_ratios=(1 / 3, 0.5, 0.5, 0.5))
pyramid = Pyramid(schedule=schedule)
ledger = BudgetLedger()

# 138 distinct table architectures: 48 to initialize, then 3 rounds of 30
keys = table.sorted_keys()
archs = [table.records[k].arch for k in keys[:138]]
prior = lambda a: table.prior_score(a, "mag_synth")


def show(title):
    pops = [len(lvl) for lvl in pyramid.levels]
    print(f"{title}: level populations {pops}, "
          f"budget {ledger.total_epochs} epochs")


pyramid.insert_level0([(a, prior(a)) for a in archs[:48]], arrival_round=0)
pyramid_pass(pyramid, ledger, table, 48)
show("after initialization (48 inserted)")
# 16 candidates trained 1 epoch, 8 of those to 2, 4 to 3, 2 fully: 46 epochs

# Three update rounds of 30. A candidate "resumes" when it sat terminated at
# a level for at least one full round and is then promoted past newcomers,
# paying only the epoch delta.
level_history = {key: pyramid.levels[lv][key].level
                 for lv in range(5) for key in pyramid.levels[lv]}
resumed = {}
offset = 48
for round_no in (1, 2, 3):
    batch = archs[offset:offset + 30]
    offset += 30
    pyramid.insert_level0([(a, prior(a)) for a in batch], arrival_round=round_no)
    pyramid_pass(pyramid, ledger, table, 30)
    show(f"after update round {round_no} (30 inserted)")
    for lv in range(5):
        for key, entry in pyramid.levels[lv].items():
            old = level_history.get(key)
            # trained before (level >= 1), terminated, now promoted again
            if old is not None and old >= 1 and entry.level > old \
                    and entry.arrival_round < round_no:
                resumed.setdefault(key, round_no)
            level_history[key] = entry.level

print(f"\n{len(resumed)} previously terminated candidate(s) resumed training:")
for key, round_no in sorted(resumed.items())[:5]:
    charges = [(c.from_epoch, c.to_epoch) for c in ledger.charges if c.key == key]
    print(f"  {key[:12]}... resumed in round {round_no}, charges {charges}")

# nothing is ever discarded: every touched architecture is still pooled
assert len(pyramid) == 138
print("pool conserved:", len(pyramid), "entries;",
      len(pyramid.trained_entries()), "carry validation signal")
