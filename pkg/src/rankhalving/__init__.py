"""Budget-efficient architecture search on tabular benchmarks.

The library maintains a pyramid of candidates trained to increasing epoch
budgets, promotes the best fraction level by level (newcomers compete with
previously terminated candidates, which can resume), trains a pairwise
ranking predictor on the non-uniform pool, and proposes new candidates from
a ranked universe. Every training epoch is charged to an append-only
ledger, which is the single source of reported search costs.
"""

from .spaces import (
    Architecture,
    SearchSpaceSpec,
    SpaceError,
    canonical_key,
    enumerate_space,
    sample,
    space_size,
    subsample_universe,
)
from .bench import (
    BenchFormatError,
    BenchmarkTable,
    BenchRecord,
    EpochError,
    UnknownArchitectureError,
    load_benchmark,
    save_benchmark,
)
from .budget import BudgetLedger, Charge, LedgerError
from .synthetic import PRIOR_METRIC, default_synthetic_space, generate_synthetic
from .pyramid import (
    ContextItem,
    PoolEntry,
    Pyramid,
    PyramidError,
    Schedule,
    load_pyramid,
    pyramid_pass,
    pairwise_context,
    promote_count,
    save_pyramid,
)
from .ranker import (
    PairLabel,
    RankerConfig,
    RankerError,
    RankerModel,
    forward,
    generate_pairs,
    global_rank,
    init_model,
    load_model,
    propose,
    save_model,
)
from .ranker_train import TrainConfig, TrainingError, TrainResult, train
from .search import SearchConfig, SearchResult, closed_form_budget, run_search
from .baselines import (
    early_stop_search,
    full_budget_search,
    prior_only,
    random_search,
)
from .analysis import (
    ConstantInputError,
    prior_correlation,
    spearman,
    spearman_trajectory,
    survival_fraction,
)

__version__ = "0.1.0"
