from .recsys import (
    DatasetError,
    FactoredDataset,
    build_recsys_schedule,
    load_factored_dataset,
    load_standin,
    make_standin_dataset,
    standin_paths,
    write_dataset,
)
from .synthetic import GenerationError, SyntheticSpec, generate_synthetic_schedule, separated_basis, synthetic_problem
from .wcst import WCST_POLICIES, LinearRepLearner, WcstTrace, card_matrix, rule_schedule, wcst_run
