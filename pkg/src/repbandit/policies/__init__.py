from .baselines import (
    POLICIES,
    baseline_independent_etc,
    baseline_non_adaptive,
    baseline_oracle,
    baseline_semi_oracle,
    global_basis,
    run_policy,
)
from .cdrepl import BasisUpdate, Event, PolicyRun, cd_repl_run, seq_repl_run
from .detection import DetectionPlan, DetectionResult, build_detection_plan, decide, detection_statistic, rep_cd_test
from .etc import rep_e_task, rep_t_task
from .params import (
    PolicyConfig,
    detection_budget,
    etc_rounds,
    initial_exploration_cycles,
    raw_n_det,
    rep_e_rounds,
    rep_t_rounds,
    xi_closed_form,
    xi_exact,
)
from .seqrepl import SeqRepLState, phase_sequence, seq_repl_step
