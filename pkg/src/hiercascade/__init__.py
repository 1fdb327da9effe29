"""Two-tier adaptive control of dynamic-inference cascades on edge nodes."""

from .controller import (EmaState, LcPolicy, LocalController, LocalStore, on_inference,
                         reconcile_enabled, safety_check, update_ema)
from .engine import (AccuracyEstimate, CascadeConfig, ExitKind, ExpectedCost, InferenceOutcome,
                     Sample, big_little_evaluate, draw_sample, evaluate, expected_balanced_accuracy,
                     expected_cost, worst_case_latency)
from .errors import (CalibrationError, ConfigError, ConstraintUnsatisfiable, InfeasibleTask,
                     ScenarioError, ThresholdError)
from .profiles import (ConfidenceProfile, PredictorProfile, Task, ValidationStats,
                       exit_probabilities, load_task, load_task_profiles, sample_confidence)
from .scheduler import (NodeConstraints, NodeTelemetry, SchedulerParams, SchedulingDecision,
                        SpDeployment, beam_search_candidates, feasibility_filter, online_update,
                        pareto_sweep, schedule)
from .simulation import (Mode, WorkloadScenario, generate_trace, run_comparison, run_simulation)

__version__ = "0.1.0"
