"""Reproducible production-scheduling simulation and benchmarking toolkit."""

__version__ = "0.1.0"

from .notation import (  # noqa: F401
    Aggregation, Constraint, MetricId, ParetoObjective, ProblemTriplet,
    ScalarizedObjective, SetupClass, SetupKind, SingleObjective, Tag, Violation,
    has_routing_flexibility, parse_triplet, render_triplet, subsumes, validate,
)
from .instance import (  # noqa: F401
    Dist, GenShape, Instance, Job, Operation, Resource, StochasticSpec,
    TransportSpec, derive_triplet, generate_instance, instance_from_dict,
    instance_to_dict, load_orlib, serialize_instance, validate_instance,
)
from .simcore import (  # noqa: F401
    DecisionPoint, SimMode, SimState, Terminal, advance, apply_action, init,
    replay,
)
from .objectives import (  # noqa: F401
    ScheduleRecord, evaluate_objective, job_metrics, makespan, pareto_front,
    resource_metrics, throughput,
)
from .mdp import (  # noqa: F401
    ActionSpec, BreakdownKind, Env, FeatureId, ObsSpec, RewardSpec,
    compute_features, make_env, observe_raw, reward_of,
)
from .agents import (  # noqa: F401
    Agent, Hyperparams, QTable, RandomAgent, RecomputeAgent, RuleAgent,
    StaticPlanAgent, TabularPolicyAgent, exhaustive_oracle, make_agent,
    q_learning_train, run_episode, sarsa_train,
)
from .bench import (  # noqa: F401
    ExperimentConfig, RunReport, aggregate, render_report, run_experiment,
    sign_test,
)
