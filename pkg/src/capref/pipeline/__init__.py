from .config import EndpointConfig, ExperimentConfig, VariantSpec  # noqa: F401
from .plan import PlanError, Stage, StagePlan, plan_variant  # noqa: F401
from .report import machine_rows, render_comparison, render_scores_table  # noqa: F401
from .run import RunError, RunRecord, StageOutcome, SweepResult, run, sweep  # noqa: F401
from .store import ArtifactStore  # noqa: F401
