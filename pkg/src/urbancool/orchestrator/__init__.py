"""Pipeline orchestration: intent, geometry, parameters, solve, mitigation, report."""
from .advisor import Consultant, DeterministicAdvisor, RemoteAdvisor, make_advisor
from .mitigation import MaterialPlan, compare_runs, propose_materials
from .pipeline import analyze_intent, run_pipeline
from .recorder import InteractionRecorder, record_interaction
from .report import check_report, draft_report
from .state import IntentPlan, PipelineConfig, PipelineError, PipelineState

__all__ = [
    "Consultant", "DeterministicAdvisor", "RemoteAdvisor", "make_advisor", "MaterialPlan", "compare_runs",
    "propose_materials", "analyze_intent", "run_pipeline", "InteractionRecorder", "record_interaction",
    "check_report", "draft_report", "IntentPlan", "PipelineConfig", "PipelineError", "PipelineState",
]
