"""Multi-agent scene parsing: roles, backends, output parsing, orchestration."""

from .backends import ChatBackend, HttpChatClient, MockScripted
from .orchestrator import (
    FeedbackSignal,
    LocalizedError,
    OrchestratorConfig,
    OrchestratorState,
    Phase,
    Trace,
    backward_pass,
    conductor_select,
    evaluate,
    integrate_results,
    orchestrate,
    run_agent,
)
from .outputs import (
    Verdict,
    normalize_name,
    parse_kv_pairs,
    parse_layout_entries,
    parse_relation_triples,
    parse_verdict,
)
from .roles import AgentRole, agent_info, match_role, placeholders, render

__all__ = [
    "AgentRole",
    "ChatBackend",
    "FeedbackSignal",
    "HttpChatClient",
    "LocalizedError",
    "MockScripted",
    "OrchestratorConfig",
    "OrchestratorState",
    "Phase",
    "Trace",
    "Verdict",
    "agent_info",
    "backward_pass",
    "conductor_select",
    "evaluate",
    "integrate_results",
    "match_role",
    "normalize_name",
    "orchestrate",
    "parse_kv_pairs",
    "parse_layout_entries",
    "parse_relation_triples",
    "parse_verdict",
    "placeholders",
    "render",
    "run_agent",
]
