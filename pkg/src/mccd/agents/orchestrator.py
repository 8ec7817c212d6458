"""Scene-parsing orchestration: conductor-driven forward passes, an
evaluation gate, and backward reflection cycles.

The conductor picks which agent runs next until every agent ran or the
step budget is spent. The integrated outputs become a scene, which is
checked twice: mechanically (scene validation) and by the evaluator
model. If either objects, the executed agents reflect in reverse order,
each seeing the feedback produced after it; the first agent to admit a
mistake re-runs with the accumulated suggestion, and the cycle repeats
until the scene passes or the cycle budget is exhausted.

Every model exchange lands in a Trace: phase, step, role, a hash of the
rendered prompt, the raw reply, and the parsed signal. Traces contain no
timestamps, so identical runs produce identical traces.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from ..errors import (
    ConfigError,
    EmptyOutputError,
    EvaluatorOutputError,
    IntegrationError,
    MaxCyclesExhaustedError,
    MccdError,
    ReflectionOutputError,
    StepBudgetExhaustedError,
    UnrecognizedSelectionError,
)
from ..scene import (
    BoundingBox,
    Relation,
    RelationKind,
    SceneElements,
    SceneObject,
    ValidationReport,
    disambiguate_names,
    serialize_scene,
    validate_scene,
)
from .backends import ChatBackend
from .outputs import (
    Verdict,
    normalize_name,
    parse_kv_pairs,
    parse_layout_entries,
    parse_relation_triples,
    parse_verdict,
)
from .roles import (
    CONDUCTOR_SYSTEM,
    CONDUCTOR_USER,
    EVALUATOR_SYSTEM,
    EVALUATOR_USER,
    REFLECTION_SYSTEM,
    REFLECTION_USER,
    AgentRole,
    agent_info,
    match_role,
    render,
)

DEFAULT_T_MAX = 8
DEFAULT_MAX_CYCLES = 3


class Phase(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    DONE = "done"
    FAILED = "failed"


@dataclass(frozen=True)
class OrchestratorConfig:
    t_max: int = DEFAULT_T_MAX
    max_cycles: int = DEFAULT_MAX_CYCLES

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.max_cycles < 0:
            raise ValueError("max_cycles must be >= 0")


@dataclass(frozen=True)
class LocalizedError:
    """Where feedback points: the role at fault (if identified) and the text."""

    role: AgentRole | None
    problem: str
    suggestion: str


@dataclass(frozen=True)
class FeedbackSignal:
    """Evaluation outcome: whether to start a backward pass, and at whom."""

    continue_backward: bool
    localized: LocalizedError | None = None


class Trace:
    """Deterministic log of model exchanges, one record per event."""

    def __init__(self):
        self.records: list[dict[str, Any]] = []

    def emit(
        self,
        phase: str,
        step: int,
        role: str,
        system: str,
        user: str,
        reply: str,
        signal: dict[str, Any] | None = None,
    ) -> None:
        digest = hashlib.sha256()
        digest.update(system.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(user.encode("utf-8"))
        self.records.append(
            {
                "phase": phase,
                "step": step,
                "role": role,
                "rendered_prompt_hash": digest.hexdigest(),
                "reply": reply,
                "signal": signal,
            }
        )

    def by_role(self, role: str, phase: str | None = None) -> list[dict[str, Any]]:
        return [
            r
            for r in self.records
            if r["role"] == role and (phase is None or r["phase"] == phase)
        ]

    def by_phase(self, phase: str) -> list[dict[str, Any]]:
        return [r for r in self.records if r["phase"] == phase]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


@dataclass
class OrchestratorState:
    """Mutable run state shared by the protocol operations."""

    prompt: str
    outputs: dict[AgentRole, str] = field(default_factory=dict)
    executed_order: list[AgentRole] = field(default_factory=list)
    step: int = 0
    phase: Phase = Phase.FORWARD
    cycles_used: int = 0
    # Accumulated reflection advice, rendered into every {outputs} block:
    # the union of feedback survives across cycles.
    suggestions: list[tuple[AgentRole, str]] = field(default_factory=list)
    # Roles to re-run instead of a full conductor pass; None means full pass.
    pending_reruns: list[AgentRole] | None = None
    rerun_feedback: dict[AgentRole, LocalizedError] = field(default_factory=dict)


def outputs_block(state: OrchestratorState) -> str:
    """Render prior outputs plus accumulated feedback for prompt injection."""
    lines = [
        f"- {role.display_name}: {text}" for role, text in state.outputs.items()
    ]
    lines += [
        f"- feedback for {role.display_name}: {text}"
        for role, text in state.suggestions
    ]
    return "\n".join(lines) if lines else "(none yet)"


def conductor_select(
    state: OrchestratorState,
    backend: ChatBackend,
    config: OrchestratorConfig | None = None,
    trace: Trace | None = None,
) -> AgentRole:
    """Ask the conductor which remaining agent runs next.

    Each ask consumes one step of the budget. An unrecognized selection
    is re-asked once; a second failure raises. Raises
    StepBudgetExhaustedError when no steps remain.
    """
    cfg = config or OrchestratorConfig()
    trace = trace if trace is not None else Trace()
    remaining = [r for r in AgentRole if r not in state.executed_order]
    if not remaining:
        raise ValueError("conductor_select called with no remaining agents")

    reply = ""
    for _ in range(2):
        if state.step >= cfg.t_max:
            raise StepBudgetExhaustedError(
                f"step budget of {cfg.t_max} spent with "
                f"{len(remaining)} agents remaining"
            )
        ran = [r for r in AgentRole if r in state.executed_order]
        user = render(
            CONDUCTOR_USER,
            text_prompt=state.prompt,
            agent_info=agent_info(),
            outputted_agents="\n".join(f"- {r.display_name}" for r in ran) or "(none yet)",
            remaining_agents="\n".join(f"- {r.display_name}" for r in remaining),
            remaining_steps=str(cfg.t_max - state.step),
        )
        reply = backend.complete(CONDUCTOR_SYSTEM, user, tag="conductor")
        state.step += 1
        role = match_role(reply, remaining)
        trace.emit(
            phase=state.phase.value,
            step=state.step,
            role="conductor",
            system=CONDUCTOR_SYSTEM,
            user=user,
            reply=reply,
            signal={"selected": role.value if role else None},
        )
        if role is not None:
            return role
    raise UnrecognizedSelectionError(
        f"conductor reply named no remaining agent twice; last reply: {reply!r}"
    )


def run_agent(
    role: AgentRole,
    state: OrchestratorState,
    backend: ChatBackend,
    feedback: LocalizedError | None = None,
    trace: Trace | None = None,
) -> str:
    """Run one agent and return its raw reply.

    ``feedback`` (from a backward pass) is appended to the user prompt so
    a re-running agent sees what to fix. Empty replies raise.
    """
    trace = trace if trace is not None else Trace()
    user = render(
        role.user_template,
        input_prompt=state.prompt,
        outputs=outputs_block(state),
    )
    if feedback is not None and (feedback.problem or feedback.suggestion):
        user += (
            "\n\nFeedback on your previous output:\n"
            f"{feedback.problem or '(no problem statement)'}\n"
            f"Apply this correction: {feedback.suggestion or '(none given)'}"
        )
    reply = backend.complete(role.system_template, user, tag=role.value)
    trace.emit(
        phase=state.phase.value,
        step=state.step,
        role=role.value,
        system=role.system_template,
        user=user,
        reply=reply,
        signal=None,
    )
    if not reply.strip():
        raise EmptyOutputError(f"{role.display_name} returned an empty reply")
    return reply


def integrate_results(state: OrchestratorState) -> SceneElements:
    """Assemble the executed agents' outputs into a scene.

    Requires object extraction, background extraction, and layout.
    Layout entries pair with objects by normalized name; same-name
    entries pair positionally. Boxes are NOT clamped here: a layout that
    walked out of frame must surface in validation so the backward pass
    can fix it rather than hide it.
    """
    missing = [
        role.display_name
        for role in (
            AgentRole.OBJECT_EXTRACTION,
            AgentRole.BACKGROUND_EXTRACTION,
            AgentRole.LAYOUT,
        )
        if role not in state.outputs
    ]
    if missing:
        raise IntegrationError(f"required agent output missing: {', '.join(missing)}")

    raw_objects = parse_kv_pairs(state.outputs[AgentRole.OBJECT_EXTRACTION])
    background = state.outputs[AgentRole.BACKGROUND_EXTRACTION].strip()

    enhanced: dict[str, list[str]] = {}
    if AgentRole.AESTHETICS_ENHANCEMENT in state.outputs:
        for name, desc in parse_kv_pairs(state.outputs[AgentRole.AESTHETICS_ENHANCEMENT]):
            enhanced.setdefault(normalize_name(name), []).append(desc)

    try:
        layout_rows = parse_layout_entries(state.outputs[AgentRole.LAYOUT])
    except ValueError as err:
        raise IntegrationError(f"layout output unusable: {err}") from None

    # Group object indices by normalized name; layout rows consume them
    # positionally so repeated objects of one kind each get a box.
    groups: dict[str, list[int]] = {}
    for i, (name, _) in enumerate(raw_objects):
        groups.setdefault(normalize_name(name), []).append(i)

    boxes: dict[int, BoundingBox] = {}
    for name, x, y, w, h, depth in layout_rows:
        key = normalize_name(name)
        pool = groups.get(key)
        if not pool:
            raise IntegrationError(
                f"layout entry {name!r} matches no extracted object"
                if key not in {normalize_name(n) for n, _ in raw_objects}
                else f"layout has more {name!r} entries than extracted objects"
            )
        boxes[pool.pop(0)] = BoundingBox(x, y, w, h, depth)

    unplaced = [raw_objects[i][0] for pool in groups.values() for i in pool]
    if unplaced:
        raise IntegrationError(f"layout places no box for: {', '.join(sorted(unplaced))}")

    names = disambiguate_names([name for name, _ in raw_objects])
    objects = []
    for i, (raw_name, desc) in enumerate(raw_objects):
        pool = enhanced.get(normalize_name(raw_name))
        final_desc = pool.pop(0) if pool else desc
        objects.append(SceneObject(names[i], final_desc, boxes[i]))

    relations: list[Relation] = []
    for role, kind in (
        (AgentRole.ACTION_RELATIONS, RelationKind.ACTION),
        (AgentRole.SPATIAL_RELATIONS, RelationKind.SPATIAL),
    ):
        if role in state.outputs:
            for s, p, o in parse_relation_triples(state.outputs[role]):
                relations.append(Relation(s, p, o, kind))

    return SceneElements(
        complex_prompt=state.prompt,
        background=background,
        objects=tuple(objects),
        relations=tuple(relations),
    )


def _ask_verdict(
    backend: ChatBackend,
    system: str,
    user: str,
    tag: str,
    state: OrchestratorState,
    trace: Trace,
    role_label: str,
    error: type[MccdError],
) -> tuple[Verdict, str]:
    """One verdict exchange with a single re-ask on unparseable output."""
    last = ""
    for attempt in range(2):
        last = backend.complete(system, user, tag=tag)
        try:
            verdict = parse_verdict(last)
        except ValueError:
            trace.emit(
                phase=state.phase.value,
                step=state.step,
                role=role_label,
                system=system,
                user=user,
                reply=last,
                signal=None,
            )
            continue
        return verdict, last
    raise error(
        f"{role_label} reply unparseable after repair and one re-ask; "
        f"last reply: {last[:120]!r}"
    )


def evaluate(
    report: ValidationReport,
    scene: SceneElements,
    state: OrchestratorState,
    backend: ChatBackend,
    trace: Trace | None = None,
) -> FeedbackSignal:
    """Combine mechanical validation with the evaluator model's judgment.

    The backward pass starts unless both agree the scene is right. The
    evaluator's Problem text localizes the role at fault when it names
    one.
    """
    trace = trace if trace is not None else Trace()
    findings = report.summary() or "(none)"
    user = render(
        EVALUATOR_USER,
        input_prompt=scene.complex_prompt,
        outputs=(
            serialize_scene(scene).decode("utf-8")
            + "\nExecution check findings:\n"
            + findings
        ),
    )
    verdict, reply = _ask_verdict(
        backend,
        EVALUATOR_SYSTEM,
        user,
        "evaluator",
        state,
        trace,
        "evaluator",
        EvaluatorOutputError,
    )

    continue_backward = not (report.ok and verdict.result == "right")
    localized = None
    if continue_backward:
        role = match_role(f"{verdict.problem} {verdict.suggestion}")
        localized = LocalizedError(
            role=role, problem=verdict.problem, suggestion=verdict.suggestion
        )
    trace.emit(
        phase=state.phase.value,
        step=state.step,
        role="evaluator",
        system=EVALUATOR_SYSTEM,
        user=user,
        reply=reply,
        signal={
            "continue_backward": continue_backward,
            "localized_role": localized.role.value if localized and localized.role else None,
        },
    )
    return FeedbackSignal(continue_backward=continue_backward, localized=localized)


def backward_pass(
    state: OrchestratorState,
    signal: FeedbackSignal,
    backend: ChatBackend,
    config: OrchestratorConfig | None = None,
    trace: Trace | None = None,
) -> AgentRole | None:
    """Walk executed agents in reverse, each reflecting on the feedback
    produced after it.

    The first agent to admit a mistake becomes the re-run target and the
    walk stops; its suggestion joins the accumulated advice. If nobody
    admits one, the next forward pass is a full fresh pass. Returns the
    re-run target (or None) and advances the cycle count. Raises
    MaxCyclesExhaustedError when the cycle budget is already spent.
    """
    cfg = config or OrchestratorConfig()
    trace = trace if trace is not None else Trace()
    if not state.executed_order:
        raise ValueError("backward_pass with no executed agents")
    if state.cycles_used >= cfg.max_cycles:
        state.phase = Phase.FAILED
        raise MaxCyclesExhaustedError(
            f"scene still invalid after {state.cycles_used} backward cycles"
        )
    state.phase = Phase.BACKWARD

    feedback = signal.localized or LocalizedError(None, "", "")
    culprit: AgentRole | None = None
    for position, role in enumerate(reversed(state.executed_order), start=1):
        system = render(REFLECTION_SYSTEM, role_name=role.display_name)
        user = render(
            REFLECTION_USER,
            input_prompt=state.prompt,
            outputs=outputs_block(state),
            feedback=(
                f"Problem: {feedback.problem or '(unstated)'}\n"
                f"Suggestion: {feedback.suggestion or '(none)'}"
            ),
        )
        verdict, reply = _ask_verdict(
            backend,
            system,
            user,
            f"reflect.{role.value}",
            state,
            trace,
            f"reflection({role.display_name})",
            ReflectionOutputError,
        )
        admits = verdict.result == "wrong"
        trace.emit(
            phase=Phase.BACKWARD.value,
            step=position,
            role=role.value,
            system=system,
            user=user,
            reply=reply,
            signal={"admits_mistake": admits, "suggestion": verdict.suggestion},
        )
        feedback = LocalizedError(
            role=role if admits else feedback.role,
            problem=verdict.problem or feedback.problem,
            suggestion=verdict.suggestion or feedback.suggestion,
        )
        if verdict.suggestion:
            state.suggestions.append((role, verdict.suggestion))
        if admits:
            culprit = role
            break

    state.cycles_used += 1
    state.phase = Phase.FORWARD
    if culprit is not None:
        state.pending_reruns = [culprit]
        state.rerun_feedback = {culprit: feedback}
    else:
        state.pending_reruns = None
        state.rerun_feedback = {}
    return culprit


def orchestrate(
    prompt: str,
    backend: ChatBackend,
    config: OrchestratorConfig | None = None,
    trace: Trace | None = None,
) -> SceneElements:
    """Run the full protocol and return a validated scene.

    Any raised MccdError carries the trace so far as its ``trace``
    attribute for post-mortems.
    """
    if not prompt or not prompt.strip():
        raise ConfigError("prompt must be a nonempty string")
    cfg = config or OrchestratorConfig()
    trace = trace if trace is not None else Trace()
    state = OrchestratorState(prompt=prompt)

    try:
        while True:
            state.phase = Phase.FORWARD
            if state.pending_reruns is None:
                # Full conductor-driven pass. Prior outputs stay visible
                # (and get overwritten role by role) but the order resets.
                state.executed_order = []
                state.step = 0
                while len(state.executed_order) < len(AgentRole):
                    try:
                        role = conductor_select(state, backend, cfg, trace)
                    except StepBudgetExhaustedError:
                        break
                    reply = run_agent(
                        role, state, backend, state.rerun_feedback.get(role), trace
                    )
                    state.outputs[role] = reply
                    state.executed_order.append(role)
            else:
                for role in state.pending_reruns:
                    state.step += 1
                    reply = run_agent(
                        role, state, backend, state.rerun_feedback.get(role), trace
                    )
                    state.outputs[role] = reply
                    if role in state.executed_order:
                        state.executed_order.remove(role)
                    state.executed_order.append(role)
            state.pending_reruns = None
            state.rerun_feedback = {}

            scene = integrate_results(state)
            report = validate_scene(scene)
            signal = evaluate(report, scene, state, backend, trace)
            if not signal.continue_backward:
                state.phase = Phase.DONE
                return scene
            backward_pass(state, signal, backend, cfg, trace)
    except MccdError as err:
        if state.phase is not Phase.FAILED:
            state.phase = Phase.FAILED
        err.trace = trace
        raise
