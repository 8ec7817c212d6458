"""Agent roles, their prompt templates, and reply-to-role matching.

Templates are rendered by literal token replacement: placeholders are
lowercase words in braces and nothing else is interpreted, so braces in
agent replies that get spliced into a prompt cannot break rendering.
The format examples inside templates deliberately avoid the placeholder
shape (they carry digits, parentheses or spaces).
"""

from __future__ import annotations

import re
from enum import Enum

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


class AgentRole(Enum):
    OBJECT_EXTRACTION = "object_extraction"
    BACKGROUND_EXTRACTION = "background_extraction"
    ACTION_RELATIONS = "action_relations"
    SPATIAL_RELATIONS = "spatial_relations"
    LAYOUT = "layout"
    AESTHETICS_ENHANCEMENT = "aesthetics_enhancement"

    @property
    def display_name(self) -> str:
        return _DISPLAY[self]

    @property
    def capability(self) -> str:
        return _CAPABILITY[self]

    @property
    def system_template(self) -> str:
        return _SYSTEM[self]

    @property
    def user_template(self) -> str:
        return _USER[self]


_DISPLAY = {
    AgentRole.OBJECT_EXTRACTION: "object extraction agent",
    AgentRole.BACKGROUND_EXTRACTION: "background extraction agent",
    AgentRole.ACTION_RELATIONS: "action relation extraction agent",
    AgentRole.SPATIAL_RELATIONS: "spatial relation extraction agent",
    AgentRole.LAYOUT: "layout agent",
    AgentRole.AESTHETICS_ENHANCEMENT: "aesthetics enhancement agent",
}

_CAPABILITY = {
    AgentRole.OBJECT_EXTRACTION: (
        "lists every distinct object in the scene together with the"
        " characteristics bound to it; repeated objects of the same kind"
        " are listed separately so counts stay exact"
    ),
    AgentRole.BACKGROUND_EXTRACTION: (
        "describes the scene as a whole: the setting, time, weather and"
        " style that remain once every countable object is removed"
    ),
    AgentRole.ACTION_RELATIONS: (
        "finds what the objects are doing to each other and states each"
        " action as a subject-action-object triple"
    ),
    AgentRole.SPATIAL_RELATIONS: (
        "finds where the objects sit relative to each other and states"
        " each position as a subject-position-object triple"
    ),
    AgentRole.LAYOUT: (
        "places every object on the canvas as a box with a layer depth,"
        " consistent with the extracted objects and relations"
    ),
    AgentRole.AESTHETICS_ENHANCEMENT: (
        "rewrites each object's characteristics with richer visual detail"
        " without inventing new objects or contradicting the scene"
    ),
}

_SHARED_USER = (
    "The scene description is:\n{input_prompt}\n\n"
    "Output from the agents that already ran:\n{outputs}\n"
)

_SYSTEM = {
    AgentRole.OBJECT_EXTRACTION: (
        "You are the object extraction agent on an image-generation team."
        " From the scene description, list every countable object and the"
        " characteristics the text binds to it. List repeated objects of"
        " the same kind separately. Reply with exactly one brace-delimited"
        " mapping, semicolons between entries, in the form"
        " {object 1: characteristics 1; object 2: characteristics 2}."
        " Do not include the background."
    ),
    AgentRole.BACKGROUND_EXTRACTION: (
        "You are the background extraction agent on an image-generation"
        " team. Describe the scene with every countable object removed:"
        " setting, surfaces, lighting, weather, style. Reply with one"
        " short plain-text description and nothing else."
    ),
    AgentRole.ACTION_RELATIONS: (
        "You are the action relation extraction agent on an"
        " image-generation team. Find every action one object performs"
        " on another and reply with exactly one brace-delimited set of"
        " triples in the form {(subject, action, object), (subject,"
        " action, object)}. Use object names exactly as the object"
        " extraction agent listed them. Reply with {} when there are no"
        " actions."
    ),
    AgentRole.SPATIAL_RELATIONS: (
        "You are the spatial relation extraction agent on an"
        " image-generation team. Find every spatial arrangement between"
        " two objects and reply with exactly one brace-delimited set of"
        " triples in the form {(subject, position, object), (subject,"
        " position, object)}. Use object names exactly as the object"
        " extraction agent listed them. Reply with {} when there are no"
        " spatial relations."
    ),
    AgentRole.LAYOUT: (
        "You are the layout agent on an image-generation team. Place each"
        " extracted object on the unit canvas: the top-left corner is"
        " (0, 0), the bottom-right corner is (1, 1). Reply with exactly"
        " one brace-delimited mapping in the form"
        " {object 1: [x, y, w, h, d]; object 2: [x, y, w, h, d]} where"
        " [x, y] is the box's top-left corner, [w, h] its size, and d its"
        " integer layer depth: 0 is nearest the viewer, depths are the"
        " consecutive integers 0, 1, 2, ... with no repeats. Every box"
        " must lie inside the canvas (x + w and y + h at most 1) and"
        " respect the extracted spatial relations."
    ),
    AgentRole.AESTHETICS_ENHANCEMENT: (
        "You are the aesthetics enhancement agent on an image-generation"
        " team. Rewrite each object's characteristics with concrete visual"
        " detail: materials, color, lighting, texture. Keep every object"
        " name unchanged, invent no new objects, contradict nothing the"
        " other agents established. Reply with exactly one brace-delimited"
        " mapping, semicolons between entries, in the form"
        " {object 1: enhanced characteristics 1; object 2: enhanced"
        " characteristics 2}."
    ),
}

_USER = {role: _SHARED_USER for role in AgentRole}

CONDUCTOR_SYSTEM = (
    "You are the conductor of an image-generation team. Each teammate"
    " handles one parsing step, and you decide who works next. Consider"
    " what the scene needs, what has already been produced, and how many"
    " steps remain. Reply with the name of exactly one agent chosen from"
    " the remaining ones, and nothing else."
)

CONDUCTOR_USER = (
    "The scene description is:\n{text_prompt}\n\n"
    "The team:\n{agent_info}\n\n"
    "Agents that already ran:\n{outputted_agents}\n\n"
    "Agents still available:\n{remaining_agents}\n\n"
    "Steps remaining: {remaining_steps}\n\n"
    "Name the agent to run next."
)

EVALUATOR_SYSTEM = (
    "You are the evaluator on an image-generation team. Judge whether the"
    " integrated scene faithfully represents the scene description: every"
    " object present with its characteristics, relations consistent with"
    " the text, every box inside the unit canvas, depths consistent with"
    " the spatial arrangement. Reply with exactly one JSON object of the"
    ' form {"Result": "right" or "wrong", "Problem": the agent whose'
    ' output is at fault and why, "Modification Suggestion": how that'
    " agent should change its output}. Use null for Problem and"
    ' Modification Suggestion when the Result is "right".'
)

EVALUATOR_USER = (
    "The scene description is:\n{input_prompt}\n\n"
    "The integrated scene produced by the team:\n{outputs}\n\n"
    "Judge it."
)

REFLECTION_SYSTEM = (
    "You are the {role_name} on an image-generation team, reviewing your"
    " own earlier output. Feedback has arrived from the step after yours."
    " Decide whether your output caused the problem. Reply with exactly"
    ' one JSON object of the form {"Result": "right" or "wrong",'
    ' "Problem": what in your output is at fault, "Modification'
    ' Suggestion": how you would redo it}. Answer "wrong" only when your'
    " own output needs to change; otherwise answer \"right\" and pass the"
    " feedback on."
)

REFLECTION_USER = (
    "The scene description is:\n{input_prompt}\n\n"
    "Current team outputs:\n{outputs}\n\n"
    "Feedback from the step after yours:\n{feedback}\n\n"
    "Review your own contribution."
)


def render(template: str, **slots: str) -> str:
    """Replace {name} tokens with slot values; unknown slots are an error."""
    names = set(placeholders(template))
    unknown = set(slots) - names
    if unknown:
        raise ValueError(f"template has no placeholders {sorted(unknown)}")
    out = template
    for name, value in slots.items():
        out = out.replace("{" + name + "}", value)
    return out


def placeholders(template: str) -> list[str]:
    """Placeholder names in template order (duplicates kept)."""
    return _PLACEHOLDER.findall(template)


# Reply-to-role matching: longest alias wins, matched on word boundaries
# so 'action' never fires inside 'interaction'. Aliases cover the natural
# shorthands a model answers with.
_ALIASES: dict[AgentRole, tuple[str, ...]] = {
    AgentRole.OBJECT_EXTRACTION: (
        "object extraction agent", "object extraction", "objects", "object"
    ),
    AgentRole.BACKGROUND_EXTRACTION: (
        "background extraction agent", "background extraction", "background"
    ),
    AgentRole.ACTION_RELATIONS: (
        "action relation extraction agent", "action relations extraction agent",
        "action relation extraction", "action relations", "action relation",
        "actions", "action",
    ),
    AgentRole.SPATIAL_RELATIONS: (
        "spatial relation extraction agent", "spatial relations extraction agent",
        "spatial relation extraction", "spatial relations", "spatial relation",
        "spatial",
    ),
    AgentRole.LAYOUT: ("layout agent", "layout"),
    AgentRole.AESTHETICS_ENHANCEMENT: (
        "aesthetics enhancement agent", "aesthetic enhancement agent",
        "aesthetics enhancement", "aesthetic enhancement", "aesthetics",
        "aesthetic",
    ),
}


def match_role(text: str, candidates: list[AgentRole] | None = None) -> AgentRole | None:
    """The candidate role named in text, or None.

    When several candidates are named, the one with the longest matching
    alias wins, so 'spatial relation extraction agent' is never mistaken
    for the action agent by a shared word.
    """
    pool = list(AgentRole) if candidates is None else candidates
    lowered = text.lower()
    best: AgentRole | None = None
    best_len = 0
    for role in pool:
        for alias in _ALIASES[role]:
            if len(alias) > best_len and re.search(
                r"\b" + re.escape(alias) + r"\b", lowered
            ):
                best = role
                best_len = len(alias)
    return best


def agent_info() -> str:
    """One line per agent: name and capability, for the conductor prompt."""
    return "\n".join(f"- {role.display_name}: {role.capability}" for role in AgentRole)
