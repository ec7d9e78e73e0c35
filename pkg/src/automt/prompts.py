"""Prompt templates sent to the chat and vision backends by the pipeline stages."""

from __future__ import annotations

from .ontology import OntologyTaxonomy, Presence, verb_for
from .relations import DEFAULT_SYSTEM_NAME

# The three fixed yes/no validation questions used for consistency scoring.
VALIDATION_QUESTIONS = (
    "Are Road Type, Manipulation, and Ego-Vehicle Expected Behavior all mentioned "
    "in the traffic rule?",
    "Is the traffic rule supported by MR?",
    "Are all parts of the MR consistent with each other?",
)

SCENE_PROMPT = (
    "Analyze this driving scenario. Describe the time of day, weather conditions, "
    "road type (such as intersection, crosswalk, etc.), and any objects around the "
    "ego-vehicle. Reply format: time: , weather: , road type: , objects: "
)

_PARSER_EXAMPLE = (
    '# EXAMPLE # User: Traffic rule: "Steady Red Light (Stop) Stop before entering '
    'the crosswalk or intersection"\n'
    "Assistant: Given the ego-vehicle approaches to an intersection\n"
    "When {system} adds a red light on the roadside\n"
    "Then ego-vehicle should slow down"
)


def _vocab_lines(taxonomy: OntologyTaxonomy) -> str:
    adds = [t.name for t in taxonomy.manipulation_targets if t.presence is Presence.OPTIONAL]
    replaces = [
        t.name for t in taxonomy.manipulation_targets if verb_for(t).value == "replaces"
    ]
    return "\n".join(
        (
            "Road Type options: " + "; ".join(sorted(taxonomy.road_types)),
            "Add-manipulation options: " + "; ".join(adds),
            "Replace-manipulation options: " + "; ".join(replaces),
            "Expected Behavior options: " + "; ".join(sorted(taxonomy.expected_behaviors)),
        )
    )


def build_rule_parser_prompt(
    rule: str, taxonomy: OntologyTaxonomy, system_name: str = DEFAULT_SYSTEM_NAME
) -> str:
    """Chain-of-thought prompt turning one traffic rule into a Given/When/Then MR."""
    return "\n".join(
        (
            "You are an expert in traffic rules and scene analysis. Metamorphic Testing "
            "(MT) is a method used in autonomous vehicle testing. Your task is to convert "
            'traffic rules into structured "Given-When-Then" metamorphic relations (MRs) '
            "for vehicle testing.",
            "# Key Concepts #",
            "1. traffic rule: Defines how the ego-vehicle should behave in the specific "
            "driving scenario.",
            "2. Road Type: Road elements specified in the traffic rule, such as crosswalk.",
            '3. Manipulation: "adds" objects specified in the traffic rule, such as a red '
            'light (items can be added "on the road" or "on the roadside"), or "replaces" '
            "environmental conditions, such as a rainy day.",
            "4. Ego-Vehicle Expected Behavior: The expected ego-vehicle behavior in the "
            "traffic rule, such as slow down, turn right.",
            _PARSER_EXAMPLE.format(system=system_name),
            "You are given:",
            "1. Details of the MRs: ontology elements of Road Type, Manipulation and "
            "Ego-Vehicle Expected Behavior.",
            _vocab_lines(taxonomy),
            "2. To ensure consistency, follow a step-by-step process to extract the MR "
            "from the traffic rule.",
            "Step 1, Determine one appropriate Road Type ontology element based on the rule.",
            "Step 2, Determine one appropriate Manipulation ontology element based on the rule.",
            'Step 3, Determine the verb for Manipulation: use "adds" for objects with '
            'optional presence (e.g., pedestrians, vehicles), and "replaces" for objects '
            "with mandatory presence (e.g., weather, lighting conditions).",
            "Step 4, Determine one appropriate Ego-Vehicle Expected Behavior ontology "
            "element based on the rule.",
            "Finally, compose the MR using the selected elements in the following format:",
            "Given the ego-vehicle approaches to Road Type",
            f"When {system_name} Manipulation",
            "Then ego-vehicle should Ego-Vehicle Expected Behavior",
            f'User: Traffic rule: "{rule}"',
        )
    )


def build_validation_prompt(rule: str, gherkin: str) -> str:
    """Three-question consistency check over one rule/MR pair; expects a JSON answer."""
    questions = "\n".join(f"{i}. {q}" for i, q in enumerate(VALIDATION_QUESTIONS, 1))
    return "\n".join(
        (
            "# CONTEXT # Based on the list of close-ended yes or no questions, generate "
            "a JSON answer.",
            "Questions:",
            questions,
            '# EXAMPLE # Assistant: ["yes", "yes", "yes"]',
            f'User: Traffic rule: "{rule}"',
            f'MR: "{gherkin}"',
        )
    )


def build_match_prompt(representation_json: str, candidates: list[tuple[int, int, str]]) -> str:
    """MR selection prompt over retrieved candidates.

    candidates: (index, execution_count, single-line gherkin) per retrieved MR,
    already in ranked order.
    """
    lines = [
        "You are an assistant for question-answering tasks. Use the following pieces "
        "of retrieved context to answer the question.",
        f"Given the test case description: {representation_json}, select one MR from "
        "the retrieved context where:",
        "1. The Time, Weather, Road type, and Objects in the test case description "
        "should best match those in the MR.",
        "2. Ego-vehicle's speed and steering angle should match in this MR.",
        "3. Among all matched MRs, prefer the one with the lowest Execution Count value.",
        "Retrieved context:",
    ]
    for index, count, gherkin in candidates:
        one_line = gherkin.replace("\n", " / ")
        lines.append(f"Index: {index} | Execution Count: {count} | MR: {one_line}")
    lines.append("Answer with the Index of the selected MR.")
    lines.append(f"User: {representation_json}")
    return "\n".join(lines)


ROAD_MATCH_QUESTION = (
    "Compare the two driving images. Is the road type in the second image the same "
    "as in the first image? Answer yes or no."
)


def build_manipulation_check_prompt(instruction: str) -> str:
    """Binary visual-change check between an original and an edited image."""
    return (
        "Compare the original driving image with the follow-up image. Does the visual "
        f'change between them align with the manipulation instruction: "{instruction}"? '
        "Answer yes or no."
    )
