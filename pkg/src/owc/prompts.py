"""Judge prompt templates and the versioned query-variant templates.

The two judge templates are the exact instruction texts the scoring and
ranking judges receive; the mock judge parses its inputs back out of the
rendered text, so the slot anchors below must stay in sync with the
templates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

JUDGE_BINARY_TEMPLATE = (
    "You are a model that determines whether an answer is a good reply to a "
    "question given also its target value.\n"
    "\n"
    "This is the question: What type of object is in this image?\n"
    "This is the answer: {answer}\n"
    "This is the target value: {target}\n"
    "\n"
    'If the answer describes the target, reply positively. If the answer '
    'includes the target value or a synonym of it, reply positively. If the '
    'target is generic but it is related to the answer, reply positively. '
    'Reply only with "1" if yes, or "0" if no.'
)

JUDGE_PAIRWISE_TEMPLATE = (
    "You are a model that discriminates whether labels A or B better align "
    "with a target value.\n"
    "\n"
    "This is label A: {a}\n"
    "This is label B: {b}\n"
    "This is the target value: {target}\n"
    "\n"
    "Does A align better with the target value? Does B align better with the "
    'target value? Reply only with "1" if A wins over B, or "0" if B wins '
    "over A."
)


def render_binary_prompt(answer: str, target: str) -> str:
    """Fill the scoring-judge template; the answer is embedded verbatim."""
    return JUDGE_BINARY_TEMPLATE.format(answer=answer, target=target)


def render_pairwise_prompt(label_a: str, label_b: str, target: str) -> str:
    return JUDGE_PAIRWISE_TEMPLATE.format(a=label_a, b=label_b, target=target)


_BINARY_SLOTS = re.compile(
    r"This is the answer: (?P<answer>.*)\n"
    r"This is the target value: (?P<target>.*?)\n\n"
    r"If the answer describes the target,",
    re.DOTALL,
)

_PAIRWISE_SLOTS = re.compile(
    r"This is label A: (?P<a>.*)\n"
    r"This is label B: (?P<b>.*)\n"
    r"This is the target value: (?P<target>.*?)\n\n"
    r"Does A align better",
    re.DOTALL,
)


def extract_binary_slots(prompt: str) -> tuple[str, str]:
    """Recover (answer, target) from a rendered scoring prompt."""
    m = _BINARY_SLOTS.search(prompt)
    if m is None:
        raise ValueError("prompt does not match the scoring-judge template")
    return m.group("answer"), m.group("target")


def extract_pairwise_slots(prompt: str) -> tuple[str, str, str]:
    """Recover (label_a, label_b, target) from a rendered ranking prompt."""
    m = _PAIRWISE_SLOTS.search(prompt)
    if m is None:
        raise ValueError("prompt does not match the ranking-judge template")
    return m.group("a"), m.group("b"), m.group("target")


def is_pairwise_prompt(prompt: str) -> bool:
    return "This is label A: " in prompt


@dataclass(frozen=True)
class VariantTemplate:
    variant_id: str
    version: int
    text: str


DOMAIN_NOUNS = ("texture", "aircraft", "flower", "food", "pet", "car")

BASE_QUERY = "What type of object is in this image?"

VARIANT_TEMPLATES: tuple[VariantTemplate, ...] = (
    VariantTemplate("base", 1, BASE_QUERY),
    VariantTemplate("be_generic", 1, BASE_QUERY + " Be generic."),
    VariantTemplate("be_specific", 1, BASE_QUERY + " Be specific."),
    VariantTemplate("cot", 1, BASE_QUERY + " Think step by step."),
    VariantTemplate("list", 1, "List the objects in the image."),
    VariantTemplate("caption", 1, "Caption the image."),
    VariantTemplate("describe", 1, "Describe the content of the image."),
) + tuple(
    VariantTemplate(f"domain_{noun}", 1, f"What type of {noun} is in this image?")
    for noun in DOMAIN_NOUNS
)


def variant_template(variant_id: str) -> VariantTemplate:
    for t in VARIANT_TEMPLATES:
        if t.variant_id == variant_id:
            return t
    raise KeyError(variant_id)
