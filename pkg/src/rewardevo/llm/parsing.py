"""Parsing LLM responses into (thought, code) pairs and transfer plans.

Both parsers must survive arbitrary UTF-8: every failure is a structured
LlmParseError, never a crash.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

logger = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\r?\n(.*?)```", re.DOTALL)


class LlmParseError(ValueError):
    pass


def parse_individual(response: str) -> tuple[str, str]:
    """Split a response into (thought, code source).

    The thought is the prose before the first fenced block, or the contents
    of a block tagged ``thought`` when present. The code is the first block
    tagged ``rsl``, else the first fenced block that is not the thought.
    """
    if not isinstance(response, str) or not response.strip():
        raise LlmParseError("empty response")
    blocks = [(m.group(1).lower(), m.group(2), m.start()) for m in _FENCE_RE.finditer(response)]
    if not blocks:
        raise LlmParseError("no fenced code block in response")

    thought_block = next((b for b in blocks if b[0] == "thought"), None)
    code_block = next((b for b in blocks if b[0] == "rsl"), None)
    if code_block is None:
        code_block = next((b for b in blocks if b is not thought_block), None)
    if code_block is None:
        raise LlmParseError("no code block in response")

    code = code_block[1].strip("\n").rstrip()
    if not code.strip():
        raise LlmParseError("empty code block")

    if thought_block is not None:
        thought = thought_block[1].strip()
    else:
        thought = response[: blocks[0][2]].strip()
    return thought, code


@dataclass(frozen=True)
class KtPathway:
    source_task: str
    target_task: str
    rationale: str
    strategy: str


def _pick(entry: dict, *needles: str) -> str | None:
    for key, value in entry.items():
        lk = key.lower()
        if all(n in lk for n in needles) and isinstance(value, str):
            return value
    return None


def _first_json_array(text: str):
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "[":
            continue
        try:
            value, _ = decoder.raw_decode(text[i:])
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            return value
    return None


def parse_kt_plan(response: str, known_tasks) -> list[KtPathway]:
    """Lenient extraction of the transfer plan: the first JSON array found
    (possibly inside a code fence) is parsed; entries with unknown task ids
    are dropped with a warning."""
    if not isinstance(response, str) or not response.strip():
        raise LlmParseError("empty response")
    arr = _first_json_array(response)
    if arr is None:
        raise LlmParseError("no parseable JSON array in response")
    lookup = {t.lower(): t for t in known_tasks}
    pathways: list[KtPathway] = []
    for entry in arr:
        if not isinstance(entry, dict):
            continue
        source = _pick(entry, "source")
        target = _pick(entry, "target")
        if source is None or target is None:
            continue
        src = lookup.get(source.strip().lower())
        tgt = lookup.get(target.strip().lower())
        if src is None or tgt is None:
            logger.warning(
                "dropping transfer pathway with unknown task ids: %r -> %r",
                source,
                target,
            )
            continue
        if src == tgt:
            logger.warning("dropping self-transfer pathway for %r", src)
            continue
        pathways.append(
            KtPathway(
                source_task=src,
                target_task=tgt,
                rationale=_pick(entry, "rationale") or _pick(entry, "reason") or "",
                strategy=_pick(entry, "strategy") or "",
            )
        )
    return pathways
