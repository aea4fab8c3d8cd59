"""Prompt templates, stored as package assets and rendered by slot substitution.

Each asset file holds a system section and a user section separated by a
``<<<user>>>`` marker line.  Slots are ``{name}`` placeholders; template
files may not contain literal braces outside slots.
"""

from __future__ import annotations

import hashlib
import re
from importlib import resources

from .errors import TemplateError

TEMPLATE_IDS = ("summarize", "extract", "judge_narrative", "judge_guten")

_SLOT_RE = re.compile(r"\{([a-z_]+)\}")
_MARKER = "<<<user>>>\n"

_cache: dict[str, tuple[str, str]] = {}


def _asset_text(template_id: str) -> str:
    if template_id not in TEMPLATE_IDS:
        raise TemplateError(f"unknown template {template_id!r}")
    path = resources.files("chronograph").joinpath(f"prompts/{template_id}.txt")
    return path.read_text(encoding="utf-8")


def _sections(template_id: str) -> tuple[str, str]:
    if template_id not in _cache:
        raw = _asset_text(template_id)
        if raw.startswith(_MARKER):
            system, user = "", raw[len(_MARKER):]
        else:
            system, _, user = raw.partition("\n" + _MARKER)
        _cache[template_id] = (system, user.rstrip("\n"))
    return _cache[template_id]


def required_slots(template_id: str) -> set[str]:
    system, user = _sections(template_id)
    return set(_SLOT_RE.findall(system)) | set(_SLOT_RE.findall(user))


def render_prompt(template_id: str, slots: dict[str, str]) -> tuple[str, str]:
    """Fill a template's slots and return ``(system_prompt, user_prompt)``.

    Raises TemplateError naming the first missing slot.  Slot values are
    substituted verbatim; extra slots are ignored.
    """
    system, user = _sections(template_id)

    def fill(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in slots:
            raise TemplateError(
                f"template {template_id!r} is missing slot {name!r}"
            )
        return slots[name]

    return _SLOT_RE.sub(fill, system), _SLOT_RE.sub(fill, user)


def template_hashes() -> dict[str, str]:
    """sha256 of each committed template asset, recorded in graph metadata."""
    return {
        tid: hashlib.sha256(_asset_text(tid).encode("utf-8")).hexdigest()
        for tid in TEMPLATE_IDS
    }
