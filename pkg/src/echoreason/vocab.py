"""Canonical echocardiographic view vocabulary with alias resolution.

The vocabulary file format is one canonical name per line followed by its
comma-separated aliases; blank lines and `#` comments are skipped. Matching is
case-insensitive and on word boundaries, with flexible whitespace inside
multi-word aliases.
"""

from __future__ import annotations

import re
from importlib import resources

from .errors import VocabularyError

_DEFAULT_RESOURCE = "views.txt"


class ViewVocabulary:
    """Immutable canonical-view table: resolution and text mention scanning."""

    def __init__(self, entries: dict[str, list[str]]):
        if not entries:
            raise VocabularyError("view vocabulary is empty")
        self.canonical_names: tuple[str, ...] = tuple(entries)
        self._by_surface: dict[str, str] = {}
        patterns: list[tuple[str, str]] = []
        for canonical, aliases in entries.items():
            for surface in [canonical, *aliases]:
                key = _fold(surface)
                if not key:
                    raise VocabularyError(f"empty surface form for view {canonical!r}")
                previous = self._by_surface.get(key)
                if previous is not None and previous != canonical:
                    raise VocabularyError(
                        f"surface form {surface!r} maps to both {previous!r} and {canonical!r}"
                    )
                self._by_surface[key] = canonical
                patterns.append((surface, canonical))
        # Longer surfaces first so "apical four chamber" wins over any
        # hypothetical shorter prefix alias.
        patterns.sort(key=lambda item: (-len(item[0]), item[0]))
        self._mention_re = re.compile(
            "|".join(rf"\b{_surface_pattern(surface)}\b" for surface, _ in patterns),
            re.IGNORECASE,
        )

    def resolve(self, name: str) -> str:
        """Map a canonical name or alias to its canonical form."""
        canonical = self._by_surface.get(_fold(name))
        if canonical is None:
            raise VocabularyError(f"unknown view name: {name!r}")
        return canonical

    def is_known(self, name: str) -> bool:
        return _fold(name) in self._by_surface

    def find_mentions(self, text: str) -> list[str]:
        """Canonical views mentioned in `text`, deduplicated, in first-occurrence order."""
        found: list[str] = []
        for match in self._mention_re.finditer(text):
            canonical = self._by_surface[_fold(match.group(0))]
            if canonical not in found:
                found.append(canonical)
        return found

    def mentions_any(self, text: str) -> bool:
        return self._mention_re.search(text) is not None


def _fold(surface: str) -> str:
    return " ".join(surface.lower().split())


def _surface_pattern(surface: str) -> str:
    return r"\s+".join(re.escape(word) for word in surface.split())


def parse_vocabulary(text: str) -> ViewVocabulary:
    entries: dict[str, list[str]] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [part.strip() for part in line.split(",")]
        canonical = parts[0]
        if not canonical:
            raise VocabularyError(f"line {lineno}: missing canonical view name")
        if canonical in entries:
            raise VocabularyError(f"line {lineno}: duplicate canonical view {canonical!r}")
        entries[canonical] = [alias for alias in parts[1:] if alias]
    return ViewVocabulary(entries)


def load_vocabulary(path: str | None = None) -> ViewVocabulary:
    """Load a vocabulary file, defaulting to the packaged canonical table."""
    if path is None:
        text = resources.files(__package__).joinpath("data", _DEFAULT_RESOURCE).read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    return parse_vocabulary(text)
