"""UNSPSC-style hierarchical category codes.

A code is eight decimal digits read as four two-digit groups (segment,
family, class, commodity). Trailing ``00`` groups mark the level, so
``45120000`` is a level-2 family and ``45121504`` a level-4 commodity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

from .errors import TaxonomyError
from .model import AtomCategory, is_absolute_iri

GROUPS = 4


@dataclass(frozen=True, order=True)
class TaxonomyCode:
    digits: str

    def __post_init__(self) -> None:
        _check_digits(self.digits)

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(self.digits[i : i + 2] for i in range(0, 8, 2))

    @property
    def level(self) -> int:
        return sum(1 for g in self.groups if g != "00")

    def __str__(self) -> str:
        return self.digits


def _check_digits(digits: str) -> None:
    if not isinstance(digits, str) or len(digits) != 8 or not digits.isascii() or not digits.isdigit():
        raise TaxonomyError(f"taxonomy code must be exactly 8 decimal digits: {digits!r}")
    groups = [digits[i : i + 2] for i in range(0, 8, 2)]
    if groups[0] == "00":
        raise TaxonomyError(f"segment group of {digits!r} is 00")
    seen_zero = False
    for g in groups:
        if g == "00":
            seen_zero = True
        elif seen_zero:
            raise TaxonomyError(f"non-00 group after a 00 group in {digits!r}")


def parse_code(term: str) -> TaxonomyCode:
    return TaxonomyCode(term)


def ancestors(code: TaxonomyCode) -> list[TaxonomyCode]:
    """Enclosing codes, shallowest first; excludes ``code`` itself."""
    return [
        TaxonomyCode("".join(code.groups[:k]) + "00" * (GROUPS - k))
        for k in range(1, code.level)
    ]


def common_level(a: TaxonomyCode, b: TaxonomyCode) -> int:
    n = 0
    for ga, gb in zip(a.groups, b.groups):
        if ga != gb:
            break
        n += 1
    return min(n, a.level, b.level)


def subsumes(general: TaxonomyCode, specific: TaxonomyCode) -> bool:
    k = general.level
    return k <= specific.level and general.groups[:k] == specific.groups[:k]


@dataclass(frozen=True)
class TaxonomyScheme:
    scheme_iri: str
    nodes: dict[str, str]

    def __post_init__(self) -> None:
        if not is_absolute_iri(self.scheme_iri):
            raise TaxonomyError(f"scheme IRI must be absolute: {self.scheme_iri!r}")
        for digits in self.nodes:
            code = TaxonomyCode(digits)
            missing = [a.digits for a in ancestors(code) if a.digits not in self.nodes]
            if missing:
                raise TaxonomyError(f"code {digits} lacks ancestor(s) {', '.join(missing)}")

    def label(self, code: TaxonomyCode | str) -> str | None:
        return self.nodes.get(str(code))

    def codes(self) -> list[TaxonomyCode]:
        return [TaxonomyCode(d) for d in sorted(self.nodes)]


def parse_scheme(text: str) -> TaxonomyScheme:
    """Read the fixture format: scheme IRI on the first line, then ``code,label``."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise TaxonomyError("taxonomy file is empty")
    nodes: dict[str, str] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        code, sep, label = line.partition(",")
        code = code.strip()
        if not sep:
            raise TaxonomyError(f"line {lineno}: expected 'code,label'")
        if code in nodes:
            raise TaxonomyError(f"line {lineno}: duplicate code {code}")
        _check_digits(code)
        nodes[code] = label.strip()
    return TaxonomyScheme(lines[0], nodes)


def load_scheme(path: str | Path) -> TaxonomyScheme:
    return parse_scheme(Path(path).read_text(encoding="utf-8"))


class TermStatus(enum.Enum):
    OK = "ok"
    SCHEME_MISMATCH = "scheme-mismatch"
    MALFORMED_TERM = "malformed-term"
    UNKNOWN_TERM = "unknown-term"


@dataclass(frozen=True)
class TermCheck:
    status: TermStatus
    message: str = ""
    label: str | None = None  # scheme label, when the category's own label is absent or differs

    @property
    def ok(self) -> bool:
        return self.status is TermStatus.OK


def validate_term(category: AtomCategory, scheme: TaxonomyScheme) -> TermCheck:
    if category.scheme != scheme.scheme_iri:
        return TermCheck(
            TermStatus.SCHEME_MISMATCH,
            f"category scheme {category.scheme!r} is not {scheme.scheme_iri!r}",
        )
    try:
        code = parse_code(category.term)
    except TaxonomyError as exc:
        return TermCheck(TermStatus.MALFORMED_TERM, str(exc))
    label = scheme.label(code)
    if label is None:
        return TermCheck(TermStatus.UNKNOWN_TERM, f"term {category.term} is not in {scheme.scheme_iri}")
    return TermCheck(TermStatus.OK, label=None if category.label == label else label)
