"""Parsing of disassembler listing text into categorized instruction streams.

A listing line looks like ``03f6438 83a1 MOV AL,@VarA ;comment``: hex
address, hex opcode word, mnemonic, free-form operands, optional comment.
Category assignment is a per-mnemonic table (CategoryMap) loaded from JSON;
anything absent from the table counts as Other.
"""

import enum
import json
import re
from dataclasses import dataclass, field
from importlib import resources

from .errors import MalformedLine


class InstructionCategory(enum.Enum):
    ARITHMETIC = "arith"
    BOOLEAN = "bool"
    STORE = "store"
    LOAD = "load"
    BRANCH = "branch"
    OTHER = "other"

    @property
    def symbol(self):
        """Single-letter feature symbol; None for Other."""
        return _SYMBOLS[self]

    @property
    def code(self):
        """Integer code used by the counting kernels (alphabetical by symbol)."""
        return _CODES[self]

    @classmethod
    def from_name(cls, text):
        key = text.strip().lower()
        try:
            return _ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown instruction category {text!r}") from None


_SYMBOLS = {
    InstructionCategory.ARITHMETIC: "a",
    InstructionCategory.BOOLEAN: "n",
    InstructionCategory.STORE: "s",
    InstructionCategory.LOAD: "l",
    InstructionCategory.BRANCH: "b",
    InstructionCategory.OTHER: None,
}

# alphabetical by symbol: a, b, l, n, s; Other sorts last
_CODES = {
    InstructionCategory.ARITHMETIC: 0,
    InstructionCategory.BRANCH: 1,
    InstructionCategory.LOAD: 2,
    InstructionCategory.BOOLEAN: 3,
    InstructionCategory.STORE: 4,
    InstructionCategory.OTHER: 5,
}

CATEGORY_BY_CODE = {v: k for k, v in _CODES.items()}

_ALIASES = {
    "arith": InstructionCategory.ARITHMETIC,
    "arithmetic": InstructionCategory.ARITHMETIC,
    "a": InstructionCategory.ARITHMETIC,
    "bool": InstructionCategory.BOOLEAN,
    "boolean": InstructionCategory.BOOLEAN,
    "n": InstructionCategory.BOOLEAN,
    "store": InstructionCategory.STORE,
    "s": InstructionCategory.STORE,
    "load": InstructionCategory.LOAD,
    "l": InstructionCategory.LOAD,
    "branch": InstructionCategory.BRANCH,
    "jump": InstructionCategory.BRANCH,
    "b": InstructionCategory.BRANCH,
    "other": InstructionCategory.OTHER,
}


@dataclass(frozen=True)
class Instruction:
    address: str
    raw_opcode: str | None
    mnemonic: str
    operands: str
    category: InstructionCategory

    def __post_init__(self):
        if not self.mnemonic or re.search(r"\s", self.mnemonic):
            raise ValueError(f"bad mnemonic {self.mnemonic!r}")


@dataclass
class CategoryMap:
    """Total mnemonic -> category function; unmapped mnemonics are Other."""

    name: str
    categories: dict = field(default_factory=dict)

    def classify(self, mnemonic):
        return self.categories.get(mnemonic.upper(), InstructionCategory.OTHER)

    @classmethod
    def from_dict(cls, obj):
        cats = {m.upper(): InstructionCategory.from_name(c)
                for m, c in obj["categories"].items()}
        return cls(name=obj.get("name", "unnamed"), categories=cats)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {
            "name": self.name,
            "categories": {m: c.value for m, c in sorted(self.categories.items())},
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")

    @classmethod
    def default(cls):
        """The shipped TI C28x table."""
        text = resources.files("hpc_sentinel.data").joinpath(
            "c28x_categories.json").read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))


def classify_mnemonic(mnemonic, cmap=None):
    """Category of one mnemonic under cmap; unmapped -> Other."""
    if not mnemonic:
        raise ValueError("empty mnemonic")
    cmap = cmap or CategoryMap.default()
    return cmap.classify(mnemonic)


_INSTR_RE = re.compile(
    r"^([0-9a-fA-F]+)\s+([0-9a-fA-F]+)\s+(\S+)(?:\s+(.*))?$")
_LABEL_RE = re.compile(r"^[A-Za-z_.$]\w*:$")


@dataclass
class ParseReport:
    instructions: list
    skipped: dict  # kind -> count over blank/comment/label/directive/unrecognized


def parse_listing_report(text, cmap=None, strict=False):
    """Parse a listing, returning instructions plus a tally of skipped lines.

    strict=True raises MalformedLine on lines that are neither instructions
    nor recognizable non-code (blank, comment, label, directive).
    """
    cmap = cmap or CategoryMap.default()
    instructions = []
    skipped = {"blank": 0, "comment": 0, "label": 0, "directive": 0,
               "unrecognized": 0}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        body, _, _ = raw_line.partition(";")
        stripped = body.strip()
        if not stripped:
            kind = "comment" if raw_line.strip() else "blank"
            skipped[kind] += 1
            continue
        if _LABEL_RE.match(stripped):
            skipped["label"] += 1
            continue
        if stripped.startswith("."):
            skipped["directive"] += 1
            continue
        m = _INSTR_RE.match(stripped)
        if m is None or m.group(3).startswith("."):
            if m is not None:  # data word rendered as a pseudo-mnemonic
                skipped["directive"] += 1
                continue
            if strict:
                raise MalformedLine(line_no, raw_line)
            skipped["unrecognized"] += 1
            continue
        mnemonic = m.group(3).upper()
        operands = (m.group(4) or "").strip()
        instructions.append(Instruction(
            address=m.group(1),
            raw_opcode=m.group(2),
            mnemonic=mnemonic,
            operands=operands,
            category=cmap.classify(mnemonic),
        ))
    return ParseReport(instructions=instructions, skipped=skipped)


def parse_listing(text, cmap=None, strict=False):
    """Parse a listing into its instruction sequence (skips non-code lines)."""
    return parse_listing_report(text, cmap, strict=strict).instructions


def format_listing(instructions):
    """Canonical listing text; re-parsing reproduces address, mnemonic,
    operands and category (a missing opcode word prints as 0000)."""
    lines = []
    for ins in instructions:
        word = ins.raw_opcode if ins.raw_opcode else "0000"
        if ins.operands:
            lines.append(f"{ins.address} {word} {ins.mnemonic} {ins.operands}")
        else:
            lines.append(f"{ins.address} {word} {ins.mnemonic}")
    return "\n".join(lines) + ("\n" if lines else "")
