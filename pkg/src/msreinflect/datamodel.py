"""Alphabets, tags, paradigms and the symbol encodings fed to the network.

An encoder input for one source pair is::

    <s> source-subtags form-chars target-subtags </s>

and the decoder output is ``<s> form-chars </s>``.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import BadSchema, ConflictError, EmptyForm, EmptyTag, ParseError

START = "<s>"
END = "</s>"
PAD = "<pad>"
UNK = "<unk>"
CONTROLS = (PAD, START, END, UNK)

MISSING_FORM = "_"


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def chars_of(form: str) -> tuple[str, ...]:
    """Split a form into symbols: one Unicode scalar each, after NFC."""
    return tuple(normalize(form))


@dataclass(frozen=True)
class TagSchema:
    """How a raw tag string splits into subtags.

    ``kind`` is ``"delimiter"`` (split on ``sep``) or ``"camel"`` (split
    before every uppercase letter or digit run, so ``1stSgPres`` becomes
    ``1st, Sg, Pres``).
    """

    kind: str = "delimiter"
    sep: str = ";"

    def __post_init__(self):
        if self.kind not in ("delimiter", "camel"):
            raise BadSchema(f"unknown tag schema kind {self.kind!r}")
        if self.kind == "delimiter" and not self.sep:
            raise BadSchema("delimiter schema needs a non-empty separator")

    @classmethod
    def parse(cls, text: str) -> "TagSchema":
        """``"camel"``, ``"delimiter"`` or ``"delimiter:<sep>"``."""
        if text == "camel":
            return cls("camel")
        if text == "delimiter":
            return cls("delimiter")
        if text.startswith("delimiter:"):
            return cls("delimiter", text[len("delimiter:"):])
        raise BadSchema(f"cannot parse tag schema {text!r}")

    def __str__(self):
        return "camel" if self.kind == "camel" else f"delimiter:{self.sep}"


_CAMEL = re.compile(r"[0-9]+[a-z]*|[A-Z][a-z]*|[a-z]+|[^0-9A-Za-z]+")


@dataclass(frozen=True)
class MorphTag:
    subtags: tuple[str, ...]

    def __post_init__(self):
        if not self.subtags:
            raise EmptyTag("a tag needs at least one subtag")

    def __iter__(self):
        return iter(self.subtags)

    def __len__(self):
        return len(self.subtags)


def decompose_tag(raw, schema: TagSchema = TagSchema()) -> MorphTag:
    """Split a raw tag string into its ordered subtags.

    Passing an already decomposed :class:`MorphTag` (or a sequence of
    subtags) returns it unchanged.
    """
    if isinstance(raw, MorphTag):
        return raw
    if not isinstance(raw, str):
        return MorphTag(tuple(raw))
    if raw == "":
        raise EmptyTag("empty tag string")
    if schema.kind == "delimiter":
        parts = raw.split(schema.sep)
        if any(p == "" for p in parts):
            raise BadSchema(f"empty subtag in {raw!r} split on {schema.sep!r}")
        return MorphTag(tuple(parts))
    parts = _CAMEL.findall(raw)
    if "".join(parts) != raw:  # pragma: no cover - regex is total
        raise BadSchema(f"camel-case split lost characters in {raw!r}")
    return MorphTag(tuple(parts))


def tag_string(tag: MorphTag, schema: TagSchema) -> str:
    return "".join(tag.subtags) if schema.kind == "camel" else schema.sep.join(tag.subtags)


@dataclass(frozen=True)
class Instance:
    """k source (form, tag) pairs, a target tag and optionally the gold form."""

    sources: tuple[tuple[str, MorphTag], ...]
    target_tag: MorphTag
    target_form: str | None = None

    def __post_init__(self):
        if len(self.sources) < 1:
            raise ValueError("an instance needs at least one source pair")
        for form, tag in self.sources:
            if not form:
                raise EmptyForm("empty source form")
            if not isinstance(tag, MorphTag):
                raise TypeError("source tags must be MorphTag")
        if self.target_form == "":
            raise EmptyForm("empty target form")

    @property
    def k(self) -> int:
        return len(self.sources)

    def restrict(self, k: int) -> "Instance":
        """Keep only the first ``k`` sources."""
        return Instance(self.sources[:k], self.target_tag, self.target_form)


@dataclass(frozen=True)
class SymbolVocab:
    """Joint index over control symbols, characters and subtags.

    Characters and subtags live in separate namespaces, so a subtag spelled
    like a character (``a`` vs. the subtag ``a``) still gets its own id.
    """

    chars: tuple[str, ...]
    subtags: tuple[str, ...]
    controls: tuple[str, ...] = CONTROLS
    _char_ids: Mapping[str, int] = field(init=False, repr=False, compare=False)
    _subtag_ids: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nc = len(self.controls)
        object.__setattr__(self, "_char_ids", {c: nc + i for i, c in enumerate(self.chars)})
        object.__setattr__(
            self, "_subtag_ids", {s: nc + len(self.chars) + i for i, s in enumerate(self.subtags)}
        )
        if len(self._char_ids) != len(self.chars) or len(self._subtag_ids) != len(self.subtags):
            raise ValueError("duplicate symbols in vocabulary")

    def __len__(self):
        return len(self.controls) + len(self.chars) + len(self.subtags)

    def control_id(self, sym: str) -> int:
        return self.controls.index(sym)

    @property
    def pad_id(self):
        return self.control_id(PAD)

    @property
    def start_id(self):
        return self.control_id(START)

    @property
    def end_id(self):
        return self.control_id(END)

    @property
    def unk_id(self):
        return self.control_id(UNK)

    def char_id(self, ch: str) -> int:
        return self._char_ids.get(ch, self.unk_id)

    def subtag_id(self, st: str) -> int:
        return self._subtag_ids.get(st, self.unk_id)

    def symbol(self, i: int) -> str:
        nc, nch = len(self.controls), len(self.chars)
        if not 0 <= i < len(self):
            raise IndexError(i)
        if i < nc:
            return self.controls[i]
        if i < nc + nch:
            return self.chars[i - nc]
        return self.subtags[i - nc - nch]

    def char_range(self) -> range:
        """Ids of the language characters."""
        nc = len(self.controls)
        return range(nc, nc + len(self.chars))

    def decode(self, ids: Iterable[int]) -> str:
        """Characters of ``ids`` with control symbols and subtags dropped."""
        out = []
        for i in ids:
            if i in self.char_range():
                out.append(self.chars[i - len(self.controls)])
        return "".join(out)

    def to_dict(self) -> dict:
        return {"controls": list(self.controls), "chars": list(self.chars), "subtags": list(self.subtags)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SymbolVocab":
        return cls(tuple(d["chars"]), tuple(d["subtags"]), tuple(d["controls"]))


def build_vocab(instances: Iterable[Instance]) -> SymbolVocab:
    """Collect every character and subtag; sorted for determinism."""
    chars: set[str] = set()
    subtags: set[str] = set()
    n = 0
    for inst in instances:
        n += 1
        for form, tag in inst.sources:
            chars.update(chars_of(form))
            subtags.update(tag.subtags)
        subtags.update(inst.target_tag.subtags)
        if inst.target_form:
            chars.update(chars_of(inst.target_form))
    if n == 0:
        raise ValueError("cannot build a vocabulary from zero instances")
    return SymbolVocab(tuple(sorted(chars)), tuple(sorted(subtags)))


def encode_source(source: tuple[str, MorphTag], target_tag: MorphTag, vocab: SymbolVocab) -> list[int]:
    form, tag = source
    if not form:
        raise EmptyForm("empty source form")
    return (
        [vocab.start_id]
        + [vocab.subtag_id(s) for s in tag.subtags]
        + [vocab.char_id(c) for c in chars_of(form)]
        + [vocab.subtag_id(s) for s in target_tag.subtags]
        + [vocab.end_id]
    )


def source_symbols(source: tuple[str, MorphTag], target_tag: MorphTag) -> list[str]:
    """Human-readable labels for the positions :func:`encode_source` emits."""
    form, tag = source
    return [START, *tag.subtags, *chars_of(form), *target_tag.subtags, END]


def encode_target(form: str, vocab: SymbolVocab) -> list[int]:
    if not form:
        raise EmptyForm("empty target form")
    return [vocab.start_id] + [vocab.char_id(c) for c in chars_of(form)] + [vocab.end_id]


# ---- instance files -------------------------------------------------------


def parse_instance_line(line: str, lineno: int, schema: TagSchema) -> Instance:
    cols = line.rstrip("\n").split("\t")
    if len(cols) < 4 or len(cols) % 2:
        raise ParseError(lineno, f"expected 2k+2 columns, got {len(cols)}")
    try:
        sources = tuple(
            (normalize(cols[i + 1]), decompose_tag(cols[i], schema)) for i in range(0, len(cols) - 2, 2)
        )
        target_tag = decompose_tag(cols[-2], schema)
    except (EmptyTag, BadSchema) as exc:
        raise ParseError(lineno, str(exc)) from exc
    if any(not f for f, _ in sources):
        raise ParseError(lineno, "empty source form")
    gold = cols[-1]
    if gold == "":
        raise ParseError(lineno, "empty target form (use '_' when unknown)")
    return Instance(sources, target_tag, None if gold == MISSING_FORM else normalize(gold))


def read_instances(path, schema: TagSchema = TagSchema()) -> list[Instance]:
    out = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            out.append(parse_instance_line(line, lineno, schema))
    return out


def format_instance(inst: Instance, schema: TagSchema) -> str:
    cols = []
    for form, tag in inst.sources:
        cols += [tag_string(tag, schema), form]
    cols += [tag_string(inst.target_tag, schema), inst.target_form or MISSING_FORM]
    return "\t".join(cols)


def write_instances(path, instances: Sequence[Instance], schema: TagSchema = TagSchema()) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(format_instance(inst, schema) + "\n")


def iter_forms(instances: Iterable[Instance]) -> Iterator[str]:
    for inst in instances:
        if inst.target_form is not None:
            yield inst.target_form


class ParadigmTable:
    """``lemma -> {tag: form}``; each (lemma, tag) slot holds one form."""

    def __init__(self, entries: Mapping[str, Mapping[MorphTag, str]] | None = None):
        self._entries: dict[str, dict[MorphTag, str]] = {}
        for lemma, slots in (entries or {}).items():
            for tag, form in slots.items():
                self.add(lemma, tag, form)

    def add(self, lemma: str, tag: MorphTag, form: str) -> bool:
        """Insert a slot; returns False if the identical slot already existed."""
        if not form:
            raise EmptyForm(f"empty form for {lemma!r}")
        form = normalize(form)
        slots = self._entries.setdefault(lemma, {})
        old = slots.get(tag)
        if old is not None:
            if old != form:
                raise ConflictError(f"{lemma!r} {tag.subtags}: {old!r} vs {form!r}")
            return False
        slots[tag] = form
        return True

    def __contains__(self, lemma):
        return lemma in self._entries

    def __getitem__(self, lemma) -> Mapping[MorphTag, str]:
        return self._entries[lemma]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def lemmas(self) -> list[str]:
        return list(self._entries)

    def slots(self, lemma: str) -> list[tuple[str, MorphTag]]:
        """(form, tag) pairs of a paradigm in insertion order."""
        return [(f, t) for t, f in self._entries[lemma].items()]

    def n_slots(self, lemma: str) -> int:
        return len(self._entries[lemma])
