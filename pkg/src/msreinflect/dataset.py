"""Paradigm ingestion, multi-source sampling, nested halving, histograms.

Random draws use numpy's PCG64 generator. Each base pair ``i`` gets its own
stream seeded with ``SeedSequence([seed, i])``, so an instance's extra
sources do not depend on how many instances came before it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .datamodel import (
    Instance,
    MorphTag,
    ParadigmTable,
    TagSchema,
    decompose_tag,
    normalize,
)
from .errors import (
    BadSchema,
    ConflictError,
    EmptyTag,
    ParseError,
    TooFewInstances,
    UnknownLemma,
)

HISTOGRAM_BUCKETS = ("1", "2", "3", "4plus")


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent PCG64 stream for item ``index`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]))


def load_paradigms(path, schema: TagSchema = TagSchema()) -> ParadigmTable:
    """Read ``lemma<TAB>tag<TAB>form`` rows; identical duplicates collapse."""
    table = ParadigmTable()
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3 or not all(cols):
                raise ParseError(lineno, f"expected 3 non-empty columns, got {len(cols)}")
            lemma, raw_tag, form = cols
            try:
                tag = decompose_tag(raw_tag, schema)
            except (EmptyTag, BadSchema) as exc:
                raise ParseError(lineno, str(exc)) from exc
            try:
                table.add(normalize(lemma), tag, form)
            except ConflictError as exc:
                raise ConflictError(f"line {lineno}: {exc}") from exc
    return table


def write_paradigms(path, table: ParadigmTable, schema: TagSchema = TagSchema()) -> None:
    from .datamodel import tag_string

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lemma in table:
            for form, tag in table.slots(lemma):
                fh.write(f"{lemma}\t{tag_string(tag, schema)}\t{form}\n")


class BasePair(NamedTuple):
    lemma: str
    source: tuple[str, MorphTag]
    target: tuple[str, MorphTag]


def read_base_pairs(path, table: ParadigmTable, schema: TagSchema = TagSchema()) -> list[BasePair]:
    """Single-source pairs: ``src_tag src_form trg_tag trg_form`` (lemma
    looked up in ``table``) or with a leading ``lemma`` column."""
    index: dict[tuple[str, MorphTag], list[str]] = {}
    for lemma in table:
        for form, tag in table.slots(lemma):
            index.setdefault((form, tag), []).append(lemma)
    out = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) not in (4, 5) or not all(cols):
                raise ParseError(lineno, f"expected 4 or 5 columns, got {len(cols)}")
            lemma = normalize(cols[0]) if len(cols) == 5 else None
            st, sf, tt, tf = cols[-4:]
            try:
                source = (normalize(sf), decompose_tag(st, schema))
                target = (normalize(tf), decompose_tag(tt, schema))
            except (EmptyTag, BadSchema) as exc:
                raise ParseError(lineno, str(exc)) from exc
            if lemma is None:
                cands = set(index.get(source, ())) & set(index.get(target, ()))
                if not cands:
                    raise UnknownLemma(f"line {lineno}: no paradigm contains {sf!r} and {tf!r}")
                lemma = min(cands)
            elif lemma not in table:
                raise UnknownLemma(f"line {lineno}: {lemma!r}")
            out.append(BasePair(lemma, source, target))
    return out


@dataclass(frozen=True)
class SamplerConfig:
    k_extra: int = 3
    seed: int = 0
    exclude_target_slot: bool = True

    def __post_init__(self):
        if self.k_extra < 0:
            raise ValueError("k_extra must be >= 0")


def sample_multisource(paradigms: ParadigmTable, base: Sequence[BasePair], cfg: SamplerConfig = SamplerConfig()) -> list[Instance]:
    """Add up to ``k_extra`` uniformly drawn slots of the same paradigm to
    every base pair (without replacement, never the base source slot and by
    default never the target slot)."""
    out = []
    for i, pair in enumerate(base):
        if pair.lemma not in paradigms:
            raise UnknownLemma(pair.lemma)
        skip = {pair.source[1]}
        if cfg.exclude_target_slot:
            skip.add(pair.target[1])
        eligible = [(f, t) for f, t in paradigms.slots(pair.lemma) if t not in skip]
        n = min(cfg.k_extra, len(eligible))
        picks = stream(cfg.seed, i).choice(len(eligible), size=n, replace=False) if n else []
        sources = (pair.source, *(eligible[j] for j in picks))
        out.append(Instance(sources, pair.target[1], pair.target[0]))
    return out


def halve_training(instances: Sequence, levels: int, seed: int = 0) -> list[list]:
    """Nested subsets of sizes N, N//2, ..., N//2**levels (original order kept)."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    n = len(instances)
    if n < 2**levels or n == 0:
        raise TooFewInstances(f"{n} instances cannot be halved {levels} times")
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 0x4841])).permutation(n)
    out = []
    for lvl in range(levels + 1):
        keep = np.sort(perm[: n >> lvl])
        out.append([instances[j] for j in keep])
    return out


@dataclass
class SourceHistogram:
    counts: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_tsv(self) -> str:
        return "".join(f"{b}\t{self.counts[b]}\n" for b in HISTOGRAM_BUCKETS)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_tsv())


def source_histogram(instances: Iterable[Instance]) -> SourceHistogram:
    counts = dict.fromkeys(HISTOGRAM_BUCKETS, 0)
    for inst in instances:
        counts[str(inst.k) if inst.k < 4 else "4plus"] += 1
    return SourceHistogram(counts)
