"""A toy inflectional language with controllable source informativeness.

Every lemma has a consonant frame ``onset _ coda``, a *vowel class* and a
*suffix class*. The form in slot ``s`` is::

    onset + vowels[vowel_class][grade[s]] + coda + suffixes[s][suffix_class]

Whether a set of source forms pins down a target form is decided by
brute force: enumerate every (vowel class, suffix class) pair, keep those
that regenerate the observed sources, and check whether they agree on the
target. That oracle sorts each instance into one of

* ``AnyForm``    every source alone determines the target;
* ``SingleForm`` exactly one source does, and the others (even jointly) do not;
* ``MultiForm``  no single source does, but all sources jointly do;
* ``NoForm``     even all sources together leave the target open;
* ``Hybrid``     anything else (e.g. two of four sources suffice alone).

Spec files are flat ``key = value`` text::

    classes = 2
    slots = 6
    vowels = a e | a o            # one group per vowel class, one vowel per grade
    grades = 0 0 0 1 1 1          # grade of each slot
    suffixes = n | e/a | st/ast | t | n/an | e/o   # per slot, '/' per suffix class
    lemma_count = 400
    seed = 1

Optional keys: ``dev_lemmata``, ``test_lemmata``, ``sources``,
``targets_per_lemma``, ``configurations``, ``train_configurations``,
``class_weights``, ``suffix_weights``, ``onsets``, ``codas``, ``tags``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .datamodel import Instance, MorphTag, ParadigmTable, TagSchema, decompose_tag
from .dataset import stream
from .errors import SpecError

CONFIGURATIONS = ("AnyForm", "SingleForm", "MultiForm", "NoForm", "Hybrid")

_LIST_KEYS = {"configurations", "train_configurations", "class_weights", "suffix_weights", "onsets", "codas", "grades"}
_INT_KEYS = {"classes", "slots", "lemma_count", "seed", "dev_lemmata", "test_lemmata", "sources", "targets_per_lemma"}
KNOWN_KEYS = _LIST_KEYS | _INT_KEYS | {"vowels", "suffixes", "tags"}


@dataclass
class SyntheticSpec:
    classes: int
    slots: int
    vowels: list[list[str]]  # [vowel class][grade]
    grades: list[int]  # per slot
    suffixes: list[list[str]]  # [slot][suffix class]
    lemma_count: int = 400
    seed: int = 0
    dev_lemmata: int = 50
    test_lemmata: int = 50
    sources: int = 4
    targets_per_lemma: int | None = None
    configurations: list[str] = field(default_factory=lambda: ["SingleForm", "MultiForm"])
    train_configurations: list[str] = field(default_factory=lambda: list(CONFIGURATIONS))
    class_weights: list[float] | None = None
    suffix_weights: list[float] | None = None
    onsets: list[str] = field(
        default_factory=lambda: "b d f g k l m n p r s t br dr fl gr kl pl st tr".split()
    )
    codas: list[str] = field(default_factory=lambda: "ch ff g ld m nd nk r ss t".split())
    tags: list[str] | None = None

    def __post_init__(self):
        self.validate()

    @property
    def n_grades(self) -> int:
        return len(self.vowels[0])

    @property
    def suffix_classes(self) -> int:
        return max(len(s) for s in self.suffixes)

    def validate(self) -> None:
        if self.classes < 1 or self.slots < 2:
            raise SpecError("need at least 1 class and 2 slots")
        if len(self.vowels) != self.classes:
            raise SpecError(f"vowels lists {len(self.vowels)} classes, expected {self.classes}")
        if len({len(v) for v in self.vowels}) != 1 or not self.vowels[0]:
            raise SpecError("every vowel class needs the same non-zero number of grades")
        if len(self.grades) != self.slots:
            raise SpecError(f"grades has {len(self.grades)} entries, expected {self.slots}")
        if any(not 0 <= g < self.n_grades for g in self.grades):
            raise SpecError("grade out of range of the vowel table")
        if len(self.suffixes) != self.slots:
            raise SpecError(f"suffixes has {len(self.suffixes)} entries, expected {self.slots}")
        if any(len(s) not in (1, self.suffix_classes) for s in self.suffixes):
            raise SpecError("each slot lists either one suffix or one per suffix class")
        if self.tags is not None and len(self.tags) != self.slots:
            raise SpecError("tags needs one entry per slot")
        if self.class_weights is not None and len(self.class_weights) != self.classes:
            raise SpecError("class_weights needs one weight per vowel class")
        if self.suffix_weights is not None and len(self.suffix_weights) != self.suffix_classes:
            raise SpecError("suffix_weights needs one weight per suffix class")
        for name in ("configurations", "train_configurations"):
            bad = set(getattr(self, name)) - set(CONFIGURATIONS)
            if bad:
                raise SpecError(f"unknown configuration(s) in {name}: {sorted(bad)}")
        if not 1 <= self.sources < self.slots:
            raise SpecError("sources must lie in [1, slots - 1]")
        if self.dev_lemmata + self.test_lemmata >= self.lemma_count:
            raise SpecError("dev + test lemmata leave no training lemmata")

    def suffix(self, slot: int, suffix_class: int) -> str:
        alts = self.suffixes[slot]
        return alts[suffix_class] if len(alts) > 1 else alts[0]

    def slot_tag(self, slot: int, schema: TagSchema = TagSchema()) -> MorphTag:
        if self.tags is not None:
            return decompose_tag(self.tags[slot], schema)
        return MorphTag(("V", f"G{self.grades[slot]}", f"S{slot + 1}"))


def parse_spec_text(text: str) -> SyntheticSpec:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    return spec_from_mapping(raw)


def spec_from_mapping(raw: Mapping[str, str]) -> SyntheticSpec:
    missing = {"classes", "slots", "vowels", "suffixes", "lemma_count", "seed"} - raw.keys()
    if missing:
        raise SpecError(f"missing keys: {sorted(missing)}")
    kw: dict = {}
    try:
        for key, value in raw.items():
            if key in _INT_KEYS:
                kw[key] = int(value)
            elif key == "vowels":
                kw[key] = [g.split() for g in value.split("|")]
            elif key == "suffixes":
                kw[key] = [g.strip().split("/") for g in value.split("|")]
            elif key == "tags":
                kw[key] = [t.strip() for t in value.split("|")]
            elif key == "grades":
                kw[key] = [int(g) for g in value.split()]
            elif key in ("class_weights", "suffix_weights"):
                kw[key] = [float(w) for w in value.split()]
            else:
                kw[key] = value.split()
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    if "grades" not in kw:
        kw["grades"] = [0] * kw["slots"]
    if any("" in alts for alts in kw["suffixes"]) and any(len(a) > 1 for a in kw["suffixes"]):
        raise SpecError("empty suffix alternative")
    kw["suffixes"] = [[a if a != "-" else "" for a in alts] for alts in kw["suffixes"]]
    return SyntheticSpec(**kw)


# Default benchmark: two stem-vowel classes and two suffix classes, each with
# a 3:1 skew, so a single source pins down only about three targets in four.
BENCHMARK_SPEC = """\
classes = 2
slots = 6
vowels = a e | a o
grades = 0 0 0 1 1 1
suffixes = n | e/a | st/ast | t | n/an | e/o
lemma_count = 400
seed = 1
class_weights = 3 1
suffix_weights = 3 1
"""


def load_spec(path) -> SyntheticSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec_text(fh.read())


@dataclass(frozen=True)
class Lemma:
    name: str
    onset: str
    coda: str
    vowel_class: int
    suffix_class: int


def inflect(spec: SyntheticSpec, onset: str, coda: str, vowel_class: int, suffix_class: int, slot: int) -> str:
    return onset + spec.vowels[vowel_class][spec.grades[slot]] + coda + spec.suffix(slot, suffix_class)


def determined_target(spec: SyntheticSpec, lemma: Lemma, source_slots: Sequence[int], target_slot: int) -> bool:
    """True if the sources fix the target form under the generator's rules."""
    observed = [inflect(spec, lemma.onset, lemma.coda, lemma.vowel_class, lemma.suffix_class, s) for s in source_slots]
    targets = set()
    for c, d in itertools.product(range(spec.classes), range(spec.suffix_classes)):
        if all(inflect(spec, lemma.onset, lemma.coda, c, d, s) == o for s, o in zip(source_slots, observed)):
            targets.add(inflect(spec, lemma.onset, lemma.coda, c, d, target_slot))
    return len(targets) == 1


def classify(spec: SyntheticSpec, lemma: Lemma, source_slots: Sequence[int], target_slot: int) -> str:
    alone = [determined_target(spec, lemma, [s], target_slot) for s in source_slots]
    if all(alone):
        return "AnyForm"
    if sum(alone) == 1:
        rest = [s for s, ok in zip(source_slots, alone) if not ok]
        if not rest or not determined_target(spec, lemma, rest, target_slot):
            return "SingleForm"
        return "Hybrid"
    if sum(alone) > 1:
        return "Hybrid"
    return "MultiForm" if determined_target(spec, lemma, source_slots, target_slot) else "NoForm"


def informative_sources(spec: SyntheticSpec, lemma: Lemma, source_slots: Sequence[int], target_slot: int) -> list[int]:
    """Positions (into ``source_slots``) that determine the target alone."""
    return [i for i, s in enumerate(source_slots) if determined_target(spec, lemma, [s], target_slot)]


@dataclass
class SyntheticData:
    paradigms: ParadigmTable
    lemmata: list[Lemma]
    splits: dict[str, list[Instance]]
    configurations: dict[str, list[str]]  # parallel to splits
    source_slots: dict[str, list[tuple[int, ...]]]
    target_slots: dict[str, list[int]]


def _make_lemmata(spec: SyntheticSpec, rng: np.random.Generator) -> list[Lemma]:
    frames = [(o, c) for o in spec.onsets for c in spec.codas]
    if spec.lemma_count > len(frames) * spec.classes * spec.suffix_classes:
        raise SpecError("lemma_count exceeds the number of distinct lemmata these settings can build")
    def probs(w):
        return None if w is None else np.asarray(w, dtype=float) / np.sum(w)

    vowel_p, suffix_p = probs(spec.class_weights), probs(spec.suffix_weights)
    seen = set()
    out = []
    while len(out) < spec.lemma_count:
        onset, coda = frames[rng.integers(len(frames))]
        c = int(rng.choice(spec.classes, p=vowel_p))
        d = int(rng.choice(spec.suffix_classes, p=suffix_p))
        name = inflect(spec, onset, coda, c, d, 0) + f"-{c}{d}"
        key = (onset, coda, c, d)
        if key in seen:
            continue
        seen.add(key)
        out.append(Lemma(name, onset, coda, c, d))
    return out


def generate_synthetic_language(spec: SyntheticSpec, seed: int | None = None,
                                schema: TagSchema = TagSchema()) -> SyntheticData:
    """Paradigms plus lemma-disjoint train/dev/test instance lists."""
    seed = spec.seed if seed is None else seed
    rng = stream(seed, 0)
    lemmata = _make_lemmata(spec, rng)
    table = ParadigmTable()
    for lem in lemmata:
        for s in range(spec.slots):
            table.add(lem.name, spec.slot_tag(s, schema), inflect(spec, lem.onset, lem.coda, lem.vowel_class, lem.suffix_class, s))

    n_test, n_dev = spec.test_lemmata, spec.dev_lemmata
    parts = {
        "test": lemmata[:n_test],
        "dev": lemmata[n_test : n_test + n_dev],
        "train": lemmata[n_test + n_dev :],
    }
    splits: dict[str, list[Instance]] = {}
    configs: dict[str, list[str]] = {}
    src_slots: dict[str, list[tuple[int, ...]]] = {}
    tgt_slots: dict[str, list[int]] = {}
    counter = itertools.count(1)
    for name in ("train", "dev", "test"):
        allowed = spec.train_configurations if name == "train" else spec.configurations
        insts, cfgs, ss, ts = [], [], [], []
        for lem in parts[name]:
            r = stream(seed, next(counter))
            targets = list(range(spec.slots))
            if spec.targets_per_lemma is not None:
                targets = sorted(r.choice(spec.slots, size=min(spec.targets_per_lemma, spec.slots), replace=False))
            for t in targets:
                others = [s for s in range(spec.slots) if s != t]
                # Rejection-sample source sets until one has an allowed configuration.
                for _ in range(32):
                    picks = tuple(int(others[j]) for j in r.choice(len(others), size=spec.sources, replace=False))
                    cfg = classify(spec, lem, picks, t)
                    if cfg in allowed:
                        break
                else:
                    continue
                sources = tuple((table[lem.name][spec.slot_tag(s, schema)], spec.slot_tag(s, schema)) for s in picks)
                insts.append(Instance(sources, spec.slot_tag(t, schema), table[lem.name][spec.slot_tag(t, schema)]))
                cfgs.append(cfg)
                ss.append(picks)
                ts.append(int(t))
        splits[name], configs[name], src_slots[name], tgt_slots[name] = insts, cfgs, ss, ts
    return SyntheticData(table, lemmata, splits, configs, src_slots, tgt_slots)
