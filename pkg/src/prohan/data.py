"""Sample schema, JSON-lines corpus loading, vocabularies and the ProSLU converter."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

SPLITS = ("train", "dev", "test")
CA_TAIL = "context awareness"
ORDER_WORDS = ("first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth")


class CorpusError(ValueError):
    """A corpus file violates the sample schema."""


@dataclass(frozen=True)
class Attribute:
    attribute: str
    entity: str


@dataclass(frozen=True)
class Subject:
    name: str
    attributes: tuple[Attribute, ...]


@dataclass
class Sample:
    tokens: list[str]
    intent: str
    slots: list[str]
    kg: list[Subject]
    up: dict[str, dict[str, float]]
    ca: dict[str, str]

    def validate(self) -> None:
        if not self.tokens:
            raise ValueError("tokens: empty utterance")
        if len(self.slots) != len(self.tokens):
            raise ValueError(f"slots: {len(self.slots)} tags for {len(self.tokens)} tokens")
        for tag in self.slots:
            if tag != "O" and not (tag[:2] in ("B-", "I-") and len(tag) > 2):
                raise ValueError(f"slots: malformed BIO tag {tag!r}")
        if not self.intent:
            raise ValueError("intent: empty")
        if not self.kg:
            raise ValueError("kg: no subjects")
        for subject in self.kg:
            if not subject.name.strip():
                raise ValueError("kg: subject with empty name")
            if not subject.attributes:
                raise ValueError(f"kg: subject {subject.name!r} has no attributes")
            for a in subject.attributes:
                if not a.attribute.strip() or not a.entity.strip():
                    raise ValueError(f"kg: empty attribute element under {subject.name!r}")
        if not self.up:
            raise ValueError("up: no categories")
        for category, options in self.up.items():
            if not options:
                raise ValueError(f"up: category {category!r} has no options")
            if len(options) > len(ORDER_WORDS):
                raise ValueError(f"up: category {category!r} has more than {len(ORDER_WORDS)} options")
        if not self.ca:
            raise ValueError("ca: no categories")
        for category, state in self.ca.items():
            if not state.strip():
                raise ValueError(f"ca: empty state for {category!r}")

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "intent": self.intent,
            "slots": list(self.slots),
            "kg": [
                {"name": s.name, "attributes": [{"attribute": a.attribute, "entity": a.entity} for a in s.attributes]}
                for s in self.kg
            ],
            "up": {c: dict(o) for c, o in self.up.items()},
            "ca": dict(self.ca),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sample":
        for key in ("tokens", "intent", "slots", "kg", "up", "ca"):
            if key not in d:
                raise KeyError(key)
        kg = []
        for s in d["kg"]:
            attrs = tuple(Attribute(str(a["attribute"]), str(a["entity"])) for a in s["attributes"])
            kg.append(Subject(str(s["name"]), attrs))
        return cls(
            tokens=[str(t) for t in d["tokens"]],
            intent=str(d["intent"]),
            slots=[str(t) for t in d["slots"]],
            kg=kg,
            up={str(c): {str(o): float(v) for o, v in opts.items()} for c, opts in d["up"].items()},
            ca={str(c): str(v) for c, v in d["ca"].items()},
        )

    def slot_types(self) -> set[str]:
        return {t[2:] for t in self.slots if t != "O"}


def phrase_tokens(text: str) -> list[str]:
    """Inputs are pre-tokenised: elements split on whitespace."""
    return text.split()


def rank_options(options: dict[str, float]) -> list[tuple[str, str]]:
    """(option, order word) pairs ranked by descending score, ties by option name."""
    ranked = sorted(options.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(opt, ORDER_WORDS[k]) for k, (opt, _) in enumerate(ranked)]


def sample_words(sample: Sample) -> Iterable[str]:
    """Every word the encoders will look up for this sample."""
    yield from sample.tokens
    for s in sample.kg:
        yield from phrase_tokens(s.name)
        for a in s.attributes:
            yield from phrase_tokens(a.attribute)
            yield from phrase_tokens(a.entity)
    for category, options in sample.up.items():
        yield from phrase_tokens(category)
        for opt in options:
            yield from phrase_tokens(opt)
    for category, state in sample.ca.items():
        yield from phrase_tokens(category)
        yield from phrase_tokens(state)


class Vocabulary:
    """Bijective token/id map with PAD=0 and UNK=1."""

    PAD, UNK = "<pad>", "<unk>"

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [self.PAD, self.UNK]
        self.stoi: dict[str, int] = {self.PAD: 0, self.UNK: 1}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, 1)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, 1) for t in tokens]

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, items: list[str]) -> "Vocabulary":
        if items[:2] != [cls.PAD, cls.UNK]:
            raise ValueError("vocabulary must start with PAD and UNK")
        vocab = cls(items[2:])
        if len(vocab) != len(items):
            raise ValueError("vocabulary list contains duplicates")
        return vocab


class LabelSet:
    """Intent or slot-tag inventory; list order is the id."""

    def __init__(self, labels: Iterable[str]):
        self.labels = list(labels)
        self.index = {l: k for k, l in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise ValueError("duplicate labels")

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelSet) and self.labels == other.labels

    def id(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def ids(self, labels: Iterable[str]) -> list[int]:
        return [self.id(l) for l in labels]


def build_word_vocab(train: list[Sample]) -> Vocabulary:
    """Words of the train split in first-seen order, plus the fixed triplet words."""
    vocab = Vocabulary()
    for sample in train:
        for word in sample_words(sample):
            vocab.add(word)
    for word in ORDER_WORDS + tuple(phrase_tokens(CA_TAIL)):
        vocab.add(word)
    return vocab


def build_label_sets(samples: Iterable[Sample]) -> tuple[LabelSet, LabelSet]:
    """Intent labels sorted; slot tags are ``O`` then B-/I- pairs by sorted type."""
    intents, types = set(), set()
    for s in samples:
        intents.add(s.intent)
        types |= s.slot_types()
    tags = ["O"]
    for t in sorted(types):
        tags += [f"B-{t}", f"I-{t}"]
    return LabelSet(sorted(intents)), LabelSet(tags)


@dataclass
class Corpus:
    train: list[Sample]
    dev: list[Sample]
    test: list[Sample] = field(default_factory=list)
    vocab: Vocabulary = None
    intents: LabelSet = None
    slot_tags: LabelSet = None

    def __post_init__(self):
        if self.vocab is None:
            self.vocab = build_word_vocab(self.train)
        if self.intents is None or self.slot_tags is None:
            self.intents, self.slot_tags = build_label_sets(self.train + self.dev + self.test)

    def split(self, name: str) -> list[Sample]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    @property
    def slot_types(self) -> list[str]:
        return sorted({t[2:] for t in self.slot_tags.labels if t != "O"})


def parse_line(line: str, path: str, lineno: int) -> Sample:
    where = f"{path}:{lineno}"
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{where}: invalid JSON ({exc.msg})") from None
    try:
        sample = Sample.from_dict(raw)
    except KeyError as exc:
        raise CorpusError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError, AttributeError) as exc:
        raise CorpusError(f"{where}: malformed field ({exc})") from None
    try:
        sample.validate()
    except ValueError as exc:
        raise CorpusError(f"{where}: {exc}") from None
    return sample


def read_samples(path: str | Path) -> list[Sample]:
    path = Path(path)
    samples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                samples.append(parse_line(line, str(path), lineno))
    return samples


def write_samples(samples: Iterable[Sample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    """Load ``train.jsonl``, ``dev.jsonl`` and (optionally) ``test.jsonl`` from a directory."""
    root = Path(path)
    splits = {}
    for name in SPLITS:
        f = root / f"{name}.jsonl"
        if not f.exists():
            if name == "test":
                splits[name] = []
                continue
            raise CorpusError(f"{f}: split file not found")
        splits[name] = read_samples(f)
    return Corpus(splits["train"], splits["dev"], splits["test"])


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        write_samples(corpus.split(name), root / f"{name}.jsonl")


# -- upstream ProSLU conversion ------------------------------------------------------
#
# The public release keys each record by an id and uses field names that differ
# from ours (and sometimes Chinese ones).  Only the aliases below are recognised.

_ALIASES = {
    "tokens": ("tokens", "text", "utterance", "文本"),
    "intent": ("intent", "意图"),
    "slots": ("slots", "slot", "labels", "槽位"),
    "kg": ("kg", "KG", "knowledge", "知识图谱"),
    "up": ("up", "UP", "user_profile", "用户画像"),
    "ca": ("ca", "CA", "context_awareness", "环境感知"),
}


def _pick(record: dict, field_name: str):
    for key in _ALIASES[field_name]:
        if key in record:
            return record[key]
    raise KeyError(field_name)


def _convert_kg(raw) -> list[dict]:
    # accepted: our own list form, or {mention: [ {attribute: entity, ...}, ... ]}
    if isinstance(raw, list):
        return raw
    subjects = []
    for mention, entries in raw.items():
        if isinstance(entries, dict):
            entries = [entries]
        for entry in entries:
            attrs = []
            for attribute, entity in entry.items():
                values = entity if isinstance(entity, list) else [entity]
                attrs += [{"attribute": str(attribute), "entity": str(v)} for v in values if str(v).strip()]
            if attrs:
                subjects.append({"name": str(mention), "attributes": attrs})
    return subjects


def _convert_up(raw, option_names: dict[str, list[str]] | None) -> dict:
    # accepted: {category: {option: score}} or {category: [scores]} with option names supplied
    out = {}
    for category, value in raw.items():
        if isinstance(value, dict):
            out[category] = {str(k): float(v) for k, v in value.items()}
        else:
            names = (option_names or {}).get(category) or [f"{category} option {k + 1}" for k in range(len(value))]
            if len(names) != len(value):
                raise ValueError(f"up: {len(value)} scores but {len(names)} option names for {category!r}")
            out[category] = {n: float(v) for n, v in zip(names, value)}
    return out


def convert_record(record: dict, option_names: dict[str, list[str]] | None = None) -> Sample:
    text = _pick(record, "tokens")
    slots = _pick(record, "slots")
    if isinstance(slots, str):
        slots = slots.split()
    if isinstance(text, str):
        tokens = text.split()
        # unsegmented text aligned per character with its tags
        if len(tokens) != len(slots) and len(text) == len(slots):
            tokens = list(text)
    else:
        tokens = list(text)
    sample = Sample.from_dict({
        "tokens": tokens,
        "intent": _pick(record, "intent"),
        "slots": slots,
        "kg": _convert_kg(_pick(record, "kg")),
        "up": _convert_up(_pick(record, "up"), option_names),
        "ca": {str(k): str(v) for k, v in _pick(record, "ca").items()},
    })
    sample.validate()
    return sample


def convert_proslu(src: str | Path, dst: str | Path, option_names: dict[str, list[str]] | None = None) -> dict[str, int]:
    """Convert ``{train,dev,test}.json`` from the upstream layout into our JSON-lines corpus."""
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name in SPLITS:
        f = src / f"{name}.json"
        if not f.exists():
            continue
        data = json.loads(f.read_text(encoding="utf-8"))
        records = list(data.values()) if isinstance(data, dict) else data
        samples = []
        for k, record in enumerate(records):
            try:
                samples.append(convert_record(record, option_names))
            except (KeyError, ValueError, TypeError) as exc:
                raise CorpusError(f"{f}: record {k}: {exc}") from None
        write_samples(samples, dst / f"{name}.jsonl")
        counts[name] = len(samples)
    if not counts:
        raise CorpusError(f"{src}: no train/dev/test .json files found")
    return counts
