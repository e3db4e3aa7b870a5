"""EHR data model, corpus I/O and patient-level splitting."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, SizeError, ValidationError

EVENT_KINDS = ("symptom", "diagnosis", "medication")
VISIT_FIELDS = {"symptom": "symptoms", "diagnosis": "diagnoses", "medication": "medications"}
PARAGRAPHS = ("chief_complaint", "present_illness", "prescription")

PAD, BOS, EOS, UNK, EMPTY = "<pad>", "<bos>", "<eos>", "<unk>", "<empty>"
RESERVED_WORDS = (PAD, BOS, EOS, UNK, EMPTY)


def fnv1a_64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class Vocabulary:
    kind: str
    codes: tuple[str, ...]
    descriptions: tuple[str, ...] = ()
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS + ("word",):
            raise ValidationError(f"unknown vocabulary kind {self.kind!r}")
        object.__setattr__(self, "codes", tuple(self.codes))
        index = {c: i for i, c in enumerate(self.codes)}
        if len(index) != len(self.codes):
            seen, dup = set(), None
            for c in self.codes:
                if c in seen:
                    dup = c
                    break
                seen.add(c)
            raise ValidationError(f"duplicate code {dup!r} in {self.kind} vocabulary")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.codes)

    def __contains__(self, code: str) -> bool:
        return code in self.index

    def position(self, code: str) -> int:
        try:
            return self.index[code]
        except KeyError:
            raise ValidationError(f"unknown {self.kind} code {code!r}") from None

    def digest(self) -> int:
        """64-bit FNV-1a over the newline-joined codes."""
        return fnv1a_64("\n".join(self.codes).encode("utf-8"))

    def to_file(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, code in enumerate(self.codes):
                desc = self.descriptions[i] if i < len(self.descriptions) else ""
                fh.write(f"{code}\t{desc}\n" if desc else f"{code}\n")

    @classmethod
    def from_file(cls, path: str | os.PathLike, kind: str) -> "Vocabulary":
        codes, descs = [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                code, _, desc = line.partition("\t")
                codes.append(code.strip())
                descs.append(desc)
        return cls(kind, tuple(codes), tuple(descs) if any(descs) else ())


def build_word_vocabulary(corpus: "Corpus") -> Vocabulary:
    """Reserved tokens followed by every report token in sorted order."""
    words = set()
    for rec in corpus.records:
        for visit in rec.visits:
            if visit.report is not None:
                for para in visit.report.paragraphs():
                    words.update(para)
    words -= set(RESERVED_WORDS)
    return Vocabulary("word", RESERVED_WORDS + tuple(sorted(words)))


def tokenize(text: str) -> tuple[str, ...]:
    return tuple(text.lower().split())


@dataclass(frozen=True)
class EventSet:
    kind: str
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValidationError(f"{self.kind} indices must be strictly increasing: {idx}")
        if idx and idx[0] < 0:
            raise ValidationError(f"negative {self.kind} index")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, kind: str, indices: Iterable[int]) -> "EventSet":
        return cls(kind, tuple(sorted(set(int(i) for i in indices))))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def dense(self, size: int) -> np.ndarray:
        out = np.zeros(size, dtype=np.float32)
        out[list(self.indices)] = 1.0
        return out


@dataclass(frozen=True)
class Report:
    chief_complaint: tuple[str, ...]
    present_illness: tuple[str, ...]
    prescription: tuple[str, ...]

    def paragraphs(self) -> tuple[tuple[str, ...], ...]:
        return (self.chief_complaint, self.present_illness, self.prescription)

    @classmethod
    def from_text(cls, chief_complaint: str, present_illness: str, prescription: str) -> "Report":
        return cls(tokenize(chief_complaint), tokenize(present_illness), tokenize(prescription))


@dataclass(frozen=True)
class Visit:
    symptoms: EventSet
    diagnoses: EventSet
    medications: EventSet
    report: Report | None = None

    def __post_init__(self):
        for kind in EVENT_KINDS:
            es = getattr(self, VISIT_FIELDS[kind])
            if es.kind != kind:
                raise ValidationError(f"{VISIT_FIELDS[kind]} holds a {es.kind} event set")

    def events(self, kind: str) -> EventSet:
        return getattr(self, VISIT_FIELDS[kind])

    @classmethod
    def of(cls, symptoms=(), diagnoses=(), medications=(), report: Report | None = None) -> "Visit":
        return cls(EventSet.of("symptom", symptoms), EventSet.of("diagnosis", diagnoses),
                   EventSet.of("medication", medications), report)


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    visits: tuple[Visit, ...]

    def __post_init__(self):
        object.__setattr__(self, "visits", tuple(self.visits))
        if not self.visits:
            raise ValidationError(f"patient {self.patient_id!r} has no visits")

    def __len__(self) -> int:
        return len(self.visits)


@dataclass(frozen=True)
class Corpus:
    vocabularies: Mapping[str, Vocabulary]
    records: tuple[PatientRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for kind in EVENT_KINDS:
            if kind not in self.vocabularies:
                raise ValidationError(f"missing {kind} vocabulary")
        ids = set()
        for rec in self.records:
            if rec.patient_id in ids:
                raise ValidationError(f"duplicate patient_id {rec.patient_id!r}")
            ids.add(rec.patient_id)
            for visit in rec.visits:
                for kind in EVENT_KINDS:
                    es = visit.events(kind)
                    n = len(self.vocabularies[kind])
                    if es.indices and es.indices[-1] >= n:
                        raise ValidationError(
                            f"{kind} index {es.indices[-1]} out of range for vocabulary of size {n}"
                        )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def sizes(self) -> dict[str, int]:
        return {k: len(self.vocabularies[k]) for k in EVENT_KINDS}

    def with_records(self, records: Iterable[PatientRecord]) -> "Corpus":
        return Corpus(self.vocabularies, tuple(records))

    def visit_count(self) -> int:
        return sum(len(r) for r in self.records)


# -- file format ---------------------------------------------------------------

def record_to_json(record: PatientRecord, vocabularies: Mapping[str, Vocabulary]) -> dict:
    visits = []
    for v in record.visits:
        item = {
            VISIT_FIELDS[k]: [vocabularies[k].codes[i] for i in v.events(k).indices]
            for k in EVENT_KINDS
        }
        if v.report is not None:
            item["report"] = {name: " ".join(para) for name, para in zip(PARAGRAPHS, v.report.paragraphs())}
        visits.append(item)
    return {"patient_id": record.patient_id, "visits": visits}


def record_from_json(obj, vocabularies: Mapping[str, Vocabulary], line: int | None = None) -> PatientRecord:
    if not isinstance(obj, dict) or "patient_id" not in obj or "visits" not in obj:
        raise ParseError("record needs 'patient_id' and 'visits'", line)
    if not isinstance(obj["visits"], list):
        raise ParseError("'visits' must be a list", line)
    visits = []
    for raw in obj["visits"]:
        if not isinstance(raw, dict):
            raise ParseError("visit must be an object", line)
        sets = {}
        for kind in EVENT_KINDS:
            codes = raw.get(VISIT_FIELDS[kind], [])
            if not isinstance(codes, list):
                raise ParseError(f"'{VISIT_FIELDS[kind]}' must be a list", line)
            vocab = vocabularies[kind]
            for code in codes:
                if code not in vocab:
                    where = f" (line {line})" if line is not None else ""
                    raise ValidationError(f"unknown {kind} code {code!r}{where}")
            sets[kind] = EventSet.of(kind, (vocab.index[c] for c in codes))
        report = None
        if raw.get("report") is not None:
            rep = raw["report"]
            if not isinstance(rep, dict):
                raise ParseError("'report' must be an object", line)
            report = Report.from_text(*(str(rep.get(p, "")) for p in PARAGRAPHS))
        visits.append(Visit(sets["symptom"], sets["diagnosis"], sets["medication"], report))
    if not visits:
        raise ValidationError(f"patient {obj['patient_id']!r} has no visits")
    return PatientRecord(str(obj["patient_id"]), tuple(visits))


def parse_corpus(path: str | os.PathLike, vocabularies: Mapping[str, Vocabulary]) -> Corpus:
    if not os.path.exists(path):
        raise FileNotFoundError(f"corpus file not found: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON: {exc.msg}", lineno) from None
            records.append(record_from_json(obj, vocabularies, lineno))
    return Corpus(dict(vocabularies), tuple(records))


def dumps_corpus(corpus: Corpus) -> str:
    return "".join(
        json.dumps(record_to_json(r, corpus.vocabularies), ensure_ascii=False) + "\n"
        for r in corpus.records
    )


def write_corpus(corpus: Corpus, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_corpus(corpus))


def infer_vocabularies(paths: Sequence[str | os.PathLike]) -> dict[str, Vocabulary]:
    """Sorted code lists seen across corpus files, for vocabulary-free evaluation."""
    seen = {k: set() for k in EVENT_KINDS}
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"malformed JSON: {exc.msg}", lineno) from None
                for raw in obj.get("visits", []):
                    for kind in EVENT_KINDS:
                        seen[kind].update(raw.get(VISIT_FIELDS[kind], []))
    return {k: Vocabulary(k, tuple(sorted(seen[k]))) for k in EVENT_KINDS}


def write_vocabularies(vocabularies: Mapping[str, Vocabulary], directory: str | os.PathLike) -> None:
    os.makedirs(directory, exist_ok=True)
    for kind in EVENT_KINDS:
        vocabularies[kind].to_file(os.path.join(directory, f"{kind}.vocab"))


def read_vocabularies(directory: str | os.PathLike) -> dict[str, Vocabulary]:
    out = {}
    for kind in EVENT_KINDS:
        path = os.path.join(directory, f"{kind}.vocab")
        if not os.path.exists(path):
            raise FileNotFoundError(f"vocabulary file not found: {path}")
        out[kind] = Vocabulary.from_file(path, kind)
    return out


# -- splitting ---------------------------------------------------------------------

def split_corpus(corpus: Corpus, ratios: Sequence[float] = (0.8, 0.1, 0.1),
                 seed: int = 0) -> tuple[Corpus, ...]:
    """Split by patient. Later parts get ``floor(n * ratio)``; the rest goes to the first."""
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {tuple(ratios)}")
    n = len(corpus)
    if n < len(ratios):
        raise SizeError(f"cannot split {n} patients into {len(ratios)} parts")
    sizes = [int(np.floor(n * r)) for r in ratios[1:]]
    sizes.insert(0, n - sum(sizes))
    order = np.random.default_rng(seed).permutation(n)
    parts, start = [], 0
    for size in sizes:
        chosen = sorted(order[start:start + size])
        parts.append(corpus.with_records(corpus.records[i] for i in chosen))
        start += size
    return tuple(parts)
