"""
SHARD-style evaluation harness
==============================

Builds identity / synonym / hypernym queries for each benchmark clip, runs
them through the decoder, turns free-text answers into Yes/No decisions with
whole-word patterns, and aggregates per-task metrics:

    accuracy  = (tp + tn) / total
    precision = tp / (tp + fp)
    recall    = tp / (tp + fn)
    f1        = 2pr / (p + r)

Unparsed answers count as "No" and are reported separately. Each repeat is
scored as its own trial.
"""

import re
import zlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from audio_frontend import AudioClipRef, encode_audio
from errors import SchemaError
from fixtures import FRAMES, balanced_entries, distractors, slug, write_class_features
from numerics import no_grad
from persistence import write_json, write_records, write_text
from sequence_builder import PromptFormat, SequenceBuilder
from shard_lexicon import LEXICON, SOUND_CLASSES
from tokenizer import encode

DEFAULT_REPEATS = 4


class Relation(str, Enum):
    IDENTITY = "identity"
    SYNONYM = "synonym"
    HYPERNYM = "hypernym"


class Answer(str, Enum):
    YES = "Yes"
    NO = "No"
    UNPARSED = "Unparsed"


QUERY_TEMPLATES = {
    (Relation.IDENTITY, PromptFormat.NONINTERLEAVED): "Can you list the labels based on this audio file?",
    (Relation.IDENTITY, PromptFormat.INTERLEAVED): "Can you list the labels based on [AUDIO]?",
    (Relation.SYNONYM, PromptFormat.NONINTERLEAVED):
        "Is the sound of the object in this audio signal similar to {synonym}?",
    (Relation.SYNONYM, PromptFormat.INTERLEAVED): "Is [AUDIO] similar to {synonym}?",
    (Relation.HYPERNYM, PromptFormat.NONINTERLEAVED):
        "Is the sound of the object in this audio signal a type of {hypernym}?",
    (Relation.HYPERNYM, PromptFormat.INTERLEAVED): "Is [AUDIO] a type of {hypernym}?",
}

NEGATIVE_PHRASES = ("no", "not", "does not", "is not", "isn't", "doesn't")
AFFIRMATIVE_PHRASES = ("yes", "does", "is similar", "is a type")


# ---------------------------------------------------------------- items

@dataclass(frozen=True)
class ShardItem:
    word: str
    relation: Relation
    candidate: str
    audio: AudioClipRef
    truth: str
    sound_class: str

    def validate(self):
        if self.relation == Relation.IDENTITY:
            if self.candidate is not None:
                raise SchemaError(f"identity item for '{self.word}' must not carry a candidate")
        else:
            if not self.candidate:
                raise SchemaError(f"{self.relation.value} item for '{self.word}' has no candidate")
            if self.truth not in (Answer.YES.value, Answer.NO.value):
                raise SchemaError(f"{self.relation.value} item truth must be Yes or No, got {self.truth!r}")
        if self.sound_class not in SOUND_CLASSES:
            raise SchemaError(f"unknown sound class {self.sound_class!r}")
        return self

    def to_dict(self):
        return {
            "word": self.word,
            "relation": self.relation.value,
            "candidate": self.candidate,
            "audio": self.audio.to_dict(),
            "truth": self.truth,
            "sound_class": self.sound_class,
        }

    @classmethod
    def from_dict(cls, data):
        item = cls(
            word=str(data["word"]),
            relation=Relation(data["relation"]),
            candidate=data.get("candidate"),
            audio=AudioClipRef.from_dict(data["audio"]),
            truth=str(data["truth"]),
            sound_class=str(data["sound_class"]),
        )
        return item.validate()


@dataclass(frozen=True)
class ShardQuery:
    item: ShardItem
    prompt: str
    repeat: int


def build_queries(items, fmt, repeats=DEFAULT_REPEATS):
    """`repeats` prompt instances per item, benchmark wording for the format"""
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1, got {repeats}")
    fmt = PromptFormat(fmt)
    queries = []
    for item in items:
        template = QUERY_TEMPLATES[(item.relation, fmt)]
        if item.relation == Relation.IDENTITY:
            prompt = template
        else:
            if not item.candidate:
                raise SchemaError(f"{item.relation.value} item for '{item.word}' has no candidate")
            prompt = template.replace("{" + item.relation.value + "}", item.candidate)
        queries.extend(ShardQuery(item, prompt, r) for r in range(repeats))
    return queries


def benchmark_texts(items=None):
    """Every benchmark prompt in both formats plus the identity labels

    Without items the whole bundled lexicon is covered.
    """
    if items is not None:
        texts = [q.prompt for fmt in PromptFormat for q in build_queries(items, fmt, repeats=1)]
        texts.extend(sorted({item.word for item in items}))
        return texts

    texts = []
    for fmt in PromptFormat:
        texts.append(QUERY_TEMPLATES[(Relation.IDENTITY, fmt)])
        for entry in LEXICON:
            for relation, terms in ((Relation.SYNONYM, entry.synonyms), (Relation.HYPERNYM, entry.hypernyms)):
                template = QUERY_TEMPLATES[(relation, fmt)]
                texts.extend(template.replace("{" + relation.value + "}", term) for term in terms)
    texts.extend(entry.word for entry in LEXICON)
    return texts


# ---------------------------------------------------------------- decisions

@dataclass(frozen=True)
class Decision:
    raw_response: str
    parsed: Answer
    matched_span: str = None


def _phrase_pattern(phrase):
    return r"\s+".join(re.escape(w) for w in phrase.split())


_POLARITY = {p: Answer.NO for p in NEGATIVE_PHRASES}
_POLARITY.update({p: Answer.YES for p in AFFIRMATIVE_PHRASES})
# longest phrases first so "does not" wins over "does" at the same start
_DECISION = re.compile(
    r"\b(?:" + "|".join(_phrase_pattern(p) for p in sorted(_POLARITY, key=len, reverse=True)) + r")\b",
    re.IGNORECASE,
)


def extract_decision(response):
    """Earliest lexicon phrase decides; none -> Unparsed"""
    text = (response or "").replace("’", "'")
    match = _DECISION.search(text)
    if match is None:
        return Decision(raw_response=response, parsed=Answer.UNPARSED)
    key = re.sub(r"\s+", " ", match.group(0).lower())
    return Decision(raw_response=response, parsed=_POLARITY[key], matched_span=match.group(0))


def score_identity(response, canonical_labels):
    """True when any canonical label appears as a whole phrase"""
    labels = list(canonical_labels)
    if not labels:
        raise ValueError("score_identity needs at least one canonical label")
    if not response:
        return False
    for label in labels:
        pattern = r"(?<!\w)" + _phrase_pattern(label) + r"(?!\w)"
        if re.search(pattern, response, re.IGNORECASE):
            return True
    return False


# ---------------------------------------------------------------- metrics

@dataclass
class RelationMetrics:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    unparsed_count: int = 0
    accuracy: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    zero_denominator: list = field(default_factory=list)

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self):
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "unparsed_count": self.unparsed_count,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "zero_denominator": list(self.zero_denominator),
        }


def _truth_is_yes(truth):
    value = truth.value if isinstance(truth, Answer) else str(truth)
    return value.lower() == "yes"


def compute_metrics(pairs):
    """pairs: (Decision, truth) with truth Yes/No"""
    m = RelationMetrics()
    for decision, truth in pairs:
        predicted_yes = decision.parsed == Answer.YES
        if decision.parsed == Answer.UNPARSED:
            m.unparsed_count += 1
        actual_yes = _truth_is_yes(truth)
        if predicted_yes and actual_yes:
            m.tp += 1
        elif predicted_yes:
            m.fp += 1
        elif actual_yes:
            m.fn += 1
        else:
            m.tn += 1

    flags = []
    if m.total:
        m.accuracy = (m.tp + m.tn) / m.total
    else:
        flags.append("accuracy")
    if m.tp + m.fp:
        m.precision = m.tp / (m.tp + m.fp)
    else:
        flags.append("precision")
    if m.tp + m.fn:
        m.recall = m.tp / (m.tp + m.fn)
    else:
        flags.append("recall")
    if m.precision + m.recall > 0:
        m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall)
    else:
        flags.append("f1")
    m.zero_denominator = flags
    return m


TABLE_COLUMNS = [
    "Identity Acc", "Syno. Acc", "Hyper. Acc", "Syno. P", "Hyper. P",
    "Syno. R", "Hyper. R", "Syno. F1", "Hyper. F1",
]


@dataclass
class MetricsReport:
    synonym: RelationMetrics
    hypernym: RelationMetrics
    identity_accuracy: float
    identity_correct: int
    identity_total: int
    format: str
    repeats: int
    seed: int

    def table_row(self):
        """Percentages in the column order of the results table"""
        s, h = self.synonym, self.hypernym
        values = [self.identity_accuracy, s.accuracy, h.accuracy, s.precision, h.precision,
                  s.recall, h.recall, s.f1, h.f1]
        return dict(zip(TABLE_COLUMNS, [round(100.0 * v, 2) for v in values]))

    def to_frame(self, condition=None):
        return pd.DataFrame([self.table_row()], index=[condition or self.format])

    def to_dict(self):
        return {
            "format": self.format,
            "repeats": self.repeats,
            "seed": self.seed,
            "identity": {
                "accuracy": self.identity_accuracy,
                "correct": self.identity_correct,
                "total": self.identity_total,
            },
            "synonym": self.synonym.to_dict(),
            "hypernym": self.hypernym.to_dict(),
        }


def build_report(identity_hits, synonym_pairs, hypernym_pairs, fmt, repeats, seed):
    identity_total = len(identity_hits)
    identity_correct = sum(1 for hit in identity_hits if hit)
    return MetricsReport(
        synonym=compute_metrics(synonym_pairs),
        hypernym=compute_metrics(hypernym_pairs),
        identity_accuracy=identity_correct / identity_total if identity_total else 0.0,
        identity_correct=identity_correct,
        identity_total=identity_total,
        format=PromptFormat(fmt).value,
        repeats=repeats,
        seed=seed,
    )


def format_table(frame):
    return frame.to_string(float_format=lambda v: f"{v:6.2f}")


def write_report(report, responses, out_dir, condition=None):
    """report.json, report.txt and responses.jsonl under out_dir"""
    out_dir = Path(out_dir)
    write_json(out_dir / "report.json", report.to_dict())
    lines = [
        f"Condition: {condition or report.format}",
        f"Format: {report.format}  repeats: {report.repeats}  seed: {report.seed}",
        f"Unparsed: synonym {report.synonym.unparsed_count}, hypernym {report.hypernym.unparsed_count}",
        "",
        format_table(report.to_frame(condition)),
        "",
    ]
    write_text(out_dir / "report.txt", "\n".join(lines))
    write_records(out_dir / "responses.jsonl", responses)
    return out_dir


# ---------------------------------------------------------------- fixture

def build_shard_fixture(seed, words=78, per_word_audio=4, feature_dir="shard_features",
                        d_audio=16, frames=FRAMES):
    """Synthetic benchmark: per clip 1 identity + 4 synonym + 4 hypernym items"""
    if per_word_audio < 1:
        raise ValueError(f"per_word_audio must be at least 1, got {per_word_audio}")
    feature_dir = Path(feature_dir)
    items = []
    for entry in balanced_entries(words, seed):
        rng = np.random.default_rng([int(seed), zlib.crc32(entry.word.encode("utf-8"))])
        wrong_synonyms = distractors(entry, "synonyms", 2, rng)
        wrong_hypernyms = distractors(entry, "hypernyms", 2, rng)
        for k in range(per_word_audio):
            clip_id = f"shard_{slug(entry.word)}_{k}"
            clip = write_class_features(entry.word, seed, clip_id, feature_dir / f"{clip_id}.aftr", frames, d_audio)

            def item(relation, candidate, truth):
                return ShardItem(entry.word, relation, candidate, clip, truth, entry.sound_class).validate()

            items.append(item(Relation.IDENTITY, None, entry.canonical_label))
            items += [item(Relation.SYNONYM, s, Answer.YES.value) for s in entry.synonyms]
            items += [item(Relation.SYNONYM, s, Answer.NO.value) for s in wrong_synonyms]
            items += [item(Relation.HYPERNYM, h, Answer.YES.value) for h in entry.hypernyms]
            items += [item(Relation.HYPERNYM, h, Answer.NO.value) for h in wrong_hypernyms]
    return items


# ---------------------------------------------------------------- evaluator

class ShardEvaluator:
    """Runs benchmark items through a ToyDecoder and scores the answers"""

    def __init__(self, model, vocab, frontend_cfg, max_new=12, temperature=0.0, verbose=False):
        self.model = model
        self.vocab = vocab
        self.frontend_cfg = frontend_cfg
        self.max_new = max_new
        self.temperature = temperature
        self.verbose = verbose
        self.builder = SequenceBuilder(
            placeholder_id=vocab.audio_placeholder_id,
            audio_slot_count=frontend_cfg.audio_slot_count,
            bos_id=vocab.bos_id,
        )
        self._features = {}

    def _block(self, clip):
        if clip.id not in self._features:
            self._features[clip.id] = encode_audio(clip, self.frontend_cfg)
        return self.model.project_audio(self._features[clip.id])

    def respond(self, query, fmt, seed):
        prompt_ids = encode(query.prompt, self.vocab)
        seq = self.builder.build(fmt, prompt_ids, [])
        sample_seed = zlib.crc32(f"{seed}|{query.item.audio.id}|{query.prompt}|{query.repeat}".encode("utf-8"))
        with no_grad():
            block = self._block(query.item.audio)
            return self.model.generate(seq, [block] * seq.audio_block_count, self.vocab,
                                       self.max_new, self.temperature, sample_seed)

    def run(self, items, fmt, repeats=DEFAULT_REPEATS, seed=0):
        """Returns (MetricsReport, response rows)"""
        fmt = PromptFormat(fmt)
        queries = build_queries(items, fmt, repeats)
        greedy_cache = {}
        identity_hits, synonym_pairs, hypernym_pairs, rows = [], [], [], []

        if self.verbose:
            print(f"Evaluating {len(items)} items x {repeats} repeats ({fmt.value} prompts)...")

        for query in queries:
            key = (query.item.audio.id, query.prompt)
            if self.temperature == 0 and key in greedy_cache:
                response = greedy_cache[key]
            else:
                response = self.respond(query, fmt, seed)
                greedy_cache[key] = response

            item = query.item
            row = {
                "word": item.word,
                "relation": item.relation.value,
                "candidate": item.candidate,
                "clip_id": item.audio.id,
                "repeat": query.repeat,
                "prompt": query.prompt,
                "response": response,
                "truth": item.truth,
            }
            if item.relation == Relation.IDENTITY:
                hit = score_identity(response, [item.truth])
                identity_hits.append(hit)
                row["correct"] = hit
            else:
                decision = extract_decision(response)
                pairs = synonym_pairs if item.relation == Relation.SYNONYM else hypernym_pairs
                pairs.append((decision, item.truth))
                row["parsed"] = decision.parsed.value
                row["matched_span"] = decision.matched_span
                row["correct"] = (decision.parsed == Answer.YES) == _truth_is_yes(item.truth)
            rows.append(row)

        report = build_report(identity_hits, synonym_pairs, hypernym_pairs, fmt, repeats, seed)
        if self.verbose:
            print("=" * 60)
            print(format_table(report.to_frame()))
            print(f"Unparsed: synonym {report.synonym.unparsed_count}, "
                  f"hypernym {report.hypernym.unparsed_count}")
            print("=" * 60)
        return report, rows
