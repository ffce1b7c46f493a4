"""
Forge - rewrite non-interleaved QA prompts into interleaved prompts
===================================================================

Pipeline per source record:
1. Pick a rewrite (offline template bank, or an external rephrasing service)
2. Validate it: exactly one [AUDIO], no media-file words, answer and audio
   untouched
3. Accept it as a ForgeRecord or quarantine the record with a reason

Every input record ends up exactly once in either the output or the
quarantine list.
"""

import ast
import json
import os
import re
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import requests

from audio_frontend import AudioClipRef
from errors import ClientError, ConfigError, ForgeRejected, ParseError, PreconditionError
from persistence import write_records
from tokenizer import AUDIO_PLACEHOLDER

TEMPERATURE_RANGE = (0.7, 1.1)
EXTERNAL_RETRIES = 3
BANNED_WORDS = ("clip", "recording", "audio file")

_BANNED = re.compile(r"\b(clip|recording|audio\s+file)\b", re.IGNORECASE)


class TaskType(str, Enum):
    LABEL_CLASSIFICATION = "label_classification"
    ACOUSTIC_FEATURE = "acoustic_feature"
    OPEN_ENDED = "open_ended"


class Backend(str, Enum):
    OFFLINE = "offline"
    EXTERNAL = "external"


# ---------------------------------------------------------------- records

@dataclass(frozen=True)
class SourceRecord:
    """One non-interleaved QA item"""
    id: str
    audio: AudioClipRef
    prompt: str
    answer: str
    task_type: TaskType

    def to_dict(self):
        return {
            "id": self.id,
            "audio": self.audio.to_dict(),
            "prompt": self.prompt,
            "answer": self.answer,
            "task_type": self.task_type.value,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=str(data["id"]),
            audio=AudioClipRef.from_dict(data["audio"]),
            prompt=str(data["prompt"]),
            answer=str(data["answer"]),
            task_type=TaskType(data["task_type"]),
        )


@dataclass(frozen=True)
class ForgeRecord:
    id: str
    audio: AudioClipRef
    original_prompt: str
    interleaved_prompt: str
    answer: str
    task_type: TaskType
    backend: Backend
    temperature_used: float

    def to_dict(self):
        return {
            "id": self.id,
            "audio": self.audio.to_dict(),
            "original_prompt": self.original_prompt,
            "interleaved_prompt": self.interleaved_prompt,
            "answer": self.answer,
            "task_type": self.task_type.value,
            "backend": self.backend.value,
            "temperature_used": self.temperature_used,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=str(data["id"]),
            audio=AudioClipRef.from_dict(data["audio"]),
            original_prompt=str(data["original_prompt"]),
            interleaved_prompt=str(data["interleaved_prompt"]),
            answer=str(data["answer"]),
            task_type=TaskType(data["task_type"]),
            backend=Backend(data["backend"]),
            temperature_used=float(data["temperature_used"]),
        )


@dataclass(frozen=True)
class QuarantineRecord(ForgeRecord):
    reason: str = ""

    def to_dict(self):
        payload = super().to_dict()
        payload["reason"] = self.reason
        return payload

    @classmethod
    def from_dict(cls, data):
        base = ForgeRecord.from_dict(data)
        return cls(**{**base.__dict__, "reason": str(data.get("reason", ""))})

    @classmethod
    def from_source(cls, source, backend, reason, candidate="", temperature=0.0):
        return cls(
            id=source.id,
            audio=source.audio,
            original_prompt=source.prompt,
            interleaved_prompt=candidate,
            answer=source.answer,
            task_type=source.task_type,
            backend=backend,
            temperature_used=temperature,
            reason=reason,
        )


# ---------------------------------------------------------------- validation

class ViolationKind(str, Enum):
    MISSING_PLACEHOLDER = "MissingPlaceholder"
    EXTRA_PLACEHOLDER = "ExtraPlaceholder"
    BANNED_WORD = "BannedWord"
    ANSWER_CHANGED = "AnswerChanged"
    AUDIO_CHANGED = "AudioChanged"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str = ""

    def __str__(self):
        return f"{self.kind.value}({self.detail!r})" if self.detail else self.kind.value


def banned_words_in(text):
    return [m.group(0).lower() for m in _BANNED.finditer(text)]


def validate_prompt(prompt):
    violations = []
    count = prompt.count(AUDIO_PLACEHOLDER)
    if count == 0:
        violations.append(Violation(ViolationKind.MISSING_PLACEHOLDER))
    elif count > 1:
        violations.append(Violation(ViolationKind.EXTRA_PLACEHOLDER, str(count)))
    for word in banned_words_in(prompt):
        violations.append(Violation(ViolationKind.BANNED_WORD, re.sub(r"\s+", " ", word)))
    return violations


def validate_record(candidate, source=None):
    """Every invariant the candidate breaks; empty means valid"""
    violations = validate_prompt(candidate.interleaved_prompt)
    if source is not None:
        if candidate.answer.encode("utf-8") != source.answer.encode("utf-8"):
            violations.append(Violation(ViolationKind.ANSWER_CHANGED))
        if candidate.audio != source.audio:
            violations.append(Violation(ViolationKind.AUDIO_CHANGED))
    return violations


def _describe(violations):
    return ", ".join(str(v) for v in violations)


# ---------------------------------------------------------------- templates

VARIETY_INSTRUCTIONS = (
    "Use creative and varied language.",
    "Employ different sentence structures and word choices.",
    "Be innovative in your phrasing while maintaining clarity.",
    "Use diverse vocabulary and avoid repetitive patterns.",
    "Create unique formulations while keeping the core meaning.",
    "Vary your word choice and sentence construction.",
    "Express the same concept using different linguistic approaches.",
    "Be original in your expression while preserving the instruction's purpose.",
)

DEFAULT_TEMPLATES = {
    TaskType.LABEL_CLASSIFICATION: (
        "After you hear {AUDIO}, what are the appropriate classification labels?",
        "Listen to this: {AUDIO}. Now, list the corresponding tags.",
        "Consider {AUDIO}. What are its corresponding labels?",
        "Reflect on the contents of {AUDIO} and enumerate the relevant categories it represents.",
    ),
    TaskType.ACOUSTIC_FEATURE: (
        "Listen to this: {AUDIO}. For each component you identify, list its label and describe its acoustic features.",
        "Regarding {AUDIO}, what labels are suitable, and what are their key sound properties?",
        "Analyze what you hear in {AUDIO}. Return a list of labels paired with their distinguishing acoustic qualities.",
        "Consider {AUDIO} and enumerate all discernible sound categories, specifying for each both an "
        "appropriate label and a detailed account of its auditory characteristics.",
    ),
    TaskType.OPEN_ENDED: (
        "Based on {AUDIO}, {PAYLOAD}",
        "Based on what you hear in {AUDIO}, {PAYLOAD}",
    ),
}

# phrases that name the medium; the earliest one in a question becomes [AUDIO]
CUE_PHRASES = (
    "the audio clip",
    "this audio clip",
    "the sound clip",
    "this sound clip",
    "this audio signal",
    "the audio signal",
    "this audio",
    "the audio",
    "the recording",
    "this recording",
    "the clip",
    "this clip",
)


@dataclass
class TemplateBank:
    templates: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_TEMPLATES.items()})
    variety_instructions: tuple = VARIETY_INSTRUCTIONS
    cue_phrases: tuple = CUE_PHRASES

    def for_task(self, task_type):
        return self.templates.get(TaskType(task_type), [])

    def cue_pattern(self):
        ordered = sorted(self.cue_phrases, key=len, reverse=True)
        alternatives = "|".join(r"\s+".join(re.escape(w) for w in p.split()) for p in ordered)
        return re.compile(r"\b(" + alternatives + r")\b", re.IGNORECASE)


def instantiate(template, payload=""):
    return template.replace("{AUDIO}", AUDIO_PLACEHOLDER).replace("{PAYLOAD}", payload)


def replace_first_cue(question, bank):
    """question with its earliest cue phrase swapped for [AUDIO], or None"""
    # alternatives are tried longest first, so the earliest match is also the longest at its start
    best = bank.cue_pattern().search(question)
    if best is None:
        return None
    return question[:best.start()] + AUDIO_PLACEHOLDER + question[best.end():]


def as_clause(question):
    """Question text ready to follow "Based on [AUDIO], " """
    question = question.strip()
    if len(question) > 1 and question[0].isupper() and not question[1].isupper():
        question = question[0].lower() + question[1:]
    return question


def record_rng(seed, record_id):
    return np.random.default_rng([int(seed), zlib.crc32(record_id.encode("utf-8"))])


def _accepted(source, prompt, backend, temperature):
    return ForgeRecord(
        id=source.id,
        audio=source.audio,
        original_prompt=source.prompt,
        interleaved_prompt=prompt,
        answer=source.answer,
        task_type=source.task_type,
        backend=backend,
        temperature_used=float(temperature),
    )


def offline_candidates(record, bank, seed):
    """Rewrites in the order they will be tried"""
    rng = record_rng(seed, record.id)
    templates = list(bank.for_task(record.task_type))
    order = [templates[i] for i in rng.permutation(len(templates))]

    if record.task_type == TaskType.OPEN_ENDED:
        replaced = replace_first_cue(record.prompt, bank)
        if replaced is not None:
            return [replaced]
        return [instantiate(t, as_clause(record.prompt)) for t in order]
    return [instantiate(t) for t in order]


def forge_offline(record, bank, seed):
    """Deterministic rewrite from the template bank; raises ForgeRejected"""
    candidates = offline_candidates(record, bank, seed)
    if not candidates:
        raise ForgeRejected(record.id, f"no templates for task {record.task_type.value}")

    violations = []
    for prompt in candidates:
        candidate = _accepted(record, prompt, Backend.OFFLINE, 0.0)
        violations = validate_record(candidate, record)
        if not violations:
            return candidate
    raise ForgeRejected(record.id, f"no template passed validation: {_describe(violations)}", violations)


# ---------------------------------------------------------------- external backend

_RULE_PLACEHOLDER = "The new prompt must contain the exact placeholder [AUDIO] one and only one time."
_RULE_MEDIA = ('The new prompt must avoid words that explicitly refer to a media file, '
               'such as "clip," "recording," or "audio file."')
_IMPORTANT = ("IMPORTANT: {instruction}  Make each instruction distinct and avoid formulaic responses. "
              "Use different words and sentence structures even when the meaning is similar.")
_ROLE = "You are an expert AI assistant specializing in revising prompts for multimodal language models."


def _numbered(rules):
    return "\n".join(f"{i}. {rule}" for i, rule in enumerate(rules, start=1))


SYSTEM_PROMPTS = {
    TaskType.LABEL_CLASSIFICATION: (
        _ROLE + "\nYour task is to rewrite a given prompt into a new, interleaved format.\n\n"
        "Your Rules:\n" + _numbered([
            "You must take the user's 'Old Prompt' and rephrase it into an abstract, interleaved instruction.",
            _RULE_PLACEHOLDER,
            _RULE_MEDIA,
            "The new prompt must be completely general and scenario-agnostic.",
            'Your final output must be a single JSON object with one key: "revised_prompt". '
            "Do not include any other text.",
        ]) + "\n\n" + _IMPORTANT
    ),
    TaskType.ACOUSTIC_FEATURE: (
        _ROLE + "\nYour task is to rewrite a given prompt into a new, interleaved format for a complex audio "
        "classification task that requires acoustic descriptions.\n\n"
        "Your Rules:\n" + _numbered([
            "You must take the user's 'Old Prompt' and rephrase it into an abstract, interleaved instruction.",
            _RULE_PLACEHOLDER,
            "The prompt must explicitly ask for both a label AND a description of its acoustic features.",
            _RULE_MEDIA,
            "The new prompt must be completely general and scenario-agnostic.",
            "Your final output must be a single JSON object with one key: revised_prompt, "
            "e.g. {'revised_prompt': '...'}. Do not include any other text.",
        ]) + "\n\n" + _IMPORTANT
    ),
    TaskType.OPEN_ENDED: (
        _ROLE + "\nYour task is to rewrite a given open-ended question into a new, interleaved format.\n\n"
        "Your Rules:\n" + _numbered([
            "You must take the user's 'Old Prompt' and rephrase it by naturally integrating the [AUDIO] "
            "placeholder into the question.",
            "The new prompt must preserve the full intent and meaning of the original question.",
            _RULE_PLACEHOLDER,
            _RULE_MEDIA,
            "The resulting prompt should be a single, grammatically correct, and natural-sounding question.",
            'Your final output must be a single JSON object with one key: "revised_prompt". '
            "Do not include any other text.",
        ]) + "\n\n" + _IMPORTANT
    ),
}

_USER_GOALS = {
    TaskType.LABEL_CLASSIFICATION: (
        "I need to revise the following prompt for a simple audio classification task. "
        "The goal is to ask for a list of labels."
    ),
    TaskType.ACOUSTIC_FEATURE: (
        "I need to revise the following prompt for a complex audio classification task. "
        "The goal is to ask for a list of labels, each with a description of its acoustic properties."
    ),
    TaskType.OPEN_ENDED: (
        "I need to revise the following prompt for an open-ended audio question-answering task. "
        "The goal is to rephrase the question to include an audio placeholder."
    ),
}

_GOOD_EXAMPLES = {
    TaskType.LABEL_CLASSIFICATION: (
        '"After you hear [AUDIO], what are the appropriate classification labels?"',
        '"Listen to this: [AUDIO]. Now, list the corresponding tags."',
        '"Consider [AUDIO]. What are its corresponding labels?"',
    ),
    TaskType.ACOUSTIC_FEATURE: (
        '"Listen to this: [AUDIO]. For each component you identify, list its label and describe its '
        'acoustic features."',
        '"Regarding [AUDIO], what labels are suitable, and what are their key sound properties?"',
        '"Analyze what you hear in [AUDIO]. Return a list of labels paired with their distinguishing '
        'acoustic qualities."',
    ),
    TaskType.OPEN_ENDED: (
        'Old: "What other sound events, if any, can be heard in the audio clip?" -> '
        'New: "What other sound events, if any, can be heard in [AUDIO]?"',
        'Old: "Based on the acoustic features, can you tell the type of vacuum cleaner?" -> '
        'New: "Based on [AUDIO], can you tell the type of vacuum cleaner?"',
        'Old: "Describe the environment where this sound was likely recorded." -> '
        'New: "Based on what you hear in [AUDIO], describe the environment where it was likely recorded."',
    ),
}

_CLOSING = {
    TaskType.LABEL_CLASSIFICATION: 'Provide your output as a single JSON object with the key "revised_prompt".',
    TaskType.ACOUSTIC_FEATURE: ("Provide your output as a single JSON object with the key revised_prompt, "
                                "e.g. {'revised_prompt': '...'}."),
    TaskType.OPEN_ENDED: 'Provide your output as a single JSON object with the key "revised_prompt".',
}


def build_messages(record, instruction):
    """(system, user) pair for one source record"""
    task = TaskType(record.task_type)
    system = SYSTEM_PROMPTS[task].replace("{instruction}", instruction)
    examples = "\n".join(f"- {e}" for e in _GOOD_EXAMPLES[task])
    user = (
        f"{_USER_GOALS[task]}\n\n"
        f'Old Prompt: "{record.prompt}"\n\n'
        "Please revise it into a new, single-string interleaved prompt.\n\n"
        f"Good Revision Examples:\n{examples}\n\n"
        f"{_CLOSING[task]}"
    )
    return system, user


def parse_revised_prompt(raw):
    """Pull revised_prompt out of a service response (dict or JSON-ish text)"""
    if isinstance(raw, dict):
        payload = raw
    else:
        text = str(raw).strip()
        fenced = re.match(r"^```(?:json)?\s*(.*?)\s*```$", text, re.DOTALL)
        if fenced:
            text = fenced.group(1)
        try:
            payload = json.loads(text)
        except ValueError:
            try:
                payload = ast.literal_eval(text)
            except (ValueError, SyntaxError) as e:
                raise ParseError(f"response is not a JSON object: {text[:80]!r}") from e
    if not isinstance(payload, dict) or set(payload) != {"revised_prompt"}:
        raise ParseError(f"response must have exactly one key 'revised_prompt', got {payload!r:.80}")
    value = payload["revised_prompt"]
    if not isinstance(value, str):
        raise ParseError(f"revised_prompt must be a string, got {type(value).__name__}")
    return value.strip()


class HttpRephrasingClient:
    """POSTs {system, user, temperature}; expects {revised_prompt} back"""

    def __init__(self, endpoint, api_key=None, timeout=30.0, max_in_flight=4, session=None):
        if not endpoint:
            raise ConfigError("FORGE_ENDPOINT is required for the external backend")
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @classmethod
    def from_env(cls, **kwargs):
        return cls(os.environ.get("FORGE_ENDPOINT"), os.environ.get("FORGE_API_KEY"), **kwargs)

    def rephrase(self, system, user, temperature):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"system": system, "user": user, "temperature": temperature}
        with self._slots:
            try:
                response = self.session.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
                response.raise_for_status()
            except requests.RequestException as e:
                raise ClientError(f"rephrasing request to {self.endpoint} failed: {e}") from e
        return response.text


def check_temperature(temperature, bounds=TEMPERATURE_RANGE):
    low, high = bounds
    if not low <= temperature <= high:
        raise PreconditionError(f"temperature {temperature} outside [{low}, {high}]")


def forge_external(record, client, temperature, bank=None, seed=0,
                   bounds=TEMPERATURE_RANGE, retries=EXTERNAL_RETRIES):
    """Rewrite through a rephrasing service; one attempt plus `retries` on validation failure"""
    check_temperature(temperature, bounds)
    bank = bank or TemplateBank()
    rng = record_rng(seed, record.id)

    violations = []
    for _ in range(1 + retries):
        instruction = bank.variety_instructions[int(rng.integers(len(bank.variety_instructions)))]
        system, user = build_messages(record, instruction)
        revised = parse_revised_prompt(client.rephrase(system, user, temperature))
        candidate = _accepted(record, revised, Backend.EXTERNAL, temperature)
        violations = validate_record(candidate, record)
        if not violations:
            return candidate
    raise ForgeRejected(record.id, f"{1 + retries} attempts failed validation: {_describe(violations)}", violations)


# ---------------------------------------------------------------- dataset level

def sample_subset(records, n, seed):
    """Seeded uniform subset of n records, original order kept"""
    records = list(records)
    if n is None or n >= len(records):
        return records
    if n < 0:
        raise ValueError(f"subset size must be non-negative, got {n}")
    rng = np.random.default_rng(seed)
    picks = sorted(int(i) for i in rng.choice(len(records), size=n, replace=False))
    return [records[i] for i in picks]


@dataclass
class ForgeSummary:
    inputs: int
    accepted: int
    quarantined: int
    backend: str
    seed: int

    def to_dict(self):
        return dict(self.__dict__)


class ForgePipeline:
    """Forge a whole dataset with one backend"""

    def __init__(self, backend=Backend.OFFLINE, bank=None, seed=0, client=None,
                 temperature_range=TEMPERATURE_RANGE, max_in_flight=4, verbose=False):
        self.backend = Backend(backend)
        self.bank = bank or TemplateBank()
        self.seed = seed
        self.client = client
        self.temperature_range = temperature_range
        self.max_in_flight = max_in_flight
        self.verbose = verbose
        if self.backend == Backend.EXTERNAL and client is None:
            raise ConfigError("external backend needs a rephrasing client")

    def temperature_for(self, record):
        low, high = self.temperature_range
        return float(record_rng(self.seed + 1, record.id).uniform(low, high))

    def forge_one(self, record):
        """ForgeRecord or QuarantineRecord, never an exception for record-level failures"""
        temperature = 0.0
        try:
            if self.backend == Backend.OFFLINE:
                return forge_offline(record, self.bank, self.seed)
            temperature = self.temperature_for(record)
            return forge_external(record, self.client, temperature, self.bank, self.seed,
                                  bounds=self.temperature_range)
        except ForgeRejected as e:
            reason = e.reason
        except (ClientError, ParseError) as e:
            reason = f"{type(e).__name__}: {e}"
        return QuarantineRecord.from_source(record, self.backend, reason, temperature=temperature)

    def forge_dataset(self, records):
        """Returns (accepted, quarantined, summary)"""
        records = list(records)
        if self.backend == Backend.EXTERNAL and len(records) > 1:
            with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
                results = list(pool.map(self.forge_one, records))
        else:
            results = [self.forge_one(r) for r in records]

        accepted = [r for r in results if not isinstance(r, QuarantineRecord)]
        quarantined = [r for r in results if isinstance(r, QuarantineRecord)]
        summary = ForgeSummary(len(records), len(accepted), len(quarantined), self.backend.value, self.seed)

        if self.verbose:
            print(f"✓ Forged {summary.accepted} of {summary.inputs} records "
                  f"({self.backend.value} backend, seed {self.seed})")
            if quarantined:
                print(f"✗ Quarantined {summary.quarantined} records")
                for q in quarantined[:5]:
                    print(f"  - {q.id}: {q.reason}")
        return accepted, quarantined, summary


def write_forge_outputs(out_path, quarantine_path, accepted, quarantined):
    write_records(out_path, accepted)
    write_records(quarantine_path, quarantined)
    return out_path, quarantine_path


def quarantine_path_for(out_path):
    out_path = str(out_path)
    stem = out_path[:-6] if out_path.endswith(".jsonl") else out_path
    return f"{stem}.quarantine.jsonl"
