"""
Synthetic fixtures - features and QA sources with a real signal in them
=======================================================================

Each sound word owns one mean feature vector (seeded by the word itself);
every clip of that word is that mean plus seeded Gaussian noise. A toy model
can therefore learn clip -> label, and the generator is the oracle for which
class a clip belongs to.
"""

import zlib
from pathlib import Path

import numpy as np

from audio_frontend import AudioClipRef
from errors import FixtureError
from forge import SourceRecord, TaskType
from persistence import write_features
from shard_lexicon import LEXICON, SOUND_CLASSES, entries_by_class

FRAMES = 20
NOISE_STD = 0.3
CLIP_SECONDS = 10.0

LABEL_PROMPTS = (
    "Analyze audio events in clip given.",
    "What are the sound events in the audio clip?",
    "Classify the sounds in this audio clip.",
    "Identify the sound events in the recording.",
)

ACOUSTIC_PROMPTS = (
    "Identify the noise in the audio clip? Analyze acoustic features first.",
    "What sound can be heard in this audio? Describe its acoustic features first.",
    "Classify the audio clip and describe its acoustic features.",
)

SYNONYM_QUESTIONS = (
    "Is the sound in the audio clip similar to {term}?",
    "Is the sound in this audio similar to {term}?",
)

HYPERNYM_QUESTIONS = (
    "Is the sound in the audio clip a type of {term}?",
    "Is the sound in this audio a type of {term}?",
)

ENVIRONMENT_QUESTION = "Describe the environment where this sound was likely recorded."

ACOUSTIC_DESCRIPTORS = {
    "anthrophony": "Mechanical and steady",
    "biophony": "Organic and rhythmic",
    "geophony": "Broadband and diffuse",
}

ENVIRONMENTS = {
    "anthrophony": "an urban",
    "biophony": "a natural habitat",
    "geophony": "an open outdoor",
}


def slug(word):
    return word.replace(" ", "_")


def class_mean(label, dim):
    return np.random.default_rng(zlib.crc32(label.encode("utf-8"))).normal(0.0, 1.0, size=dim)


def class_features(label, seed, clip_id, frames=FRAMES, dim=16):
    rng = np.random.default_rng([int(seed), zlib.crc32(clip_id.encode("utf-8"))])
    return class_mean(label, dim)[None, :] + rng.normal(0.0, NOISE_STD, size=(frames, dim))


def write_class_features(label, seed, clip_id, path, frames=FRAMES, dim=16):
    """Write one clip's feature file; returns its AudioClipRef"""
    write_features(path, class_features(label, seed, clip_id, frames, dim))
    return AudioClipRef(id=clip_id, feature_path=str(path), duration_s=CLIP_SECONDS)


def balanced_entries(count, seed):
    """count lexicon entries, round-robin over the sound classes"""
    if count < 1:
        raise FixtureError(f"need at least one word, got {count}")
    if count > len(LEXICON):
        raise FixtureError(f"lexicon has {len(LEXICON)} words, {count} requested")
    rng = np.random.default_rng(seed)
    grouped = entries_by_class()
    shuffled = {c: [grouped[c][i] for i in rng.permutation(len(grouped[c]))] for c in SOUND_CLASSES}
    picked = []
    for i in range(max(len(v) for v in shuffled.values())):
        for c in SOUND_CLASSES:
            if i < len(shuffled[c]):
                picked.append(shuffled[c][i])
    return picked[:count]


def distractors(entry, relation, n, rng):
    """n terms of the given relation ("synonyms" / "hypernyms") from other sound classes"""
    own = set(entry.synonyms) | set(entry.hypernyms) | {entry.word}
    pool = sorted({
        term
        for other in LEXICON if other.sound_class != entry.sound_class
        for term in getattr(other, relation)
        if term not in own
    })
    if len(pool) < n:
        raise FixtureError(f"only {len(pool)} distractor {relation} available for '{entry.word}'")
    return [pool[i] for i in sorted(rng.choice(len(pool), size=n, replace=False))]


def _record(clip, suffix, prompt, answer, task_type):
    return SourceRecord(id=f"{clip.id}_{suffix}", audio=clip, prompt=prompt, answer=answer, task_type=task_type)


def source_records_for_clip(entry, clip, k, rng):
    label = entry.canonical_label
    records = [
        _record(clip, "label", LABEL_PROMPTS[k % len(LABEL_PROMPTS)], f"Labels: {label}",
                TaskType.LABEL_CLASSIFICATION),
        _record(clip, "acoustic", ACOUSTIC_PROMPTS[k % len(ACOUSTIC_PROMPTS)],
                f"Labels with acoustic features: {ACOUSTIC_DESCRIPTORS[entry.sound_class]} -> {label}",
                TaskType.ACOUSTIC_FEATURE),
        _record(clip, "environment", ENVIRONMENT_QUESTION,
                f"It was likely recorded in {ENVIRONMENTS[entry.sound_class]} environment with {entry.word} sounds.",
                TaskType.OPEN_ENDED),
    ]

    synonym = entry.synonyms[k % 2]
    hypernym = entry.hypernyms[k % 2]
    wrong_synonym = distractors(entry, "synonyms", 1, rng)[0]
    wrong_hypernym = distractors(entry, "hypernyms", 1, rng)[0]
    syn_q = SYNONYM_QUESTIONS[k % len(SYNONYM_QUESTIONS)]
    hyp_q = HYPERNYM_QUESTIONS[k % len(HYPERNYM_QUESTIONS)]
    records += [
        _record(clip, "syn_yes", syn_q.format(term=synonym), f"Yes, it is similar to {synonym}.",
                TaskType.OPEN_ENDED),
        _record(clip, "syn_no", syn_q.format(term=wrong_synonym), f"No, it is not similar to {wrong_synonym}.",
                TaskType.OPEN_ENDED),
        _record(clip, "hyp_yes", hyp_q.format(term=hypernym), f"Yes, it is a type of {hypernym}.",
                TaskType.OPEN_ENDED),
        _record(clip, "hyp_no", hyp_q.format(term=wrong_hypernym), f"No, it is not a type of {wrong_hypernym}.",
                TaskType.OPEN_ENDED),
    ]
    return records


def build_source_dataset(out_dir, seed=0, words=12, clips_per_word=2, d_audio=16, frames=FRAMES):
    """Synthetic closed- and open-ended QA sources plus their feature files"""
    if clips_per_word < 1:
        raise FixtureError(f"clips_per_word must be at least 1, got {clips_per_word}")
    feature_dir = Path(out_dir) / "features"
    rng = np.random.default_rng([int(seed), 1])
    records = []
    for entry in balanced_entries(words, seed):
        for k in range(clips_per_word):
            clip_id = f"src_{slug(entry.word)}_{k}"
            clip = write_class_features(entry.word, seed, clip_id, feature_dir / f"{clip_id}.aftr", frames, d_audio)
            records.extend(source_records_for_clip(entry, clip, k, rng))
    return records
