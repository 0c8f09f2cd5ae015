"""Dataset layout, label mapping, splits, and stratified subsampling.

Expects the command-words directory convention: one subdirectory per spoken
word full of 1-second WAVs, with an optional `_background_noise_` directory
of longer noise recordings.  Words outside the configured keyword list map
to "unknown"; "silence" examples are crops of the background noise.
"""

import hashlib
import os
import re
from dataclasses import dataclass

import numpy as np

from . import DataError

SILENCE = "silence"
UNKNOWN = "unknown"
BACKGROUND_DIR = "_background_noise_"

DEFAULT_KEYWORDS = ["yes", "no", "up", "down", "left", "right",
                    "on", "off", "stop", "go"]

MAX_PARTITION_HASH = 2**27 - 1  # ~134M buckets for the percentage hash


def class_names(keywords=None):
    """Label order: silence, unknown, then the keywords."""
    return [SILENCE, UNKNOWN] + list(keywords or DEFAULT_KEYWORDS)


def which_set(filename, validation_pct=10.0, testing_pct=10.0):
    """Stable train/validation/test assignment keyed on the speaker id.

    Recordings of one speaker always fall in the same partition, so the split
    survives adding files.  The `_nohash_` suffix is ignored when hashing.
    """
    base = os.path.basename(filename)
    speaker = re.sub(r"_nohash_.*$", "", base)
    h = hashlib.sha1(speaker.encode("utf-8")).hexdigest()
    pct = (int(h, 16) % (MAX_PARTITION_HASH + 1)) * (100.0 / MAX_PARTITION_HASH)
    if pct < validation_pct:
        return "validation"
    if pct < validation_pct + testing_pct:
        return "testing"
    return "training"


@dataclass
class Example:
    path: str
    label: str  # class name, already mapped to silence/unknown/keyword


def scan_dataset(root, keywords=None):
    """All labeled WAVs under root, mapped onto the class list.

    Returns (examples, noise_paths).  Noise recordings are returned
    separately; silence examples are synthesized from them by the caller.
    """
    keywords = list(keywords or DEFAULT_KEYWORDS)
    known = set(keywords)
    examples = []
    noise_paths = []
    if not os.path.isdir(root):
        raise DataError(f"dataset directory not found: {root}")
    for entry in sorted(os.listdir(root)):
        sub = os.path.join(root, entry)
        if not os.path.isdir(sub):
            continue
        wavs = sorted(
            os.path.join(sub, f) for f in os.listdir(sub) if f.endswith(".wav")
        )
        if entry == BACKGROUND_DIR:
            noise_paths.extend(wavs)
            continue
        label = entry if entry in known else UNKNOWN
        examples.extend(Example(path=p, label=label) for p in wavs)
    if not examples:
        raise DataError(f"no labeled WAV files under {root}")
    return examples, noise_paths


def split_examples(examples, validation_pct=10.0, testing_pct=10.0):
    parts = {"training": [], "validation": [], "testing": []}
    for ex in examples:
        parts[which_set(ex.path, validation_pct, testing_pct)].append(ex)
    return parts


def stratified_subsample(examples, rate, rng):
    """Deterministically keep round(rate * n) examples, stratified per class.

    Per-class quotas follow the largest-remainder rule so the grand total is
    exact and class proportions are preserved to within one clip.
    """
    if not 0.0 < rate <= 1.0:
        raise DataError(f"training rate must be in (0, 1], got {rate}")
    if rate == 1.0:
        return list(examples)
    by_class = {}
    for ex in examples:
        by_class.setdefault(ex.label, []).append(ex)
    target_total = round(rate * len(examples))
    quotas = {}
    remainders = []
    for label in sorted(by_class):
        exact = rate * len(by_class[label])
        quotas[label] = int(exact)
        remainders.append((exact - int(exact), label))
    short = target_total - sum(quotas.values())
    for _, label in sorted(remainders, reverse=True)[:short]:
        quotas[label] += 1
    picked = []
    for label in sorted(by_class):
        group = sorted(by_class[label], key=lambda ex: ex.path)
        order = rng.permutation(len(group))
        picked.extend(group[i] for i in order[: quotas[label]])
    return picked
