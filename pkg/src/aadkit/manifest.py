"""Dataset manifest: trial inventory, resource checks, train/test split.

The manifest is a JSON file; schema documented in docs/manifest.md.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ResolutionError, ValidationError

SPLIT_TAGS = ("train", "test")


@dataclass(frozen=True)
class TrialRef:
    """One listening trial: EEG plus the two concurrent speech streams."""

    trial_id: str
    subject_id: str
    eeg: Path
    attended_source: Path
    unattended_source: Path
    split_tag: str | None = None

    def is_train(self) -> bool:
        return self.split_tag == "train"


@dataclass
class DatasetManifest:
    dataset_id: str
    eeg_channel_count: int
    line_noise_hz: int
    trials: list[TrialRef]
    language: str = ""
    eeg_sample_rate_hz: float = 64.0
    root: Path = field(default_factory=Path)

    def subjects(self) -> list[str]:
        return sorted({t.subject_id for t in self.trials})

    def trials_of(self, subject_id: str, split: str | None = None) -> list[TrialRef]:
        out = [t for t in self.trials if t.subject_id == subject_id]
        if split is not None:
            out = [t for t in out if t.split_tag == split]
        return out


def _subject_rng(seed: int, subject_id: str) -> np.random.Generator:
    # crc32 keys the stream off the subject id so adding a subject does not
    # reshuffle the others
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(subject_id.encode("utf-8"))]))


def split_test_count(n_trials: int) -> int:
    """90-10 split rule: every subject keeps at least one test trial."""
    return max(1, int(np.floor(0.1 * n_trials + 0.5)))


def assign_split(trials: list[TrialRef], seed: int) -> list[TrialRef]:
    """Fill in missing split tags per subject with a seeded shuffle.

    Pre-tagged trials are respected; only untagged ones are assigned, topping
    the subject's test set up to the 90-10 target.
    """
    by_subject: dict[str, list[int]] = {}
    for i, t in enumerate(trials):
        by_subject.setdefault(t.subject_id, []).append(i)
    out = list(trials)
    for subject_id in sorted(by_subject):
        idxs = by_subject[subject_id]
        target_test = split_test_count(len(idxs))
        tagged_test = sum(1 for i in idxs if trials[i].split_tag == "test")
        untagged = [i for i in idxs if trials[i].split_tag is None]
        if not untagged:
            continue
        order = _subject_rng(seed, subject_id).permutation(len(untagged))
        need = max(0, target_test - tagged_test)
        to_test = {untagged[j] for j in order[:need]}
        for i in untagged:
            out[i] = replace(trials[i], split_tag="test" if i in to_test else "train")
    return out


def load_manifest(path: str | Path, split_seed: int = 0,
                  check_resources: bool = True) -> DatasetManifest:
    """Load and validate a manifest; assigns any missing split tags."""
    path = Path(path)
    if not path.exists():
        raise ResolutionError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)

    for key in ("dataset_id", "eeg_channel_count", "line_noise_hz", "trials"):
        if key not in raw:
            raise ValidationError(f"manifest missing required field {key!r}")
    if raw["line_noise_hz"] not in (50, 60):
        raise ValidationError(f"line_noise_hz must be 50 or 60, got {raw['line_noise_hz']}")
    if int(raw["eeg_channel_count"]) <= 0:
        raise ValidationError("eeg_channel_count must be positive")

    root = path.parent
    trials: list[TrialRef] = []
    seen: set[str] = set()
    for entry in raw["trials"]:
        if entry.get("exclude", False):
            continue  # repetition / single-speaker trials never enter the pipeline
        tid = entry["trial_id"]
        if tid in seen:
            raise ValidationError(f"duplicate trial_id {tid!r}")
        seen.add(tid)
        tag = entry.get("split_tag")
        if tag is not None and tag not in SPLIT_TAGS:
            raise ValidationError(f"trial {tid!r}: bad split_tag {tag!r}")
        att = root / entry["attended_source"]
        unatt = root / entry["unattended_source"]
        if str(att) == str(unatt):
            raise ValidationError(f"trial {tid!r}: attended and unattended sources are identical")
        trials.append(TrialRef(
            trial_id=tid,
            subject_id=entry["subject_id"],
            eeg=root / entry["eeg"],
            attended_source=att,
            unattended_source=unatt,
            split_tag=tag,
        ))

    if check_resources:
        for t in trials:
            for p in (t.eeg, t.attended_source, t.unattended_source):
                if not Path(p).exists():
                    raise ResolutionError(f"trial {t.trial_id!r}: missing resource {p}")

    return DatasetManifest(
        dataset_id=raw["dataset_id"],
        eeg_channel_count=int(raw["eeg_channel_count"]),
        line_noise_hz=int(raw["line_noise_hz"]),
        language=raw.get("language", ""),
        eeg_sample_rate_hz=float(raw.get("eeg_sample_rate_hz", 64.0)),
        trials=assign_split(trials, split_seed),
        root=root,
    )


def save_manifest(manifest_dict: dict, path: str | Path) -> None:
    """Write a manifest dict as stable, human-diffable JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_dict, fh, indent=2, sort_keys=True)
        fh.write("\n")
