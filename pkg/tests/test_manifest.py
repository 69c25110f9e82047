import json

import numpy as np
import pytest

from aadkit import matio
from aadkit.errors import ResolutionError, ValidationError
from aadkit.manifest import load_manifest, split_test_count


def write_dataset(tmp_path, trials, channels=4, extra=None):
    for t in trials:
        for key in ("eeg", "attended_source", "unattended_source"):
            path = tmp_path / t[key]
            path.parent.mkdir(parents=True, exist_ok=True)
            if not path.exists():
                matio.write_matrix(np.zeros((64, channels), dtype=np.float32), path)
    doc = {"dataset_id": "ds", "eeg_channel_count": channels, "line_noise_hz": 50,
           "language": "xx", "eeg_sample_rate_hz": 64.0, "trials": trials}
    doc.update(extra or {})
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def trial_entry(i, subject="s01", **kw):
    entry = {"trial_id": f"{subject}_t{i:02d}", "subject_id": subject,
             "eeg": f"eeg_{subject}_{i}.aadm",
             "attended_source": f"att_{subject}_{i}.aadm",
             "unattended_source": f"unatt_{subject}_{i}.aadm"}
    entry.update(kw)
    return entry


def test_single_subject_20_trials_split(tmp_path):
    path = write_dataset(tmp_path, [trial_entry(i) for i in range(20)])
    m = load_manifest(path, split_seed=17)
    assert len(m.trials_of("s01", "train")) == 18
    assert len(m.trials_of("s01", "test")) == 2


def test_two_subjects_independent_splits(tmp_path):
    trials = [trial_entry(i, "s01") for i in range(10)]
    trials += [trial_entry(i, "s02") for i in range(10)]
    m = load_manifest(write_dataset(tmp_path, trials), split_seed=3)
    for subject in ("s01", "s02"):
        assert len(m.trials_of(subject, "train")) == 9
        assert len(m.trials_of(subject, "test")) == 1


def test_split_deterministic(tmp_path):
    path = write_dataset(tmp_path, [trial_entry(i) for i in range(20)])
    tags1 = [t.split_tag for t in load_manifest(path, split_seed=17).trials]
    tags2 = [t.split_tag for t in load_manifest(path, split_seed=17).trials]
    tags3 = [t.split_tag for t in load_manifest(path, split_seed=18).trials]
    assert tags1 == tags2
    assert tags1 != tags3  # a different seed reshuffles (true for these seeds)


@pytest.mark.parametrize("n,expected", [(1, 1), (4, 1), (5, 1), (10, 1), (14, 1),
                                        (15, 2), (20, 2), (25, 3), (40, 4)])
def test_split_ratio_rule(n, expected):
    assert split_test_count(n) == expected


def test_split_ratio_applied(tmp_path):
    for n in (5, 15, 33):
        sub = f"s{n}"
        path = write_dataset(tmp_path, [trial_entry(i, sub) for i in range(n)])
        m = load_manifest(path, split_seed=0)
        assert len(m.trials_of(sub, "test")) == split_test_count(n)


def test_pretagged_trials_respected(tmp_path):
    trials = [trial_entry(i) for i in range(10)]
    trials[0]["split_tag"] = "test"
    m = load_manifest(write_dataset(tmp_path, trials), split_seed=0)
    assert m.trials[0].split_tag == "test"
    assert len(m.trials_of("s01", "test")) == 1  # target already met


def test_missing_resource(tmp_path):
    path = write_dataset(tmp_path, [trial_entry(0)])
    (tmp_path / "att_s01_0.aadm").unlink()
    with pytest.raises(ResolutionError, match="att_s01_0"):
        load_manifest(path)


def test_duplicate_trial_id(tmp_path):
    trials = [trial_entry(0), trial_entry(0)]
    trials[1]["eeg"] = "other.aadm"
    with pytest.raises(ValidationError, match="duplicate"):
        load_manifest(write_dataset(tmp_path, trials))


def test_identical_sources_rejected(tmp_path):
    t = trial_entry(0)
    t["unattended_source"] = t["attended_source"]
    with pytest.raises(ValidationError):
        load_manifest(write_dataset(tmp_path, [t]))


def test_excluded_trials_dropped(tmp_path):
    trials = [trial_entry(i) for i in range(5)]
    trials[2]["exclude"] = True
    m = load_manifest(write_dataset(tmp_path, trials))
    assert len(m.trials) == 4
    assert all(t.trial_id != "s01_t02" for t in m.trials)


def test_bad_line_noise(tmp_path):
    path = write_dataset(tmp_path, [trial_entry(0)], extra={"line_noise_hz": 45})
    with pytest.raises(ValidationError, match="line_noise"):
        load_manifest(path)
