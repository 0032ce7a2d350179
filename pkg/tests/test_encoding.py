import numpy as np
import pytest
from hypothesis import given, strategies as st

from hnno_sim.encoding import (
    PATTERNS,
    LabeledClip,
    PatternGrid,
    SpikeTrain,
    load_clips,
    pattern_encode,
    read_spike_csv,
    sample_schedule,
    save_clips,
    synth_benchmark,
    synth_eeg,
    threshold_encode,
    write_spike_csv,
)
from hnno_sim.errors import IngestionError


def test_threshold_hand_example():
    x = np.array([[0.1, 0.6, 0.2], [0.9, 0.0, 0.7]])
    np.testing.assert_array_equal(threshold_encode(x, 0.5).spikes, [[0, 1, 0], [1, 0, 1]])


def test_threshold_is_strict():
    assert threshold_encode(np.array([[0.5]]), 0.5).spikes[0, 0] == 0


@given(st.floats(-3, 3), st.floats(0, 2))
def test_threshold_monotone(theta, d):
    x = np.linspace(-4, 4, 41)[None, :]
    assert threshold_encode(x, theta + d).spikes.sum() <= threshold_encode(x, theta).spikes.sum()


def test_threshold_rejects_nan():
    with pytest.raises(ValueError):
        threshold_encode(np.zeros((1, 3)), float("nan"))


def test_spike_train_validation():
    with pytest.raises(ValueError):
        SpikeTrain(np.array([[0, 2]]))
    with pytest.raises(ValueError):
        SpikeTrain(np.zeros(3))
    with pytest.raises(ValueError):
        SpikeTrain(np.zeros((1, 3)), step_us=0.5, pulse_width=0.6)


def test_patterns_are_distinct_grids():
    assert set(PATTERNS) == {"U", "C", "S", "D"}
    flat = {k: p.pixels.tobytes() for k, p in PATTERNS.items()}
    assert len(set(flat.values())) == 4
    train = pattern_encode(PATTERNS["U"])
    assert train.spikes.shape == (5, 5)
    # rows are channels: the bottom row of U is ".###."
    np.testing.assert_array_equal(train.spikes[4], [0, 1, 1, 1, 0])


def test_pattern_grid_shape_checked():
    with pytest.raises(ValueError):
        PatternGrid(np.zeros((4, 5)), "x")


@pytest.mark.parametrize(
    "n_steps,n_sample,expected",
    [(100, 1, [99]), (100, 2, [49, 99]), (100, 4, [24, 49, 74, 99]), (10, 3, [2, 5, 9])],
)
def test_sample_schedule(n_steps, n_sample, expected):
    np.testing.assert_array_equal(sample_schedule(n_steps, n_sample), expected)


@given(st.integers(1, 500), st.data())
def test_schedule_properties(n_steps, data):
    ns = data.draw(st.integers(1, n_steps))
    s = sample_schedule(n_steps, ns)
    assert s.size == ns and s[-1] == n_steps - 1
    assert np.all(np.diff(s) > 0) and s[0] >= 0


@pytest.mark.parametrize("ns", [0, 11])
def test_schedule_out_of_range(ns):
    with pytest.raises(ValueError):
        sample_schedule(10, ns)


# --- files ----------------------------------------------------------------------


def test_clip_roundtrip(tmp_path):
    clips = synth_benchmark(n_classes=3, n_channels=4, n_steps=7, n_clips=6, seed=1)
    manifest = save_clips(clips, tmp_path)
    back = load_clips(manifest)
    assert [c.label for c in back] == [c.label for c in clips]
    for a, b in zip(clips, back):
        np.testing.assert_array_equal(a.data, b.data)


def test_eeg_roundtrip_is_exact(tmp_path):
    clips = synth_eeg(n_per_class=1, n_channels=3, fs=16, seconds=1.0, seizure_channels=2)
    back = load_clips(save_clips(clips, tmp_path))
    for a, b in zip(clips, back):
        assert a.data.tobytes() == b.data.tobytes()


def _manifest(tmp_path, rows, clip_text="1,2\n3,4\n"):
    (tmp_path / "a.csv").write_text(clip_text)
    m = tmp_path / "m.jsonl"
    m.write_text("".join(r + "\n" for r in rows))
    return m


def test_manifest_bad_record_names_line(tmp_path):
    m = _manifest(tmp_path, ['{"path": "a.csv", "label": 0}', '{"path": "a.csv"}'])
    with pytest.raises(IngestionError, match=r"m\.jsonl:2"):
        load_clips(m)


def test_ragged_clip_names_file_and_line(tmp_path):
    m = _manifest(tmp_path, ['{"path": "a.csv", "label": 0}'], "1,2\n3,4\n5\n")
    with pytest.raises(IngestionError, match=r"a\.csv:3.*ragged"):
        load_clips(m)


def test_non_numeric_cell(tmp_path):
    m = _manifest(tmp_path, ['{"path": "a.csv", "label": 0}'], "1,2\n3,x\n")
    with pytest.raises(IngestionError, match=r"a\.csv:2.*'x'"):
        load_clips(m)


def test_missing_clip_file(tmp_path):
    m = _manifest(tmp_path, ['{"path": "nope.csv", "label": 0}'])
    with pytest.raises(IngestionError, match="nope.csv"):
        load_clips(m)


def test_channel_mismatch_between_clips(tmp_path):
    (tmp_path / "b.csv").write_text("1,2,3\n")
    m = _manifest(tmp_path, ['{"path": "a.csv", "label": 0}', '{"path": "b.csv", "label": 1}'])
    with pytest.raises(IngestionError, match="channels"):
        load_clips(m)


def test_missing_manifest(tmp_path):
    with pytest.raises(IngestionError):
        load_clips(tmp_path / "none.jsonl")


def test_clip_rejects_non_finite():
    with pytest.raises(ValueError):
        LabeledClip(np.array([[np.nan]]), 0)


def test_spike_csv_roundtrip(tmp_path):
    train = SpikeTrain((np.random.default_rng(0).random((5, 9)) < 0.3).astype(np.uint8))
    write_spike_csv(train, tmp_path / "s.csv")
    back = read_spike_csv(tmp_path / "s.csv", 5, 9)
    np.testing.assert_array_equal(back.spikes, train.spikes)


def test_spike_csv_bad_record(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("channel,t_step\n0,1\n9,1\n")
    with pytest.raises(IngestionError, match=r"s\.csv:3"):
        read_spike_csv(p, 2, 3)


# --- generators ----------------------------------------------------------------


def test_benchmark_deterministic():
    a = synth_benchmark(n_clips=20, seed=5)
    b = synth_benchmark(n_clips=20, seed=5)
    c = synth_benchmark(n_clips=20, seed=6)
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a, b))
    assert any(x.data.tobytes() != y.data.tobytes() for x, y in zip(a, c))


def test_benchmark_balanced_and_binary():
    clips = synth_benchmark(n_clips=50)
    assert np.bincount([c.label for c in clips]).tolist() == [5] * 10
    assert all(c.data.shape == (64, 100) for c in clips)
    assert all(set(np.unique(c.data)) <= {0.0, 1.0} for c in clips)


def test_eeg_surrogate_shape_and_labels():
    clips = synth_eeg(n_per_class=3, fs=32, seconds=2.0)
    assert [c.label for c in clips] == [0, 1] * 3
    assert clips[0].data.shape == (23, 64)


def test_eeg_rejects_too_many_seizure_channels():
    with pytest.raises(ValueError):
        synth_eeg(n_per_class=1, n_channels=3, seizure_channels=4)
