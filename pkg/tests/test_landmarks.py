import numpy as np
import pytest

from conftest import make_trial, random_frames
from signseq.errors import (
    EmptyInputError,
    FormatError,
    InvariantError,
    IoError,
    LengthError,
    TruncationError,
)
from signseq.landmarks import (
    Dominance,
    FeatureSet,
    HAND,
    LEFT_HAND,
    NUM_LANDMARKS,
    TrialSequence,
    missing_hand_rate,
    missing_mask,
    flatten_trial,
    read_landmarks,
    select_features,
    select_trial_features,
    write_landmarks,
)

HEADER_SIZE = 24


def roundtrippable(frames):
    # storage is f32; start from values that survive it bit-exactly
    return np.asarray(frames, dtype=np.float32).astype(np.float64)


def test_zero_frame_roundtrip(tmp_path):
    t = make_trial(np.zeros((1, NUM_LANDMARKS, 3)))
    p = tmp_path / "t.lmk1"
    write_landmarks(t, p)
    back = read_landmarks(p)
    assert back.n_frames == 1
    assert missing_mask(back.frames).all()


def test_write_read_bit_identity(tmp_path, rng):
    t = make_trial(roundtrippable(random_frames(rng, 5)), fps=24,
                   dominance=Dominance.LEFT, word="W37", signer="U11", trial=3)
    p1 = tmp_path / "a.lmk1"
    write_landmarks(t, p1)
    back = read_landmarks(p1)
    p2 = tmp_path / "b.lmk1"
    write_landmarks(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(back.frames, t.frames)
    assert back.fps == 24
    assert back.dominance is Dominance.LEFT
    assert back.word_label == "W37"
    assert back.signer_id == "U11"
    assert back.trial_index == 3


def test_file_size_formula(tmp_path, rng):
    t = make_trial(random_frames(rng, 2))
    p = tmp_path / "t.lmk1"
    write_landmarks(t, p)
    assert p.stat().st_size == HEADER_SIZE + 2 * NUM_LANDMARKS * 3 * 4


def test_truncated_payload(tmp_path, rng):
    t = make_trial(random_frames(rng, 44))
    p = tmp_path / "t.lmk1"
    write_landmarks(t, p)
    blob = p.read_bytes()
    p.write_bytes(blob[: HEADER_SIZE + 43 * NUM_LANDMARKS * 3 * 4])
    with pytest.raises(TruncationError):
        read_landmarks(p)


def test_bad_magic(tmp_path, rng):
    t = make_trial(random_frames(rng, 1))
    p = tmp_path / "t.lmk1"
    write_landmarks(t, p)
    blob = bytearray(p.read_bytes())
    blob[:4] = b"NOPE"
    p.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        read_landmarks(p)


def test_trailing_bytes_rejected(tmp_path, rng):
    t = make_trial(random_frames(rng, 1))
    p = tmp_path / "t.lmk1"
    write_landmarks(t, p)
    p.write_bytes(p.read_bytes() + b"\x00")
    with pytest.raises(FormatError):
        read_landmarks(p)


def test_unwritable_path(rng):
    t = make_trial(random_frames(rng, 1))
    with pytest.raises(IoError):
        write_landmarks(t, "/nonexistent-dir/x.lmk1")


def test_empty_frames_refused():
    with pytest.raises(InvariantError):
        make_trial(np.zeros((0, NUM_LANDMARKS, 3)))


def test_sidecar(tmp_path, rng):
    t = make_trial(random_frames(rng, 3), word="W211", signer="U4")
    p = tmp_path / "t.lmk1"
    write_landmarks(t, p, sidecar=True)
    side = p.with_suffix(".lmk1.json")
    assert side.exists()
    assert '"W211"' in side.read_text()


def test_missing_sentinel_is_exact():
    f = np.zeros((1, NUM_LANDMARKS, 3))
    assert missing_mask(f).all()
    f[0, 100, 2] = 1e-12  # any nonzero component makes the point present
    assert not missing_mask(f)[0, 100]
    assert missing_mask(f)[0, 99]


def test_feature_widths(rng):
    frame = random_frames(rng, 1)[0]
    assert select_features(frame, FeatureSet.FULL543).shape == (1629,)
    assert select_features(frame, FeatureSet.POSEHANDS75).shape == (225,)


def test_feature_order_and_content(rng):
    frame = random_frames(rng, 1)[0]
    full = select_features(frame, FeatureSet.FULL543)
    # canonical order with (x, y, d) consecutive per point
    assert np.array_equal(full, frame.reshape(-1))
    sub = select_features(frame, FeatureSet.POSEHANDS75)
    expected = np.concatenate([frame[:33], frame[501:543]]).reshape(-1)
    assert np.array_equal(sub, expected)


def test_select_features_all_missing():
    frame = np.zeros((NUM_LANDMARKS, 3))
    assert not select_features(frame, FeatureSet.POSEHANDS75).any()


def test_select_features_shape_check():
    with pytest.raises(LengthError):
        select_features(np.zeros((10, 3)), FeatureSet.FULL543)


def test_flatten_trial_widths(rng):
    m75 = np.zeros((164, 225))
    assert flatten_trial(m75).shape == (36900,)
    m543 = np.zeros((164, 1629))
    assert flatten_trial(m543).shape == (267156,)
    with pytest.raises(LengthError):
        flatten_trial(np.zeros((80, 225)))


def test_flatten_trial_frame_major():
    m = np.arange(164 * 4, dtype=np.float64).reshape(164, 4)
    flat = flatten_trial(m)
    assert np.array_equal(flat[:4], m[0])
    assert np.array_equal(flat[4:8], m[1])


def test_missing_hand_rate(rng):
    frames = random_frames(rng, 4)
    t_all = make_trial(frames)
    assert missing_hand_rate([t_all]) == 0.0
    frames2 = frames.copy()
    frames2[:, LEFT_HAND, :] = 0.0  # left hand absent, right present
    t_half = make_trial(frames2)
    assert missing_hand_rate([t_half]) == 0.5
    assert missing_hand_rate([t_all, t_half]) == 0.25
    with pytest.raises(EmptyInputError):
        missing_hand_rate([])


def test_trial_validation(rng):
    frames = random_frames(rng, 2)
    with pytest.raises(InvariantError):
        make_trial(frames, fps=60)
    with pytest.raises(InvariantError):
        make_trial(frames, trial=0)
    with pytest.raises(Exception):
        make_trial(frames, word="W999")


def test_select_trial_features(rng):
    t = make_trial(random_frames(rng, 6))
    m = select_trial_features(t, FeatureSet.POSEHANDS75)
    assert m.shape == (6, 225)
    assert np.array_equal(m[2], select_features(t.frames[2], FeatureSet.POSEHANDS75))
