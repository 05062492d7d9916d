import numpy as np
import pytest

from conftest import make_trial, random_frames
from signseq.errors import SchemeError
from signseq.landmarks import (
    FeatureSet,
    LEFT_HAND,
    LEFT_SHOULDER,
    NUM_LANDMARKS,
    POSE_NOSE,
    RIGHT_HAND,
    RIGHT_SHOULDER,
)
from signseq.preprocess import calibrate_video
from signseq.rq import (
    GROUP_FACE,
    GROUP_HAND,
    GROUP_IGNORED,
    GROUP_POSE,
    GroupSpec,
    ParentTable,
    QuantScheme,
    Reference,
    code_to_token,
    default_parent_table,
    default_scheme,
    encode_frame,
    encode_sequence,
    fit_ranges,
    landmark_group,
    quantize_axis,
    rq_features,
    sequence_to_tokens,
    to_local,
)


# parent table ---------------------------------------------------------------

def test_default_table_hands_follow_own_wrist():
    table = default_parent_table()
    assert table.references[LEFT_HAND.start + 5] is Reference.WRIST_SAME_HAND
    assert table.parent_index[LEFT_HAND.start + 5] == LEFT_HAND.start
    assert table.parent_index[RIGHT_HAND.start + 5] == RIGHT_HAND.start
    # the wrist anchors to itself, so its local offset is always zero
    assert table.references[LEFT_HAND.start] is Reference.WRIST_SAME_HAND
    assert table.parent_index[LEFT_HAND.start] == LEFT_HAND.start
    assert table.parent_index[RIGHT_HAND.start] == RIGHT_HAND.start


def test_default_table_face_follows_nose():
    table = default_parent_table()
    assert table.references[100] is Reference.NOSE
    assert table.parent_index[100] == POSE_NOSE


def test_default_table_shoulders_global_legs_ignored():
    table = default_parent_table()
    assert table.references[LEFT_SHOULDER] is Reference.GLOBAL
    assert table.references[RIGHT_SHOULDER] is Reference.GLOBAL
    for i in (1, 2, 25, 27, 29, 31):  # head detail, knee, ankle, heel, foot
        assert table.references[i] is Reference.IGNORED


def test_table_with_legs_enabled():
    table = default_parent_table(ignore_head_and_legs=False)
    assert table.references[27] is Reference.HEEL_SAME_SIDE
    assert table.parent_index[27] == 29
    assert table.references[29] is Reference.GLOBAL


def test_table_json_roundtrip():
    table = default_parent_table()
    back = ParentTable.from_json(table.to_json())
    assert back.references == table.references
    assert np.array_equal(back.parent_index, table.parent_index)


def test_landmark_group_assignment():
    table = default_parent_table()
    assert landmark_group(LEFT_HAND.start + 2, table) == GROUP_HAND
    assert landmark_group(200, table) == GROUP_FACE
    assert landmark_group(LEFT_SHOULDER, table) == GROUP_POSE
    assert landmark_group(25, table) == GROUP_IGNORED


# local offsets ---------------------------------------------------------------

def test_to_local_subtracts_parent(rng):
    frames = random_frames(rng, 1)
    table = default_parent_table()
    local = to_local(frames[0], table)
    child = LEFT_HAND.start + 4
    expect = frames[0, child] - frames[0, LEFT_HAND.start]
    assert np.allclose(local[child], expect)
    # global points pass through untouched
    assert np.array_equal(local[LEFT_SHOULDER], frames[0, LEFT_SHOULDER])


def test_to_local_missing_child_or_parent_zero(rng):
    frames = random_frames(rng, 1)
    frames[0, LEFT_HAND.start + 4] = 0.0  # missing child
    frames[0, RIGHT_HAND.start] = 0.0  # missing parent wrist
    table = default_parent_table()
    local = to_local(frames[0], table)
    assert not local[LEFT_HAND.start + 4].any()
    assert not local[RIGHT_HAND.start + 7].any()


def test_to_local_zeroes_ignored(rng):
    frames = random_frames(rng, 1)
    table = default_parent_table()
    local = to_local(frames[0], table)
    assert not local[25].any()  # knee is ignored, whatever its value


# scalar quantizer -------------------------------------------------------------

def test_quantize_axis_examples():
    assert quantize_axis(-0.5, -0.5, 0.5, 10) == 0
    assert quantize_axis(0.0, -0.5, 0.5, 10) == 5
    assert quantize_axis(0.4999, -0.5, 0.5, 10) == 9
    assert quantize_axis(0.5, -0.5, 0.5, 10) == 9  # top edge clamps in-range
    assert quantize_axis(7.0, -0.5, 0.5, 10) == 9
    assert quantize_axis(-7.0, -0.5, 0.5, 10) == 0


def test_quantize_axis_single_level():
    assert quantize_axis(0.3, -0.5, 0.5, 1) == 0
    assert quantize_axis(123.0, 5.0, 5.0, 1) == 0  # degenerate range fine at L=1


def test_quantize_axis_bad_range():
    with pytest.raises(SchemeError):
        quantize_axis(0.0, 0.5, -0.5, 10)
    with pytest.raises(SchemeError):
        quantize_axis(0.0, 0.2, 0.2, 3)


def test_quantize_axis_monotone_and_surjective():
    for levels in (1, 3, 5, 10):
        lo, hi = -0.4, 0.8
        xs = np.linspace(lo - 0.3, hi + 0.3, 2001)
        qs = np.array([quantize_axis(x, lo, hi, levels) for x in xs])
        assert (np.diff(qs) >= 0).all()
        assert qs.min() == 0
        assert qs.max() == levels - 1
        assert set(qs.tolist()) == set(range(levels))


def test_group_spec_validation():
    with pytest.raises(SchemeError):
        GroupSpec(levels=(0, 5, 3), ranges=((-1, 1), (-1, 1), (-1, 1)))
    with pytest.raises(SchemeError):
        GroupSpec(levels=(5, 5, 3), ranges=((1, -1), (-1, 1), (-1, 1)))


# frame encoding ---------------------------------------------------------------

def test_encode_frame_shape_and_dtype(rng):
    frames = random_frames(rng, 1)
    code = encode_frame(frames[0], default_parent_table(), default_scheme())
    assert code.shape == (75, 3)
    assert code.dtype == np.int64


def test_encode_frame_within_levels(rng):
    table = default_parent_table()
    scheme = default_scheme()
    for _ in range(20):
        frames = rng.uniform(-2.0, 2.0, size=(1, NUM_LANDMARKS, 3))
        code = encode_frame(frames[0], table, scheme, FeatureSet.FULL543)
        assert code.min() >= 0
        for i in range(NUM_LANDMARKS):
            levels = scheme.groups[landmark_group(i, table)].levels
            assert (code[i] < np.asarray(levels)).all()


def test_encode_ignored_insensitive(rng):
    frames = random_frames(rng, 1)
    table = default_parent_table()
    scheme = default_scheme()
    base = encode_frame(frames[0], table, scheme, FeatureSet.FULL543)
    frames[0, 25] = (9.0, -9.0, 3.0)  # knee, ignored
    frames[0, 5] = (-4.0, 4.0, 1.0)  # head detail, ignored
    bumped = encode_frame(frames[0], table, scheme, FeatureSet.FULL543)
    assert np.array_equal(base, bumped)


def test_encode_sequence_stacks(rng):
    t = make_trial(random_frames(rng, 6))
    codes = encode_sequence(t, default_parent_table(), default_scheme())
    assert codes.shape == (6, 75, 3)
    one = encode_frame(t.frames[2], default_parent_table(), default_scheme())
    assert np.array_equal(codes[2], one)


def test_translation_invariance_through_calibration(rng):
    # parented points are translation-free by construction; a global shift
    # removed by calibration leaves every code identical
    table = default_parent_table()
    scheme = default_scheme()
    frames = random_frames(rng, 4)
    t = make_trial(frames)
    shifted = make_trial(frames + np.array([0.37, -0.21, 0.11]))
    a = encode_sequence(calibrate_video([t])[0], table, scheme)
    b = encode_sequence(calibrate_video([shifted])[0], table, scheme)
    assert np.array_equal(a, b)


def test_global_points_see_uncalibrated_shift(rng):
    # without calibration a shift does reach GLOBAL codes
    table = default_parent_table()
    scheme = default_scheme()
    frames = random_frames(rng, 1)
    frames[0, LEFT_SHOULDER] = (0.05, 0.0, 0.0)
    a = encode_frame(frames[0], table, scheme)
    shifted = frames[0] + np.array([0.9, 0.0, 0.0])
    b = encode_frame(shifted, table, scheme)
    sel = FeatureSet.POSEHANDS75.indices
    pos = int(np.where(sel == LEFT_SHOULDER)[0][0])
    assert a[pos, 0] != b[pos, 0]


# tokens -----------------------------------------------------------------------

def test_token_format(rng):
    code = np.array([[0, 1, 2], [9, 4, 0]], dtype=np.int64)
    assert code_to_token(code) == "0-1-2-9-4-0"


def test_sequence_tokens_lines(rng):
    t = make_trial(random_frames(rng, 3))
    codes = encode_sequence(t, default_parent_table(), default_scheme())
    text = sequence_to_tokens(codes)
    lines = text.splitlines()
    assert len(lines) == 3
    assert text.endswith("\n")
    for line in lines:
        parts = line.split("-")
        assert len(parts) == 75 * 3
        assert all(p.isdigit() for p in parts)


def test_tokens_injective_on_codes():
    a = np.array([[1, 2, 3]], dtype=np.int64)
    b = np.array([[12, 3, 3]], dtype=np.int64)
    assert code_to_token(a) != code_to_token(b)


# features ---------------------------------------------------------------------

def test_rq_features_shape_and_values(rng):
    t = make_trial(random_frames(rng, 5))
    feats = rq_features(t, default_parent_table(), default_scheme())
    assert feats.shape == (5, 225)
    assert feats.dtype == np.float64
    codes = encode_sequence(t, default_parent_table(), default_scheme())
    assert np.array_equal(feats, codes.reshape(5, -1).astype(np.float64))


# scheme persistence -------------------------------------------------------------

def test_scheme_roundtrip(tmp_path):
    scheme = default_scheme()
    path = tmp_path / "scheme.json"
    scheme.save(path)
    back = QuantScheme.load(path)
    assert back.groups.keys() == scheme.groups.keys()
    for name in scheme.groups:
        assert back.groups[name].levels == scheme.groups[name].levels
        assert back.groups[name].ranges == scheme.groups[name].ranges


def test_default_levels():
    scheme = default_scheme()
    assert scheme.groups[GROUP_HAND].levels == (10, 10, 5)
    assert scheme.groups[GROUP_FACE].levels == (5, 5, 3)
    assert scheme.groups[GROUP_POSE].levels == (5, 5, 3)
    assert scheme.groups[GROUP_IGNORED].levels == (1, 1, 1)


def test_fit_ranges_covers_data(rng):
    trials = [make_trial(random_frames(rng, 30)) for _ in range(4)]
    table = default_parent_table()
    fitted = fit_ranges(trials, table, default_scheme())
    for name, spec in fitted.groups.items():
        for lo, hi in spec.ranges:
            if spec.levels == (1, 1, 1):
                continue
            assert lo < hi
    # fitted scheme encodes without error and reaches interior codes
    code = encode_frame(trials[0].frames[0], table, fitted)
    assert code.min() >= 0
