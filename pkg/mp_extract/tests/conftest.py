import numpy as np
import pytest


class StubSource:
    """Deterministic stand-in for the MediaPipe-backed source."""

    version = "stub-1.0"

    def __init__(self, frames):
        self._frames = list(frames)

    def landmark_frames(self, video_path):
        yield from self._frames


def block(rng, count):
    # float32-exact values so the LMK1 round trip can be compared exactly
    return rng.random((count, 3)).astype(np.float32).astype(np.float64)


def full_frame_blocks(rng):
    return {
        "pose": block(rng, 33),
        "face": block(rng, 468),
        "left_hand": block(rng, 21),
        "right_hand": block(rng, 21),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


@pytest.fixture
def annotation(tmp_path):
    path = tmp_path / "annotations.txt"
    path.write_text(
        "U4 W19 1 F RH 30 112 118 163 171\n"
        "U4 W19 2 F RH 30 201 205 248 255\n"
        "U7 W19 1 F LH 24 10 15 60 66\n"
        "U4 W20 1 F LH 30 12 16 55 61\n"
    )
    return path
