import numpy as np
import pytest

from signseq.landmarks import (
    CameraView,
    Dominance,
    LEFT_SHOULDER,
    NUM_LANDMARKS,
    RIGHT_SHOULDER,
    TrialSequence,
)


def random_frames(rng, n, scale=0.3, offset=(0.5, 0.5, 0.0)):
    """Fully-present frames with non-degenerate shoulders, nowhere zero."""
    frames = rng.uniform(0.05, scale, size=(n, NUM_LANDMARKS, 3)) + np.asarray(offset)
    frames[:, LEFT_SHOULDER] = np.asarray(offset) + (0.10, 0.20, 0.05)
    frames[:, RIGHT_SHOULDER] = np.asarray(offset) + (0.30, 0.20, 0.07)
    return frames


def make_trial(
    frames,
    signer="U1",
    word="W1",
    trial=1,
    dominance=Dominance.RIGHT,
    fps=30,
    camera=CameraView.FRONT,
):
    return TrialSequence(
        frames=np.asarray(frames, dtype=np.float64),
        signer_id=signer,
        word_label=word,
        trial_index=trial,
        dominance=dominance,
        fps=fps,
        camera_view=camera,
    )


def random_trial(rng, n=8, **kw):
    return make_trial(random_frames(rng, n), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)
