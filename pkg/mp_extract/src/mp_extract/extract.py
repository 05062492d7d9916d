"""Turn one annotated dataset video into an LMK1 landmark stream.

This is a pure format bridge. It never calibrates, flips, or reshapes:
all scientific transforms live in the consumer package where they are
specified and tested. The landmark estimator is injectable so tests (and
alternative detectors) can run without MediaPipe installed; the default
source wraps MediaPipe Holistic and is imported lazily.
"""

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from signseq.labels import WORD_LABELS
from signseq.landmarks import (
    FACE,
    LEFT_HAND,
    NUM_LANDMARKS,
    POSE,
    RIGHT_HAND,
    CameraView,
    Dominance,
    TrialSequence,
    write_landmarks,
)

from .errors import AnnotationError, EmptyVideoError, FilenameError, MediaError

_VIDEO_NAME = re.compile(r"^(U\d+)(W\d+)([FL])$")

# block name -> (destination slice, expected point count)
_BLOCKS = (
    ("pose", POSE, 33),
    ("face", FACE, 468),
    ("left_hand", LEFT_HAND, 21),
    ("right_hand", RIGHT_HAND, 21),
)


def parse_video_name(path) -> tuple[str, str, CameraView]:
    """Split a video filename like U11W1F.mp4 into (signer, word, camera)."""
    stem = Path(path).stem
    m = _VIDEO_NAME.match(stem)
    if not m:
        raise FilenameError(
            f"{stem!r} does not match <signer><word><camera>, e.g. U11W1F"
        )
    signer, word, camera = m.groups()
    if word not in WORD_LABELS:
        raise FilenameError(f"unknown word label {word!r} in {stem!r}")
    return signer, word, CameraView(camera)


def resolve_metadata(
    annotation_path, signer: str, word: str, camera: CameraView
) -> tuple[Dominance, int]:
    """Dominant hand and fps for one video, from its annotation rows.

    A video usually carries several trial rows; hand and fps are
    per-video constants, so disagreement between rows is an error.
    """
    path = Path(annotation_path)
    if not path.exists():
        raise AnnotationError(f"annotation file not found: {path}")
    rows: list[tuple[Dominance, int]] = []
    for ln, line in enumerate(path.read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 10:
            raise AnnotationError(
                f"{path}:{ln}: expected 10 fields, got {len(parts)}"
            )
        if (parts[0], parts[1], parts[3]) != (signer, word, camera.value):
            continue
        if parts[4] not in ("RH", "LH"):
            raise AnnotationError(f"{path}:{ln}: bad hand field {parts[4]!r}")
        hand = Dominance.LEFT if parts[4] == "LH" else Dominance.RIGHT
        try:
            fps = int(parts[5])
        except ValueError:
            raise AnnotationError(f"{path}:{ln}: bad fps field {parts[5]!r}")
        rows.append((hand, fps))
    if not rows:
        raise AnnotationError(
            f"no annotation rows for {signer} {word} camera {camera.value}"
        )
    if len({r for r in rows}) > 1:
        raise AnnotationError(
            f"conflicting hand/fps across rows of {signer} {word}"
        )
    return rows[0]


@dataclass(frozen=True)
class ExtractionJob:
    """Everything needed to extract one video, metadata resolved up front."""

    video_path: Path
    out_path: Path
    signer_id: str
    word_label: str
    camera_view: CameraView
    dominance: Dominance
    fps: int
    min_confidence: float = 0.5

    @classmethod
    def from_annotation(
        cls, video, annotation, out_dir, min_confidence: float = 0.5
    ) -> "ExtractionJob":
        signer, word, camera = parse_video_name(video)
        hand, fps = resolve_metadata(annotation, signer, word, camera)
        out_path = Path(out_dir) / (Path(video).stem + ".lmk1")
        return cls(
            video_path=Path(video),
            out_path=out_path,
            signer_id=signer,
            word_label=word,
            camera_view=camera,
            dominance=hand,
            fps=fps,
            min_confidence=min_confidence,
        )


def assemble_frame(blocks: dict) -> np.ndarray:
    """Place detected blocks into one (543, 3) frame, zeros where absent.

    The zero fill is the missing-landmark sentinel of the LMK1 format: a
    hand out of view yields 21 exactly-zero points.
    """
    frame = np.zeros((NUM_LANDMARKS, 3))
    for name, dest, count in _BLOCKS:
        pts = blocks.get(name)
        if pts is None:
            continue
        pts = np.asarray(pts, dtype=np.float64)
        if pts.shape != (count, 3):
            raise MediaError(
                f"{name} block must be ({count}, 3), got {pts.shape}"
            )
        frame[dest] = pts
    return frame


def extract(job: ExtractionJob, source=None) -> Path:
    """Run the landmark source over the video and write LMK1 + sidecar.

    The whole-video stream is written with trial_index 1; the consumer's
    ingest step segments it into per-trial files using the annotation's
    frame spans.
    """
    if source is None:
        from .holistic import HolisticSource

        source = HolisticSource(job.min_confidence)
    frames = [assemble_frame(b) for b in source.landmark_frames(job.video_path)]
    if not frames:
        raise EmptyVideoError(f"{job.video_path} produced no frames")
    trial = TrialSequence(
        frames=np.stack(frames),
        signer_id=job.signer_id,
        word_label=job.word_label,
        trial_index=1,
        fps=job.fps,
        dominance=job.dominance,
        camera_view=job.camera_view,
    )
    job.out_path.parent.mkdir(parents=True, exist_ok=True)
    write_landmarks(trial, job.out_path, sidecar=True)
    sidecar = job.out_path.with_suffix(job.out_path.suffix + ".json")
    meta = json.loads(sidecar.read_text())
    meta["extractor"] = {
        "landmark_source_version": source.version,
        "min_confidence": job.min_confidence,
    }
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return job.out_path
