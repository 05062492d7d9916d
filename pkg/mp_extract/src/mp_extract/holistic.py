"""Default landmark source: MediaPipe Holistic over an OpenCV decode loop.

Imported lazily from extract() so the rest of the package (and its test
suite) works on machines without mediapipe. Any object with the same
``landmark_frames`` / ``version`` surface can stand in for this class.
"""

import numpy as np

from .errors import MediaError


def _points(block):
    if block is None:
        return None
    return np.array(
        [[p.x, p.y, p.z] for p in block.landmark], dtype=np.float64
    )


class HolisticSource:
    def __init__(self, min_confidence: float = 0.5):
        try:
            import mediapipe
        except ImportError as exc:
            raise MediaError(
                "mediapipe is required for live extraction "
                "(pip install mediapipe), or pass an alternative source"
            ) from exc
        self._mp = mediapipe
        self.min_confidence = min_confidence

    @property
    def version(self) -> str:
        return f"mediapipe-{getattr(self._mp, '__version__', 'unknown')}"

    def landmark_frames(self, video_path):
        """Yield one block dict per decoded frame, in temporal order."""
        try:
            import cv2
        except ImportError as exc:
            raise MediaError("opencv-python is required to decode video") from exc
        capture = cv2.VideoCapture(str(video_path))
        if not capture.isOpened():
            raise MediaError(f"cannot decode {video_path}")
        holistic = self._mp.solutions.holistic.Holistic(
            min_detection_confidence=self.min_confidence,
            min_tracking_confidence=self.min_confidence,
        )
        try:
            while True:
                ok, bgr = capture.read()
                if not ok:
                    break
                result = holistic.process(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
                yield {
                    "pose": _points(result.pose_landmarks),
                    "face": _points(result.face_landmarks),
                    "left_hand": _points(result.left_hand_landmarks),
                    "right_hand": _points(result.right_hand_landmarks),
                }
        finally:
            holistic.close()
            capture.release()
