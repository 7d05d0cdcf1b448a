"""Frame ingestion: a directory of images (sorted by name) or a video file."""

from __future__ import annotations

from typing import Iterator, Optional

import cv2
import numpy as np

from .config import AdapterConfig, AdapterError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class CorruptFrameError(AdapterError):
    pass


def iter_frames(config: AdapterConfig) -> Iterator[np.ndarray]:
    """Yield BGR uint8 frames. Corrupt frames are skipped or abort the
    run depending on config.on_corrupt."""
    path = config.frames
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise AdapterError(f"no image frames found in {path}")
        for f in files:
            frame: Optional[np.ndarray] = cv2.imread(str(f), cv2.IMREAD_COLOR)
            if frame is None:
                if config.on_corrupt == "skip":
                    print(f"warning: skipping unreadable frame {f}")
                    continue
                raise CorruptFrameError(f"unreadable frame {f}")
            yield frame
    elif path.is_file():
        cap = cv2.VideoCapture(str(path))
        if not cap.isOpened():
            raise AdapterError(f"cannot open video {path}")
        try:
            while True:
                got, frame = cap.read()
                if not got:
                    break
                yield frame
        finally:
            cap.release()
    else:
        raise AdapterError(f"frames path {path} does not exist")
