"""Frame ingestion: uniform sampling over a video file or an image directory.

Frame IDs handed to the dialogue engine are 1-indexed (``Frame_1`` .. ``Frame_n``);
source indices are 0-indexed positions in the decoded/listed frame sequence.
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .errors import FrameIngestError

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp", ".tif", ".tiff"}

# {input} and {outdir} are substituted per argv token, so paths with spaces survive.
DEFAULT_DECODER_CMD = (
    "ffmpeg -loglevel error -i {input} -start_number 0 {outdir}/frame_%06d.png"
)


@dataclass(frozen=True)
class FrameRef:
    """One sampled frame: engine-facing id, source position, image file."""

    frame_id: int
    source_index: int
    image_path: str


@dataclass(frozen=True)
class FrameSet:
    """Ordered 1-indexed sample of frames from one video."""

    video_id: str
    n: int
    frames: tuple[FrameRef, ...]
    total_source_frames: int

    def __post_init__(self) -> None:
        if self.n < 1 or len(self.frames) != self.n:
            raise FrameIngestError(
                f"frame set must hold exactly n={self.n} frames, got {len(self.frames)}"
            )
        prev = -1
        for ref in self.frames:
            if not 0 <= ref.source_index < self.total_source_frames:
                raise FrameIngestError(
                    f"source index {ref.source_index} outside "
                    f"[0, {self.total_source_frames - 1}]"
                )
            if ref.source_index <= prev:
                raise FrameIngestError("source indices must be strictly increasing")
            prev = ref.source_index
        for expected, ref in enumerate(self.frames, start=1):
            if ref.frame_id != expected:
                raise FrameIngestError(
                    f"frame ids must be 1..{self.n}, found {ref.frame_id} at position {expected}"
                )

    def image_for(self, frame_id: int) -> str:
        return self.frames[frame_id - 1].image_path

    def check_readable(self) -> None:
        """Verify every frame image exists; called at dialogue start."""
        for ref in self.frames:
            path = Path(ref.image_path)
            if not path.is_file():
                raise FrameIngestError(f"frame image not readable: {path}")


def sample_uniform(total_frames: int, n: int) -> list[int]:
    """Pick min(n, total_frames) source indices, centered in equal-width bins.

    index_k = floor((k - 0.5) * total_frames / n') for k = 1..n',
    computed in exact integer arithmetic.
    """
    if total_frames < 1:
        raise FrameIngestError(f"total_frames must be >= 1, got {total_frames}")
    if n < 1:
        raise FrameIngestError(f"n must be >= 1, got {n}")
    count = min(n, total_frames)
    return [((2 * k - 1) * total_frames) // (2 * count) for k in range(1, count + 1)]


def load_frameset(
    input_path: str | Path,
    n: int,
    *,
    video_id: str | None = None,
    workdir: str | Path | None = None,
    decoder_cmd: str = DEFAULT_DECODER_CMD,
) -> FrameSet:
    """Build a FrameSet from an image directory or a video file.

    Directories are read in lexicographic filename order (temporal order by
    convention). Video files are materialized to ``workdir`` by running
    ``decoder_cmd`` with ``{input}``/``{outdir}`` substituted, then sampled
    the same way.
    """
    path = Path(input_path)
    if not path.exists():
        raise FrameIngestError(f"input path does not exist: {path}")
    if path.is_dir():
        frame_dir = path
    else:
        if workdir is None:
            raise FrameIngestError("a working directory is required to decode a video file")
        frame_dir = Path(workdir)
        frame_dir.mkdir(parents=True, exist_ok=True)
        _decode_video(path, frame_dir, decoder_cmd)

    images = sorted(
        p for p in frame_dir.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not images:
        raise FrameIngestError(f"no frames found in {frame_dir}")

    indices = sample_uniform(len(images), n)
    frames = tuple(
        FrameRef(frame_id=k, source_index=idx, image_path=str(images[idx]))
        for k, idx in enumerate(indices, start=1)
    )
    return FrameSet(
        video_id=video_id if video_id is not None else path.stem,
        n=len(frames),
        frames=frames,
        total_source_frames=len(images),
    )


def _decode_video(video: Path, outdir: Path, decoder_cmd: str) -> None:
    argv = [
        token.replace("{input}", str(video)).replace("{outdir}", str(outdir))
        for token in shlex.split(decoder_cmd)
    ]
    try:
        result = subprocess.run(argv, capture_output=True, text=True)
    except OSError as exc:
        raise FrameIngestError(f"decoder command failed to start: {exc}") from exc
    if result.returncode != 0:
        stderr = result.stderr.strip()
        raise FrameIngestError(
            f"decoder exited with status {result.returncode}: {stderr}"
        )
