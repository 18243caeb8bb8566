"""Sequence containers, history windows, the `.seq` file format and the synthetic corpora.

Sequences are time-major T × M arrays of binary, real or count frames. This module also renders
bouncing-balls videos and splits word-count frames into training and held-out parts.
"""

from __future__ import annotations
import logging
import struct
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar

import numpy as np
from tqdm import tqdm

from .errors import SequenceFileError, ShapeMismatchError
from .numeric import RngStream, as_generator
from .params import Likelihood

logger = logging.getLogger(__name__)


def stack_windows(frames: np.ndarray, order: int) -> np.ndarray:
    """Sliding-window history for every time step of a sequence.

    Row t of the result is the concatenation of frames t-1, t-2, ..., t-n (most recent first),
    with zero vectors standing in for frames before the start of the sequence.

    Args:
        frames: Array of shape (..., T, D); leading axes are carried through.
        order: Window length n.

    Returns:
        Array of shape (..., T, n * D).
    """
    frames = np.asarray(frames, dtype=np.float64)
    T, D = frames.shape[-2:]
    windows = np.zeros(frames.shape[:-2] + (T, order * D))
    for lag in range(1, min(order, T - 1) + 1):
        windows[..., lag:, (lag - 1) * D : lag * D] = frames[..., : T - lag, :]
    return windows


def lagged_window(states: np.ndarray, t: int, order: int) -> np.ndarray:
    """Rows t-1, ..., t-n of `states` (0-based t) concatenated, over any leading axes.

    Used inside step-by-step samplers where later rows are not filled in yet.
    """
    zeros = np.zeros(states.shape[:-2] + states.shape[-1:])
    return np.concatenate(
        [states[..., t - lag, :] if t - lag >= 0 else zeros for lag in range(1, order + 1)], axis=-1
    )


def window_view(frames: np.ndarray, t: int, order: int) -> np.ndarray:
    """The order-n history window seen at time step `t` (1-based).

    Works for visible and hidden trajectories alike.

    Examples:
        >>> V = np.arange(6.0).reshape(3, 2)
        >>> window_view(V, 1, 2)
        array([0., 0., 0., 0.])
        >>> window_view(V, 3, 1)
        array([2., 3.])

    Raises:
        ValueError: If `t` is outside 1..T.
    """
    frames = np.asarray(frames, dtype=np.float64)
    T, D = frames.shape
    if not 1 <= t <= T:
        raise ValueError(f"t must lie in 1..{T}, got {t}.")
    parts = [
        frames[t - 1 - lag] if t - 1 - lag >= 0 else np.zeros(D) for lag in range(1, order + 1)
    ]
    return np.concatenate(parts)


def _check_frames(frames: np.ndarray, likelihood: Likelihood) -> None:
    if likelihood == Likelihood.BINARY:
        if not np.all((frames == 0.0) | (frames == 1.0)):
            raise ValueError("Binary frames may only contain 0 and 1.")
    elif likelihood == Likelihood.COUNT:
        if not np.all((frames >= 0.0) & (frames == np.round(frames))):
            raise ValueError("Count frames must contain nonnegative integers.")
    elif not np.all(np.isfinite(frames)):
        raise ValueError("Real-valued frames must be finite.")


@dataclass
class SequenceBatch:
    """A set of variable-length sequences of M-dimensional frames.

    Attributes:
        frames: One T_i × M array per sequence.
        likelihood: Observation family of the frames (binary, real or count).
        visible_dim: Frame size M; kept explicitly so an empty batch still has one.
    """

    frames: list[np.ndarray]
    likelihood: Likelihood
    visible_dim: int

    def __post_init__(self):
        self.likelihood = Likelihood(self.likelihood)
        self.frames = [np.asarray(sequence, dtype=np.float64) for sequence in self.frames]
        for i, sequence in enumerate(self.frames):
            if sequence.ndim != 2 or sequence.shape[1] != self.visible_dim:
                raise ShapeMismatchError(
                    f"Sequence {i} has shape {sequence.shape}; expected (T, {self.visible_dim})."
                )
            if sequence.shape[0] < 1:
                raise ValueError(f"Sequence {i} is empty.")
            _check_frames(sequence, self.likelihood)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.frames)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.frames[index]

    @property
    def lengths(self) -> list[int]:
        return [sequence.shape[0] for sequence in self.frames]

    @property
    def num_frames(self) -> int:
        return sum(self.lengths)

    def subset(self, indices: Sequence[int]) -> SequenceBatch:
        return SequenceBatch([self.frames[i] for i in indices], self.likelihood, self.visible_dim)


@dataclass(frozen=True)
class BallsConfig:
    """Configuration of a synthetic bouncing-balls corpus.

    Attributes:
        num_balls: Number of balls per video.
        resolution: Side length R of the square frame in pixels; frames have M = R^2 pixels.
        sequence_length: Number of frames T per video.
        num_sequences: Number of videos.
        ball_radius: Ball radius in pixels; defaults to 2 pixels at R = 30, scaled with R.
        speed_scale: Typical speed in pixels per step; defaults to 1 pixel at R = 30, scaled
            with R. Speeds are drawn uniformly from [0.5, 1.5] times this value.
        seed: Root seed; video i is generated from the random stream (seed, i).
    """

    num_balls: int = 3
    resolution: int = 30
    sequence_length: int = 100
    num_sequences: int = 4000
    ball_radius: float | None = None
    speed_scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.ball_radius is None:
            object.__setattr__(self, "ball_radius", 2.0 * self.resolution / 30.0)
        if self.speed_scale is None:
            object.__setattr__(self, "speed_scale", self.resolution / 30.0)
        if self.num_balls < 1 or self.sequence_length < 1 or self.num_sequences < 0:
            raise ValueError("num_balls and sequence_length must be positive.")
        if self.radius <= 0 or self.speed < 0:
            raise ValueError("ball_radius must be positive and speed_scale nonnegative.")
        if self.resolution < 4 * self.radius:
            raise ValueError(
                f"Resolution {self.resolution} is below 4 x ball radius ({self.radius:g})."
            )
        if self.num_balls * (2 * self.radius) ** 2 > (self.resolution - 2 * self.radius) ** 2:
            raise ValueError(f"{self.num_balls} balls of radius {self.radius:g} cannot fit.")

    @property
    def radius(self) -> float:
        return float(self.ball_radius)  # type: ignore[arg-type]

    @property
    def speed(self) -> float:
        return float(self.speed_scale)  # type: ignore[arg-type]

    @property
    def visible_dim(self) -> int:
        return self.resolution**2


@dataclass
class BallTrajectory:
    """Continuous ball centers and velocities, each of shape (T, num_balls, 2) as (x, y)."""

    positions: np.ndarray
    velocities: np.ndarray

    def kinetic_energy(self) -> np.ndarray:
        """Total kinetic energy per frame for unit masses."""
        return 0.5 * np.sum(self.velocities**2, axis=(1, 2))


MAX_PLACEMENT_ATTEMPTS = 10_000


def _place_balls(config: BallsConfig, generator: np.random.Generator) -> np.ndarray:
    low, high = config.radius, config.resolution - config.radius
    positions: list[np.ndarray] = []
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        candidate = generator.uniform(low, high, size=2)
        if all(np.linalg.norm(candidate - other) >= 2 * config.radius for other in positions):
            positions.append(candidate)
            if len(positions) == config.num_balls:
                return np.array(positions)
    raise ValueError(
        f"Could not place {config.num_balls} non-overlapping balls of radius {config.radius:g} "
        f"in a {config.resolution}-pixel box."
    )


def simulate_balls(config: BallsConfig, rng: RngStream | np.random.Generator) -> BallTrajectory:
    """Simulate equal-mass balls with elastic wall bounces and pairwise elastic collisions."""
    generator = as_generator(rng)
    positions = _place_balls(config, generator)
    speeds = generator.uniform(0.5, 1.5, size=config.num_balls) * config.speed
    angles = generator.uniform(0.0, 2.0 * np.pi, size=config.num_balls)
    velocities = speeds[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    low, high = config.radius, config.resolution - config.radius
    position_track = np.empty((config.sequence_length, config.num_balls, 2))
    velocity_track = np.empty_like(position_track)
    for t in range(config.sequence_length):
        position_track[t] = positions
        velocity_track[t] = velocities
        positions = positions + velocities

        # Mirror across the walls the centers crossed
        below, above = positions < low, positions > high
        positions = np.where(below, 2 * low - positions, positions)
        positions = np.where(above, 2 * high - positions, positions)
        velocities = np.where(below | above, -velocities, velocities)
        positions = np.clip(positions, low, high)

        for i in range(config.num_balls):
            for j in range(i + 1, config.num_balls):
                offset = positions[j] - positions[i]
                distance = np.linalg.norm(offset)
                if 0.0 < distance < 2 * config.radius:
                    normal = offset / distance
                    approach = np.dot(velocities[i] - velocities[j], normal)
                    if approach > 0.0:
                        # Equal masses swap their velocity components along the center line
                        velocities[i] = velocities[i] - approach * normal
                        velocities[j] = velocities[j] + approach * normal
    return BallTrajectory(positions=position_track, velocities=velocity_track)


def render_balls(positions: np.ndarray, config: BallsConfig) -> np.ndarray:
    """Rasterize ball centers (T, num_balls, 2) to binary frames (T, R^2).

    A pixel is lit iff its center lies within the disk of any ball.
    """
    centers = np.arange(config.resolution) + 0.5
    ys, xs = np.meshgrid(centers, centers, indexing="ij")
    dx = xs[None, None] - positions[:, :, 0, None, None]
    dy = ys[None, None] - positions[:, :, 1, None, None]
    lit = np.any(dx**2 + dy**2 <= config.radius**2, axis=1)
    return lit.reshape(positions.shape[0], -1).astype(np.float64)


def _generate_video(config: BallsConfig, index: int) -> np.ndarray:
    trajectory = simulate_balls(config, RngStream(config.seed, index))
    return render_balls(trajectory.positions, config)


def gen_bouncing_balls(
    config: BallsConfig, start_index: int = 0, threads: int = 1, progress: bool = False
) -> SequenceBatch:
    """Generate a bouncing-balls corpus.

    Video i is drawn from its own random stream (config.seed, start_index + i), so the corpus
    does not depend on `threads`.

    Args:
        config: Corpus configuration.
        start_index: Stream index of the first video; lets a test split avoid the training
            split's streams.
        threads: Number of worker threads.
        progress: Show a progress bar.

    Returns:
        A binary SequenceBatch with `config.num_sequences` videos.
    """
    indices = range(start_index, start_index + config.num_sequences)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        videos = list(
            tqdm(
                executor.map(lambda i: _generate_video(config, i), indices),
                total=config.num_sequences,
                disable=not progress,
                desc="bouncing balls",
            )
        )
    logger.info(
        "Generated %d videos of %d frames at %dx%d with %d ball(s)",
        config.num_sequences,
        config.sequence_length,
        config.resolution,
        config.resolution,
        config.num_balls,
    )
    return SequenceBatch(videos, Likelihood.BINARY, config.visible_dim)


@dataclass
class SequenceFile:
    """Reader and writer for the TSBN-SEQ1 sequence container.

    Layout (little-endian): the 9-byte magic, a header (u8 dtype code, u64 M, u64 sequence
    count), then per sequence a u64 length T followed by its row-major T × M payload. Binary
    payloads are bit-packed 8 pixels per byte with little-endian bit order, real payloads are
    float64 and count payloads uint32.
    """

    path: Path = field(default_factory=Path)

    MAGIC: ClassVar[bytes] = b"TSBN-SEQ1"
    header_segment: ClassVar[struct.Struct] = struct.Struct("<BQQ")
    length_segment: ClassVar[struct.Struct] = struct.Struct("<Q")
    DTYPE_CODES: ClassVar[dict[Likelihood, int]] = {
        Likelihood.BINARY: 0,
        Likelihood.REAL: 1,
        Likelihood.COUNT: 2,
    }

    def __post_init__(self):
        self.path = Path(self.path)

    def write(self, batch: SequenceBatch) -> None:
        chunks = [
            self.MAGIC,
            self.header_segment.pack(
                self.DTYPE_CODES[batch.likelihood], batch.visible_dim, len(batch)
            ),
        ]
        for sequence in batch:
            chunks.append(self.length_segment.pack(sequence.shape[0]))
            chunks.append(self._encode(sequence, batch.likelihood))
        self.path.write_bytes(b"".join(chunks))

    def read(self) -> SequenceBatch:
        data = self.path.read_bytes()
        if data[: len(self.MAGIC)] != self.MAGIC:
            raise SequenceFileError(f"{self.path} is not a sequence file (bad magic number).")
        offset = len(self.MAGIC)
        code, visible_dim, count = self._unpack(self.header_segment, data, offset)
        offset += self.header_segment.size
        likelihoods = {v: k for k, v in self.DTYPE_CODES.items()}
        if code not in likelihoods:
            raise SequenceFileError(f"{self.path} declares unknown dtype code {code}.")
        likelihood = likelihoods[code]

        frames = []
        for index in range(count):
            (length,) = self._unpack(self.length_segment, data, offset)
            offset += self.length_segment.size
            if length == 0:
                raise SequenceFileError(f"{self.path} stores an empty sequence at index {index}.")
            size = self._payload_size(likelihood, length * visible_dim)
            if offset + size > len(data):
                raise SequenceFileError(f"{self.path} is truncated.")
            frames.append(
                self._decode(data[offset : offset + size], likelihood, length, visible_dim)
            )
            offset += size
        if offset != len(data):
            raise SequenceFileError(
                f"{self.path} has {len(data) - offset} trailing bytes beyond its declared content."
            )
        try:
            return SequenceBatch(frames, likelihood, visible_dim)
        except ValueError as error:
            raise SequenceFileError(f"{self.path} holds invalid sequences: {error}") from error

    def _unpack(self, segment: struct.Struct, data: bytes, offset: int) -> tuple:
        if offset + segment.size > len(data):
            raise SequenceFileError(f"{self.path} is truncated.")
        return segment.unpack_from(data, offset)

    @staticmethod
    def _payload_size(likelihood: Likelihood, num_values: int) -> int:
        if likelihood == Likelihood.BINARY:
            return (num_values + 7) // 8
        return num_values * (8 if likelihood == Likelihood.REAL else 4)

    @staticmethod
    def _encode(sequence: np.ndarray, likelihood: Likelihood) -> bytes:
        if likelihood == Likelihood.BINARY:
            return np.packbits(sequence.astype(np.uint8).ravel(), bitorder="little").tobytes()
        if likelihood == Likelihood.REAL:
            return sequence.astype("<f8").tobytes()
        if sequence.size and sequence.max() > np.iinfo(np.uint32).max:
            raise SequenceFileError("Counts do not fit the uint32 payload.")
        return sequence.astype("<u4").tobytes()

    @staticmethod
    def _decode(
        payload: bytes, likelihood: Likelihood, length: int, visible_dim: int
    ) -> np.ndarray:
        shape = (length, visible_dim)
        if likelihood == Likelihood.BINARY:
            packed = np.frombuffer(payload, dtype=np.uint8)
            bits = np.unpackbits(packed, count=length * visible_dim, bitorder="little")
            return bits.reshape(shape).astype(np.float64)
        dtype = "<f8" if likelihood == Likelihood.REAL else "<u4"
        return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(np.float64)


def save_sequences(path: Path | str, batch: SequenceBatch) -> None:
    SequenceFile(Path(path)).write(batch)


def load_sequences(path: Path | str) -> SequenceBatch:
    return SequenceFile(Path(path)).read()


def split_words(
    counts: np.ndarray, fraction: float = 0.8, rng: RngStream | np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Randomly assign every word token to a training or held-out portion.

    Each token independently lands in the training portion with probability `fraction`, so the
    two portions add up to the original counts entry by entry.

    Args:
        counts: Nonnegative integer counts of any shape.
        fraction: Probability that a token is kept for training.
        rng: Random stream.

    Returns:
        The pair (train counts, held-out counts).
    """
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise ValueError("Word counts must be nonnegative integers.")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}.")
    generator = as_generator(rng if rng is not None else RngStream(0))
    train = generator.binomial(counts.astype(np.int64), fraction).astype(np.float64)
    return train, counts - train


def split_batch(
    batch: SequenceBatch, fraction: float, rng: RngStream
) -> tuple[SequenceBatch, SequenceBatch]:
    """Apply `split_words` to every frame of a count batch, sequence i using substream i."""
    if batch.likelihood != Likelihood.COUNT:
        raise ValueError("Only count data can be split into words.")
    pairs = [split_words(sequence, fraction, rng.child(i)) for i, sequence in enumerate(batch)]
    return (
        SequenceBatch([p[0] for p in pairs], Likelihood.COUNT, batch.visible_dim),
        SequenceBatch([p[1] for p in pairs], Likelihood.COUNT, batch.visible_dim),
    )
