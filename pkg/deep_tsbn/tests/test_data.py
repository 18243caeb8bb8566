import numpy as np
import pytest

from ..data import (
    BallsConfig,
    SequenceBatch,
    SequenceFile,
    gen_bouncing_balls,
    lagged_window,
    load_sequences,
    render_balls,
    save_sequences,
    simulate_balls,
    split_batch,
    split_words,
    stack_windows,
    window_view,
)
from ..errors import SequenceFileError, ShapeMismatchError
from ..numeric import RngStream
from ..params import Likelihood


def test_window_examples():
    V = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(window_view(V, 1, 2), [0.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(window_view(V, 2, 2), [0.0, 1.0, 0.0, 0.0])
    np.testing.assert_array_equal(window_view(V, 3, 2), [2.0, 3.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        _ = window_view(V, 0, 1)
    with pytest.raises(ValueError):
        _ = window_view(V, 4, 1)


def test_stack_windows_matches_window_view():
    V = np.random.default_rng(0).normal(size=(7, 3))
    for order in (1, 2, 4, 9):
        windows = stack_windows(V, order)
        assert windows.shape == (7, 3 * order)
        for t in range(1, 8):
            np.testing.assert_array_equal(windows[t - 1], window_view(V, t, order))
            np.testing.assert_array_equal(lagged_window(V, t - 1, order), windows[t - 1])


def test_windows_only_see_the_past():
    V = np.random.default_rng(1).normal(size=(6, 2))
    changed = V.copy()
    changed[3:] = 99.0
    np.testing.assert_array_equal(stack_windows(V, 2)[:4], stack_windows(changed, 2)[:4])


def test_windows_over_leading_axes():
    H = np.random.default_rng(2).random((4, 5, 3))
    windows = stack_windows(H, 2)
    assert windows.shape == (4, 5, 6)
    for s in range(4):
        np.testing.assert_array_equal(windows[s], stack_windows(H[s], 2))
    np.testing.assert_array_equal(lagged_window(H, 3, 2), windows[:, 3])


def test_sequence_batch_validation():
    batch = SequenceBatch([np.zeros((3, 2)), np.ones((5, 2))], "binary", 2)
    assert batch.likelihood == Likelihood.BINARY
    assert len(batch) == 2
    assert batch.lengths == [3, 5]
    assert batch.num_frames == 8
    assert batch.subset([1]).lengths == [5]
    with pytest.raises(ValueError):
        _ = SequenceBatch([np.full((3, 2), 0.5)], Likelihood.BINARY, 2)
    with pytest.raises(ValueError):
        _ = SequenceBatch([np.full((3, 2), 1.5)], Likelihood.COUNT, 2)
    with pytest.raises(ValueError):
        _ = SequenceBatch([np.full((3, 2), np.inf)], Likelihood.REAL, 2)
    with pytest.raises(ValueError):
        _ = SequenceBatch([np.zeros((0, 2))], Likelihood.REAL, 2)
    with pytest.raises(ShapeMismatchError):
        _ = SequenceBatch([np.zeros((3, 3))], Likelihood.REAL, 2)


def _assert_same_batch(first, second):
    assert first.likelihood == second.likelihood
    assert first.visible_dim == second.visible_dim
    assert first.lengths == second.lengths
    for a, b in zip(first, second, strict=True):
        np.testing.assert_array_equal(a, b)


def test_sequence_files(tmp_path, make_batch):
    generator = np.random.default_rng(0)
    odd = SequenceBatch(
        [(generator.random((3, 7)) < 0.5).astype(float) for _ in range(3)], "binary", 7
    )
    batches = [
        odd,
        make_batch(Likelihood.REAL, 2, 4, 3),
        make_batch(Likelihood.COUNT, 3, 5, 4),
        SequenceBatch([], Likelihood.COUNT, 6),
    ]
    for i, batch in enumerate(batches):
        path = tmp_path / f"batch{i}.seq"
        save_sequences(path, batch)
        _assert_same_batch(load_sequences(path), batch)


def test_binary_sequence_files_are_bit_packed(tmp_path):
    batch = SequenceBatch([np.ones((2, 5))], Likelihood.BINARY, 5)
    path = tmp_path / "bits.seq"
    save_sequences(path, batch)
    header = len(SequenceFile.MAGIC) + SequenceFile.header_segment.size
    assert path.stat().st_size == header + 8 + 2


def test_corrupt_sequence_files(tmp_path, make_batch):
    path = tmp_path / "data.seq"
    save_sequences(path, make_batch(Likelihood.REAL, 2, 4, 3))
    data = path.read_bytes()

    path.write_bytes(b"NOT-A-SEQ" + data[9:])
    with pytest.raises(SequenceFileError):
        _ = load_sequences(path)
    for cut in (4, 20, len(data) - 1):
        path.write_bytes(data[:cut])
        with pytest.raises(SequenceFileError):
            _ = load_sequences(path)
    path.write_bytes(data + b"\x00")
    with pytest.raises(SequenceFileError):
        _ = load_sequences(path)


def test_sequence_files_with_bad_content(tmp_path):
    path = tmp_path / "bad.seq"
    code = SequenceFile.DTYPE_CODES[Likelihood.REAL]
    header = SequenceFile.MAGIC + SequenceFile.header_segment.pack(code, 2, 2)
    first = SequenceFile.length_segment.pack(1) + np.zeros(2).astype("<f8").tobytes()
    path.write_bytes(header + first + SequenceFile.length_segment.pack(0))
    with pytest.raises(SequenceFileError, match="empty sequence at index 1"):
        _ = load_sequences(path)

    second = SequenceFile.length_segment.pack(1) + np.array([np.nan, 0.0]).astype("<f8").tobytes()
    path.write_bytes(header + first + second)
    with pytest.raises(SequenceFileError, match="finite"):
        _ = load_sequences(path)


def test_balls_default_dimensions():
    config = BallsConfig(num_sequences=2)
    assert config.radius == pytest.approx(2.0)
    batch = gen_bouncing_balls(config)
    assert len(batch) == 2
    assert batch.likelihood == Likelihood.BINARY
    assert batch[0].shape == (100, 900)
    assert set(np.unique(batch[0])) <= {0.0, 1.0}


def test_balls_are_reproducible_and_thread_independent():
    config = BallsConfig(num_sequences=4, sequence_length=10, resolution=15, seed=3)
    first = gen_bouncing_balls(config)
    _assert_same_batch(first, gen_bouncing_balls(config))
    _assert_same_batch(first, gen_bouncing_balls(config, threads=3))
    shifted = gen_bouncing_balls(config, start_index=2)
    np.testing.assert_array_equal(shifted[0], first[2])
    assert not np.array_equal(first[0], first[1])


def test_motionless_balls_render_identical_frames():
    config = BallsConfig(num_sequences=1, sequence_length=8, speed_scale=0.0)
    video = gen_bouncing_balls(config)[0]
    for frame in video[1:]:
        np.testing.assert_array_equal(frame, video[0])


def test_balls_stay_inside_the_box():
    config = BallsConfig(sequence_length=200)
    trajectory = simulate_balls(config, RngStream(1))
    assert np.all(trajectory.positions >= config.radius - 1e-12)
    assert np.all(trajectory.positions <= config.resolution - config.radius + 1e-12)


def test_lit_pixel_count_matches_ball_area():
    config = BallsConfig(num_balls=1, resolution=30, ball_radius=4.0, sequence_length=50)
    trajectory = simulate_balls(config, RngStream(2))
    frames = render_balls(trajectory.positions, config)
    area = np.pi * 4.0**2
    lit = frames.sum(axis=1)
    assert np.all(lit > 0.7 * area)
    assert np.all(lit < 1.3 * area)


def test_collisions_conserve_energy():
    config = BallsConfig(num_balls=3, sequence_length=500, seed=0)
    for index in range(5):
        energy = simulate_balls(config, RngStream(config.seed, index)).kinetic_energy()
        np.testing.assert_allclose(energy, energy[0], rtol=1e-9)


def test_infeasible_ball_configurations():
    with pytest.raises(ValueError):
        _ = BallsConfig(resolution=6, ball_radius=2.0)
    with pytest.raises(ValueError):
        _ = BallsConfig(num_balls=40, resolution=30, ball_radius=3.0)
    with pytest.raises(ValueError):
        _ = BallsConfig(num_balls=0)
    with pytest.raises(ValueError):
        _ = BallsConfig(speed_scale=-1.0)


def test_split_words_conserves_counts():
    counts = np.random.default_rng(0).poisson(3.0, size=(50, 40)).astype(float)
    counts[0] = 0.0
    train, heldout = split_words(counts, 0.8, RngStream(1))
    np.testing.assert_array_equal(train + heldout, counts)
    assert np.all(train >= 0) and np.all(heldout >= 0)
    np.testing.assert_array_equal(train[0], 0.0)
    assert abs(train.sum() / counts.sum() - 0.8) < 0.02


def test_split_words_share():
    counts = np.full((1000, 50), 4.0)
    train, _ = split_words(counts, 0.8, RngStream(2))
    assert abs(train.sum() / counts.sum() - 0.8) < 0.005


def test_split_words_errors():
    with pytest.raises(ValueError):
        _ = split_words(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        _ = split_words(np.array([1.5]))
    with pytest.raises(ValueError):
        _ = split_words(np.array([1.0]), fraction=1.5)


def test_split_batch(make_batch):
    batch = make_batch(Likelihood.COUNT, 3, 4, 5)
    train, heldout = split_batch(batch, 0.5, RngStream(0))
    for original, a, b in zip(batch, train, heldout, strict=True):
        np.testing.assert_array_equal(a + b, original)
    with pytest.raises(ValueError):
        _ = split_batch(make_batch(Likelihood.BINARY, 1, 2, 2), 0.5, RngStream(0))
