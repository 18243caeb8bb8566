from pathlib import Path

import pytest

from ..config import RunConfig
from ..errors import ConfigError
from ..params import LayerKind, Likelihood
from ..trainer import SignalMode


def test_defaults():
    config = RunConfig()
    assert config.spec == "J=100,order=1,binary"
    assert config.learning_rate == 1e-4
    assert config.alpha == 0.8
    assert config.max_iterations == 100_000
    assert config.baseline_hidden == 100
    assert config.use_baseline and config.use_centering and config.use_normalization
    assert config.signal_mode == "local"
    assert config.balls == 3
    assert config.res == 30
    assert config.num_train == 4000
    assert config.num_test == 200
    assert config.data is None


def test_from_text():
    text = """
    # training run
    spec = J=25-25,count
    learning_rate = 3e-4
    use_baseline = off
    data = corpus/train.seq
    ball_radius = 1.5

    log_level = debug
    """
    config = RunConfig.from_text(text)
    assert config.spec == "J=25-25,count"
    assert config.learning_rate == 3e-4
    assert config.use_baseline is False
    assert config.data == Path("corpus/train.seq")
    assert config.ball_radius == 1.5
    assert config.log_level == "DEBUG"
    assert config.seed == 0


def test_text_round_trip():
    config = RunConfig(
        command="train",
        seed=12,
        data=Path("a/b.seq"),
        learning_rate=0.1 + 0.2,
        use_centering=False,
        signal_mode="suffix",
        speed_scale=0.75,
    )
    assert RunConfig.from_text(config.to_text()) == config


def test_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 4\nthreads = 2\n")
    config = RunConfig.from_file(path)
    assert (config.seed, config.threads) == (4, 2)


@pytest.mark.parametrize(
    "text",
    [
        "seed 4",
        "sed = 4",
        "seed = four",
        "use_baseline = maybe",
        "threads = 0",
        "seed = -1",
        "signal_mode = global",
        "mode = median",
        "log_level = chatty",
    ],
)
def test_bad_text(text):
    with pytest.raises(ConfigError):
        _ = RunConfig.from_text(text)


def test_bad_line_reports_its_location():
    with pytest.raises(ConfigError, match="run.cfg:2"):
        _ = RunConfig.from_text("seed = 1\nthreads\n", source="run.cfg")


def test_merged():
    config = RunConfig(seed=3).merged({"threads": "4", "out": "model.ckpt", "alpha": 0.5})
    assert config.seed == 3
    assert config.threads == 4
    assert config.out == Path("model.ckpt")
    assert config.alpha == 0.5
    assert RunConfig(ball_radius=2.0).merged({"ball_radius": "none"}).ball_radius is None
    with pytest.raises(ConfigError, match="bogus"):
        _ = RunConfig().merged({"bogus": 1})


def test_require():
    config = RunConfig(command="train", data=Path("x.seq"))
    config.require("data")
    with pytest.raises(ConfigError, match="train needs --out, --out-dir"):
        config.require("data", "out", "out_dir")


def test_trainer_config():
    trainer = RunConfig(
        learning_rate=1e-3, signal_mode="sequence", use_baseline=False, threads=3, hmsbn=True
    ).trainer_config()
    assert trainer.learning_rate == 1e-3
    assert trainer.signal_mode == SignalMode.SEQUENCE
    assert trainer.use_baseline is False
    assert trainer.threads == 3
    assert trainer.hmsbn is True
    assert trainer.ms_decay == 0.95


def test_balls_config():
    balls = RunConfig(balls=1, res=12, length=7, seed=9).balls_config(5)
    assert balls.num_balls == 1
    assert balls.resolution == 12
    assert balls.sequence_length == 7
    assert balls.num_sequences == 5
    assert balls.seed == 9
    assert balls.radius == pytest.approx(2 * 12 / 30)


def test_model_spec():
    spec = RunConfig(spec="J=10-5,real,kind=deterministic").model_spec(16)
    assert spec.visible_dim == 16
    assert spec.layer_dims == (10, 5)
    assert spec.likelihood == Likelihood.REAL
    assert spec.layer_kinds == (LayerKind.DETERMINISTIC, LayerKind.STOCHASTIC)
    with pytest.raises(ConfigError):
        _ = RunConfig(spec="order=2").model_spec(16)
