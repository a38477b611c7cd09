import numpy as np
import pytest

from src.errors import ConfigError, InvalidArgumentError
from src.utils.config import DEFAULT_CONFIG, OUT_DIR_ENV, apply_overrides, load_config
from src.utils.rng import derive_stream, stream_key
from src.utils.stats import RunningMoments


def test_streams_are_reproducible():
    a = derive_stream(20160104, 2, 17).random(5)
    b = derive_stream(20160104, 2, 17).random(5)
    assert np.array_equal(a, b)


def test_streams_differ_by_coordinates():
    base = derive_stream(1, 2, 3).random(4)
    assert not np.array_equal(base, derive_stream(1, 2, 4).random(4))
    assert not np.array_equal(base, derive_stream(1, 3, 3).random(4))
    assert not np.array_equal(base, derive_stream(2, 2, 3).random(4))
    assert not np.array_equal(base, derive_stream(1, 2, 3, reseeded=True).random(4))


@pytest.mark.slow
def test_streams_do_not_collide():
    first_words = {
        int(derive_stream(seed, m, r).bit_generator.random_raw())
        for seed in (1, 20160104)
        for m in range(1, 6)
        for r in range(1000)
    }
    assert len(first_words) == 10_000


def test_stream_key():
    assert stream_key(5, 2, 3) == (2, 3)
    assert stream_key(5, 2, 3, reseeded=True) == (2, 3, 1)
    with pytest.raises(InvalidArgumentError):
        stream_key(-1, 1, 0)
    with pytest.raises(InvalidArgumentError):
        stream_key(2 ** 64, 1, 0)
    with pytest.raises(InvalidArgumentError):
        stream_key(1, 0, 0)


def test_running_moments_match_numpy():
    samples = np.array([[1.0, 2.0], [3.0, 5.0], [4.0, 4.0], [10.0, -1.0]])
    moments = RunningMoments(2)
    for row in samples:
        moments.add(row)
    assert moments.count == 4
    assert moments.mean == pytest.approx(samples.mean(axis=0))
    assert moments.variance == pytest.approx(samples.var(axis=0, ddof=1))
    assert moments.stderr == pytest.approx(samples.std(axis=0, ddof=1) / 2)


def test_running_moments_single_sample():
    moments = RunningMoments()
    moments.add(0.3)
    assert float(moments.mean) == 0.3
    assert float(moments.stderr) == 0.0


def test_defaults_without_file(monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    config = load_config()
    assert config == DEFAULT_CONFIG
    assert config is not DEFAULT_CONFIG
    assert config['ensemble']['realizations'] == 4000


def test_yaml_overrides_merge(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    path = tmp_path / "run.yaml"
    path.write_text("lattice:\n  side_length: 5\nensemble:\n  m: [1, 2]\n")
    config = load_config(str(path))
    assert config['lattice']['side_length'] == 5
    assert config['ensemble']['m'] == [1, 2]
    assert config['ensemble']['seed'] == 20160104


def test_env_overrides_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env-out"))
    assert load_config()['output']['out_dir'] == str(tmp_path / "env-out")


@pytest.mark.parametrize("content", ["lattice: [1, 2", "- just\n- a list\n"])
def test_bad_config_files(tmp_path, content):
    path = tmp_path / "bad.yaml"
    path.write_text(content)
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.yaml"))


def test_apply_overrides_skips_none():
    config = {'ensemble': {'seed': 1, 'm': [1]}}
    apply_overrides(config, {'ensemble.seed': 9, 'ensemble.m': None, 'output.out_dir': 'x'})
    assert config == {'ensemble': {'seed': 9, 'm': [1]}, 'output': {'out_dir': 'x'}}
