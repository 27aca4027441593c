"""Tests for configuration files and seeds."""
import logging

import pytest

from nflindex.config import BenchConfig, FlowConfig, IndexConfig, Settings, env_seed, load_config, settings_from_dict
from nflindex.enums import BucketMode, Engine, FlowMode, WorkloadMix
from nflindex.errors import ConfigurationError


def test_defaults():
    settings = Settings()
    assert settings.index.alpha == 2.0
    assert settings.index.gamma == 0.99
    assert settings.index.bucket_cap == 6
    assert settings.index.bucket_mode == BucketMode.LINEAR
    assert settings.flow.theta == float(2 ** 20)
    assert settings.flow.sigma_latent == 1e8
    assert settings.flow.sample_fraction == 0.1
    assert settings.bench.workload == WorkloadMix.READ_HEAVY
    assert settings.bench.flow_mode == FlowMode.AUTO
    assert settings.bench.engine == Engine.NFL


@pytest.mark.parametrize('config_type, values', [
    (IndexConfig, {'alpha': 0.5}),
    (IndexConfig, {'gamma': 0.0}),
    (IndexConfig, {'gamma': 1.5}),
    (IndexConfig, {'bucket_cap': 1}),
    (IndexConfig, {'max_depth': 0}),
    (IndexConfig, {'bucket_mode': 'sorted'}),
    (FlowConfig, {'dims': 1}),
    (FlowConfig, {'layers': 0}),
    (FlowConfig, {'epochs': -1}),
    (FlowConfig, {'sample_fraction': 0.0}),
    (FlowConfig, {'theta': 1.0}),
    (FlowConfig, {'learning_rate': 0.0}),
    (BenchConfig, {'workload': 'read-mostly'}),
    (BenchConfig, {'bulk_fraction': 1.0}),
    (BenchConfig, {'batch': 0}),
    (BenchConfig, {'repeat': 0}),
    (BenchConfig, {'warmup_fraction': 1.0}),
])
def test_invalid_values(config_type, values):
    with pytest.raises(ConfigurationError):
        config_type(**values)


def test_settings_from_dict():
    settings = settings_from_dict({'nflindex': {'index': {'alpha': 3.0, 'bucket_mode': 'ordered'},
                                                'flow': {'layers': 4, 'seed': 9},
                                                'bench': {'workload': 'write-only', 'engine': 'afli', 'flow_mode': 'on'},
                                                'log_level': 'info'}})
    assert settings.index.alpha == 3.0
    assert settings.index.bucket_mode == BucketMode.ORDERED
    assert settings.flow.layers == 4
    assert settings.bench.workload == WorkloadMix.WRITE_ONLY
    assert settings.bench.engine == Engine.AFLI
    assert settings.bench.flow_mode == FlowMode.ON
    assert settings.log_level == 'INFO'
    assert settings.explicit_seeds == {'flow'}


def test_unknown_keys_are_reported(caplog):
    with caplog.at_level(logging.WARNING, logger='nflindex'):
        settings = settings_from_dict({'nflindex': {'bench': {'engine': 'oracle', 'threads': 8}, 'extra': 1}})
    assert settings.bench.engine == Engine.ORACLE
    assert 'threads' in caplog.text
    assert 'extra' in caplog.text


@pytest.mark.parametrize('config', [{}, {'nflindex': 3}, {'nflindex': {'log_level': 'LOUD'}}, {'nflindex': {'index': {'alpha': 0}}}])
def test_invalid_settings(config):
    with pytest.raises(ConfigurationError):
        settings_from_dict(config)


def test_load_config_with_comments(tmp_path):
    path = tmp_path / 'nflindex.json'
    path.write_text('{\n'
                    '  // index tuning\n'
                    '  "nflindex": {\n'
                    '    "index": {"gamma": 0.95}, /* tail */\n'
                    '    "bench": {"ops": 500, "seed": 4}\n'
                    '  }\n'
                    '}\n', encoding='utf-8')
    settings = load_config(str(path))
    assert settings.index.gamma == 0.95
    assert settings.bench.ops == 500
    assert settings.seed_for('bench') == 4


def test_load_config_errors(tmp_path):
    broken = tmp_path / 'broken.json'
    broken.write_text('{"nflindex": ', encoding='utf-8')
    with pytest.raises(ConfigurationError):
        load_config(str(broken))
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / 'missing.json'))


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv('NFL_SEED', raising=False)
    settings = settings_from_dict({'nflindex': {'flow': {'seed': 5}}})
    assert settings.seed_for('bench') == 0
    assert settings.seed_for('flow') == 5
    assert settings.seed_for('flow', 7) == 7
    monkeypatch.setenv('NFL_SEED', '12')
    assert settings.seed_for('bench') == 12
    assert settings.seed_for('flow') == 5
    assert settings.seed_for('bench', 0) == 0


def test_env_seed(monkeypatch):
    monkeypatch.delenv('NFL_SEED', raising=False)
    assert env_seed() is None
    assert env_seed(3) == 3
    monkeypatch.setenv('NFL_SEED', ' ')
    assert env_seed(3) == 3
    monkeypatch.setenv('NFL_SEED', 'abc')
    with pytest.raises(ConfigurationError):
        env_seed()
