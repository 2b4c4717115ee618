import json

import pytest

from gswgan.config import (PRESETS, TrainConfig, load_json, load_train_config, preset,
                           train_config_from_dict)
from gswgan.errors import ConfigError


def test_swiss_roll_presets_carry_hyperparameter_tables():
    gs = preset("swiss_roll_groupsort")
    assert (gs.batch_size, gs.critic_steps, gs.noise_dim) == (100, 5, 2)
    assert (gs.discriminator.hidden_activation, gs.discriminator.constraint) == ("groupsort2", "bjorck")
    assert (gs.discriminator.bjorck_steps, gs.discriminator.bjorck_order) == (5, 2)
    for opt in (gs.generator_optimizer, gs.discriminator_optimizer):
        assert (opt.kind, opt.lr, opt.beta1, opt.beta2) == ("adam", 1e-4, 0.9, 0.99)
    clip = preset("swiss_roll_relu_clip")
    assert (clip.discriminator.hidden_activation, clip.discriminator.constraint) == ("relu", "clip")
    for opt in (clip.generator_optimizer, clip.discriminator_optimizer):
        assert (opt.kind, opt.lr, opt.rho) == ("rmsprop", 5e-5, 0.9)


def test_mnist_preset():
    m = preset("mnist_groupsort")
    assert (m.batch_size, m.noise_dim, m.generator.output_activation) == (512, 50, "tanh")
    assert (m.generator_optimizer.lr, m.discriminator_optimizer.lr) == (5e-4, 1e-3)
    assert m.generator_optimizer.beta1 == 0.5 and m.discriminator_optimizer.beta2 == 0.99
    assert m.data_dim == 784 and m.total_iterations == 20000


def test_round_trip_through_json():
    for name in PRESETS:
        cfg = preset(name)
        back = train_config_from_dict(json.loads(cfg.to_json()))
        assert back == cfg


def test_overrides_and_preset_key():
    cfg = train_config_from_dict({"preset": "swiss_roll_relu_clip", "seed": 4,
                                  "discriminator": {"depth": 10}})
    assert cfg.seed == 4 and cfg.discriminator.depth == 10
    assert cfg.discriminator.constraint == "clip"


@pytest.mark.parametrize("data,where", [
    ({"nosie_dim": 3}, "nosie_dim"),
    ({"discriminator": {"widht": 3}}, "discriminator.widht"),
    ({"eval": {"every": "often"}}, "eval.every"),
    ({"batch_size": 5000}, "batch_size"),
    ({"critic_steps": 0}, "critic_steps"),
    ({"generator": {"depth": 1}}, "generator"),
    ({"discriminator": {"width": 31}}, "discriminator"),
    ({"preset": "nope"}, "preset"),
    ({"seed": 1.5}, "seed"),
])
def test_rejections_name_the_key(data, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        train_config_from_dict(data)


def test_malformed_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"seed": 1,\n "n_train": }')
    with pytest.raises(ConfigError, match="line 2"):
        load_json(p)
    with pytest.raises(ConfigError):
        load_train_config(tmp_path / "missing.json")


def test_shipped_configs_load():
    import glob
    import os

    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    files = [f for f in glob.glob(os.path.join(root, "*.json")) if "sweep" not in os.path.basename(f)]
    assert len(files) == 3
    for f in files:
        assert isinstance(load_train_config(f), TrainConfig)
