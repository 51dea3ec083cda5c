import pytest

from dhcn.config import ConfigError, model_config, read_config_file, resolve, train_config


def write(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults():
    values = resolve(env={})
    assert values["seed"] == 42 and values["d"] == 100 and values["beta"] == 0.01
    mc, tc = model_config(values), train_config(values)
    assert mc.n_layers == 3 and tc.lr == 0.001 and tc.l2 == 1e-5 and tc.batch_size == 100


@pytest.mark.parametrize("env,file_seed,flag_seed,expected", [
    ({}, None, None, 42),
    ({"DHCN_SEED": "7"}, None, None, 7),
    ({"DHCN_SEED": "7"}, 8, None, 8),
    ({"DHCN_SEED": "7"}, 8, 9, 9),
    ({}, None, 9, 9),
])
def test_seed_precedence(tmp_path, env, file_seed, flag_seed, expected):
    path = write(tmp_path, f"seed = {file_seed}\n") if file_seed is not None else None
    assert resolve(path, {"seed": flag_seed}, env=env)["seed"] == expected


def test_file_comments_and_types(tmp_path):
    path = write(tmp_path, "# run\nd = 16   # small\nuse_ssl = false\nloss_form = softmax_ce\n\n")
    values = resolve(path, {"d": 32}, env={})
    assert values["d"] == 32 and values["use_ssl"] is False and values["loss_form"] == "softmax_ce"


def test_every_problem_is_reported(tmp_path):
    path = write(tmp_path, "colour = red\nd = -3\nlr = fast\nuse_ssl = maybe\n")
    with pytest.raises(ConfigError) as info:
        resolve(path, {"flavour": 1}, env={})
    text = str(info.value)
    for fragment in ("colour", "d must be >= 1", "lr", "use_ssl", "flavour"):
        assert fragment in text
    assert len(info.value.problems) == 5


def test_malformed_line(tmp_path):
    with pytest.raises(ConfigError, match=":2: expected key = value"):
        read_config_file(write(tmp_path, "d = 4\njust words\n"))


def test_bad_env_seed():
    with pytest.raises(ConfigError, match="DHCN_SEED"):
        resolve(env={"DHCN_SEED": "abc"})
