from importlib.resources import files

import pytest
import yaml

from appealgate.config import AppConfig, ConfigError, load_config, parse_config
from appealgate.simulator import BehaviorConfig
from appealgate.toxicity import LexiconScorer
from appealgate.webform import default_form


def test_defaults():
    cfg = load_config(None)
    assert cfg.experiment.ratio == 0.5 and cfg.experiment.seed == 0
    assert cfg.toxicity.threshold == 0.7
    assert isinstance(cfg.scorer(), LexiconScorer)
    assert cfg.form_definition() == default_form()
    assert cfg.behavior_config() == BehaviorConfig()


def test_shipped_default_file_matches_builtin_defaults(tmp_path):
    text = files("appealgate").joinpath("data/default.yaml").read_text(encoding="utf-8")
    path = tmp_path / "c.yaml"
    path.write_text(text)
    shipped = load_config(path)
    assert shipped.behavior_config() == AppConfig().behavior_config()
    assert shipped.pps == AppConfig().pps
    assert shipped.toxicity == AppConfig().toxicity


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("")
    assert load_config(path) == AppConfig()


def test_experiment_seed_and_ratio_feed_the_simulator():
    cfg = parse_config({"experiment": {"seed": 5, "ratio": 0.25}, "behavior": {"n_users": 10}})
    b = cfg.behavior_config()
    assert (b.seed, b.ratio, b.n_users) == (5, 0.25, 10)
    assert cfg.behavior_config(seed=9).seed == 9


@pytest.mark.parametrize("data", [
    {"nonsense": 1},
    {"toxicity": {"treshold": 0.5}},
    {"behavior": {"seed": 3}},  # seed belongs to the experiment section
    {"templates": {"colour": "red"}},
])
def test_unknown_keys_rejected(data):
    with pytest.raises(ConfigError):
        parse_config(data)


@pytest.mark.parametrize("data", [
    {"experiment": {"ratio": 1.5}},
    {"toxicity": {"threshold": 1.0}},
    {"toxicity": {"backend": "magic"}},
    {"pps": {"folds": 1}},
    {"behavior": {"toxic_prob": 2.0}},
    {"behavior": {"message_geometric_p": 0.0}},
    {"templates": {"invitation": "Hi {nobody}"}},
    {"templates": {"reminder": "  "}},
    {"form": {"questions": []}},
])
def test_bad_values_rejected(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_non_mapping_rejected():
    with pytest.raises(ConfigError):
        parse_config([1, 2])


def test_bad_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("a: [unclosed")
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.yaml")


def test_custom_prompts_and_templates():
    form = default_form().to_dict()
    form["questions"][0]["prompt"] = "Paste the ban reason here."
    cfg = parse_config({"form": form, "templates": {"invitation": "Hello {user}, fill in {form_url}"}})
    assert cfg.form_definition().questions[0].prompt == "Paste the ban reason here."
    assert cfg.templates.templates().invitation.startswith("Hello")


def test_form_question_set_is_fixed():
    with pytest.raises(ConfigError):
        parse_config({"form": {"questions": [{"id": "why", "prompt": "Why?"}]}})


def test_round_trip_through_yaml(tmp_path):
    cfg = parse_config({"experiment": {"seed": 3}, "pps": {"l2": 2.0}})
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg.model_dump(exclude_none=True)))
    assert load_config(path) == cfg
