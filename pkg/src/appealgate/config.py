"""YAML configuration, validated up front; unknown keys are errors."""

from __future__ import annotations

import dataclasses
import os
import typing
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, create_model, field_validator

from appealgate.core import BotTemplates
from appealgate.simulator import BehaviorConfig
from appealgate.webform import FormDefinition, default_form


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class OptionSpec(_Section):
    id: str
    text: str
    permissible: bool = False


class QuestionSpec(_Section):
    id: str
    prompt: str
    kind: Literal["open_text", "multiple_choice"] = "open_text"
    options: list[OptionSpec] = Field(default_factory=list)


class FormSection(_Section):
    questions: list[QuestionSpec]

    def definition(self) -> FormDefinition:
        return FormDefinition.from_dict(self.model_dump())


_template_defaults = BotTemplates()


class TemplatesSection(_Section):
    form_url: str = _template_defaults.form_url
    invitation: str = _template_defaults.invitation
    reminder: str = _template_defaults.reminder
    handover: str = _template_defaults.handover
    outage_note: str = _template_defaults.outage_note
    outage_user: str = _template_defaults.outage_user
    notify_users_on_outage: bool = True

    @field_validator("invitation", "reminder", "handover", "outage_note", "outage_user", "form_url")
    @classmethod
    def _renders(cls, v: str) -> str:
        try:
            v.format(user="u", form_url="https://example.org")
        except (KeyError, IndexError, ValueError) as exc:
            raise ValueError(f"template uses an unknown placeholder: {exc}") from None
        if not v.strip():
            raise ValueError("template must be non-empty")
        return v

    def templates(self) -> BotTemplates:
        return BotTemplates(**self.model_dump())


class ExperimentSection(_Section):
    ratio: float = Field(0.5, ge=0.0, le=1.0)
    seed: int = 0


class ToxicitySection(_Section):
    backend: Literal["lexicon", "remote"] = "lexicon"
    lexicon_path: Optional[str] = None
    remote_url: Optional[str] = None
    threshold: float = Field(0.7, gt=0.0, lt=1.0)
    timeout: float = Field(10.0, gt=0.0)
    retries: int = Field(3, ge=0)
    max_in_flight: int = Field(4, ge=1)


class PpsSection(_Section):
    min_df: int = Field(2, ge=1)
    l2: float = Field(1.0, ge=0.0)
    folds: int = Field(5, ge=2)
    seed: int = 0
    threshold: float = Field(0.5, gt=0.0, lt=1.0)


def _behavior_model():
    hints = typing.get_type_hints(BehaviorConfig)
    # seed and ratio live in the experiment section
    fields = {
        f.name: (hints[f.name], f.default)
        for f in dataclasses.fields(BehaviorConfig)
        if f.name not in ("seed", "ratio")
    }
    return create_model("BehaviorSection", __base__=_Section, **fields)


BehaviorSection = _behavior_model()


class PathsSection(_Section):
    log: str = "appeal-log.jsonl"
    report_dir: str = "report"
    model: Optional[str] = None


class AppConfig(_Section):
    form: Optional[FormSection] = None
    templates: TemplatesSection = Field(default_factory=TemplatesSection)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    toxicity: ToxicitySection = Field(default_factory=ToxicitySection)
    pps: PpsSection = Field(default_factory=PpsSection)
    behavior: BehaviorSection = Field(default_factory=BehaviorSection)  # type: ignore[valid-type]
    paths: PathsSection = Field(default_factory=PathsSection)

    def form_definition(self) -> FormDefinition:
        return self.form.definition() if self.form is not None else default_form()

    def behavior_config(self, **overrides) -> BehaviorConfig:
        data = self.behavior.model_dump()
        data.update(seed=self.experiment.seed, ratio=self.experiment.ratio)
        data.update(overrides)
        return BehaviorConfig(**data)

    def scorer(self):
        from appealgate.toxicity import LexiconScorer, RemoteScorer, load_lexicon

        tox = self.toxicity
        if tox.backend == "remote":
            return RemoteScorer(tox.remote_url, timeout=tox.timeout, retries=tox.retries,
                                max_in_flight=tox.max_in_flight)
        return LexiconScorer(load_lexicon(tox.lexicon_path) if tox.lexicon_path else None)


def parse_config(data: Any) -> AppConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    try:
        cfg = AppConfig.model_validate(data)
        cfg.form_definition()
        cfg.behavior_config()
    except ValidationError as exc:
        raise ConfigError(f"invalid config:\n{exc}") from None
    except ValueError as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return cfg


def load_config(path: str | os.PathLike | None) -> AppConfig:
    """Read and validate ``path``; ``None`` gives the defaults."""
    if path is None:
        return parse_config({})
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return parse_config(data)
