"""Pipeline configuration: one YAML document, ``profile: default`` pins the stock constants.

Example::

    profile: default
    tracker: {det_thresh: 0.3, iou_threshold: 0.85, max_age: 10}
    refine: {theta0: 0.3, alpha: 0.35, theta_q: 0.4, lambda: 0.1}
    expander: {p0_scale: 0.7}
    fusion: {iou_thr: 0.55}
    eval: {top_k: 100}
    stages: {adaptive_labeling: true, contextual_expander: true}
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .adaptive_labeling import RefineConfig
from .contextual_expander import ExpanderConfig
from .fusion import FusionConfig
from .tracker import TrackerConfig

CONFIG_ENV = "DETREFINE_CONFIG"
PROFILES = ("default",)


class ConfigError(ValueError):
    pass


@dataclass
class StageToggles:
    adaptive_labeling: bool = True
    contextual_expander: bool = True
    fusion: bool = False


@dataclass
class PipelineConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    expander: ExpanderConfig = field(default_factory=ExpanderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    top_k: int = 100
    stages: StageToggles = field(default_factory=StageToggles)
    scenario: Dict[str, Any] = field(default_factory=dict)
    corruption: Dict[str, Any] = field(default_factory=dict)


def _build(cls, section: str, values: Optional[dict]):
    values = dict(values or {})
    if cls is RefineConfig and "lambda" in values:
        values["penalty"] = values.pop("lambda")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def config_from_dict(doc: Optional[dict]) -> PipelineConfig:
    doc = dict(doc or {})
    profile = doc.pop("profile", "default")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    eval_section = dict(doc.pop("eval", None) or {})
    top_k = eval_section.pop("top_k", 100)
    if eval_section:
        raise ConfigError(f"[eval] unknown key(s): {', '.join(sorted(eval_section))}")
    cfg = PipelineConfig(
        tracker=_build(TrackerConfig, "tracker", doc.pop("tracker", None)),
        refine=_build(RefineConfig, "refine", doc.pop("refine", None)),
        expander=_build(ExpanderConfig, "expander", doc.pop("expander", None)),
        fusion=_build(FusionConfig, "fusion", doc.pop("fusion", None)),
        top_k=int(top_k),
        stages=_build(StageToggles, "stages", doc.pop("stages", None)),
        scenario=dict(doc.pop("scenario", None) or {}),
        corruption=dict(doc.pop("corruption", None) or {}),
    )
    if doc:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(doc))}")
    if cfg.top_k < 1:
        raise ConfigError("[eval] top_k must be >= 1")
    return cfg


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """Load ``path``, else ``$DETREFINE_CONFIG``, else the built-in defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    with p.open() as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: invalid YAML: {exc}") from exc
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return config_from_dict(doc)
