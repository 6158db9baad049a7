"""Composite chain reward: correctness, structural shape, and length.

* correctness -- an indicator match against the gold label scaled by a
  fixed positive reward.
* structure -- ``gamma * tanh(delta_uv / delta)`` where ``delta_uv`` is
  the evidence count minus the derivation count, rewarding chains that
  ground conclusions in more direct evidence relative to inferred steps.
* length -- ``-lambda * dist(L, [l_min, l_max])``, zero inside the target
  interval and linearly negative outside it.

The total is ``r_c + beta_s * r_s + beta_l * r_l``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Union

from .chainformat import ChainDocument, render_template
from .errors import BadInterval, BadLabel, ConfigError
from .scm import Label, ReasoningChain

MATCH_MODES = ("exact", "fuzzy")
LENGTH_UNITS = ("steps", "characters")


@dataclass(frozen=True)
class RewardConfig:
    """Hyperparameters of the composite reward.

    Defaults keep the shaped terms subordinate to correctness
    (``|beta_s * r_s| < r_correct``); every field is overridable from a
    TOML or JSON config file using these names (``lambda`` in files maps
    to ``lambda_`` here).
    """

    r_correct: float = 1.0
    gamma: float = 0.5
    delta: float = 2.0
    lambda_: float = 0.1
    l_min: int = 2
    l_max: int = 8
    beta_s: float = 1.0
    beta_l: float = 1.0
    match_mode: str = "exact"
    length_unit: str = "steps"

    def __post_init__(self):
        if self.r_correct <= 0:
            raise ConfigError("r_correct must be positive")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.lambda_ < 0:
            raise ConfigError("lambda must be non-negative")
        if self.l_min < 0 or self.l_max < 0 or self.l_min > self.l_max:
            raise ConfigError("need 0 <= l_min <= l_max")
        if self.beta_s < 0 or self.beta_l < 0:
            raise ConfigError("beta_s and beta_l must be non-negative")
        if self.match_mode not in MATCH_MODES:
            raise ConfigError(f"match_mode must be one of {MATCH_MODES}")
        if self.length_unit not in LENGTH_UNITS:
            raise ConfigError(f"length_unit must be one of {LENGTH_UNITS}")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "RewardConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            name = "lambda_" if key == "lambda" else key
            if name not in known:
                raise ConfigError(f"unknown reward config field {key!r}")
            kwargs[name] = value
        return cls(**kwargs)

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            key = "lambda" if f.name == "lambda_" else f.name
            out[key] = getattr(self, f.name)
        return out


def load_reward_config(path) -> RewardConfig:
    """Load a RewardConfig from a .toml or .json file."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".json":
        return RewardConfig.from_mapping(json.loads(data.decode("utf-8")))
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    return RewardConfig.from_mapping(tomllib.loads(data.decode("utf-8")))


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-chain reward components and their weighted total."""

    r_c: float
    r_s: float
    r_l: float
    total: float
    delta_uv: int
    length: int

    def to_json_dict(self) -> dict:
        return {
            "r_c": self.r_c,
            "r_s": self.r_s,
            "r_l": self.r_l,
            "total": self.total,
            "delta_uv": self.delta_uv,
            "length": self.length,
        }


_FUZZY_STRIP = re.compile(r"[^a-z0-9]+")


def match_answers(a_pred, a_gt: Label, mode: str = "exact") -> bool:
    """Exact: canonical labels equal. Fuzzy: equal after lowercasing and
    stripping everything non-alphanumeric."""
    if mode not in MATCH_MODES:
        raise ConfigError(f"match_mode must be one of {MATCH_MODES}")
    if mode == "exact":
        return Label.parse(a_pred) is Label.parse(a_gt)
    pred_text = a_pred.value if isinstance(a_pred, Label) else str(a_pred)
    gt_text = a_gt.value if isinstance(a_gt, Label) else str(a_gt)
    return _FUZZY_STRIP.sub("", pred_text.lower()) == _FUZZY_STRIP.sub("", gt_text.lower())


def correctness_reward(a_pred, a_gt: Label, cfg: RewardConfig) -> float:
    return cfg.r_correct if match_answers(a_pred, a_gt, cfg.match_mode) else 0.0


def variable_delta(chain: ReasoningChain) -> int:
    """Evidence count minus derivation count."""
    return len(chain.exogenous) - len(chain.endogenous)


def structure_reward(chain: ReasoningChain, cfg: RewardConfig) -> float:
    return cfg.gamma * math.tanh(variable_delta(chain) / cfg.delta)


def interval_distance(x: float, lo: float, hi: float) -> float:
    """Distance from x to [lo, hi]; zero inside the interval."""
    if lo > hi:
        raise BadInterval(lo, hi)
    return max(0.0, lo - x, x - hi)


def chain_length(subject: Union[ChainDocument, ReasoningChain, str], cfg: RewardConfig) -> int:
    """Length in the configured unit: derivation steps, or characters of the
    rendered target text. Plain strings are measured in characters only."""
    if isinstance(subject, str):
        if cfg.length_unit != "characters":
            raise ConfigError("step counting needs a chain, not raw text")
        return len(subject)
    chain = subject.chain if isinstance(subject, ChainDocument) else subject
    if cfg.length_unit == "steps":
        return len(chain.endogenous)
    doc = subject if isinstance(subject, ChainDocument) else ChainDocument(chain=chain)
    return len(render_template(doc))


def length_reward(subject, cfg: RewardConfig) -> float:
    distance = interval_distance(chain_length(subject, cfg), cfg.l_min, cfg.l_max)
    # avoid -0.0 so serialized breakdowns are sign-stable across runtimes
    return -cfg.lambda_ * distance if distance else 0.0


def composite_reward(doc: ChainDocument, a_gt, cfg: RewardConfig) -> RewardBreakdown:
    """Score one document against the gold label.

    The predicted answer is the document's predicted label when present,
    otherwise the chain's own verdict.
    """
    if a_gt is None:
        raise BadLabel(None)
    gold = Label.parse(a_gt)
    a_pred = doc.predicted_label if doc.predicted_label is not None else doc.chain.verdict
    r_c = correctness_reward(a_pred, gold, cfg)
    r_s = structure_reward(doc.chain, cfg)
    r_l = length_reward(doc, cfg)
    return RewardBreakdown(
        r_c=r_c,
        r_s=r_s,
        r_l=r_l,
        total=r_c + cfg.beta_s * r_s + cfg.beta_l * r_l,
        delta_uv=variable_delta(doc.chain),
        length=chain_length(doc, cfg),
    )
