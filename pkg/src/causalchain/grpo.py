"""Group-relative policy optimization on an enumerable chain-generation environment.

The policy is a product of independent per-step categorical distributions
over a finite action alphabet; the environment maps every action sequence
deterministically to one chain document, so expected reward can be computed
exactly by enumeration. Training ascends the unclipped importance-weighted
surrogate

    J = (1/K) * sum_i  [pi(y_i)/pi_old(y_i)] * A_i

where the advantages are the group's rewards standardized by their
population deviation plus a small epsilon. Groups are sampled from the
frozen old policy; advantages are computed once per group and held fixed
across the (single) gradient step. An exact KL penalty against the frozen
policy or an entropy bonus can be added; note the KL term's gradient
vanishes at the frozen point, so it only bites in multi-step inner loops.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .chainformat import ChainDocument, validate_document
from .errors import (
    ConfigError,
    GroupTooSmall,
    RatioOverflow,
    SpaceTooLarge,
)
from .rewards import RewardConfig, composite_reward
from .scm import (
    EndogenousVariable,
    ExogenousVariable,
    Label,
    ReasoningChain,
    VariableId,
    check_structural_validity,
)

ENUMERATION_LIMIT = 100_000
ENV_SEQUENCE_LIMIT = 10_000
KL_MODES = ("kl_penalty", "entropy_bonus", "off")

# exp() overflows a double just above 709; treat anything past 700 as divergence
_RATIO_EXPONENT_LIMIT = 700.0


# --- policy ---

class ToyPolicy:
    """Factorized softmax policy: independent logits per step over a shared alphabet."""

    def __init__(self, logits):
        arr = np.array(logits, dtype=np.float64)
        if arr.ndim != 2:
            raise ConfigError("policy logits must be a (steps, actions) matrix")
        arr.setflags(write=False)
        self.logits = arr

    @classmethod
    def uniform(cls, n_steps: int, n_actions: int) -> "ToyPolicy":
        return cls(np.zeros((n_steps, n_actions)))

    @property
    def n_steps(self) -> int:
        return self.logits.shape[0]

    @property
    def n_actions(self) -> int:
        return self.logits.shape[1]

    def log_probs(self) -> np.ndarray:
        shifted = self.logits - self.logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def sequence_logp(self, actions: tuple[int, ...]) -> float:
        lp = self.log_probs()
        return float(sum(lp[t, a] for t, a in enumerate(actions)))

    def sample_actions(self, rng: np.random.Generator) -> tuple[int, ...]:
        p = self.probs()
        return tuple(int(rng.choice(self.n_actions, p=p[t])) for t in range(self.n_steps))

    def updated(self, delta: np.ndarray) -> "ToyPolicy":
        return ToyPolicy(self.logits + delta)


def kl_divergence(policy: ToyPolicy, old_policy: ToyPolicy) -> float:
    """Exact KL(policy || old_policy), summed over the per-step categoricals."""
    p = policy.probs()
    logp = policy.log_probs()
    logq = old_policy.log_probs()
    return float(np.sum(p * (logp - logq)))


def policy_entropy(policy: ToyPolicy) -> float:
    p = policy.probs()
    return float(-np.sum(p * policy.log_probs()))


# --- environment ---

@dataclass(frozen=True)
class DerivationSpec:
    parents: tuple[str, ...]
    rule: str
    derived: str


@dataclass(frozen=True)
class ActionFragment:
    """What choosing one action contributes to the assembled chain."""

    evidence: tuple[str, ...] = ()
    derive: tuple[DerivationSpec, ...] = ()
    verdict: Optional[Label] = None


class SyntheticEnv:
    """Deterministic mapping from action sequences to chain documents.

    Each step offers the same number of actions; an action appends evidence
    statements and/or derivations (with parents named by canonical id) and
    may set the verdict. Loading verifies that every one of the at most
    10^4 action sequences assembles into a well-formed, structurally valid
    document.
    """

    def __init__(self, name: str, claim: str, gold_label: Label,
                 steps: tuple[tuple[ActionFragment, ...], ...], validate: bool = True):
        if not steps:
            raise ConfigError("environment needs at least one step")
        widths = {len(actions) for actions in steps}
        if len(widths) != 1 or 0 in widths:
            raise ConfigError("every step must offer the same non-zero action count")
        self.name = name
        self.claim = claim
        self.gold_label = gold_label
        self.steps = steps
        self._cache: dict[tuple[int, ...], ChainDocument] = {}
        size = self.outcome_count()
        if size > ENV_SEQUENCE_LIMIT:
            raise SpaceTooLarge(size, ENV_SEQUENCE_LIMIT)
        if validate:
            for actions in self.action_space():
                self.document(actions)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def n_actions(self) -> int:
        return len(self.steps[0])

    def outcome_count(self) -> int:
        return self.n_actions ** self.n_steps

    def action_space(self) -> Iterable[tuple[int, ...]]:
        return np.ndindex(*(self.n_actions,) * self.n_steps)

    def document(self, actions: tuple[int, ...]) -> ChainDocument:
        actions = tuple(int(a) for a in actions)
        if actions in self._cache:
            return self._cache[actions]
        if len(actions) != self.n_steps or any(
            not 0 <= a < self.n_actions for a in actions
        ):
            raise ConfigError(f"action sequence {actions} does not fit the environment")

        evidence: list[ExogenousVariable] = []
        derivations: list[EndogenousVariable] = []
        verdict: Optional[Label] = None
        for step, action in enumerate(actions):
            fragment = self.steps[step][action]
            for text in fragment.evidence:
                evidence.append(
                    ExogenousVariable(VariableId.exogenous(len(evidence) + 1), text)
                )
            for spec in fragment.derive:
                derivations.append(
                    EndogenousVariable(
                        id=VariableId.endogenous(len(derivations) + 1),
                        parents=tuple(VariableId.parse(p) for p in spec.parents),
                        rule_text=spec.rule,
                        derived_text=spec.derived,
                    )
                )
            if fragment.verdict is not None:
                verdict = fragment.verdict
        if verdict is None:
            raise ConfigError(f"action sequence {actions} never sets a verdict")

        chain = ReasoningChain(
            claim=self.claim,
            exogenous=tuple(evidence),
            endogenous=tuple(derivations),
            verdict=verdict,
        )
        doc = ChainDocument(chain=chain, gold_label=self.gold_label, predicted_label=verdict)
        validate_document(doc)
        report = check_structural_validity(chain)
        if not report.valid:
            raise ConfigError(
                f"action sequence {actions} assembles an order-invalid chain"
            )
        self._cache[actions] = doc
        return doc


def _fragment_from_obj(obj: dict) -> ActionFragment:
    unknown = set(obj) - {"evidence", "derive", "verdict"}
    if unknown:
        raise ConfigError(f"unknown fragment field {sorted(unknown)[0]!r}")
    derive = tuple(
        DerivationSpec(
            parents=tuple(spec["parents"]),
            rule=spec["rule"],
            derived=spec["derived"],
        )
        for spec in obj.get("derive", ())
    )
    verdict = obj.get("verdict")
    return ActionFragment(
        evidence=tuple(obj.get("evidence", ())),
        derive=derive,
        verdict=None if verdict is None else Label.parse(verdict),
    )


def env_from_obj(obj: dict) -> SyntheticEnv:
    unknown = set(obj) - {"name", "claim", "gold_label", "steps"}
    if unknown:
        raise ConfigError(f"unknown environment field {sorted(unknown)[0]!r}")
    steps = tuple(
        tuple(_fragment_from_obj(fragment) for fragment in step) for step in obj["steps"]
    )
    return SyntheticEnv(
        name=obj.get("name", "env"),
        claim=obj["claim"],
        gold_label=Label.parse(obj["gold_label"]),
        steps=steps,
    )


def load_env(path) -> SyntheticEnv:
    """Load a SyntheticEnv from its JSON descriptor file."""
    with open(path, "rb") as fh:
        return env_from_obj(json.load(fh))


# --- groups and advantages ---

@dataclass(frozen=True)
class GroupSample:
    """One sampled sequence with its scores under both policies."""

    sequence: ChainDocument
    actions: tuple[int, ...]
    reward: float
    logp_new: float
    logp_old: float
    advantage: float


@dataclass(frozen=True)
class Group:
    prompt_id: str
    samples: tuple[GroupSample, ...]
    epsilon: float

    def rewards(self) -> list[float]:
        return [s.reward for s in self.samples]

    def advantages(self) -> list[float]:
        return [s.advantage for s in self.samples]


def group_advantages(rewards, epsilon: float, ddof: int = 0) -> list[float]:
    """Standardize rewards within the group: (R - mean) / (std + epsilon).

    Population deviation by default (ddof=0), which keeps a two-sample
    group symmetric at +/-1; pass ddof=1 for the sample deviation. A
    constant group maps to all zeros regardless of epsilon.
    """
    values = [float(r) for r in rewards]
    if len(values) < 2:
        raise GroupTooSmall(len(values))
    arr = np.asarray(values)
    centered = arr - arr.mean()
    scale = arr.std(ddof=ddof) + epsilon
    # constant groups (or deviations that underflow the variance) are all zeros
    if not centered.any() or scale == 0.0:
        return [0.0] * len(values)
    return [float(a) for a in centered / scale]


def importance_ratio(logp_new: float, logp_old: float) -> float:
    """exp(logp_new - logp_old); raises once the exponent signals divergence."""
    if not (math.isfinite(logp_new) and math.isfinite(logp_old)):
        raise RatioOverflow("non-finite log-probability")
    exponent = logp_new - logp_old
    if exponent > _RATIO_EXPONENT_LIMIT:
        raise RatioOverflow(f"log-ratio {exponent:.1f} exceeds {_RATIO_EXPONENT_LIMIT}")
    return math.exp(exponent)


def grpo_objective(
    group: Group,
    policy: Optional[ToyPolicy] = None,
    old_policy: Optional[ToyPolicy] = None,
    kl_mode: str = "off",
    kl_coeff: float = 0.0,
) -> float:
    """Importance-weighted surrogate, optionally regularized.

    With a policy given, the new log-probabilities are re-evaluated from
    the sampled actions (so the objective is a function of the policy);
    otherwise the stored values are used. kl_penalty subtracts
    ``kl_coeff * KL(policy || old_policy)``; entropy_bonus adds
    ``kl_coeff * H(policy)``.
    """
    if kl_mode not in KL_MODES:
        raise ConfigError(f"kl_mode must be one of {KL_MODES}")
    total = 0.0
    for sample in group.samples:
        logp_new = (
            policy.sequence_logp(sample.actions) if policy is not None else sample.logp_new
        )
        total += importance_ratio(logp_new, sample.logp_old) * sample.advantage
    value = total / len(group.samples)
    if kl_mode == "kl_penalty":
        if policy is None or old_policy is None:
            raise ConfigError("kl_penalty needs both policies")
        value -= kl_coeff * kl_divergence(policy, old_policy)
    elif kl_mode == "entropy_bonus":
        if policy is None:
            raise ConfigError("entropy_bonus needs the current policy")
        value += kl_coeff * policy_entropy(policy)
    return value


def sample_group(
    env: SyntheticEnv,
    policy: ToyPolicy,
    old_policy: ToyPolicy,
    K: int,
    reward_cfg: RewardConfig,
    rng_seed: Union[int, np.random.Generator],
    epsilon: float = 1e-8,
    prompt_id: Optional[str] = None,
    ddof: int = 0,
) -> Group:
    """Sample K sequences from the frozen old policy and score them.

    Deterministic for a fixed integer seed (counter-based Philox stream).
    """
    if K < 2:
        raise GroupTooSmall(K)
    if isinstance(rng_seed, np.random.Generator):
        rng = rng_seed
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(rng_seed)))

    drawn = []
    for _ in range(K):
        actions = old_policy.sample_actions(rng)
        doc = env.document(actions)
        reward = composite_reward(doc, env.gold_label, reward_cfg).total
        drawn.append((actions, doc, reward))

    advantages = group_advantages([r for _, _, r in drawn], epsilon, ddof=ddof)
    samples = tuple(
        GroupSample(
            sequence=doc,
            actions=actions,
            reward=reward,
            logp_new=policy.sequence_logp(actions),
            logp_old=old_policy.sequence_logp(actions),
            advantage=adv,
        )
        for (actions, doc, reward), adv in zip(drawn, advantages)
    )
    return Group(prompt_id=prompt_id or env.name, samples=samples, epsilon=epsilon)


# --- gradients ---

def policy_gradient(
    group: Group,
    policy: ToyPolicy,
    old_policy: Optional[ToyPolicy] = None,
    kl_mode: str = "off",
    kl_coeff: float = 0.0,
) -> np.ndarray:
    """Analytic gradient of grpo_objective with respect to the policy logits.

    Advantages and old log-probabilities are constants. Per sample the
    surrogate term contributes ``ratio * advantage * (onehot - probs)`` at
    each step; at policy == old_policy this reduces to the score-function
    estimator.
    """
    if kl_mode not in KL_MODES:
        raise ConfigError(f"kl_mode must be one of {KL_MODES}")
    probs = policy.probs()
    grad = np.zeros_like(probs)
    for sample in group.samples:
        ratio = importance_ratio(policy.sequence_logp(sample.actions), sample.logp_old)
        weight = ratio * sample.advantage
        grad -= weight * probs
        for t, a in enumerate(sample.actions):
            grad[t, a] += weight
    grad /= len(group.samples)

    if kl_mode == "kl_penalty":
        if old_policy is None:
            raise ConfigError("kl_penalty needs the frozen policy")
        logp = policy.log_probs()
        logq = old_policy.log_probs()
        per_step_kl = np.sum(probs * (logp - logq), axis=1, keepdims=True)
        grad -= kl_coeff * probs * ((logp - logq) - per_step_kl)
    elif kl_mode == "entropy_bonus":
        logp = policy.log_probs()
        per_step_entropy = -np.sum(probs * logp, axis=1, keepdims=True)
        grad += kl_coeff * (-probs * (logp + per_step_entropy))
    return grad


# --- exact evaluation ---

def _reward_table(env: SyntheticEnv, reward_cfg: RewardConfig) -> dict[tuple[int, ...], float]:
    table = {}
    for raw in env.action_space():
        actions = tuple(int(a) for a in raw)
        table[actions] = composite_reward(env.document(actions), env.gold_label, reward_cfg).total
    return table


def _expected_reward(policy: ToyPolicy, table: dict[tuple[int, ...], float]) -> float:
    lp = policy.log_probs()
    total = 0.0
    for actions, reward in table.items():
        total += math.exp(sum(lp[t, a] for t, a in enumerate(actions))) * reward
    return total


def enumerate_expected_reward(
    env: SyntheticEnv, policy: ToyPolicy, reward_cfg: RewardConfig
) -> float:
    """Exact expected reward by exhaustive enumeration of the outcome space."""
    size = env.outcome_count()
    if size > ENUMERATION_LIMIT:
        raise SpaceTooLarge(size, ENUMERATION_LIMIT)
    return _expected_reward(policy, _reward_table(env, reward_cfg))


def max_enumerated_reward(env: SyntheticEnv, reward_cfg: RewardConfig) -> float:
    """Best achievable expected reward: the maximum over point-mass policies."""
    return max(_reward_table(env, reward_cfg).values())


# --- training ---

@dataclass(frozen=True)
class TrainConfig:
    K: int = 8
    learning_rate: float = 0.1
    iterations: int = 2000
    kl_coeff: float = 0.01
    kl_mode: str = "kl_penalty"
    seed: int = 0
    advantage_epsilon: float = 1e-8
    advantage_ddof: int = 0  # 0 = population deviation, 1 = sample deviation

    def __post_init__(self):
        if self.K < 2:
            raise ConfigError("group size K must be at least 2")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")
        if self.kl_coeff < 0:
            raise ConfigError("kl_coeff must be non-negative")
        if self.kl_mode not in KL_MODES:
            raise ConfigError(f"kl_mode must be one of {KL_MODES}")
        if self.advantage_ddof not in (0, 1):
            raise ConfigError("advantage_ddof must be 0 or 1")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown train config field {sorted(unknown)[0]!r}")
        return cls(**mapping)


def load_train_config(path) -> TrainConfig:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".json":
        return TrainConfig.from_mapping(json.loads(data.decode("utf-8")))
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return TrainConfig.from_mapping(tomllib.loads(data.decode("utf-8")))


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    expected_reward: float
    objective: float
    kl: float
    grad_norm: float

    def to_json_dict(self) -> dict:
        return {
            "iter": self.iter,
            "expected_reward": self.expected_reward,
            "objective": self.objective,
            "kl": self.kl,
            "grad_norm": self.grad_norm,
        }


@dataclass(frozen=True)
class TrainTrace:
    records: tuple[IterationRecord, ...]
    final_policy: ToyPolicy

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r.to_json_dict(), separators=(",", ":")) + "\n" for r in self.records
        )


def train(env: SyntheticEnv, cfg: TrainConfig, reward_cfg: RewardConfig) -> TrainTrace:
    """Run GRPO on the toy environment and record the full trace.

    Each iteration freezes the current policy, samples one group from it,
    takes a single ascent step along the analytic gradient, then records
    the exact expected reward of the updated policy plus the surrogate
    objective and KL of the update against the frozen snapshot.
    """
    policy = ToyPolicy.uniform(env.n_steps, env.n_actions)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    table = _reward_table(env, reward_cfg)

    records = []
    for iteration in range(cfg.iterations):
        old_policy = policy
        group = sample_group(
            env, policy, old_policy, cfg.K, reward_cfg, rng,
            epsilon=cfg.advantage_epsilon, ddof=cfg.advantage_ddof,
        )
        grad = policy_gradient(
            group, policy, old_policy, kl_mode=cfg.kl_mode, kl_coeff=cfg.kl_coeff
        )
        policy = policy.updated(cfg.learning_rate * grad)
        records.append(
            IterationRecord(
                iter=iteration,
                expected_reward=_expected_reward(policy, table),
                objective=grpo_objective(
                    group, policy, old_policy, kl_mode=cfg.kl_mode, kl_coeff=cfg.kl_coeff
                ),
                kl=kl_divergence(policy, old_policy),
                grad_norm=float(np.linalg.norm(grad)),
            )
        )
    return TrainTrace(records=tuple(records), final_policy=policy)
