"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints a single ``[ACCEPTANCE] <name>: PASS`` line on success
(run with ``pytest tests/test_acceptance.py -v -s``). Oracles here are
independent of the code paths they check: a positional linear-extension
check for the validator, scipy's packaged statistics for the analytics,
central finite differences for gradients, and exhaustive enumeration for
the trainer.
"""

import itertools
import json
import math
import random
import time

import numpy as np
import pytest
from scipy import stats as scipy_stats

from causalchain.chainformat import (
    extract_answer,
    parse_chain,
    render_template,
    serialize_chain,
)
from causalchain.analytics import (
    ChainStats,
    ProfileBin,
    corpus_report,
    fit_slope_origin,
    inverted_u_check,
    pearson,
    welch_t_test,
)
from causalchain.datapipe import (
    FixtureReplayGenerator,
    SeedRecord,
    SyntheticChainGenerator,
    build_struct_dataset,
    load_seed,
)
from causalchain.grpo import (
    ToyPolicy,
    TrainConfig,
    grpo_objective,
    group_advantages,
    load_env,
    max_enumerated_reward,
    policy_gradient,
    sample_group,
    train,
)
from causalchain.rewards import (
    RewardConfig,
    composite_reward,
    interval_distance,
    structure_reward,
)
from causalchain.scm import (
    EndogenousVariable,
    ExogenousVariable,
    Label,
    ReasoningChain,
    VariableId,
    VarKind,
    check_structural_validity,
)
from causalchain.synth import random_corpus


def report(name):
    print(f"\n[ACCEPTANCE] {name}: PASS")


def build_chain(parent_sets, n_exo, order=None):
    """Chain with the given endogenous parent sets (v_t gets parent_sets[t-1])."""
    exogenous = tuple(
        ExogenousVariable(VariableId.exogenous(k), f"e{k}") for k in range(1, n_exo + 1)
    )
    endogenous = [
        EndogenousVariable(
            VariableId.endogenous(t + 1), tuple(parents), f"r{t + 1}", f"d{t + 1}"
        )
        for t, parents in enumerate(parent_sets)
    ]
    if order is not None:
        endogenous = [endogenous[i] for i in order]
    return ReasoningChain(
        claim="claim",
        exogenous=exogenous,
        endogenous=tuple(endogenous),
        verdict=Label.SUPPORTED,
    )


def linear_extension_oracle(chain):
    """Definition-level validity: every parent is declared, and every
    endogenous parent occupies an earlier list position. Computed from
    position maps rather than an incremental scan."""
    declared = {x.id for x in chain.exogenous} | {v.id for v in chain.endogenous}
    position = {v.id: t for t, v in enumerate(chain.endogenous)}
    for endo in chain.endogenous:
        for parent in endo.parents:
            if parent not in declared:
                return False
            if parent.kind is VarKind.ENDOGENOUS and position[parent] >= position[endo.id]:
                return False
    return True


def test_validator_oracle_equivalence():
    """Exhaustive parent-structure x insertion-order agreement, <30s."""
    started = time.monotonic()
    cases = 0

    # family A: 2 evidence, 3 derivations; all non-empty parent subsets of the
    # other four variables, all insertion orders (15^3 * 6 = 20250 chains)
    candidates = {
        1: [VariableId.exogenous(1), VariableId.exogenous(2),
            VariableId.endogenous(2), VariableId.endogenous(3)],
        2: [VariableId.exogenous(1), VariableId.exogenous(2),
            VariableId.endogenous(1), VariableId.endogenous(3)],
        3: [VariableId.exogenous(1), VariableId.exogenous(2),
            VariableId.endogenous(1), VariableId.endogenous(2)],
    }
    subset_choices = {
        t: [
            combo
            for size in (1, 2, 3, 4)
            for combo in itertools.combinations(candidates[t], size)
        ]
        for t in (1, 2, 3)
    }
    orders = list(itertools.permutations(range(3)))
    for p1 in subset_choices[1]:
        for p2 in subset_choices[2]:
            for p3 in subset_choices[3]:
                for order in orders:
                    chain = build_chain([p1, p2, p3], n_exo=2, order=order)
                    cases += 1
                    assert check_structural_validity(chain).valid == (
                        linear_extension_oracle(chain)
                    )

    # family B: 1 evidence, 2 derivations, self-references allowed
    pool = [VariableId.exogenous(1), VariableId.endogenous(1), VariableId.endogenous(2)]
    all_subsets = [
        combo for size in (1, 2, 3) for combo in itertools.combinations(pool, size)
    ]
    for p1 in all_subsets:
        for p2 in all_subsets:
            for order in itertools.permutations(range(2)):
                chain = build_chain([p1, p2], n_exo=1, order=order)
                cases += 1
                assert check_structural_validity(chain).valid == (
                    linear_extension_oracle(chain)
                )

    elapsed = time.monotonic() - started
    assert cases >= 10_000, cases
    assert elapsed < 30.0, elapsed
    report(f"validator oracle equivalence ({cases} cases, {elapsed:.1f}s)")


def test_round_trip_both_formats():
    docs = random_corpus(20_240, 1000)
    for doc in docs:
        for fmt in ("json", "template-text"):
            data = serialize_chain(doc, fmt)
            again = parse_chain(data, fmt)
            assert again == doc
            assert serialize_chain(again, fmt) == data
        assert extract_answer(render_template(doc)) == doc.chain.verdict
    report("round-trip 1000 documents, both formats, byte-identical")


def test_reward_identities():
    rng = random.Random(91)
    checked = 0
    for _ in range(10_000):
        cfg = RewardConfig(
            r_correct=rng.uniform(0.5, 3.0),
            gamma=rng.uniform(0.05, 2.0),
            delta=rng.uniform(0.1, 5.0),
            lambda_=rng.uniform(0.0, 1.0),
            l_min=(l_min := rng.randint(0, 6)),
            l_max=l_min + rng.randint(0, 6),
            beta_s=rng.uniform(0.0, 2.0),
            beta_l=rng.uniform(0.0, 2.0),
        )
        m, n = rng.randint(1, 8), rng.randint(1, 8)
        chain = build_chain(
            [
                (VariableId.exogenous(1),) if t == 0 else (VariableId.endogenous(t),)
                for t in range(n)
            ],
            n_exo=m,
        )
        mirror = build_chain(
            [
                (VariableId.exogenous(1),) if t == 0 else (VariableId.endogenous(t),)
                for t in range(m)
            ],
            n_exo=n,
        )
        r_s = structure_reward(chain, cfg)
        r_s_mirror = structure_reward(mirror, cfg)
        assert abs(r_s + r_s_mirror) < 1e-12
        assert abs(r_s) <= cfg.gamma

        length = len(chain.endogenous)
        inside = cfg.l_min <= length <= cfg.l_max
        distance = interval_distance(length, cfg.l_min, cfg.l_max)
        assert (distance == 0.0) == inside

        from causalchain.chainformat import ChainDocument

        doc = ChainDocument(
            chain=chain,
            gold_label=rng.choice(list(Label)),
            predicted_label=chain.verdict,
        )
        b = composite_reward(doc, doc.gold_label, cfg)
        expect = b.r_c + cfg.beta_s * b.r_s + cfg.beta_l * b.r_l
        assert abs(b.total - expect) <= 1e-12 * max(1.0, abs(b.total))
        assert b.r_l <= 0.0
        checked += 1
    assert checked == 10_000
    report("reward identities over 10^4 random configs/chains")


def test_group_advantage_contract():
    rng = np.random.default_rng(4242)
    epsilon = 1e-8
    checked_band = 0
    for _ in range(10_000):
        k = int(rng.integers(2, 65))
        rewards = rng.integers(0, 4, size=k).astype(float).tolist()
        adv = np.array(group_advantages(rewards, epsilon))
        assert abs(adv.mean()) < 1e-9
        reward_std = float(np.asarray(rewards).std())
        if reward_std > 10 * epsilon:
            assert 1.0 - 1e-6 <= adv.std() <= 1.0
            checked_band += 1
            scale = float(rng.uniform(0.5, 2.0))
            shift = float(rng.uniform(-1.0, 1.0))
            moved = np.array(
                group_advantages([scale * r + shift for r in rewards], epsilon)
            )
            assert np.max(np.abs(moved - adv)) < 1e-6
    assert checked_band > 5_000
    report(f"group advantage contract (10^4 groups, {checked_band} non-degenerate)")


def test_gradient_check_three_envs(env_dir):
    started = time.monotonic()
    rng = np.random.default_rng(7)
    worst = 0.0
    for name in ("gradcheck_small.json", "gradcheck_wide.json", "shaping_two_chains.json"):
        env = load_env(env_dir / name)
        for kl_mode, kl_coeff in (("off", 0.0), ("kl_penalty", 0.05), ("entropy_bonus", 0.05)):
            old_policy = ToyPolicy(rng.normal(scale=0.6, size=(env.n_steps, env.n_actions)))
            policy = ToyPolicy(
                old_policy.logits + rng.normal(scale=0.3, size=old_policy.logits.shape)
            )
            group = sample_group(env, policy, old_policy, 8, RewardConfig(), rng_seed=13)
            analytic = policy_gradient(group, policy, old_policy, kl_mode, kl_coeff)
            h = 1e-5
            for idx in np.ndindex(*policy.logits.shape):
                bump = np.zeros_like(policy.logits)
                bump[idx] = h
                plus = grpo_objective(
                    group, ToyPolicy(policy.logits + bump), old_policy, kl_mode, kl_coeff
                )
                minus = grpo_objective(
                    group, ToyPolicy(policy.logits - bump), old_policy, kl_mode, kl_coeff
                )
                numeric = (plus - minus) / (2 * h)
                rel = abs(analytic[idx] - numeric) / max(abs(numeric), 1e-8)
                worst = max(worst, rel)
                assert rel < 1e-4, (name, kl_mode, idx, rel)
    elapsed = time.monotonic() - started
    assert elapsed < 60.0, elapsed
    report(f"gradient check on 3 envs (worst rel err {worst:.2e}, {elapsed:.1f}s)")


def test_grpo_convergence_and_shaping(env_dir):
    started = time.monotonic()
    reward_cfg = RewardConfig()
    cfg = TrainConfig(K=8, learning_rate=0.1, iterations=2000, seed=42)

    env = load_env(env_dir / "convergence.json")
    trace = train(env, cfg, reward_cfg)
    best = max_enumerated_reward(env, reward_cfg)
    final = trace.records[-1].expected_reward
    assert final >= 0.9 * best, (final, best)

    shaping = load_env(env_dir / "shaping_two_chains.json")
    shaped_trace = train(shaping, cfg, reward_cfg)
    probs = shaped_trace.final_policy.probs()
    # action 0 at step 0 assembles the evidence-heavy structure (delta_uv = +2)
    assert probs[0, 0] >= 0.8, probs[0].tolist()

    elapsed = time.monotonic() - started
    assert elapsed < 120.0, elapsed
    report(
        "grpo convergence "
        f"(expected {final:.4f} >= 0.9 x {best:.4f}; shaped mass {probs[0, 0]:.3f}, "
        f"{elapsed:.1f}s)"
    )


def test_pipeline_conservation(fixtures_dir):
    seeds = list(load_seed(fixtures_dir / "seeds_10.jsonl"))
    generator = FixtureReplayGenerator.from_jsonl(fixtures_dir / "candidates_10.jsonl")
    records, stats = build_struct_dataset(seeds, generator)
    assert len(list(records)) == 7
    assert stats.kept == 7
    assert stats.total == 10

    rng = random.Random(31337)
    for trial in range(100):
        n = rng.randint(1, 15)
        trial_seeds = [
            SeedRecord(
                id=f"t{trial}-{i}",
                query=f"q{i}",
                gold_label=rng.choice(list(Label)),
            )
            for i in range(n)
        ]
        generator = SyntheticChainGenerator(
            seed=trial, wrong_rate=rng.random(), invalid_rate=rng.random()
        )
        records, stats = build_struct_dataset(trial_seeds, generator)
        kept = len(list(records))
        assert kept == stats.kept
        assert stats.kept + sum(stats.discarded.values()) == n
    report("pipeline conservation (fixture 7/10; 100 random fixtures)")


def test_analytics_exact_and_oracle_matched():
    two_chain = [
        ChainStats(3, 1, 3, 4, 1, None),
        ChainStats(5, 3, 6, 8, 3, None),
    ]
    rep = corpus_report(two_chain)
    assert (rep.avg_exogenous, rep.avg_endogenous, rep.avg_paths) == (4.0, 2.0, 4.5)
    assert rep.path_efficiency == 0.75

    rng = np.random.default_rng(909)
    x = rng.normal(10.0, 3.0, size=100)
    y = 0.7 * x + rng.normal(0.0, 2.0, size=100)
    assert abs(pearson(x, y) - scipy_stats.pearsonr(x, y).statistic) < 1e-10
    ours = welch_t_test(x, y)
    oracle = scipy_stats.ttest_ind(x, y, equal_var=False)
    assert abs(ours.t - oracle.statistic) < 1e-10
    assert abs(ours.p - oracle.pvalue) <= 1e-10 * max(1.0, abs(oracle.pvalue))
    lstsq_slope = np.linalg.lstsq(x[:, None], y, rcond=None)[0][0]
    assert abs(fit_slope_origin(x, y) - lstsq_slope) < 1e-10
    report("analytics exact fixture + direct-formula oracles at 1e-10")


def _paper_shaped_corpus(rng, n, mean_vars, sd_vars, ratio, target_corr):
    """ChainStats corpus with paths ~= ratio * total_vars and a chosen correlation."""
    signal_sd = ratio * sd_vars
    noise_sd = signal_sd * math.sqrt(1.0 / target_corr**2 - 1.0)
    out = []
    for _ in range(n):
        total = max(4, int(round(rng.normal(mean_vars, sd_vars))))
        paths = max(1, int(round(ratio * total + rng.normal(0.0, noise_sd))))
        endo = max(1, paths // 3)
        exo = max(1, total - endo)
        out.append(ChainStats(exo, endo, paths, total, endo, bool(rng.random() < 0.7)))
    return out


def test_paper_shaped_magnitudes():
    rng = np.random.default_rng(1234)

    sft_like = _paper_shaped_corpus(rng, 4000, 100.0, 8.0, ratio=0.60, target_corr=0.85)
    rlhf_like = _paper_shaped_corpus(rng, 4000, 100.0, 4.0, ratio=0.29, target_corr=0.16)
    sft_report = corpus_report(sft_like)
    rlhf_report = corpus_report(rlhf_like)

    assert abs(sft_report.pearson_r - 0.85) < 0.05, sft_report.pearson_r
    assert abs(rlhf_report.pearson_r - 0.16) < 0.05, rlhf_report.pearson_r
    assert abs(sft_report.path_efficiency - 0.60) < 0.02, sft_report.path_efficiency
    assert abs(rlhf_report.path_efficiency - 0.29) < 0.02, rlhf_report.path_efficiency

    a = rng.normal(3.0, 0.5, size=1000)
    b = rng.normal(6.0, 0.5, size=1000)
    separation = welch_t_test(a, b)
    assert separation.p < 1e-30, separation.p

    report(
        "paper-shaped magnitudes "
        f"(pearson {sft_report.pearson_r:.3f}/{rlhf_report.pearson_r:.3f}, "
        f"efficiency {sft_report.path_efficiency:.3f}/{rlhf_report.path_efficiency:.3f}, "
        f"welch p {separation.p:.2e})"
    )


def test_inverted_u_detection():
    def bins(accuracies):
        return [
            ProfileBin(lo=float(i), hi=float(i + 1), accuracy=a, count=10)
            for i, a in enumerate(accuracies)
        ]

    assert inverted_u_check(bins([0.4, 0.8, 0.5])).is_inverted_u
    assert not inverted_u_check(bins([0.4, 0.5, 0.6])).is_inverted_u
    assert not inverted_u_check(bins([0.6, 0.5, 0.4])).is_inverted_u
    assert not inverted_u_check(bins([0.5, 0.5, 0.5])).is_inverted_u
    report("inverted-U detection (rise-fall true, monotone/flat false)")
