"""Reasoning-chain kernel.

Structured causal chains over a DAG with an insertion-order validity gate,
bit-exact chain formats, a composite correctness/structure/length reward,
group-relative policy optimization on enumerable toy environments, a
filtering and assembly data pipeline, and corpus-level structural
statistics.
"""

from .chainformat import (
    ChainDocument,
    extract_answer,
    parse_chain,
    render_template,
    serialize_chain,
)
from .errors import KernelError
from .grpo import (
    Group,
    GroupSample,
    SyntheticEnv,
    ToyPolicy,
    TrainConfig,
    enumerate_expected_reward,
    group_advantages,
    grpo_objective,
    importance_ratio,
    policy_gradient,
    sample_group,
    train,
)
from .rewards import (
    RewardBreakdown,
    RewardConfig,
    composite_reward,
    correctness_reward,
    interval_distance,
    length_reward,
    match_answers,
    structure_reward,
)
from .scm import (
    CausalGraph,
    EndogenousVariable,
    ExogenousVariable,
    Label,
    ReasoningChain,
    ReasoningStep,
    ValidityReport,
    VariableId,
    assemble_steps,
    build_graph,
    check_structural_validity,
    find_sink,
)

__version__ = "0.1.0"
