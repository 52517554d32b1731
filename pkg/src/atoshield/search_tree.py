"""Reward-greedy correction of unsafe proposals by bounded tree search.

Each safe candidate command seeds one root; nodes expand with policy-sampled
actions kept only when the shield certifies them, and every branch runs out
exactly at the next policy-update step so the lookahead never outlives the
network weights it was computed with.  Returns back up with a fixed discount
over the uniform mean of children, and the root with the best backed-up
return wins (ties resolve toward harder braking).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .dynamics import OperationState, StepOutcome


class SimulatorView(Protocol):
    def simulate(self, state: OperationState, cmd: float, prev_accel: float) -> StepOutcome: ...


class ShieldView(Protocol):
    def is_safe(self, state: OperationState, cmd: float) -> bool: ...


PolicySampler = Callable[[OperationState, int], Sequence[float]]


@dataclass
class SearchConfig:
    expansion_width: int = 5  # policy samples per expanded node
    update_frequency: int = 5  # environment steps between policy updates
    backup_discount: float = 0.9
    action_grid: int = 9  # candidate grid used to form the safe set

    def __post_init__(self):
        if self.expansion_width < 1:
            raise ValueError("expansion_width must be >= 1")
        if self.update_frequency < 1:
            raise ValueError("update_frequency must be >= 1")
        if not 0.0 < self.backup_discount <= 1.0:
            raise ValueError("backup_discount must be in (0, 1]")


@dataclass
class SearchNode:
    state: OperationState
    incoming_cmd: float
    rollout_reward: float
    depth_step: int  # absolute environment step index of entering this node
    children: list["SearchNode"] = field(default_factory=list)
    backed_return: float | None = None
    terminal: bool = False
    accel: float = 0.0  # applied accel entering the node, threads the jerk term


def build_tree(
    env: SimulatorView,
    shield: ShieldView,
    policy: PolicySampler,
    state_unsafe: OperationState,
    safe_set: Sequence[float],
    t: int,
    cfg: SearchConfig,
    prev_accel: float = 0.0,
) -> list[SearchNode]:
    """Grow one root per safe candidate command taken from the unsafe state.

    ``t`` is the environment step at which the unsafe proposal occurred; roots
    therefore sit at step t+1.  Unsafe policy samples are dropped rather than
    replaced, so branches can die out before the update step and get pruned.
    """
    if not safe_set:
        raise ValueError("safe_set must be nonempty")
    roots = []
    for cmd in safe_set:
        out = env.simulate(state_unsafe, cmd, prev_accel)
        root = SearchNode(
            state=out.next_state,
            incoming_cmd=cmd,
            rollout_reward=out.reward,
            depth_step=t + 1,
            terminal=out.done,
            accel=out.accel_applied,
        )
        _expand(root, env, shield, policy, cfg)
        roots.append(root)
    return roots


def _expand(
    node: SearchNode,
    env: SimulatorView,
    shield: ShieldView,
    policy: PolicySampler,
    cfg: SearchConfig,
) -> None:
    if node.terminal or node.depth_step % cfg.update_frequency == 0:
        return
    for cmd in policy(node.state, cfg.expansion_width):
        if not shield.is_safe(node.state, cmd):
            continue
        out = env.simulate(node.state, cmd, node.accel)
        child = SearchNode(
            state=out.next_state,
            incoming_cmd=cmd,
            rollout_reward=out.reward,
            depth_step=node.depth_step + 1,
            terminal=out.done,
            accel=out.accel_applied,
        )
        node.children.append(child)
        _expand(child, env, shield, policy, cfg)


def prune(node: SearchNode, update_frequency: int) -> SearchNode | None:
    """Drop every branch that fails to reach the update step.

    A surviving leaf either sits exactly on an update step or ended the
    episode; interior nodes whose subtrees die out entirely are removed.
    Returns None when nothing of the tree survives.
    """
    node.children = [
        kept
        for kept in (prune(child, update_frequency) for child in node.children)
        if kept is not None
    ]
    if node.children:
        return node
    if node.terminal or node.depth_step % update_frequency == 0:
        return node
    return None


def prune_roots(roots: Sequence[SearchNode], cfg: SearchConfig) -> list[SearchNode]:
    return [kept for kept in (prune(r, cfg.update_frequency) for r in roots) if kept is not None]


def backup(node: SearchNode, cfg: SearchConfig) -> float:
    """Fill backed-up returns: leaves keep their rollout reward, branch nodes
    add the discounted mean of their children's returns."""
    if not node.children:
        node.backed_return = node.rollout_reward
    else:
        child_mean = sum(backup(child, cfg) for child in node.children) / len(node.children)
        node.backed_return = node.rollout_reward + cfg.backup_discount * child_mean
    return node.backed_return


def select_safe_action(roots: Sequence[SearchNode]) -> float:
    """Command of the root with maximal backed-up return; ties brake harder."""
    if not roots:
        raise ValueError("no surviving roots to select from")
    best = roots[0]
    for root in roots[1:]:
        if root.backed_return > best.backed_return or (
            root.backed_return == best.backed_return and root.incoming_cmd < best.incoming_cmd
        ):
            best = root
    return best.incoming_cmd


def search_safe_action(
    env: SimulatorView,
    shield: ShieldView,
    policy: PolicySampler,
    state_unsafe: OperationState,
    safe_set: Sequence[float],
    t: int,
    cfg: SearchConfig,
    prev_accel: float = 0.0,
) -> float:
    """Full correction pipeline: build, prune, back up, select.

    Falls back to the hardest-braking safe candidate when pruning kills every
    root, the conservative default for a train protection system.
    """
    roots = build_tree(env, shield, policy, state_unsafe, safe_set, t, cfg, prev_accel)
    roots = prune_roots(roots, cfg)
    if not roots:
        return min(safe_set)
    for root in roots:
        backup(root, cfg)
    return select_safe_action(roots)
