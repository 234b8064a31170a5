"""Social Monte Carlo tree search over the joint ego/partner action space.

The tree alternates movers round-robin between the ego and its nearest
neighbor. Selection maximizes U = Q + c1 * P_S + c2 * P_R over a node's
expanded, unpruned actions; leaves are valued by the visitation cost map (1.0
when the ego reaches its goal); branches whose sub-step trajectories breach
the separation minimum against the non-mover are pruned at creation. The
final action is the most-visited unpruned root action.

Also hosts the myopic single-step baseline ("ablation"): argmax of
lambda * p_r + (1 - lambda) * p_s at the current state, with no lookahead and
no collision checking.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    PRIMITIVE_COUNT,
    SUBSTEPS_PER_PRIMITIVE,
    AgentState,
    library_parameters,
    rollout_library,
    state_from_row,
)
from .costmap import CostMap, joint_value
from .reference import (
    BETA_CROSS_TRACK,
    ReferencePath,
    prior_scores_from_rollout,
    project_points,
    reference_state_score,
)
from .social import HISTORY_TICKS, JointHistory, SocialPredictor, approaches_from_right

GOAL_RADIUS_KM = 0.2

# Root actions are additionally pruned against constant-velocity traffic
# tracks at this multiple of the separation minimum: during the executed tick
# every agent moves at once, and a plan that clears a track by a hair is eaten
# by the other agent's own evasive deviation from that track.
ROOT_TRAFFIC_MARGIN = 1.75

EGO = 0
PARTNER = 1


@dataclass
class PlannerConfig:
    """Search constants; the defaults are the experiment settings."""

    expansions_per_plan: int = 50
    max_episode_steps: int = 100
    c1: float = 2.0
    c2: float = 5.0
    separation_d: float = 0.2
    branch_limit: int = 10
    max_tree_depth: int = 10

    def __post_init__(self):
        for name in ("expansions_per_plan", "max_episode_steps", "c1", "c2",
                     "separation_d", "branch_limit", "max_tree_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.branch_limit > PRIMITIVE_COUNT:
            raise ValueError(f"branch_limit cannot exceed {PRIMITIVE_COUNT}")

    def to_dict(self) -> dict:
        return {
            "expansions_per_plan": self.expansions_per_plan,
            "max_episode_steps": self.max_episode_steps,
            "c1": self.c1, "c2": self.c2,
            "separation_d": self.separation_d,
            "branch_limit": self.branch_limit,
            "max_tree_depth": self.max_tree_depth,
        }


class TreeNode:
    """One joint state in the search tree with per-action statistics."""

    __slots__ = ("ego", "partner", "mover", "depth", "pruned", "terminal",
                 "n_visits", "actions", "n_sa", "q", "p_r", "p_s",
                 "prior_social", "act_pruned", "min_sep", "children", "expanded",
                 "lineage_ego", "lineage_partner")

    def __init__(self, ego: AgentState, partner: AgentState | None, mover: int, depth: int):
        self.ego = ego
        self.partner = partner
        self.mover = mover
        self.depth = depth
        self.pruned = False
        self.terminal = False
        self.n_visits = 0
        self.actions: np.ndarray | None = None  # expanded primitive indices, (k,)
        self.n_sa: np.ndarray | None = None
        self.q: np.ndarray | None = None
        self.p_r: np.ndarray | None = None
        self.p_s: np.ndarray | None = None
        self.prior_social: np.ndarray | None = None  # p_s(s, a) over expanded actions
        self.act_pruned: np.ndarray | None = None
        self.min_sep: np.ndarray | None = None
        self.children: dict[int, "TreeNode"] = {}
        self.expanded = False
        self.lineage_ego: tuple[AgentState, ...] = ()
        self.lineage_partner: tuple[AgentState, ...] = ()

    def mover_state(self) -> AgentState:
        return self.ego if self.mover == EGO else self.partner


def update_q(q: float, n_sa: int, leaf_value: float) -> float:
    """Visit-count running average of the action value."""
    return (n_sa * q + leaf_value) / (n_sa + 1)


def update_p_r(p_r: float, n_sa: int, leaf_ref_score: float) -> float:
    """Visit-count running average of the reference bias term."""
    return (n_sa * p_r + leaf_ref_score) / (n_sa + 1)


def p_s_term(n_visits: int, n_sa: np.ndarray, prior_social: np.ndarray) -> np.ndarray:
    """Visitation-scaled social bias: sqrt(N(s)) / (N(s,a) + 1) * p_s(s, a)."""
    return math.sqrt(n_visits) / (np.asarray(n_sa) + 1.0) * prior_social


def select_action(node: TreeNode, config: PlannerConfig) -> int | None:
    """Position of the expanded, unpruned action maximizing Q + c1*P_S + c2*P_R.

    Ties break to the lowest primitive index. Returns None when every
    expanded action is pruned (a dead node).
    """
    valid = ~node.act_pruned
    if not valid.any():
        return None
    u = node.q + config.c1 * node.p_s + config.c2 * node.p_r
    u_valid = np.where(valid, u, -np.inf)
    best = u_valid.max()
    candidates = np.flatnonzero(u_valid == best)
    return int(candidates[np.argmin(node.actions[candidates])])


def backpropagate(path: list[tuple[TreeNode, int]], leaf_value: float,
                  reference_scores: tuple[float, float]) -> None:
    """Apply the leaf outcome to every edge from the leaf back to the root.

    path holds (node, action position) pairs in root-to-leaf order and is
    processed leaf-first. Q and P_R average in the leaf value and the leaf's
    reference score for the node's mover using the pre-increment count; then
    counts increment and P_S is recomputed for all of the node's expanded
    actions, since N(s) changed for every one of them.
    """
    for node, pos in reversed(path):
        n = int(node.n_sa[pos])
        node.q[pos] = update_q(float(node.q[pos]), n, leaf_value)
        node.p_r[pos] = update_p_r(float(node.p_r[pos]), n, reference_scores[node.mover])
        node.n_sa[pos] = n + 1
        node.n_visits += 1
        node.p_s = p_s_term(node.n_visits, node.n_sa, node.prior_social)


@dataclass
class PlanDecision:
    """Per-tick planning record: the chosen action plus root statistics."""

    action: int
    forced: bool
    partner_id: str | None
    root_actions: list[int] = field(default_factory=list)
    root_n: list[int] = field(default_factory=list)
    root_q: list[float] = field(default_factory=list)
    root_p_r: list[float] = field(default_factory=list)
    root_p_s: list[float] = field(default_factory=list)
    root_pruned: list[bool] = field(default_factory=list)
    root_min_sep: list[float] = field(default_factory=list)
    elapsed_s: float = 0.0  # wall-clock diagnostic; deliberately not serialized

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "forced": self.forced,
            "partner": self.partner_id,
            "root": [
                {"a": a, "n": n, "q": q, "p_r": pr, "p_s": ps, "pruned": pruned,
                 "min_sep": sep if math.isfinite(sep) else None}
                for a, n, q, pr, ps, pruned, sep in zip(
                    self.root_actions, self.root_n, self.root_q, self.root_p_r,
                    self.root_p_s, self.root_pruned, self.root_min_sep)
            ],
        }


class SocialTreeSearch:
    """Receding-horizon planner for one ego agent; the tree is rebuilt every tick."""

    def __init__(self, ego_id: str, predictor: SocialPredictor,
                 paths: dict[str, ReferencePath], goals: dict[str, np.ndarray],
                 cmap: CostMap, config: PlannerConfig):
        self.ego_id = ego_id
        self.predictor = predictor
        self.paths = paths
        self.goals = goals
        self.costmap = cmap
        self.config = config
        self.partner_id: str | None = None
        self.last_tree: TreeNode | None = None
        # Collision context refreshed per plan() call; root actions are pruned
        # against it because all agents move simultaneously during the
        # executed tick (the in-tree static check alone is blind to merges
        # that close from beyond d in one tick, and to agents outside the
        # two-agent tree).
        self._traffic_tracks: np.ndarray | None = None  # CV tracks, (m, 20, 3)
        self._plausible_tracks: np.ndarray | None = None  # others' own root
        # candidates' sub-step tracks, (m * branch_limit, 20, 3)

    # -- tree construction -------------------------------------------------

    def _agent_id(self, mover: int) -> str:
        return self.ego_id if mover == EGO else self.partner_id

    def _tree_ids(self) -> tuple[str, ...]:
        if self.partner_id is None:
            return (self.ego_id,)
        return (self.ego_id, self.partner_id)

    def _node_history(self, node: TreeNode, history: JointHistory) -> JointHistory:
        """Joint history at an in-tree node: the real windows of the two tree
        agents extended with the node's lineage states, newest last."""
        if node.depth == 0:
            return history
        ids = self._tree_ids()
        keep = HISTORY_TICKS + 1
        windows = {}
        for aid, lineage in zip(ids, (node.lineage_ego, node.lineage_partner)):
            windows[aid] = (history.windows[aid] + lineage)[-keep:]
        return JointHistory(history.tick + node.depth, ids, windows)

    def _subset(self, mapping: dict) -> dict:
        return {aid: mapping[aid] for aid in self._tree_ids()}

    def _expand(self, node: TreeNode, history: JointHistory) -> None:
        """Create the node's top-ranked children with initialized statistics.

        Children are the branch_limit actions with the largest combined
        social + reference prior. A child starts at N=0, Q=0.5, P_R equal to
        the moved agent's reference score at its new state, and P_S from the
        visitation term at N(s,a)=0; children whose sub-step trajectories
        pass within the separation minimum of the non-mover are born pruned.
        """
        cfg = self.config
        mover_id = self._agent_id(node.mover)
        state = node.mover_state()
        roll = rollout_library(state)
        path = self.paths[mover_id]
        ref_scores = prior_scores_from_rollout(roll, state, path)
        p_r_prior = ref_scores / ref_scores.sum()
        p_s_prior = self.predictor.predict_single(
            self._node_history(node, history), self._subset(self.goals),
            self._subset(self.paths), mover_id)

        combined = p_s_prior + p_r_prior
        order = np.lexsort((np.arange(PRIMITIVE_COUNT), -combined))
        chosen = np.sort(order[: cfg.branch_limit])

        ends = roll[chosen, -1, :]
        end_dist, _ = project_points(ends[:, :3], path)
        other = node.partner if node.mover == EGO else node.ego
        if other is not None:
            d = np.linalg.norm(roll[chosen, :, :3] - other.position[None, None, :], axis=2)
            min_sep = d.min(axis=1)
        else:
            min_sep = np.full(len(chosen), np.inf)
        pruned = min_sep < cfg.separation_d
        if node.depth == 0 and self._traffic_tracks is not None and len(self._traffic_tracks):
            # Executed-tick check with margin: all agents move simultaneously,
            # so a hair of clearance against a track is not survivable.
            tracks = self._traffic_tracks
            dyn = np.linalg.norm(roll[chosen, None, :, :3] - tracks[None, :, :, :], axis=3)
            dyn_min = dyn.min(axis=(1, 2))
            pruned = pruned | (dyn_min < cfg.separation_d * ROOT_TRAFFIC_MARGIN)
            # Continuation check over the following tick: extend the action at
            # its end velocity and everyone else along their tracks. This
            # prunes converging geometries one tick before they become
            # all-pruned emergencies, while parallel followers (constant gap)
            # stay legal.
            steps = np.arange(1, SUBSTEPS_PER_PRIMITIVE + 1)
            end_vel = roll[chosen, -1, :3] - roll[chosen, -2, :3]
            ego_cont = roll[chosen, -1, None, :3] + end_vel[:, None, :] * steps[None, :, None]
            track_vel = tracks[:, -1, :] - tracks[:, -2, :]
            track_cont = tracks[:, -1, None, :] + track_vel[:, None, :] * (
                steps[None, :, None])
            dyn2 = np.linalg.norm(ego_cont[:, None, :, :] - track_cont[None, :, :, :], axis=3)
            pruned = pruned | (dyn2.min(axis=(1, 2)) < cfg.separation_d)
            min_sep = np.minimum(min_sep, dyn_min)
        if node.depth == 0 and self._plausible_tracks is not None and len(self._plausible_tracks):
            # Level-1 check: other agents' root candidate sets are exactly
            # computable (their priors are deterministic), so prune ego
            # actions that meet any candidate the other is actually likely to
            # execute. This catches simultaneous mutual turns that clear each
            # other's straight-line tracks but curve together.
            plaus = np.linalg.norm(
                roll[chosen, None, :, :3] - self._plausible_tracks[None, :, :, :], axis=3)
            pruned = pruned | (plaus.min(axis=(1, 2)) < cfg.separation_d)

        node.actions = chosen
        node.n_sa = np.zeros(len(chosen), dtype=np.int64)
        node.q = np.full(len(chosen), 0.5)
        node.p_r = np.exp(-BETA_CROSS_TRACK * end_dist)
        node.prior_social = p_s_prior[chosen]
        node.p_s = p_s_term(node.n_visits, node.n_sa, node.prior_social)
        node.act_pruned = pruned
        node.min_sep = min_sep

        goal = self.goals[self.ego_id]
        for pos, a in enumerate(chosen):
            new_state = state_from_row(ends[pos])
            if node.mover == EGO:
                child = TreeNode(new_state, node.partner, self._next_mover(node), node.depth + 1)
                child.lineage_ego = node.lineage_ego + (new_state,)
                child.lineage_partner = node.lineage_partner
            else:
                child = TreeNode(node.ego, new_state, self._next_mover(node), node.depth + 1)
                child.lineage_ego = node.lineage_ego
                child.lineage_partner = node.lineage_partner + (new_state,)
            child.pruned = bool(node.act_pruned[pos])
            child.terminal = (
                math.dist((child.ego.x, child.ego.y, child.ego.z), tuple(goal)) <= GOAL_RADIUS_KM
            )
            node.children[int(a)] = child
        node.expanded = True

    def _next_mover(self, node: TreeNode) -> int:
        if self.partner_id is None:
            return EGO
        return PARTNER if node.mover == EGO else EGO

    def evaluate_leaf(self, node: TreeNode) -> float:
        """Cost-map value of the joint state; 1.0 at the ego goal, 0.0 when pruned."""
        if node.pruned:
            return 0.0
        if node.terminal:
            return 1.0
        states = [node.ego] if node.partner is None else [node.ego, node.partner]
        return joint_value(self.costmap, states)

    def _plausible_candidate_tracks(self, history: JointHistory) -> np.ndarray | None:
        """Sub-step tracks of every nearby agent's own root candidate actions.

        Priors are deterministic, so another agent's branch-limited expansion
        set is exactly reproducible from its state and path.
        """
        cfg = self.config
        ego_state = history.current(self.ego_id)
        speed, _, _ = library_parameters()
        reach = 2.0 * float(speed.max()) * 20.0 + cfg.separation_d
        chunks = []
        for aid in history.agent_ids:
            if aid == self.ego_id:
                continue
            state = history.current(aid)
            if math.dist(ego_state.position, state.position) > reach:
                continue
            roll = rollout_library(state)
            ref = prior_scores_from_rollout(roll, state, self.paths[aid])
            combined = self.predictor.predict_single(history, self.goals, self.paths, aid) \
                + ref / ref.sum()
            order = np.lexsort((np.arange(PRIMITIVE_COUNT), -combined))
            chunks.append(roll[np.sort(order[: cfg.branch_limit]), :, :3])
        if not chunks:
            return None
        return np.concatenate(chunks)

    # -- planning ----------------------------------------------------------

    def plan(self, history: JointHistory, keep_tree: bool = False) -> PlanDecision:
        """Run the configured number of search iterations and pick the action.

        The root is expanded once up front; each iteration then descends by
        selection, expands and evaluates one new leaf, and backpropagates, so
        the root visit count equals the number of completed iterations.
        """
        t0 = time.perf_counter()
        cfg = self.config
        ego_state = history.current(self.ego_id)
        others = [aid for aid in history.agent_ids if aid != self.ego_id]
        if others:
            self.partner_id = min(
                others,
                key=lambda aid: (math.dist(ego_state.position, history.current(aid).position), aid))
            partner_state = history.current(self.partner_id)
        else:
            self.partner_id = None
            partner_state = None
        self._traffic_tracks = traffic_tracks(history, self.ego_id)
        self._plausible_tracks = self._plausible_candidate_tracks(history)

        root = TreeNode(ego_state, partner_state, EGO, 0)
        self._expand(root, history)

        for _ in range(cfg.expansions_per_plan):
            node = root
            path: list[tuple[TreeNode, int]] = []
            while True:
                pos = select_action(node, cfg)
                if pos is None:
                    # Dead node: every expanded action collides. Prune it so the
                    # parent stops selecting it, and report a zero-value outcome.
                    node.pruned = True
                    if path:
                        parent, ppos = path[-1]
                        parent.act_pruned[ppos] = True
                    leaf = node
                    leaf_value = 0.0
                    break
                path.append((node, pos))
                child = node.children[int(node.actions[pos])]
                if child.terminal or child.depth >= cfg.max_tree_depth:
                    leaf = child
                    leaf_value = self.evaluate_leaf(child)
                    break
                if not child.expanded:
                    self._expand(child, history)
                    leaf = child
                    leaf_value = self.evaluate_leaf(child)
                    break
                node = child
            if not path:
                break  # the root itself is dead; only the forced action remains
            ref_partner = 0.0
            if leaf.partner is not None and self.partner_id is not None:
                ref_partner = reference_state_score(leaf.partner, self.paths[self.partner_id])
            refs = (reference_state_score(leaf.ego, self.paths[self.ego_id]), ref_partner)
            backpropagate(path, leaf_value, refs)

        decision = self._decide(root, ego_state, partner_state)
        decision.elapsed_s = time.perf_counter() - t0
        self.last_tree = root if keep_tree else None
        return decision

    def _decide(self, root: TreeNode, ego_state: AgentState,
                partner_state: AgentState | None) -> PlanDecision:
        valid = ~root.act_pruned
        if valid.any():
            n_valid = np.where(valid, root.n_sa, -1)
            best = n_valid.max()
            candidates = np.flatnonzero(n_valid == best)
            pos = int(candidates[np.argmin(root.actions[candidates])])
            action = int(root.actions[pos])
            forced = False
        else:
            yielding = not has_right_of_way(ego_state, partner_state,
                                            self.ego_id, self.partner_id)
            action = forced_escape_action(ego_state, partner_state,
                                          self._traffic_tracks, yielding=yielding)
            forced = True
        return PlanDecision(
            action=action,
            forced=forced,
            partner_id=self.partner_id,
            root_actions=[int(a) for a in root.actions],
            root_n=[int(n) for n in root.n_sa],
            root_q=[float(v) for v in root.q],
            root_p_r=[float(v) for v in root.p_r],
            root_p_s=[float(v) for v in root.p_s],
            root_pruned=[bool(v) for v in root.act_pruned],
            root_min_sep=[float(v) for v in root.min_sep],
        )


def traffic_tracks(history: JointHistory, ego_id: str) -> np.ndarray:
    """Constant-velocity sub-step tracks (m, 20, 3) of every agent but the ego."""
    steps = np.arange(1, 21)[:, None]
    tracks = []
    for aid in history.agent_ids:
        if aid == ego_id:
            continue
        state = history.current(aid)
        tracks.append(state.position[None, :] + history.velocity(aid)[None, :] * steps)
    return np.array(tracks).reshape(-1, 20, 3)


def forced_escape_action(ego_state: AgentState, partner_state: AgentState | None,
                         tracks: np.ndarray | None = None,
                         yielding: bool = True) -> int:
    """Fallback when every root action collides: maximize sub-step separation
    against the partner and all extrapolated traffic.

    Within a small band of the best separation the escape is asymmetric so
    that two agents forced against each other at once do not mirror into a
    locked orbit: the yielding agent goes slow and descending, the priority
    agent fast and climbing, and both prefer right turns.
    """
    if partner_state is None:
        return 0  # unreachable: nothing ever prunes without a partner
    roll = rollout_library(ego_state)
    sep = np.linalg.norm(roll[:, :, :3] - partner_state.position[None, None, :],
                         axis=2).min(axis=1)
    if tracks is not None and len(tracks):
        dyn = np.linalg.norm(roll[:, None, :, :3] - tracks[None, :, :, :], axis=3)
        sep = np.minimum(sep, dyn.min(axis=(1, 2)))
    best = float(sep.max())
    candidates = np.flatnonzero(sep >= best - 0.05)
    speed, vrate, turn = library_parameters()
    direction = 1.0 if yielding else -1.0
    order = np.lexsort((candidates, turn[candidates],
                        direction * vrate[candidates], direction * speed[candidates]))
    return int(candidates[order[0]])


def has_right_of_way(ego: AgentState, partner: AgentState,
                     ego_id: str, partner_id: str) -> bool:
    """Right-of-way between two conflicting agents.

    The agent with traffic on its right yields. Rotationally symmetric
    geometries (both or neither see the other on the right) fall back to a
    deterministic id comparison so simultaneous escapes never mirror.
    """
    ego_sees_right = approaches_from_right(ego, partner)
    partner_sees_right = approaches_from_right(partner, ego)
    if ego_sees_right != partner_sees_right:
        return not ego_sees_right
    return ego_id < partner_id


def plan(ego_id: str, history: JointHistory, predictor: SocialPredictor,
         paths: dict[str, ReferencePath], goals: dict[str, np.ndarray],
         cmap: CostMap, config: PlannerConfig, seed: int = 0) -> PlanDecision:
    """One receding-horizon planning call for the ego agent.

    The seed is accepted for interface stability; the search itself is
    deterministic (priors, selection, and tie-breaking all are).
    """
    return SocialTreeSearch(ego_id, predictor, paths, goals, cmap, config).plan(history)


def ablation_plan(ego_id: str, history: JointHistory, predictor: SocialPredictor,
                  paths: dict[str, ReferencePath], goals: dict[str, np.ndarray],
                  lam: float) -> int:
    """Myopic single-step baseline: argmax of lam * p_r + (1 - lam) * p_s."""
    state = history.current(ego_id)
    roll = rollout_library(state)
    ref_scores = prior_scores_from_rollout(roll, state, paths[ego_id])
    p_r = ref_scores / ref_scores.sum()
    p_s = predictor.predict_single(history, goals, paths, ego_id)
    return int(np.argmax(lam * p_r + (1.0 - lam) * p_s))
