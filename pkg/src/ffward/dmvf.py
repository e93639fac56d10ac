"""Distributed multi-view fast-forwarding: neighbor scoring, max consensus, rank-based strategies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .features import SceneDataset
from .ffagent import QPolicy, SkipAgent, Strategy
from .graph import CommGraph
from .netsim import Channel, ChannelConfig, Kind, P2P, encoded_size, frame_message, score_message
from .report import PeriodRecord, RunReport
from .simkernel import SimParams, agent_sim


def default_portions(n: int) -> tuple[int, int, int]:
    """Near-even split, extra agents going to Normal first, then Slow."""
    base, extra = divmod(n, 3)
    slow, normal, fast = base, base, base
    if extra >= 1:
        normal += 1
    if extra == 2:
        slow += 1
    return slow, normal, fast


@dataclass(frozen=True)
class DmvfConfig:
    period: int = 100
    portions: tuple[int, int, int] | None = None
    sim: SimParams = field(default_factory=SimParams)
    # "closed_degree": n_j = |V_j|; "uniform": n_j = 1
    evaluator_weight: str = "closed_degree"

    def portions_for(self, n: int) -> tuple[int, int, int]:
        portions = self.portions if self.portions is not None else default_portions(n)
        if len(portions) != 3 or sum(portions) != n or min(portions) < 0:
            raise ValueError(f"portions {portions} must be three non-negative counts summing to {n}")
        return tuple(portions)


def initial_scores(i: int, selections: Mapping[int, np.ndarray], alpha: float) -> dict[int, float]:
    """Agent i's initial importance estimate for every member j of its (reachable) neighborhood.

    ``selections`` maps each member of V_i (including i) to that agent's
    selected features. For j, the score averages, over the other members k,
    how well j's frames account for k's frames (the mean best-match of k's
    frames inside j). Terms involving an empty selection are skipped.
    """
    if i not in selections:
        raise ValueError("the evaluating agent's own selection is required")
    members = sorted(selections)
    if len(members) < 2:
        raise ValueError("V_i must contain at least one neighbor besides i")
    scores = {}
    for j in members:
        fj = selections[j]
        terms = [
            agent_sim(selections[k], fj, alpha)
            for k in members
            if k != j and len(fj) and len(selections[k])
        ]
        scores[j] = float(np.mean(terms)) if terms else 0.0
    return scores


def update_own_score(received: Mapping[int, float], weights: Mapping[int, float]) -> float:
    """Weighted average of the scores evaluators gave this agent; evaluator j weighs 1/n_j."""
    if not received:
        raise ValueError("no evaluator scores received")
    num = sum(received[j] / weights[j] for j in received)
    den = sum(1.0 / weights[j] for j in received)
    return num / den


def consensus_round(graph: CommGraph, vectors: Sequence[np.ndarray]) -> list[np.ndarray]:
    """One synchronous round: every agent takes the element-wise max with its neighbors."""
    out = []
    for i in range(graph.num_nodes):
        v = vectors[i].copy()
        for j in graph.neighbors(i):
            np.maximum(v, vectors[j], out=v)
        out.append(v)
    return out


def maximal_consensus(graph: CommGraph, vectors: Sequence[np.ndarray], rounds: int | None = None) -> list[np.ndarray]:
    """Run ``rounds`` (default: graph diameter) synchronous max-exchange rounds; returns every agent's vector."""
    if len(vectors) != graph.num_nodes:
        raise ValueError("one vector per node required")
    vecs = [np.asarray(v).copy() for v in vectors]
    for _ in range(graph.diameter if rounds is None else rounds):
        vecs = consensus_round(graph, vecs)
    return vecs


def select_strategies(scores, portions: Sequence[int]) -> list[Strategy]:
    """Rank by score (descending, lower agent id first on ties); fill Slow, Normal, Fast in that order."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if sum(portions) != n:
        raise ValueError(f"portions {tuple(portions)} do not sum to {n}")
    order = sorted(range(n), key=lambda a: (-scores[a], a))
    out = [Strategy.NORMAL] * n
    kinds = [Strategy.SLOW] * portions[0] + [Strategy.NORMAL] * portions[1] + [Strategy.FAST] * portions[2]
    for agent, kind in zip(order, kinds):
        out[agent] = kind
    return out


def run_dmvf(
    dataset: SceneDataset,
    graph: CommGraph,
    policies: Mapping[Strategy, QPolicy],
    config: DmvfConfig = DmvfConfig(),
    channel: Channel | None = None,
    periods: int | None = None,
) -> RunReport:
    """Lock-step DMVF run; every exchange crosses ``channel`` as encoded messages.

    Per period: fast-forward, swap selections with neighbors, score the
    neighborhood, exchange those scores, update own score, run max consensus
    for ``diameter`` rounds, pick next-period strategies from the agent's own
    copy of the consensus vector.
    """
    n, length = dataset.num_views, dataset.length
    if graph.num_nodes != n:
        raise ValueError(f"graph has {graph.num_nodes} nodes for {n} views")
    for s in Strategy:
        if s not in policies:
            raise KeyError(f"missing policy for strategy {s}")
    if channel is None:
        channel = Channel(ChannelConfig(topology=P2P))
    portions = config.portions_for(n)
    alpha = config.sim.alpha
    neigh = [graph.neighbors(i) for i in range(n)]
    if config.evaluator_weight == "closed_degree":
        weight = {j: float(len(neigh[j]) + 1) for j in range(n)}
    elif config.evaluator_weight == "uniform":
        weight = {j: 1.0 for j in range(n)}
    else:
        raise ValueError(f"unknown evaluator_weight {config.evaluator_weight!r}")
    diameter = graph.diameter

    agents = [SkipAgent(v) for v in dataset.views]
    strategies = select_strategies(np.zeros(n), portions)
    n_periods = -(-length // config.period)
    if periods is not None:
        n_periods = min(n_periods, periods)

    report = RunReport("dmvf", n, length, config.period, meta={
        "graph": graph.to_edgelist().strip().replace("\n", ";"),
        "portions": "/".join(map(str, portions)),
        "alpha": alpha,
        "evaluator_weight": config.evaluator_weight,
        "loss": channel.config.loss,
        "channel_seed": channel.config.seed,
    })

    report.meta["consensus_disagreements"] = 0
    for p in range(n_periods):
        end = (p + 1) * config.period
        current = list(strategies)
        selected = [agents[i].advance(policies[current[i]], end) for i in range(n)]
        feats = [dataset.views[i].features[selected[i]] for i in range(n)]
        bytes_sent = [0] * n

        def send(i, msg, dest):
            bytes_sent[i] += encoded_size(msg)
            return channel.send(msg, dest)

        # 1. share selected frames with neighbors
        for i in range(n):
            for j in neigh[i]:
                send(i, frame_message(i, p, selected[i], feats[i]), j)
        local = []
        for i in range(n):
            sel = {i: feats[i]}
            for msg in channel.receive(i):
                if msg.kind is Kind.FRAME_BATCH:
                    sel[msg.sender] = msg.payload.features
            local.append(sel)

        # 2. neighborhood scores, then share each agent's row of estimates
        x0 = []
        for i in range(n):
            row = np.zeros(n, dtype=np.float32)
            if len(local[i]) >= 2:
                for j, s in initial_scores(i, local[i], alpha).items():
                    row[j] = s
            x0.append(row)
        for i in range(n):
            for j in neigh[i]:
                if j in local[i]:
                    send(i, score_message(i, p, x0[i]), j)
        own = []
        for i in range(n):
            received = {}
            if len(local[i]) >= 2:
                received[i] = float(x0[i][i])
            for msg in channel.receive(i):
                received[msg.sender] = msg.payload[i]
            own.append(update_own_score(received, weight) if received else 0.0)

        # 3. max consensus over the sparse vectors; only scores travel
        vectors = []
        for i in range(n):
            v = np.zeros(n, dtype=np.float32)
            v[i] = own[i]
            vectors.append(v)
        for _ in range(diameter):
            for i in range(n):
                for j in neigh[i]:
                    send(i, score_message(i, p, vectors[i]), j)
            nxt = []
            for i in range(n):
                v = vectors[i].copy()
                for msg in channel.receive(i):
                    np.maximum(v, np.asarray(msg.payload, dtype=np.float32), out=v)
                nxt.append(v)
            vectors = nxt

        # 4. each agent ranks from its own copy
        strategies = [select_strategies(vectors[i], portions)[i] for i in range(n)]
        report.periods.append(PeriodRecord(
            period=p,
            strategies=[str(s) for s in current],
            selected=[list(map(int, s)) for s in selected],
            delivered=[True] * n,
            bytes_sent=bytes_sent,
            scores=[float(x) for x in vectors[0]],
        ))
        if any(not np.array_equal(vectors[0], v) for v in vectors[1:]):
            report.meta["consensus_disagreements"] += 1

    report.comm = channel.comm_report()
    return report

