"""Single-site Metropolis-Hastings machinery.

Proposals pick a free node uniformly and a replacement category uniformly
among the other C-1 values, so the proposal is symmetric and the acceptance
ratio reduces to exp(delta log-potential), computed in O(degree) through
:class:`netlabel.factors.FactorScorer`.

Random streams come from counter-based Philox generators: ``stream(seed, k)``
yields independent, reproducible streams for any worker index ``k``, which is
what makes parallel learning deterministic.

The chain's running log-potential is maintained incrementally from accepted
deltas and recomputed from scratch every ``CACHE_REFRESH_INTERVAL`` steps to
bound floating-point drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import NoProposableSite
from .factors import FactorScorer
from .network import PartiallyLabeledNetwork
from .params import ParameterVector

CACHE_REFRESH_INTERVAL = 100_000


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent reproducible random stream for a worker index."""
    bits = np.random.Philox(key=np.uint64(seed))
    if index:
        bits = bits.jumped(index)
    return np.random.Generator(bits)


@dataclass
class StepOutcome:
    accepted: bool
    node: int
    old_category: int
    new_category: int
    delta: float


@dataclass
class RunResult:
    accepted: int
    best_config: np.ndarray | None = None
    best_log_potential: float = -np.inf
    marginal_counts: np.ndarray | None = None


class MarkovChain:
    """One single-site chain over label configurations.

    ``clamp`` maps node -> category for variables frozen at known labels;
    proposals only touch the remaining free nodes.  Construction fails when
    no move is proposable (every node clamped, or C < 2).
    """

    def __init__(
        self,
        net: PartiallyLabeledNetwork,
        params: ParameterVector,
        embeddings: np.ndarray | None = None,
        clamp: Mapping[int, int] | None = None,
        rng: np.random.Generator | None = None,
        init: Sequence[int] | None = None,
        scorer: FactorScorer | None = None,
    ):
        self.net = net
        self.scorer = scorer or FactorScorer(net, params, embeddings)
        self.clamp = dict(clamp) if clamp else {}
        self.rng = rng if rng is not None else stream(0)
        self.num_categories = params.num_categories
        self.free_nodes = [i for i in range(net.num_nodes) if i not in self.clamp]
        if not self.free_nodes:
            raise NoProposableSite("every node is clamped")
        if self.num_categories < 2:
            raise NoProposableSite("need at least two categories to propose moves")

        if init is not None:
            config = [int(v) for v in init]
        else:
            config = [0] * net.num_nodes
            draws = self.rng.integers(0, self.num_categories, len(self.free_nodes))
            for node, value in zip(self.free_nodes, draws.tolist()):
                config[node] = value
        for node, cat in self.clamp.items():
            config[node] = int(cat)
        self.config = config
        self.steps = 0
        self._since_refresh = 0
        self._buf_idx: list[int] = []
        self._buf_off: list[int] = []
        self._buf_u: list[float] = []
        self._buf_pos = 0
        self.log_potential = self.scorer.log_potential(config)

    def refresh_cache(self) -> None:
        self.log_potential = self.scorer.log_potential(self.config)
        self._since_refresh = 0

    _CHUNK = 4096

    def _refill(self) -> None:
        # Fixed-size refills keep the stream a pure function of draws consumed,
        # so interleaving step() and run() stays reproducible.
        self._buf_idx = self.rng.integers(0, len(self.free_nodes), self._CHUNK).tolist()
        self._buf_off = self.rng.integers(0, self.num_categories - 1, self._CHUNK).tolist()
        self._buf_u = self.rng.random(self._CHUNK).tolist()
        self._buf_pos = 0

    def _draw(self):
        if self._buf_pos >= len(self._buf_idx):
            self._refill()
        pos = self._buf_pos
        self._buf_pos = pos + 1
        node = self.free_nodes[self._buf_idx[pos]]
        offset = self._buf_off[pos]
        current = self.config[node]
        category = offset + (offset >= current)
        return node, category, self._buf_u[pos]

    def propose(self) -> tuple[int, int]:
        """Uniform free node and uniform replacement category (never current)."""
        node, category, _ = self._draw()
        return node, category

    def delta(self, node: int, new_category: int) -> float:
        return self.scorer.delta(self.config, node, new_category)

    def step(self) -> StepOutcome:
        node, category, u = self._draw()
        old = self.config[node]
        d = self.scorer.delta(self.config, node, category)
        accepted = d >= 0.0 or u < math.exp(d)
        if accepted:
            self.config[node] = category
            self.log_potential += d
        self.steps += 1
        self._since_refresh += 1
        if self._since_refresh >= CACHE_REFRESH_INTERVAL:
            self.refresh_cache()
        return StepOutcome(accepted, node, old, category, d)

    def run(
        self,
        steps: int,
        collect_marginals: bool = False,
        track_best: bool = False,
    ) -> RunResult:
        """Advance ``steps`` moves with pre-drawn randomness (fast path).

        Draw pattern per step matches :meth:`step` exactly, so mixed use
        stays reproducible.  ``collect_marginals`` accumulates per-node
        occupancy counts (one unit per step); ``track_best`` keeps the
        best-scoring configuration visited, including the initial one.
        """
        n, c = self.net.num_nodes, self.num_categories
        free = self.free_nodes
        config = self.config
        scorer = self.scorer
        unary_rows = scorer.unary_rows
        und, out, inn = scorer.adj.undirected, scorer.adj.outgoing, scorer.adj.incoming
        corr_u, corr_d = scorer.corr_u, scorer.corr_d
        exp = math.exp

        result = RunResult(accepted=0)
        best_lp = self.log_potential
        best_cfg = list(config) if track_best else None
        counts = np.zeros((n, c)) if collect_marginals else None
        last_change = [0] * n if collect_marginals else None

        done = 0
        lp = self.log_potential
        since = self._since_refresh
        accepted_total = 0
        while done < steps:
            if self._buf_pos >= len(self._buf_idx):
                self._refill()
            start = self._buf_pos
            k = min(len(self._buf_idx) - start, steps - done)
            self._buf_pos = start + k
            idxs, offs, us = self._buf_idx, self._buf_off, self._buf_u
            for t in range(start, start + k):
                i = free[idxs[t]]
                old = config[i]
                off = offs[t]
                cat = off + (off >= old)
                row = unary_rows[i]
                d = row[cat] - row[old]
                ru_new, ru_old = corr_u[cat], corr_u[old]
                for j in und[i]:
                    m = config[j]
                    d += ru_new[m] - ru_old[m]
                rd_new, rd_old = corr_d[cat], corr_d[old]
                for j in out[i]:
                    m = config[j]
                    d += rd_new[m] - rd_old[m]
                for j in inn[i]:
                    rm = corr_d[config[j]]
                    d += rm[cat] - rm[old]
                if d >= 0.0 or us[t] < exp(d):
                    if counts is not None:
                        step_now = done + t - start
                        counts[i, old] += step_now - last_change[i]
                        last_change[i] = step_now
                    config[i] = cat
                    lp += d
                    accepted_total += 1
                    if track_best and lp > best_lp:
                        best_lp = lp
                        best_cfg = list(config)
            done += k
            since += k
            if since >= CACHE_REFRESH_INTERVAL:
                lp = scorer.log_potential(config)
                since = 0

        self.steps += steps
        self._since_refresh = since
        self.log_potential = lp
        result.accepted = accepted_total
        if collect_marginals:
            for i in range(n):
                counts[i, config[i]] += steps - last_change[i]
            result.marginal_counts = counts
        if track_best:
            result.best_config = np.asarray(best_cfg, dtype=np.int64)
            result.best_log_potential = best_lp
        return result


def propose(chain: MarkovChain) -> tuple[int, int]:
    return chain.propose()


def delta_log_potential(chain: MarkovChain, node: int, new_category: int) -> float:
    return chain.delta(node, new_category)


def mh_step(chain: MarkovChain) -> StepOutcome:
    return chain.step()


def sample_map(
    net: PartiallyLabeledNetwork,
    params: ParameterVector,
    embeddings: np.ndarray | None = None,
    clamp: Mapping[int, int] | None = None,
    steps: int = 10_000,
    rng: np.random.Generator | None = None,
    seed: int = 0,
    init: Sequence[int] | None = None,
) -> np.ndarray:
    """Best-scoring configuration visited by a clamped chain.

    Clamped nodes stay at their given labels.  Ties keep the configuration
    visited first.  Degenerate instances (C < 2 or nothing free) return the
    uniquely determined configuration directly.
    """
    clamp = dict(clamp) if clamp else {}
    fixed = np.zeros(net.num_nodes, dtype=np.int64)
    for node, cat in clamp.items():
        fixed[node] = cat
    if params.num_categories < 2 or len(clamp) == net.num_nodes:
        return fixed
    chain = MarkovChain(
        net,
        params,
        embeddings,
        clamp=clamp,
        rng=rng if rng is not None else stream(seed),
        init=init,
    )
    best = chain.run(steps, track_best=True)
    return best.best_config
