"""Product of a market model with exercise clocks.

Each shorted American option (and, for super-hedging, the claim itself)
gets one exercise-clock coordinate with values in {0..T}.  The enlarged
information structure is a *forest*: already at time 0 the clock events
"exercised at 0" are known, so there are 2^n time-0 atoms.  An enlarged
node is (base node, status vector) where each status entry is either the
exact exercise time <= t or None for "not yet".  At the horizon every
status is resolved.

Shorted American payoffs become path functionals here: the option sold as
h pays h at the base node the path visits at its clock time.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Literal

from .errors import ModelFormatError
from .market import MarketModel, TerminalPayoff
from .rationals import ONE, ZERO, Q, rat

ClockWeights = Literal["uniform", "skewed"] | dict


@dataclass(frozen=True)
class EnlargedNode:
    base: str
    time: int
    status: tuple[int | None, ...]

    @property
    def label(self) -> str:
        marks = ",".join("*" if s is None else str(s) for s in self.status)
        return f"{self.base}|{marks}" if self.status else self.base


@dataclass(frozen=True)
class EnlargedPath:
    base_index: int
    clocks: tuple[int, ...]
    node_seq: tuple[int, ...]

    @property
    def label(self) -> str:
        marks = ",".join(str(t) for t in self.clocks)
        return f"p{self.base_index}" + (f"@{marks}" if self.clocks else "")


def _clock_distribution(spec: ClockWeights, horizon: int, n: int) -> dict[tuple[int, ...], Q]:
    times = list(range(horizon + 1))
    tuples = list(itertools.product(times, repeat=n))
    if spec == "uniform":
        w = Q(1, len(tuples))
        return {tup: w for tup in tuples}
    if spec == "skewed":
        # full-support product weights proportional to 2^t per clock
        denom = Q(2 ** (horizon + 1) - 1)
        one_clock = {t: Q(2**t) / denom for t in times}
        out = {}
        for tup in tuples:
            w = ONE
            for t in tup:
                w *= one_clock[t]
            out[tup] = w
        return out
    dist = {tuple(k) if not isinstance(k, tuple) else k: rat(v) for k, v in spec.items()}
    if set(dist) != set(tuples):
        raise ModelFormatError("clock weights must cover every clock tuple exactly")
    if any(w <= 0 for w in dist.values()):
        raise ModelFormatError("clock weights must have full support")
    if sum(dist.values(), ZERO) != ONE:
        raise ModelFormatError("clock weights must sum to 1")
    return {tup: dist[tup] for tup in tuples}


class EnlargedModel:
    """Finite enlarged space with its forest of information atoms."""

    def __init__(self, model: MarketModel, n: int, clock_weights: ClockWeights = "uniform"):
        if n not in (model.N, model.N + 1):
            raise ModelFormatError(
                f"n must be N={model.N} (sub-hedging/FTAP) or N+1={model.N + 1} (super-hedging)")
        self.model = model
        self.n = n
        self.horizon = model.tree.horizon
        self.clock_weights = clock_weights
        self.clock_dist = _clock_distribution(clock_weights, self.horizon, n)

        self.enodes: list[EnlargedNode] = []
        self._enode_index: dict[tuple[str, tuple[int | None, ...]], int] = {}
        self.epaths: list[EnlargedPath] = []
        children: dict[int, dict[int, None]] = {}
        roots: dict[int, None] = {}

        tree = model.tree
        for base_index, base_path in enumerate(tree.paths):
            for clocks in itertools.product(range(self.horizon + 1), repeat=n):
                seq = []
                for t in range(self.horizon + 1):
                    status = tuple(tk if tk <= t else None for tk in clocks)
                    key = (base_path[t], status)
                    idx = self._enode_index.get(key)
                    if idx is None:
                        idx = len(self.enodes)
                        self._enode_index[key] = idx
                        self.enodes.append(EnlargedNode(base_path[t], t, status))
                        children[idx] = {}
                    seq.append(idx)
                for t in range(self.horizon):
                    children[seq[t]][seq[t + 1]] = None
                roots[seq[0]] = None
                self.epaths.append(EnlargedPath(base_index, clocks, tuple(seq)))
        self.children: dict[int, tuple[int, ...]] = {v: tuple(kids) for v, kids in children.items()}
        self.roots: tuple[int, ...] = tuple(roots)
        self._weights: list[Q] | None = None
        self._path_key: dict[tuple[int, tuple[int, ...]], int] | None = None

    # -- bookkeeping -----------------------------------------------------

    @property
    def num_paths(self) -> int:
        return len(self.epaths)

    def enode(self, idx: int) -> EnlargedNode:
        return self.enodes[idx]

    def path_index(self, base_index: int, clocks: tuple[int, ...]) -> int:
        if self._path_key is None:
            self._path_key = {(p.base_index, p.clocks): i for i, p in enumerate(self.epaths)}
        return self._path_key[(base_index, clocks)]

    def enodes_at(self, t: int) -> list[int]:
        return [i for i, v in enumerate(self.enodes) if v.time == t]

    def base_node_at(self, path_idx: int, t: int) -> str:
        p = self.epaths[path_idx]
        return self.model.tree.paths[p.base_index][t]

    def weight(self, path_idx: int) -> Q:
        if self._weights is None:
            self._weights = [self.model.path_weight(p.base_index) * self.clock_dist[p.clocks]
                             for p in self.epaths]
        return self._weights[path_idx]

    # -- extended processes and payoffs -----------------------------------

    def stock_at(self, path_idx: int, t: int) -> tuple[Q, ...]:
        return self.model.stock.at(self.base_node_at(path_idx, t))

    def stock_step(self, path_idx: int, t: int) -> tuple[Q, ...]:
        """S_{t+1} - S_t along the path, componentwise."""
        now = self.stock_at(path_idx, t)
        nxt = self.stock_at(path_idx, t + 1)
        return tuple(b - a for a, b in zip(now, nxt))

    def european_value(self, i: int, path_idx: int) -> Q:
        payoff, _ = self.model.europeans[i]
        return payoff.at(self.base_node_at(path_idx, self.horizon))

    def long_value_at_node(self, j: int, enode_idx: int) -> Q:
        proc, _ = self.model.americans_long[j]
        return proc.scalar(self.enodes[enode_idx].base)

    def short_value(self, k: int, path_idx: int) -> Q:
        """h^k paid at the k-th clock time along the path."""
        proc, _ = self.model.americans_short[k]
        p = self.epaths[path_idx]
        return proc.scalar(self.base_node_at(path_idx, p.clocks[k]))

    def claim_value_at_node(self, enode_idx: int) -> Q:
        claim = self.model.claim
        if claim is None:
            raise ModelFormatError("model has no claim")
        return claim.scalar(self.enodes[enode_idx].base)

    def claim_value_at_last_clock(self, path_idx: int) -> Q:
        claim = self.model.claim
        if claim is None:
            raise ModelFormatError("model has no claim")
        if self.n != self.model.N + 1:
            raise ModelFormatError("claim-at-clock payoff needs n = N + 1")
        p = self.epaths[path_idx]
        return claim.scalar(self.base_node_at(path_idx, p.clocks[-1]))

    def terminal_functional(self, payoff: TerminalPayoff) -> list[Q]:
        return [payoff.at(self.base_node_at(i, self.horizon)) for i in range(self.num_paths)]

    def adapted_at_time(self, values_by_enode: dict[int, Q], path_idx: int, t: int) -> Q:
        return values_by_enode[self.epaths[path_idx].node_seq[t]]


def enlarge(model: MarketModel, n: int, clock_weights: ClockWeights = "uniform") -> EnlargedModel:
    """Attach n exercise clocks; n = N for sub-hedging/FTAP, N+1 for super-hedging."""
    return EnlargedModel(model, n, clock_weights)


def extend_claim(enl: EnlargedModel, role: Literal["sub", "super"]):
    """Claim seen from the enlarged space.

    sub   -> node-indexed values (it stays an adapted exercise process),
    super -> per-path payoff read off at the last clock coordinate.
    """
    if role == "sub":
        return {idx: enl.claim_value_at_node(idx) for idx in range(len(enl.enodes))}
    if role == "super":
        return [enl.claim_value_at_last_clock(i) for i in range(enl.num_paths)]
    raise ValueError(f"unknown role {role!r}")
