"""Model uncertainty: kernel families and quasi-sure hedging.

Uncertainty is a finite set of one-step transition laws (vertices) per
non-terminal node; the scenario class is every product of per-node
selections.  Quasi-sure statements reduce to statements on the union
of the selector supports, so every hedging problem stays an exact LP
over the supported enlarged paths and every dual runs over martingale
measures carried there.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .enlarged import EnlargedModel, enlarge
from .errors import CapExceededError, ModelFormatError, PropertyViolation, SnaFailure
from .hedging import HedgeReport, Prices, subhedge, superhedge
from .lp import LinearProgram, solve
from .market import MarketModel
from .measures import (
    MeasurePolytope,
    build_polytope,
    dual_subhedge,
    dual_superhedge,
    restricted_stopping_times,
)
from .rationals import ONE, ZERO, Q, rat, rat_str
from .strategies import DEFAULT_ENUM_CAP

DEFAULT_SELECTOR_CAP = 4096


def _values_at(zeta, p: int) -> Q:
    return zeta.get(p, ZERO) if isinstance(zeta, dict) else zeta[p]


@dataclass
class RobustModel:
    """A market plus per-node vertex sets of one-step transition laws."""

    model: MarketModel
    kernels: dict[str, list[tuple[Q, ...]]]
    node_order: list[str] = field(init=False)
    supported_edges: set[tuple[str, str]] = field(init=False)
    supported_base_paths: list[int] = field(init=False)
    notes: dict = field(init=False)

    def __post_init__(self) -> None:
        tree = self.model.tree
        internal = [nid for nid in tree.nodes if tree.children[nid]]
        for nid in internal:
            vertices = self.kernels.get(nid)
            if not vertices:
                raise ModelFormatError(f"empty kernel set at node {nid!r}")
            for vec in vertices:
                if len(vec) != len(tree.children[nid]):
                    raise ModelFormatError(f"kernel vertex arity mismatch at {nid!r}")
                if any(w < 0 for w in vec) or sum(vec, ZERO) != ONE:
                    raise ModelFormatError(f"kernel vertex at {nid!r} is not a distribution")
        self.node_order = sorted(internal, key=lambda nid: (tree.nodes[nid].time, nid))
        self.supported_edges = set()
        for nid in internal:
            kids = tree.children[nid]
            for vec in self.kernels[nid]:
                for kid, w in zip(kids, vec):
                    if w > 0:
                        self.supported_edges.add((nid, kid))
        self.supported_base_paths = []
        for idx, path in enumerate(tree.paths):
            if all((path[t], path[t + 1]) in self.supported_edges for t in range(len(path) - 1)):
                self.supported_base_paths.append(idx)
        if not self.supported_base_paths:
            raise ModelFormatError("kernel family supports no complete path")
        # finite-model surrogate for the usual standing assumptions: the
        # one-step sets are finite hence compact, payoffs are finitely
        # many rationals hence bounded, continuity is vacuous
        self.notes = {
            "compactness": "finite vertex sets",
            "boundedness": "finite rational payoffs",
            "continuity": "vacuous on a finite tree",
            "realization": "finite-model realization",
        }

    def num_selectors(self) -> int:
        total = 1
        for nid in self.node_order:
            total *= len(self.kernels[nid])
        return total

    def selectors(self, cap: int = DEFAULT_SELECTOR_CAP) -> list[tuple[int, ...]]:
        total = self.num_selectors()
        if total > cap:
            raise CapExceededError("kernel selectors", total, cap)
        ranges = [range(len(self.kernels[nid])) for nid in self.node_order]
        return list(itertools.product(*ranges))

    def selector_base_measure(self, selector: tuple[int, ...]) -> dict[int, Q]:
        """Base-path probabilities of one product of kernel vertices."""
        tree = self.model.tree
        pick = {nid: self.kernels[nid][selector[i]] for i, nid in enumerate(self.node_order)}
        out: dict[int, Q] = {}
        for idx, path in enumerate(tree.paths):
            w = ONE
            for t in range(len(path) - 1):
                kids = tree.children[path[t]]
                w *= pick[path[t]][kids.index(path[t + 1])]
                if not w:
                    break
            if w:
                out[idx] = w
        return out

    def supported_children(self, nid: str) -> list[str]:
        return [kid for kid in self.model.tree.children[nid] if (nid, kid) in self.supported_edges]


def build_robust(model: MarketModel, kernels: dict | None = None) -> RobustModel:
    """Validate a kernel family (default: the model's own) into a RobustModel."""
    source = kernels if kernels is not None else model.kernels
    if source is None:
        raise ModelFormatError("no kernel family given")
    normalized = {
        nid: [tuple(rat(w) for w in vec) for vec in vertices]
        for nid, vertices in source.items()
    }
    return RobustModel(model=model, kernels=normalized)


@dataclass
class RobustEnlarged:
    """An enlarged space together with its quasi-sure support."""

    robust: RobustModel
    enl: EnlargedModel
    supported_paths: list[int] = field(init=False)

    def __post_init__(self) -> None:
        keep = set(self.robust.supported_base_paths)
        self.supported_paths = [
            p for p in range(self.enl.num_paths) if self.enl.epaths[p].base_index in keep
        ]

    def vertex_measure(self, selector: tuple[int, ...]) -> dict[int, Q]:
        """Selector product measure spread over clocks by the clock weights."""
        base = self.robust.selector_base_measure(selector)
        out: dict[int, Q] = {}
        for p in self.supported_paths:
            ep = self.enl.epaths[p]
            w = base.get(ep.base_index, ZERO)
            if w:
                out[p] = w * self.enl.clock_dist[ep.clocks]
        return out

    def supported_enodes(self) -> list[int]:
        seen: set[int] = set()
        for p in self.supported_paths:
            seen.update(self.enl.epaths[p].node_seq)
        return sorted(seen)


def enlarge_robust(rm: RobustModel, n: int, clock_weights="uniform") -> RobustEnlarged:
    return RobustEnlarged(robust=rm, enl=enlarge(rm.model, n, clock_weights))


# -- martingale measures on the quasi-sure support (stock only) -------------


class StockPolytope:
    """Mass and martingale constraints over the supported enlarged paths."""

    def __init__(self, renl: RobustEnlarged) -> None:
        enl = renl.enl
        self.enl = enl
        self.paths = list(renl.supported_paths)
        self.lp = LinearProgram()
        self.q_var = {p: self.lp.add_var(f"Q[{enl.epaths[p].label}]") for p in self.paths}
        self.mass_row = self.lp.add_constraint(
            {v: ONE for v in self.q_var.values()}, "=", ONE, name="mass"
        )
        T = enl.horizon
        dims = enl.model.stock.dim
        inc: dict[tuple[int, int], dict[int, Q]] = {}
        for p in self.paths:
            seq = enl.epaths[p].node_seq
            for t in range(T):
                step = enl.stock_step(p, t)
                for d in range(dims):
                    if step[d]:
                        row = inc.setdefault((seq[t], d), {})
                        row[self.q_var[p]] = row.get(self.q_var[p], ZERO) + step[d]
        self.mart_rows: list[int] = []
        for (v, d), row in sorted(inc.items()):
            self.mart_rows.append(
                self.lp.add_constraint(row, "=", ZERO, name=f"mart[{enl.enode(v).label};{d}]")
            )

    def maximize(self, values) -> tuple[str, Q | None, dict[int, Q] | None]:
        work = self.lp.copy()
        obj = {}
        for p in self.paths:
            val = _values_at(values, p)
            if val:
                obj[self.q_var[p]] = val
        work.set_objective("max", obj)
        out = solve(work)
        if out.status == "infeasible":
            return "infeasible", None, None
        if out.status != "optimal":
            raise PropertyViolation(f"stock polytope extremum unexpectedly {out.status}")
        measure = {p: out.x(v) for p, v in self.q_var.items() if out.x(v)}
        return "optimal", out.value, measure

    def recheck(self, measure: dict[int, Q]) -> None:
        """Mass and martingale identities straight from model data."""
        total = sum(measure.values(), ZERO)
        if total != ONE or any(q < 0 for q in measure.values()):
            raise PropertyViolation("stock polytope witness is not a probability")
        support = set(self.paths)
        if any(p not in support for p in measure):
            raise PropertyViolation("stock polytope witness leaves the support")
        enl = self.enl
        inc: dict[tuple[int, int], Q] = {}
        for p, q in measure.items():
            seq = enl.epaths[p].node_seq
            for t in range(enl.horizon):
                step = enl.stock_step(p, t)
                for d in range(len(step)):
                    if step[d]:
                        key = (seq[t], d)
                        inc[key] = inc.get(key, ZERO) + q * step[d]
        if any(val != ZERO for val in inc.values()):
            raise PropertyViolation("stock polytope witness is not a martingale law")


def _stock_gain_vars(
    renl: RobustEnlarged, lp: LinearProgram, *, split: bool
) -> tuple[dict[tuple[int, int], int], dict[tuple[int, int], int], Callable[[int], dict[int, Q]]]:
    """Dynamic trading variables and per-path gain coefficient maps."""
    enl = renl.enl
    T = enl.horizon
    dims = enl.model.stock.dim
    trade: set[int] = set()
    for p in renl.supported_paths:
        trade.update(enl.epaths[p].node_seq[:T])
    h_var: dict[tuple[int, int], int] = {}
    h_neg: dict[tuple[int, int], int] = {}
    for v in sorted(trade):
        lbl = enl.enode(v).label
        for d in range(dims):
            if split:
                h_var[(v, d)] = lp.add_var(f"H+[{lbl};{d}]")
                h_neg[(v, d)] = lp.add_var(f"H-[{lbl};{d}]")
            else:
                h_var[(v, d)] = lp.add_var(f"H[{lbl};{d}]", nonneg=False)

    def coeffs(p: int) -> dict[int, Q]:
        row: dict[int, Q] = {}
        seq = enl.epaths[p].node_seq
        for t in range(T):
            step = enl.stock_step(p, t)
            for d in range(dims):
                if step[d]:
                    var = h_var[(seq[t], d)]
                    row[var] = row.get(var, ZERO) + step[d]
                    if split:
                        neg = h_neg[(seq[t], d)]
                        row[neg] = row.get(neg, ZERO) - step[d]
        return row

    return h_var, h_neg, coeffs


# -- no-arbitrage under uncertainty ------------------------------------------


@dataclass
class DominationCertificate:
    selector: tuple[int, ...]
    slack: Q | None
    measure: dict[int, Q] | None

    @property
    def dominates(self) -> bool:
        return self.slack is not None and self.slack > ZERO


@dataclass
class RobustNaReport:
    holds: bool
    gain: Q
    witness: dict[tuple[int, int], Q] | None
    certificates: list[DominationCertificate]


def _domination_slack(
    base: StockPolytope, pbar: dict[int, Q]
) -> tuple[Q | None, dict[int, Q] | None]:
    """max s with some supported martingale Q >= s * pbar, coordinatewise."""
    work = base.lp.copy()
    s_var = work.add_var("_s", nonneg=False)
    for p, w in sorted(pbar.items()):
        work.add_constraint({base.q_var[p]: ONE, s_var: -w}, ">=", ZERO, name=f"dom[p{p}]")
    work.set_objective("max", {s_var: ONE})
    res = solve(work)
    if res.status == "infeasible":
        return None, None
    if res.status != "optimal":
        raise PropertyViolation(f"domination LP unexpectedly {res.status}")
    slack = res.x(s_var)
    measure = {p: res.x(v) for p, v in base.q_var.items() if res.x(v)}
    for p, w in pbar.items():
        if measure.get(p, ZERO) < slack * w:
            raise PropertyViolation("domination certificate failed re-validation")
    return slack, measure


def robust_na(
    renl: RobustEnlarged, *, selector_cap: int = DEFAULT_SELECTOR_CAP
) -> RobustNaReport:
    """No-arbitrage from dynamic trading alone, with per-selector duals.

    Primal: the maximal reference-weighted gain among quasi-surely
    nonnegative normalized stock strategies (zero iff no arbitrage).
    Certificate side: for every kernel selector P there must be a
    supported martingale measure Q with Q >= s P for some s > 0.  Both
    sides are computed and the biconditional enforced.
    """
    lp = LinearProgram()
    h_var, h_neg, coeffs = _stock_gain_vars(renl, lp, split=True)
    share = Q(1, len(renl.supported_paths))
    objective: dict[int, Q] = {}
    for p in renl.supported_paths:
        row = coeffs(p)
        lp.add_constraint(dict(row), ">=", ZERO, name=f"nonneg[p{p}]")
        for var, val in row.items():
            term = share * val
            if term:
                objective[var] = objective.get(var, ZERO) + term
    lp.add_constraint(
        {var: ONE for var in (*h_var.values(), *h_neg.values())}, "<=", ONE, name="norm"
    )
    lp.set_objective("max", {v: c for v, c in objective.items() if c})
    out = solve(lp)
    if out.status != "optimal":
        raise PropertyViolation(f"robust arbitrage LP unexpectedly {out.status}")
    holds = out.value == ZERO
    witness = None
    if not holds:
        witness = {}
        for key, var in h_var.items():
            val = out.x(var) - out.x(h_neg[key])
            if val:
                witness[key] = val

    base = StockPolytope(renl)
    certificates: list[DominationCertificate] = []
    dominated_all = True
    for selector in renl.robust.selectors(selector_cap):
        slack, measure = _domination_slack(base, renl.vertex_measure(selector))
        cert = DominationCertificate(selector=selector, slack=slack, measure=measure)
        certificates.append(cert)
        if cert.dominates:
            base.recheck(measure)
        else:
            dominated_all = False
    if holds != dominated_all:
        raise PropertyViolation(
            "primal no-arbitrage verdict disagrees with per-selector domination"
        )
    return RobustNaReport(holds=holds, gain=out.value, witness=witness, certificates=certificates)


# -- quasi-sure super-hedging with the stock alone ---------------------------


@dataclass
class RobustStockReport:
    value: Q | None
    strategy: dict[tuple[int, int], Q] | None
    measure: dict[int, Q] | None
    na_failed: bool
    dual_value: Q | None


def robust_superhedge_stock(renl: RobustEnlarged, zeta) -> RobustStockReport:
    """min x with x + dynamic gains >= zeta on every supported path.

    The dual maximizes E_Q[zeta] over supported martingale measures and
    equality is asserted.  An unbounded primal happens exactly when no
    supported martingale measure exists; that case is flagged rather
    than priced.
    """
    enl = renl.enl
    lp = LinearProgram()
    x = lp.add_var("x", nonneg=False)
    h_var, _, coeffs = _stock_gain_vars(renl, lp, split=False)
    for p in renl.supported_paths:
        row = coeffs(p)
        row[x] = row.get(x, ZERO) + ONE
        lp.add_constraint(row, ">=", _values_at(zeta, p), name=f"hedge[p{p}]")
    lp.set_objective("min", {x: ONE})
    out = solve(lp)

    pt = StockPolytope(renl)
    status, dual_value, measure = pt.maximize(zeta)

    if out.status == "unbounded" or status == "infeasible":
        if not (out.status == "unbounded" and status == "infeasible"):
            raise PropertyViolation("stock super-hedge primal and dual disagree about arbitrage")
        return RobustStockReport(
            value=None, strategy=None, measure=None, na_failed=True, dual_value=None
        )
    if out.status != "optimal":
        raise PropertyViolation(f"stock super-hedge LP unexpectedly {out.status}")
    if out.value != dual_value:
        raise PropertyViolation(
            f"stock super-hedge gap: {rat_str(out.value)} vs {rat_str(dual_value)}"
        )
    positions = {key: out.x(var) for key, var in h_var.items() if out.x(var)}
    for p in renl.supported_paths:
        seq = enl.epaths[p].node_seq
        total = out.value
        for t in range(enl.horizon):
            step = enl.stock_step(p, t)
            for d in range(len(step)):
                total += positions.get((seq[t], d), ZERO) * step[d]
        if total < _values_at(zeta, p):
            raise PropertyViolation("extracted stock hedge fails pathwise")
    pt.recheck(measure)
    return RobustStockReport(
        value=out.value,
        strategy=positions,
        measure=measure,
        na_failed=False,
        dual_value=dual_value,
    )


# -- backward dynamic programming ---------------------------------------------


@dataclass
class DpStage:
    """One backward step: values and hedge ratios on time-t nodes."""

    values: dict[int, Q]
    strategy: dict[tuple[int, int], Q]
    infeasible: list[int]
    lp_count: int


def _group_children(renl: RobustEnlarged, v: int) -> dict[str, list[int]]:
    """Supported enlarged children of v grouped by base child node."""
    enl = renl.enl
    node = enl.enode(v)
    groups: dict[str, list[int]] = {c: [] for c in renl.robust.supported_children(node.base)}
    for w in enl.children.get(v, ()):
        base = enl.enode(w).base
        if base in groups:
            groups[base].append(w)
    return groups


def dp_operator(renl: RobustEnlarged, chi: dict[int, Q], t: int) -> DpStage:
    """One-step value: best dominated martingale expectation per node.

    At each supported time-t node the measure splits over base children
    under the one-step martingale constraint while every unexercised
    clock branches freely, so clock directions enter through a plain
    maximum over status successors and the base direction through a
    small LP whose duals are the hedge ratios.
    """
    enl = renl.enl
    stock = enl.model.stock
    values: dict[int, Q] = {}
    strategy: dict[tuple[int, int], Q] = {}
    infeasible: list[int] = []
    lp_count = 0
    nodes = [v for v in renl.supported_enodes() if enl.enode(v).time == t]
    for v in nodes:
        node = enl.enode(v)
        here = stock.at(node.base)
        groups = _group_children(renl, v)
        best: dict[str, Q] = {}
        for c, enodes in groups.items():
            if not enodes:
                raise PropertyViolation(f"missing status successors under {node.label}")
            best[c] = max(chi[w] for w in enodes)
        lp = LinearProgram()
        q_var = {c: lp.add_var(f"q[{c}]") for c in groups}
        lp.add_constraint({var: ONE for var in q_var.values()}, "=", ONE, name="mass")
        mart_rows: list[tuple[int, int]] = []
        for d in range(stock.dim):
            row = {}
            for c, var in q_var.items():
                step = stock.at(c)[d] - here[d]
                if step:
                    row[var] = step
            if row:
                mart_rows.append((lp.add_constraint(row, "=", ZERO, name=f"mart[{d}]"), d))
        lp.set_objective("max", {q_var[c]: best[c] for c in groups if best[c]})
        out = solve(lp)
        lp_count += 1
        if out.status == "infeasible":
            infeasible.append(v)
            continue
        if out.status != "optimal":
            raise PropertyViolation(f"stage LP unexpectedly {out.status} at {node.label}")
        values[v] = out.value
        duals = out.duals or []
        ratios = {d: ZERO for d in range(stock.dim)}
        for r, d in mart_rows:
            ratios[d] = duals[r] if r < len(duals) else ZERO
        # the coverage inequality value + H . step >= successor value
        # pins the dual sign; accept whichever orientation covers
        for sign in (ONE, -ONE):
            covered = True
            for c in groups:
                gain = sum(
                    (sign * ratios[d] * (stock.at(c)[d] - here[d]) for d in range(stock.dim)),
                    ZERO,
                )
                if out.value + gain < best[c]:
                    covered = False
                    break
            if covered:
                for d in range(stock.dim):
                    if sign * ratios[d]:
                        strategy[(v, d)] = sign * ratios[d]
                break
        else:
            raise PropertyViolation(f"stage duals do not cover successors at {node.label}")
    return DpStage(values=values, strategy=strategy, infeasible=infeasible, lp_count=lp_count)


@dataclass
class DpReport:
    value: Q
    root_values: dict[int, Q]
    strategy: dict[tuple[int, int], Q]
    lp_count: int


def dp_superhedge(renl: RobustEnlarged, zeta) -> DpReport:
    """Backward induction of the one-step operator from a terminal payoff.

    The terminal payoff is per supported path; paths and terminal nodes
    are in bijection because every clock is revealed by the horizon.
    The folded value is the quasi-sure stock super-hedging price and the
    per-node hedge ratios telescope pathwise, which is verified exactly.
    """
    enl = renl.enl
    T = enl.horizon
    chi: dict[int, Q] = {}
    for p in renl.supported_paths:
        v = enl.epaths[p].node_seq[T]
        val = _values_at(zeta, p)
        if v in chi and chi[v] != val:
            raise PropertyViolation("terminal payoff is not a function of the terminal node")
        chi[v] = val
    strategy: dict[tuple[int, int], Q] = {}
    lp_count = 0
    for t in range(T - 1, -1, -1):
        stage = dp_operator(renl, chi, t)
        if stage.infeasible:
            labels = [enl.enode(v).label for v in stage.infeasible]
            raise SnaFailure(
                "no one-step martingale measure at some nodes (local arbitrage)",
                certificate={"nodes": labels},
            )
        strategy.update(stage.strategy)
        lp_count += stage.lp_count
        chi = stage.values
    roots = sorted({enl.epaths[p].node_seq[0] for p in renl.supported_paths})
    root_values = {r: chi[r] for r in roots}
    value = max(root_values.values())
    for p in renl.supported_paths:
        seq = enl.epaths[p].node_seq
        total = value
        for t in range(T):
            step = enl.stock_step(p, t)
            for d in range(len(step)):
                total += strategy.get((seq[t], d), ZERO) * step[d]
        if total < _values_at(zeta, p):
            raise PropertyViolation("dp strategy fails to super-hedge pathwise")
    return DpReport(value=value, root_values=root_values, strategy=strategy, lp_count=lp_count)


# -- super-hedging with added static long positions ---------------------------


@dataclass
class RobustOptionsReport:
    value: Q
    strategy: dict[tuple[int, int], Q]
    positions: list[Q]
    measure: dict[int, Q]
    dual_value: Q


def robust_superhedge_options(
    renl: RobustEnlarged, zeta, payoffs: Sequence, option_prices: Sequence[Q]
) -> RobustOptionsReport:
    """Stock trading plus nonnegative static positions bought at quoted prices.

    Primal: min x with x + gains + sum_i a_i (e_i - price_i) >= zeta on
    the support, a >= 0.  Dual: max E_Q[zeta] over supported martingale
    measures with E_Q[e_i] <= price_i; equality asserted.  An empty
    dual polytope is an arbitrage in the quoted options.
    """
    if len(payoffs) != len(option_prices):
        raise ModelFormatError("one price per static payoff required")
    option_prices = [rat(v) for v in option_prices]
    lp = LinearProgram()
    x = lp.add_var("x", nonneg=False)
    h_var, _, coeffs = _stock_gain_vars(renl, lp, split=False)
    a_var = [lp.add_var(f"a[{i}]") for i in range(len(payoffs))]
    for p in renl.supported_paths:
        row = coeffs(p)
        row[x] = row.get(x, ZERO) + ONE
        for i, var in enumerate(a_var):
            coef = _values_at(payoffs[i], p) - option_prices[i]
            if coef:
                row[var] = row.get(var, ZERO) + coef
        lp.add_constraint(row, ">=", _values_at(zeta, p), name=f"hedge[p{p}]")
    lp.set_objective("min", {x: ONE})
    out = solve(lp)

    pt = StockPolytope(renl)
    work = pt.lp.copy()
    for i in range(len(payoffs)):
        row = {}
        for p in pt.paths:
            val = _values_at(payoffs[i], p)
            if val:
                row[pt.q_var[p]] = val
        work.add_constraint(row, "<=", option_prices[i], name=f"price[{i}]")
    work.set_objective(
        "max", {pt.q_var[p]: _values_at(zeta, p) for p in pt.paths if _values_at(zeta, p)}
    )
    dual = solve(work)

    if out.status == "unbounded" or dual.status == "infeasible":
        if not (out.status == "unbounded" and dual.status == "infeasible"):
            raise PropertyViolation("options super-hedge primal and dual disagree")
        raise SnaFailure("no supported martingale measure prices the static options")
    if out.status != "optimal" or dual.status != "optimal":
        raise PropertyViolation("options super-hedge LP failed")
    if out.value != dual.value:
        raise PropertyViolation(
            f"options super-hedge gap: {rat_str(out.value)} vs {rat_str(dual.value)}"
        )
    positions = [out.x(var) for var in a_var]
    if any(a < 0 for a in positions):
        raise PropertyViolation("static positions must be nonnegative")
    stock_positions = {key: out.x(var) for key, var in h_var.items() if out.x(var)}
    measure = {p: dual.x(v) for p, v in pt.q_var.items() if dual.x(v)}
    pt.recheck(measure)
    for i in range(len(payoffs)):
        priced = sum(
            (measure.get(p, ZERO) * _values_at(payoffs[i], p) for p in pt.paths), ZERO
        )
        if priced > option_prices[i]:
            raise PropertyViolation("dual measure breaks a static price bound")
    enl = renl.enl
    for p in renl.supported_paths:
        seq = enl.epaths[p].node_seq
        total = out.value
        for t in range(enl.horizon):
            step = enl.stock_step(p, t)
            for d in range(len(step)):
                total += stock_positions.get((seq[t], d), ZERO) * step[d]
        for i, a in enumerate(positions):
            total += a * (_values_at(payoffs[i], p) - option_prices[i])
        if total < _values_at(zeta, p):
            raise PropertyViolation("options hedge fails pathwise")
    return RobustOptionsReport(
        value=out.value,
        strategy=stock_positions,
        positions=positions,
        measure=measure,
        dual_value=dual.value,
    )


# -- full sub/super-hedging dualities on the quasi-sure support ---------------


def robust_subhedge(
    renl: RobustEnlarged,
    *,
    prices: Prices | None = None,
    cap: int = DEFAULT_ENUM_CAP,
) -> HedgeReport:
    """Quasi-sure sub-hedging price with its dual, equality asserted."""
    enl = renl.enl
    report = subhedge(enl, prices=prices, paths=renl.supported_paths)
    pt = build_polytope(enl, prices=prices, paths=renl.supported_paths, cap=cap)
    dual = dual_subhedge(enl, prices=prices, paths=renl.supported_paths, cap=cap, polytope=pt)
    if report.price != dual.value:
        raise PropertyViolation(
            f"robust sub-hedge gap: {rat_str(report.price)} vs {rat_str(dual.value)}"
        )
    ok, _ = pt.check(dual.measure)
    if not ok:
        raise PropertyViolation("robust sub-hedge dual measure fails re-validation")
    report.gap = ZERO
    report.dual_ref = {"value": rat_str(dual.value)}
    return report


def robust_superhedge_full(
    renl: RobustEnlarged,
    *,
    prices: Prices | None = None,
    cap: int = DEFAULT_ENUM_CAP,
) -> HedgeReport:
    """Quasi-sure super-hedging price with its dual, equality asserted."""
    enl = renl.enl
    report = superhedge(enl, prices=prices, paths=renl.supported_paths)
    pt = build_polytope(enl, prices=prices, paths=renl.supported_paths, cap=cap)
    dual = dual_superhedge(enl, prices=prices, paths=renl.supported_paths, cap=cap, polytope=pt)
    if report.price != dual.value:
        raise PropertyViolation(
            f"robust super-hedge gap: {rat_str(report.price)} vs {rat_str(dual.value)}"
        )
    ok, _ = pt.check(dual.measure)
    if not ok:
        raise PropertyViolation("robust super-hedge dual measure fails re-validation")
    report.gap = ZERO
    report.dual_ref = {"value": rat_str(dual.value)}
    return report


# -- robust pricing consistency -----------------------------------------------


@dataclass
class RobustFtapCertificate:
    selector: tuple[int, ...]
    epsilon: Q | None
    measure: dict[int, Q] | None


@dataclass
class RobustFtapReport:
    holds: bool
    epsilon: Q | None
    certificates: list[RobustFtapCertificate]
    submarket_slacks: list[Q | None] | None = None


def _shifted_membership(
    pt: MeasurePolytope, measure: dict[int, Q], delta: Q, pbar: dict[int, Q]
) -> None:
    """Membership in the delta-shifted polytope plus domination, from scratch."""
    enl = pt.enl
    model = enl.model
    total = sum(measure.values(), ZERO)
    if total != ONE or any(q < 0 for q in measure.values()):
        raise PropertyViolation("shifted-polytope witness is not a probability")
    inc: dict[tuple[int, int], Q] = {}
    for p, q in measure.items():
        seq = enl.epaths[p].node_seq
        for t in range(enl.horizon):
            step = enl.stock_step(p, t)
            for d in range(len(step)):
                if step[d]:
                    key = (seq[t], d)
                    inc[key] = inc.get(key, ZERO) + q * step[d]
    if any(val != ZERO for val in inc.values()):
        raise PropertyViolation("shifted-polytope witness is not a martingale law")
    for i in range(model.L):
        lhs = sum((measure.get(p, ZERO) * enl.european_value(i, p) for p in pt.paths), ZERO)
        if lhs > pt.alphas[i] - delta:
            raise PropertyViolation("shifted european bound fails")
    for k in range(model.N):
        lhs = sum((measure.get(p, ZERO) * enl.short_value(k, p) for p in pt.paths), ZERO)
        if lhs < pt.gammas[k] + delta:
            raise PropertyViolation("shifted short-option bound fails")
    for j in range(model.M):
        for tau in pt.taus:
            vec = pt._stopped_values_long(j, tau)
            if pt.expectation(measure, vec) > pt.betas[j] - delta:
                raise PropertyViolation("shifted long-option bound fails")
    for p, w in pbar.items():
        if measure.get(p, ZERO) < delta * w:
            raise PropertyViolation("shifted domination fails")


def _selector_epsilon(
    pt: MeasurePolytope, pbar: dict[int, Q]
) -> tuple[Q | None, dict[int, Q] | None]:
    """Largest e with a measure in the e-shifted polytope dominating e*pbar."""
    work = pt.lp.copy()
    e_var = work.add_var("_e", nonneg=False)
    for r in pt.f_rows:
        work.rows[r].coeffs[e_var] = ONE
    for r in pt.g_rows:
        work.rows[r].coeffs[e_var] = ONE
    for r in pt.h_rows:
        work.rows[r].coeffs[e_var] = -ONE
    for p, w in sorted(pbar.items()):
        work.add_constraint({pt.q_var[p]: ONE, e_var: -w}, ">=", ZERO, name=f"dom[p{p}]")
    work.set_objective("max", {e_var: ONE})
    out = solve(work)
    if out.status == "infeasible":
        return None, None
    if out.status != "optimal":
        raise PropertyViolation(f"shifted-polytope LP unexpectedly {out.status}")
    measure = {p: out.x(v) for p, v in pt.q_var.items() if out.x(v)}
    return out.x(e_var), measure


def robust_ftap(
    renl: RobustEnlarged,
    *,
    prices: Prices | None = None,
    selector_cap: int = DEFAULT_SELECTOR_CAP,
    cap: int = DEFAULT_ENUM_CAP,
    submarkets: bool = False,
) -> RobustFtapReport:
    """Uniform-slack pricing consistency against every kernel selector.

    Holds iff some e > 0 lets every selector product measure be
    dominated by a martingale measure meeting all price bounds with
    slack e.  Computed per selector as a single LP in which e shifts
    the price rows and scales the domination rows; the verdict is the
    minimum over selectors.
    """
    enl = renl.enl
    pt = build_polytope(enl, prices=prices, paths=renl.supported_paths, cap=cap)
    certificates: list[RobustFtapCertificate] = []
    eps: Q | None = None
    feasible = True
    for selector in renl.robust.selectors(selector_cap):
        pbar = renl.vertex_measure(selector)
        value, measure = _selector_epsilon(pt, pbar)
        certificates.append(
            RobustFtapCertificate(selector=selector, epsilon=value, measure=measure)
        )
        if value is None:
            feasible = False
            continue
        _shifted_membership(pt, measure, value, pbar)
        eps = value if eps is None or value < eps else eps
    holds = feasible and eps is not None and eps > ZERO
    report = RobustFtapReport(
        holds=holds, epsilon=eps if feasible else None, certificates=certificates
    )
    if submarkets:
        report.submarket_slacks = _submarket_slacks(renl, pt, selector_cap=selector_cap, cap=cap)
    return report


def _submarket_slacks(
    renl: RobustEnlarged,
    pt: MeasurePolytope,
    *,
    selector_cap: int,
    cap: int,
) -> list[Q | None]:
    """Slacks for the markets holding only the first m long options each.

    Adding one more long option only shrinks the feasible set, so the
    slack sequence must be nonincreasing; asserted here.
    """
    model = renl.enl.model
    slacks: list[Q | None] = []
    for m in range(model.M + 1):
        sub_model = dataclasses.replace(model, americans_long=model.americans_long[:m])
        sub_enl = enlarge(sub_model, renl.enl.n, renl.enl.clock_weights)
        sub_pt = build_polytope(
            sub_enl,
            prices=(pt.alphas, pt.betas[:m], pt.gammas),
            paths=renl.supported_paths,
            cap=cap,
        )
        worst: Q | None = None
        dead = False
        for selector in renl.robust.selectors(selector_cap):
            pbar = renl.vertex_measure(selector)
            value, _ = _selector_epsilon(sub_pt, pbar)
            if value is None:
                dead = True
                break
            worst = value if worst is None or value < worst else worst
        slacks.append(None if dead else worst)
    for prev, cur in zip(slacks, slacks[1:]):
        if prev is None:
            if cur is not None:
                raise PropertyViolation("sub-market slack grew after adding an option")
        elif cur is not None and cur > prev:
            raise PropertyViolation("sub-market slack grew after adding an option")
    return slacks


def ftap_transfer(
    rm: RobustModel,
    *,
    prices: Prices | None = None,
    clock_weights="uniform",
    selector_cap: int = DEFAULT_SELECTOR_CAP,
    cap: int = DEFAULT_ENUM_CAP,
) -> tuple[RobustFtapReport, RobustFtapReport]:
    """Pricing consistency transfers between the two enlargement depths.

    The verdict with n equal to the number of short options must match
    the verdict on the space with one extra clock; both are computed
    and the biconditional asserted.
    """
    low = robust_ftap(
        enlarge_robust(rm, rm.model.N, clock_weights),
        prices=prices, selector_cap=selector_cap, cap=cap,
    )
    high = robust_ftap(
        enlarge_robust(rm, rm.model.N + 1, clock_weights),
        prices=prices, selector_cap=selector_cap, cap=cap,
    )
    if low.holds != high.holds:
        raise PropertyViolation("pricing consistency verdict changed with the extra clock")
    return low, high


# -- direct check of the liquidation/measure interchange ----------------------


@dataclass
class MinimaxReport:
    value: Q
    lhs: Q
    middle: Q
    rhs: Q
    num_streams: int
    num_vertices: int
    num_taus: int


def verify_minimax(
    renl: RobustEnlarged,
    streams: Sequence[dict[int, Q]],
    vertices: Sequence[dict[int, Q]] | None = None,
    *,
    cap: int = DEFAULT_ENUM_CAP,
) -> MinimaxReport:
    """Exchange of liquidation and worst-case expectation, checked exactly.

    Three quantities over a finitely generated measure set: the best
    guaranteed liquidation value, the worst case of the best adapted
    liquidation, and the worst case of the best pure-stopping tuple.
    All three are computed by independent LPs and exact triple equality
    is asserted.
    """
    enl = renl.enl
    if vertices is None:
        vertices = [renl.vertex_measure(sel) for sel in renl.robust.selectors()]
    if not vertices or not streams:
        raise ModelFormatError("need at least one stream and one measure vertex")
    paths = sorted({p for R in vertices for p in R if R[p]})
    if not paths:
        raise ModelFormatError("measure vertices are all zero")
    K = len(streams)
    nodes = sorted({v for p in paths for v in enl.epaths[p].node_seq})
    reach = [
        {
            v: sum((R.get(p, ZERO) for p in paths if v in enl.epaths[p].node_seq), ZERO)
            for v in nodes
        }
        for R in vertices
    ]

    def gval(k: int, v: int) -> Q:
        return streams[k].get(v, ZERO)

    # best guaranteed value of an adapted liquidation of each stream
    lhs_lp = LinearProgram()
    u = lhs_lp.add_var("u", nonneg=False)
    mu = {(k, v): lhs_lp.add_var(f"mu[{k};{v}]") for k in range(K) for v in nodes}
    for i in range(len(vertices)):
        row = {u: -ONE}
        for k in range(K):
            for v in nodes:
                coef = gval(k, v) * reach[i][v]
                if coef:
                    row[mu[(k, v)]] = row.get(mu[(k, v)], ZERO) + coef
        lhs_lp.add_constraint(row, ">=", ZERO, name=f"vertex[{i}]")
    for k in range(K):
        for p in paths:
            row = {}
            for v in enl.epaths[p].node_seq:
                row[mu[(k, v)]] = row.get(mu[(k, v)], ZERO) + ONE
            lhs_lp.add_constraint(row, "=", ONE, name=f"unit[{k};p{p}]")
    lhs_lp.set_objective("max", {u: ONE})
    lhs_out = solve(lhs_lp)
    if lhs_out.status != "optimal":
        raise PropertyViolation(f"guaranteed-liquidation LP unexpectedly {lhs_out.status}")

    # worst-case mixture against the best liquidation, solved jointly
    mid_lp = LinearProgram()
    lam = [mid_lp.add_var(f"lam[{i}]") for i in range(len(vertices))]
    mid_lp.add_constraint({var: ONE for var in lam}, "=", ONE, name="simplex")
    y = {(k, p): mid_lp.add_var(f"y[{k};p{p}]", nonneg=False) for k in range(K) for p in paths}
    for k in range(K):
        for v in nodes:
            row: dict[int, Q] = {}
            for p in paths:
                if v in enl.epaths[p].node_seq:
                    row[y[(k, p)]] = row.get(y[(k, p)], ZERO) + ONE
            for i in range(len(vertices)):
                coef = gval(k, v) * reach[i][v]
                if coef:
                    row[lam[i]] = row.get(lam[i], ZERO) - coef
            mid_lp.add_constraint(row, ">=", ZERO, name=f"cover[{k};{enl.enode(v).label}]")
    mid_lp.set_objective("min", {var: ONE for var in y.values()})
    mid_out = solve(mid_lp)
    if mid_out.status != "optimal":
        raise PropertyViolation(f"worst-case liquidation LP unexpectedly {mid_out.status}")

    # worst-case mixture against the best pure stopping tuple
    taus = restricted_stopping_times(enl, paths, cap)
    rhs_lp = LinearProgram()
    lam2 = [rhs_lp.add_var(f"lam[{i}]") for i in range(len(vertices))]
    rhs_lp.add_constraint({var: ONE for var in lam2}, "=", ONE, name="simplex")
    u_k = [rhs_lp.add_var(f"u[{k}]", nonneg=False) for k in range(K)]
    for k in range(K):
        seen: set[tuple[Q, ...]] = set()
        for tau in taus:
            stopped = {}
            for p in paths:
                seq = enl.epaths[p].node_seq
                stopped[p] = gval(k, seq[tau.time_on(seq)])
            coefs = tuple(
                sum((R.get(p, ZERO) * stopped[p] for p in paths), ZERO) for R in vertices
            )
            if coefs in seen:
                continue
            seen.add(coefs)
            row = {u_k[k]: ONE}
            for i, coef in enumerate(coefs):
                if coef:
                    row[lam2[i]] = row.get(lam2[i], ZERO) - coef
            rhs_lp.add_constraint(row, ">=", ZERO, name=f"stop[{k};#{len(seen)}]")
    rhs_lp.set_objective("min", {var: ONE for var in u_k})
    rhs_out = solve(rhs_lp)
    if rhs_out.status != "optimal":
        raise PropertyViolation(f"worst-case stopping LP unexpectedly {rhs_out.status}")

    if not (lhs_out.value == mid_out.value == rhs_out.value):
        raise PropertyViolation(
            "liquidation interchange failed: "
            f"{rat_str(lhs_out.value)}, {rat_str(mid_out.value)}, {rat_str(rhs_out.value)}"
        )
    return MinimaxReport(
        value=lhs_out.value,
        lhs=lhs_out.value,
        middle=mid_out.value,
        rhs=rhs_out.value,
        num_streams=K,
        num_vertices=len(vertices),
        num_taus=len(taus),
    )
