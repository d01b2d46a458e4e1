"""Dual side: martingale measures on the enlarged space.

The dual objects are probability measures Q on enlarged paths under
which the stock is a martingale and quoted option prices are
consistent: buy-side expectations at or below asks, sell-side at or
above bids, and for each longed American every stopping-time
expectation at or below its ask.  The American constraints are
materialized one row per enumerated stopping time, which keeps the
feasible set an honest polytope in Q.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

from .enlarged import EnlargedModel, extend_claim
from .errors import PropertyViolation, SnaFailure
from .hedging import Prices, _resolve_prices
from .lp import LinearProgram, LPOutcome, max_slack, solve
from .rationals import ONE, ZERO, Q, rat_str
from .strategies import DEFAULT_ENUM_CAP, StoppingTime, enumerate_stopping_times

__all__ = [
    "MeasurePolytope",
    "MeasureCertificate",
    "DualPriceReport",
    "build_polytope",
    "ftap_certificate",
    "dual_superhedge",
    "dual_subhedge",
    "lift_measure_uniform_clock",
    "push_stopping_measure",
    "snell_value",
    "e2_chain",
    "strict_value_bracket",
]


def _restricted_forest(
    enl: EnlargedModel, paths: Sequence[int]
) -> tuple[tuple[int, ...], dict[int, tuple[int, ...]]]:
    """Roots and children of the sub-forest spanned by the given paths."""
    keep: set[int] = set()
    for p in paths:
        keep.update(enl.epaths[p].node_seq)
    roots = tuple(v for v in enl.roots if v in keep)
    children = {
        v: tuple(c for c in enl.children[v] if c in keep) for v in keep
    }
    return roots, children


def restricted_stopping_times(
    enl: EnlargedModel, paths: Sequence[int], cap: int = DEFAULT_ENUM_CAP
) -> list[StoppingTime]:
    roots, children = _restricted_forest(enl, paths)
    return enumerate_stopping_times(
        roots, lambda v: children.get(v, ()), cap, what="enlarged stopping times"
    )


class MeasurePolytope:
    """Martingale measure constraints over one enlarged space.

    The LP holds constraint rows only; callers copy it and add an
    objective.  Row indices are kept per constraint family so the
    uniform-slack machinery can target exactly the price and
    positivity rows.
    """

    def __init__(
        self,
        enl: EnlargedModel,
        *,
        prices: Prices | None = None,
        paths: Iterable[int] | None = None,
        cap: int = DEFAULT_ENUM_CAP,
        include_positivity: bool = False,
    ) -> None:
        self.enl = enl
        self.paths = list(range(enl.num_paths)) if paths is None else sorted(set(paths))
        if not self.paths:
            raise ValueError("at least one path required")
        self.alphas, self.betas, self.gammas = _resolve_prices(enl, prices)
        self.lp = LinearProgram()
        self.q_var = {p: self.lp.add_var(f"Q[{enl.epaths[p].label}]") for p in self.paths}

        self.mass_row = self.lp.add_constraint(
            {v: ONE for v in self.q_var.values()}, "=", ONE, name="mass"
        )
        # martingale increments: one equality per enlarged node and stock dim
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

        model = enl.model
        self.f_rows: list[int] = []
        for i in range(model.L):
            row = {}
            for p in self.paths:
                val = enl.european_value(i, p)
                if val:
                    row[self.q_var[p]] = val
            self.f_rows.append(self.lp.add_constraint(row, "<=", self.alphas[i], name=f"f[{i}]"))
        self.h_rows: list[int] = []
        for k in range(model.N):
            row = {}
            for p in self.paths:
                val = enl.short_value(k, p)
                if val:
                    row[self.q_var[p]] = val
            self.h_rows.append(self.lp.add_constraint(row, ">=", self.gammas[k], name=f"h[{k}]"))

        # longed Americans: sup over stopping times, one row per enumerated
        # stopping time, deduplicated by induced value vector
        self.taus: list[StoppingTime] = []
        self.g_rows: list[int] = []
        self.num_tau_rows = 0
        if model.M:
            self.taus = restricted_stopping_times(enl, self.paths, cap)
            for j in range(model.M):
                seen: set[tuple] = set()
                for tau in self.taus:
                    vec = self._stopped_values_long(j, tau)
                    key = tuple(vec[p] for p in self.paths)
                    if key in seen:
                        continue
                    seen.add(key)
                    row = {self.q_var[p]: vec[p] for p in self.paths if vec[p]}
                    self.g_rows.append(
                        self.lp.add_constraint(row, "<=", self.betas[j], name=f"g[{j};#{len(seen)}]")
                    )
            self.num_tau_rows = len(self.g_rows)

        self.pos_rows: list[int] = []
        if include_positivity:
            for p in self.paths:
                self.pos_rows.append(
                    self.lp.add_constraint({self.q_var[p]: ONE}, ">=", ZERO, name=f"pos[p{p}]")
                )

    # -- helpers ----------------------------------------------------------

    def _stopped_values_long(self, j: int, tau: StoppingTime) -> dict[int, Q]:
        out = {}
        for p in self.paths:
            seq = self.enl.epaths[p].node_seq
            t = tau.time_on(seq)
            out[p] = self.enl.long_value_at_node(j, seq[t])
        return out

    def stopped_values(self, values_at_enode: dict[int, Q], tau: StoppingTime) -> dict[int, Q]:
        out = {}
        for p in self.paths:
            seq = self.enl.epaths[p].node_seq
            out[p] = values_at_enode[seq[tau.time_on(seq)]]
        return out

    @property
    def price_rows(self) -> list[int]:
        return [*self.f_rows, *self.h_rows, *self.g_rows]

    def expectation(self, measure: dict[int, Q], values: dict[int, Q] | Sequence[Q]) -> Q:
        total = ZERO
        for p in self.paths:
            q = measure.get(p, ZERO)
            if q:
                total += q * values[p]
        return total

    def solve_extremum(
        self, values: dict[int, Q] | Sequence[Q], sense: Literal["max", "min"]
    ) -> tuple[Q, dict[int, Q], LPOutcome]:
        work = self.lp.copy()
        work.set_objective(sense, {self.q_var[p]: values[p] for p in self.paths if values[p]})
        out = solve(work)
        if out.status == "infeasible":
            raise SnaFailure(
                "martingale polytope is empty at these prices",
                certificate={"farkas": [rat_str(y) for y in out.farkas or []]},
            )
        if out.status != "optimal":
            raise PropertyViolation(f"polytope extremum LP unexpectedly {out.status}")
        measure = {p: out.x(v) for p, v in self.q_var.items() if out.x(v)}
        return out.value, measure, out

    # -- independent re-validation ----------------------------------------

    def check(
        self,
        measure: dict[int, Q],
        *,
        min_slack: Q | None = None,
        strict: bool = False,
    ) -> tuple[bool, list[dict]]:
        """Re-evaluate every constraint directly from model data.

        With ``min_slack`` s, positivity must clear Q(p) >= s and each
        price row must clear its bound by at least s; with ``strict``,
        margins must merely be positive.  No LP state is consulted.
        """
        enl = self.enl
        ledger: list[dict] = []
        ok = True

        def entry(name: str, lhs: Q, rel: str, rhs: Q, slackable: bool) -> None:
            nonlocal ok
            margin = rhs - lhs if rel == "<=" else lhs - rhs
            good = margin >= ZERO if rel != "=" else lhs == rhs
            if rel != "=" and slackable:
                if min_slack is not None:
                    good = margin >= min_slack
                elif strict:
                    good = margin > ZERO
            ok = ok and good
            ledger.append(
                {
                    "constraint": name,
                    "lhs": rat_str(lhs),
                    "rel": rel,
                    "rhs": rat_str(rhs),
                    "margin": rat_str(margin) if rel != "=" else "0/1",
                    "ok": bool(good),
                }
            )

        support = set(self.paths)
        for p, q in measure.items():
            if p not in support and q != ZERO:
                entry(f"support[p{p}]", q, "=", ZERO, False)
        for p in self.paths:
            entry(f"pos[p{p}]", measure.get(p, ZERO), ">=", ZERO, True)
        entry("mass", sum((measure.get(p, ZERO) for p in self.paths), ZERO), "=", ONE, False)

        T = enl.horizon
        dims = enl.model.stock.dim
        inc: dict[tuple[int, int], Q] = {}
        for p in self.paths:
            q = measure.get(p, ZERO)
            if not q:
                continue
            seq = enl.epaths[p].node_seq
            for t in range(T):
                step = enl.stock_step(p, t)
                for d in range(dims):
                    if step[d]:
                        key = (seq[t], d)
                        inc[key] = inc.get(key, ZERO) + q * step[d]
        for (v, d), val in sorted(inc.items()):
            entry(f"mart[{enl.enode(v).label};{d}]", val, "=", ZERO, False)

        model = enl.model
        for i in range(model.L):
            lhs = sum((measure.get(p, ZERO) * enl.european_value(i, p) for p in self.paths), ZERO)
            entry(f"f[{i}]", lhs, "<=", self.alphas[i], True)
        for k in range(model.N):
            lhs = sum((measure.get(p, ZERO) * enl.short_value(k, p) for p in self.paths), ZERO)
            entry(f"h[{k}]", lhs, ">=", self.gammas[k], True)
        for j in range(model.M):
            worst = None
            for tau in self.taus:
                vec = self._stopped_values_long(j, tau)
                lhs = self.expectation(measure, vec)
                if worst is None or lhs > worst:
                    worst = lhs
            if worst is not None:
                entry(f"g[{j};sup]", worst, "<=", self.betas[j], True)
        return ok, ledger


def build_polytope(
    enl: EnlargedModel,
    *,
    prices: Prices | None = None,
    paths: Iterable[int] | None = None,
    cap: int = DEFAULT_ENUM_CAP,
    include_positivity: bool = False,
) -> MeasurePolytope:
    return MeasurePolytope(
        enl, prices=prices, paths=paths, cap=cap, include_positivity=include_positivity
    )


@dataclass
class MeasureCertificate:
    """A measure witnessing SNA (slack > 0) or the best failed slack."""

    measure: dict[int, Q] | None
    slack: Q | None
    ledger: list[dict] = field(default_factory=list)

    def to_json(self, enl: EnlargedModel) -> dict:
        return {
            "paths": {
                enl.epaths[p].label: rat_str(q) for p, q in sorted((self.measure or {}).items())
            },
            "slack": rat_str(self.slack) if self.slack is not None else None,
            "ledger": self.ledger,
        }


def ftap_certificate(
    enl: EnlargedModel,
    *,
    prices: Prices | None = None,
    paths: Iterable[int] | None = None,
    cap: int = DEFAULT_ENUM_CAP,
) -> tuple[bool, MeasureCertificate]:
    """Maximal uniform slack over the strict martingale polytope.

    SNA holds iff some measure is strictly positive on every supported
    path and clears every price constraint strictly; the largest common
    clearance s* is computed by LP and the witness re-validated.
    """
    pt = build_polytope(
        enl, prices=prices, paths=paths, cap=cap, include_positivity=True
    )
    rows = [*pt.price_rows, *pt.pos_rows]
    outcome = max_slack(pt.lp, rows)
    if outcome.status == "infeasible":
        return False, MeasureCertificate(
            measure=None,
            slack=None,
            ledger=[{"constraint": "existence", "ok": False, "note": "no martingale measure"}],
        )
    if outcome.status != "optimal":
        raise PropertyViolation(f"slack LP unexpectedly {outcome.status}")
    assert outcome.witness is not None and outcome.slack is not None
    measure = {p: outcome.witness[v] for p, v in pt.q_var.items() if outcome.witness[v]}
    sna = outcome.slack > ZERO
    # the witness clears every slackened row by at least s* (s* may be <= 0)
    ok, ledger = pt.check(measure, min_slack=outcome.slack)
    if not ok:
        raise PropertyViolation("slack witness failed re-validation")
    return sna, MeasureCertificate(measure=measure, slack=outcome.slack, ledger=ledger)


@dataclass
class DualPriceReport:
    kind: str
    value: Q
    measure: dict[int, Q]
    lp_rows: int
    lp_cols: int
    pivots: int
    num_tau_rows: int = 0

    def to_json(self, enl: EnlargedModel) -> dict:
        return {
            "kind": self.kind,
            "value": rat_str(self.value),
            "measure": {enl.epaths[p].label: rat_str(q) for p, q in sorted(self.measure.items())},
            "lp": {"rows": self.lp_rows, "cols": self.lp_cols, "pivots": self.pivots},
            "tau_rows": self.num_tau_rows,
        }


def dual_superhedge(
    enl: EnlargedModel,
    *,
    prices: Prices | None = None,
    paths: Iterable[int] | None = None,
    cap: int = DEFAULT_ENUM_CAP,
    polytope: MeasurePolytope | None = None,
) -> DualPriceReport:
    """max E_Q[claim at the last clock] over the closed polytope (n = N + 1)."""
    if enl.n != enl.model.N + 1:
        raise ValueError("the super-hedging dual runs on the n = N + 1 enlargement")
    target = extend_claim(enl, "super")
    pt = polytope or build_polytope(enl, prices=prices, paths=paths, cap=cap)
    value, measure, out = pt.solve_extremum(target, "max")
    ok, _ = pt.check(measure)
    if not ok or pt.expectation(measure, target) != value:
        raise PropertyViolation("dual super-hedge optimizer failed re-validation")
    return DualPriceReport(
        kind="dual_super",
        value=value,
        measure=measure,
        lp_rows=out.rows,
        lp_cols=out.cols,
        pivots=out.pivots,
        num_tau_rows=pt.num_tau_rows,
    )


def dual_subhedge(
    enl: EnlargedModel,
    *,
    prices: Prices | None = None,
    paths: Iterable[int] | None = None,
    cap: int = DEFAULT_ENUM_CAP,
    polytope: MeasurePolytope | None = None,
) -> DualPriceReport:
    """min over Q of max over stopping times of E_Q[claim at the stop].

    Epigraph LP: minimize u subject to u >= E_Q[claim_tau] for every
    enumerated stopping time and Q in the closed polytope (n = N).
    """
    if enl.n != enl.model.N:
        raise ValueError("the sub-hedging dual runs on the n = N enlargement")
    claim_at = extend_claim(enl, "sub")
    pt = polytope or build_polytope(enl, prices=prices, paths=paths, cap=cap)
    taus = pt.taus or restricted_stopping_times(enl, pt.paths, cap)
    work = pt.lp.copy()
    u = work.add_var("u", nonneg=False)
    seen: set[tuple] = set()
    n_rows = 0
    for tau in taus:
        vec = pt.stopped_values(claim_at, tau)
        key = tuple(vec[p] for p in pt.paths)
        if key in seen:
            continue
        seen.add(key)
        row: dict[int, Q] = {u: ONE}
        for p in pt.paths:
            if vec[p]:
                row[pt.q_var[p]] = -vec[p]
        work.add_constraint(row, ">=", ZERO, name=f"snell[#{n_rows}]")
        n_rows += 1
    work.set_objective("min", {u: ONE})
    out = solve(work)
    if out.status == "infeasible":
        raise SnaFailure(
            "martingale polytope is empty at these prices",
            certificate={"farkas": [rat_str(y) for y in out.farkas or []]},
        )
    if out.status != "optimal":
        raise PropertyViolation(f"dual sub-hedge LP unexpectedly {out.status}")
    measure = {p: out.x(v) for p, v in pt.q_var.items() if out.x(v)}
    ok, _ = pt.check(measure)
    if not ok:
        raise PropertyViolation("dual sub-hedge optimizer failed re-validation")
    best = snell_value(enl, claim_at, measure, paths=pt.paths)
    if best != out.value:
        raise PropertyViolation(
            f"epigraph value {rat_str(out.value)} != Snell value {rat_str(best)}"
        )
    return DualPriceReport(
        kind="dual_sub",
        value=out.value,
        measure=measure,
        lp_rows=out.rows,
        lp_cols=out.cols,
        pivots=out.pivots,
        num_tau_rows=n_rows,
    )


def snell_value(
    enl: EnlargedModel,
    values_at_enode: dict[int, Q],
    measure: dict[int, Q],
    *,
    paths: Iterable[int] | None = None,
) -> Q:
    """sup over stopping times of E_Q[value at the stop], by backward induction.

    Independent oracle for the epigraph LP: conditional one-step
    recursion max(value, E_Q[next]) on the sub-forest charged by Q.
    """
    idx = list(range(enl.num_paths)) if paths is None else list(paths)
    mass: dict[int, Q] = {}
    for p in idx:
        q = measure.get(p, ZERO)
        if not q:
            continue
        for v in enl.epaths[p].node_seq:
            mass[v] = mass.get(v, ZERO) + q
    env: dict[int, Q] = {}
    order = sorted(mass, key=lambda v: -enl.enode(v).time)
    for v in order:
        here = values_at_enode[v]
        kids = [c for c in enl.children.get(v, ()) if mass.get(c, ZERO)]
        if kids:
            cont = sum((mass[c] * env[c] for c in kids), ZERO) / mass[v]
            env[v] = max(here, cont)
        else:
            env[v] = here
    return sum((mass[r] * env[r] for r in enl.roots if r in mass), ZERO)


def lift_measure_uniform_clock(
    enl_from: EnlargedModel,
    enl_to: EnlargedModel,
    measure: dict[int, Q],
    *,
    prices: Prices | None = None,
    cap: int = DEFAULT_ENUM_CAP,
    polytope: MeasurePolytope | None = None,
) -> dict[int, Q]:
    """Spread the added clock uniformly over {0..T}; membership re-checked.

    The added exercise clock of a shorted option that nobody monitors
    plays no role: the lifted measure stays in the closed polytope of
    the larger space.
    """
    if enl_to.n != enl_from.n + 1 or enl_to.model is not enl_from.model:
        raise ValueError("lift goes from the n-clock space to the (n+1)-clock space")
    T = enl_from.horizon
    share = Q(1, T + 1)
    lifted: dict[int, Q] = {}
    for p, q in measure.items():
        if not q:
            continue
        ep = enl_from.epaths[p]
        for t in range(T + 1):
            tgt = enl_to.path_index(ep.base_index, ep.clocks + (t,))
            lifted[tgt] = lifted.get(tgt, ZERO) + q * share
    pt = polytope or build_polytope(enl_to, prices=prices, cap=cap)
    ok, ledger = pt.check(lifted)
    if not ok:
        bad = [e for e in ledger if not e["ok"]]
        raise PropertyViolation(f"lifted measure left the polytope: {bad[:3]}")
    return lifted


@dataclass
class PushReport:
    pushed: dict[int, Q]
    value: Q                 # E_pushed[claim at the last clock]
    lam: Q
    mixed: dict[int, Q]


def push_stopping_measure(
    enl_from: EnlargedModel,
    enl_to: EnlargedModel,
    measure: dict[int, Q],
    tau: StoppingTime,
    *,
    prices: Prices | None = None,
    cap: int = DEFAULT_ENUM_CAP,
    polytope: MeasurePolytope | None = None,
    max_halvings: int = 12,
) -> PushReport:
    """Concentrate the added clock on the stopping time tau.

    Asserts E_pushed[claim at the last clock] = E_Q[claim at tau], that
    the push lies in the closed polytope of the larger space, and that
    mixing toward the uniform lift with weight lambda stays inside -
    strictly when the input measure itself is strict (line search over
    lambda = 1/2, 1/4, ...).
    """
    if enl_to.n != enl_from.n + 1 or enl_to.model is not enl_from.model:
        raise ValueError("push goes from the n-clock space to the (n+1)-clock space")
    claim_from = extend_claim(enl_from, "sub")
    pushed: dict[int, Q] = {}
    expect_from = ZERO
    for p, q in measure.items():
        if not q:
            continue
        ep = enl_from.epaths[p]
        t = tau.time_on(ep.node_seq)
        tgt = enl_to.path_index(ep.base_index, ep.clocks + (t,))
        pushed[tgt] = pushed.get(tgt, ZERO) + q
        expect_from += q * claim_from[ep.node_seq[t]]

    claim_to = extend_claim(enl_to, "super")
    pt = polytope or build_polytope(enl_to, prices=prices, cap=cap)
    value = pt.expectation(pushed, claim_to)
    if value != expect_from:
        raise PropertyViolation(
            f"pushed value {rat_str(value)} != stopped expectation {rat_str(expect_from)}"
        )
    ok, ledger = pt.check(pushed)
    if not ok:
        bad = [e for e in ledger if not e["ok"]]
        raise PropertyViolation(f"pushed measure left the polytope: {bad[:3]}")

    lifted = lift_measure_uniform_clock(
        enl_from, enl_to, measure, prices=prices, cap=cap, polytope=pt
    )
    lam = Q(1, 2)
    for _ in range(max_halvings):
        mixed = {}
        for p in set(pushed) | set(lifted):
            mixed[p] = (ONE - lam) * pushed.get(p, ZERO) + lam * lifted.get(p, ZERO)
        ok, _ = pt.check(mixed, strict=True)
        if ok:
            return PushReport(pushed=pushed, value=value, lam=lam, mixed=mixed)
        lam /= 2
    raise PropertyViolation("no mixture weight kept the pushed measure strictly inside")


@dataclass
class ChainReport:
    lower: Q      # inf_Q sup_tau
    middle: Q     # sup_Q sup_tau
    upper: Q      # sup over the (N+1)-clock polytope
    strict_upper: bool
    num_taus: int


def e2_chain(
    enl_sub: EnlargedModel,
    enl_super: EnlargedModel,
    *,
    prices: Prices | None = None,
    cap: int = DEFAULT_ENUM_CAP,
) -> ChainReport:
    """Exact three-term chain linking the dual prices.

    inf_Q sup_tau <= sup_Q sup_tau <= sup over the larger-space
    polytope; the middle term swaps to sup_tau sup_Q and is computed by
    one LP per deduplicated stopping-value vector.
    """
    lower = dual_subhedge(enl_sub, prices=prices, cap=cap)
    pt = build_polytope(enl_sub, prices=prices, cap=cap)
    claim_at = extend_claim(enl_sub, "sub")
    taus = pt.taus or restricted_stopping_times(enl_sub, pt.paths, cap)
    middle = None
    seen: set[tuple] = set()
    for tau in taus:
        vec = pt.stopped_values(claim_at, tau)
        key = tuple(vec[p] for p in pt.paths)
        if key in seen:
            continue
        seen.add(key)
        val, _, _ = pt.solve_extremum(vec, "max")
        if middle is None or val > middle:
            middle = val
    assert middle is not None
    upper = dual_superhedge(enl_super, prices=prices, cap=cap)
    if not (lower.value <= middle <= upper.value):
        raise PropertyViolation(
            f"chain violated: {rat_str(lower.value)} <= {rat_str(middle)} "
            f"<= {rat_str(upper.value)} fails"
        )
    return ChainReport(
        lower=lower.value,
        middle=middle,
        upper=upper.value,
        strict_upper=middle < upper.value,
        num_taus=len(seen),
    )


def strict_value_bracket(
    pt: MeasurePolytope,
    values: dict[int, Q] | Sequence[Q],
    strict_measure: dict[int, Q],
    *,
    halvings: int = 12,
) -> list[tuple[Q, Q]]:
    """Bracket the closed-polytope maximum by strict-interior values.

    Mixes the closed maximizer toward a strictly feasible measure;
    every mixture is verified strictly feasible and the values converge
    geometrically to the closed maximum, witnessing that optimizing
    over the strict set loses nothing.
    """
    vmax, argmax, _ = pt.solve_extremum(values, "max")
    vs = pt.expectation(strict_measure, values)
    out: list[tuple[Q, Q]] = []
    lam = Q(1, 2)
    for _ in range(halvings):
        mixed = {}
        for p in set(argmax) | set(strict_measure):
            mixed[p] = (ONE - lam) * argmax.get(p, ZERO) + lam * strict_measure.get(p, ZERO)
        ok, _ = pt.check(mixed, strict=True)
        if not ok:
            raise PropertyViolation("strict mixture left the polytope")
        val = pt.expectation(mixed, values)
        if val != (ONE - lam) * vmax + lam * vs:
            raise PropertyViolation("mixture value is not the mixture of values")
        out.append((lam, val))
        lam /= 2
    return out
