"""Model factories and the randomized cross-validation battery.

Every factory draws from small rational grids, so all arithmetic stays
exact, and every generated market carries a construction certificate: a
strictly positive product martingale measure whose price margins make
strict no-arbitrage hold by design.  The battery functions check each
pricing routine against an independently computed counterpart and raise
PropertyViolation on any disagreement, so a clean run is a verification
transcript over the sampled corpus.  All draws come from a caller-owned
random.Random, which makes every corpus reproducible from its seed.
"""
from __future__ import annotations

import dataclasses
import itertools
import random
from dataclasses import dataclass

from .divisible import verify_divisibility_equivalence
from .enlarged import EnlargedModel, enlarge, extend_claim
from .errors import PropertyViolation, SnaFailure
from .hedging import SnaReport, check_sna, detect_arbitrage, subhedge, superhedge
from .lp import LinearProgram, max_slack, solve
from .market import AdaptedProcess, EventTree, MarketModel, Node, TerminalPayoff, load_model
from .measures import (
    MeasurePolytope,
    build_polytope,
    dual_subhedge,
    dual_superhedge,
    e2_chain,
    ftap_certificate,
    lift_measure_uniform_clock,
    push_stopping_measure,
    restricted_stopping_times,
    snell_value,
    strict_value_bracket,
)
from .rationals import ONE, ZERO, Q, rat, rat_str
from .robust import (
    RobustModel,
    build_robust,
    dp_superhedge,
    enlarge_robust,
    ftap_transfer,
    robust_ftap,
    robust_na,
    robust_subhedge,
    robust_superhedge_full,
    robust_superhedge_options,
    robust_superhedge_stock,
    verify_minimax,
)
from .strategies import DEFAULT_ENUM_CAP

__all__ = [
    "EPS_GRID",
    "BOUNDARY_OFFSET",
    "GeneratedModel",
    "binomial_call",
    "binomial_call_short_put",
    "strict_chain_market",
    "trinomial_two_kernels",
    "random_tree",
    "random_stock",
    "node_interior",
    "random_sna_model",
    "inject_arbitrage",
    "boundary_model",
    "random_kernel_model",
    "check_duality",
    "check_ftap_grid",
    "check_chain",
    "check_degenerations",
    "check_singleton_robust",
    "check_divisibility",
    "check_robust_model",
    "check_minimax_instance",
    "check_depth_zero",
    "run_campaign",
]

# price shifts swept by the no-arbitrage grid checks
EPS_GRID = tuple(Q(1, 2 ** k) for k in range(1, 9))
# strictly inside the smallest grid shift
BOUNDARY_OFFSET = Q(1, 512)

_DENOMS = (1, 2, 3, 4, 6, 8)
_MARGINS = (Q(1, 8), Q(1, 4), Q(3, 8), Q(1, 2))
_MAX_ENLARGED_PATHS = 128
_MAX_TAUS = 150


# -- canonical fixtures --------------------------------------------------------


def binomial_call() -> MarketModel:
    """One-period two-state market with an at-the-money call claim."""
    return load_model({
        "horizon": 1,
        "nodes": [
            {"id": "r", "time": 0},
            {"id": "u", "time": 1, "parent": "r"},
            {"id": "d", "time": 1, "parent": "r"},
        ],
        "stock": {"dim": 1, "values": {"r": ["1"], "u": ["2"], "d": ["1/2"]}},
        "claim": {"values": {"r": "0", "u": "1", "d": "0"}},
        "weights": {"u": "1/2", "d": "1/2"},
    })


def binomial_call_short_put(gamma: str | Q = "1/4") -> MarketModel:
    """The binomial call market plus one shorted put quoted at gamma."""
    return load_model({
        "horizon": 1,
        "nodes": [
            {"id": "r", "time": 0},
            {"id": "u", "time": 1, "parent": "r"},
            {"id": "d", "time": 1, "parent": "r"},
        ],
        "stock": {"dim": 1, "values": {"r": ["1"], "u": ["2"], "d": ["1/2"]}},
        "claim": {"values": {"r": "0", "u": "1", "d": "0"}},
        "americans_short": [
            {"values": {"r": "0", "u": "0", "d": "1/2"}, "price": rat_str(rat(gamma))},
        ],
        "weights": {"u": "1/2", "d": "1/2"},
    })


def strict_chain_market() -> MarketModel:
    """Trinomial market whose best stopped value sits strictly under the
    super-hedging price: exercising against the shorted ask is worth
    more when its exercise profile can stay randomized."""
    return load_model({
        "horizon": 1,
        "nodes": [
            {"id": "n0", "time": 0},
            {"id": "n1", "time": 1, "parent": "n0"},
            {"id": "n2", "time": 1, "parent": "n0"},
            {"id": "n3", "time": 1, "parent": "n0"},
        ],
        "stock": {"dim": 1, "values": {
            "n0": ["3/2"], "n1": ["15/8"], "n2": ["9/8"], "n3": ["9/4"],
        }},
        "europeans": [
            {"payoff": {"n1": "3", "n2": "19/8", "n3": "1"}, "price": "99/40"},
            {"payoff": {"n1": "1/6", "n2": "8/3", "n3": "3"}, "price": "283/120"},
        ],
        "americans_short": [
            {"values": {"n0": "2", "n1": "7/8", "n2": "1", "n3": "23/8"},
             "price": "1023/512"},
        ],
        "claim": {"values": {"n0": "3/4", "n1": "0", "n2": "7/6", "n3": "1"}},
        "weights": {"n1": "1/3", "n2": "1/3", "n3": "1/3"},
    })


def trinomial_two_kernels() -> MarketModel:
    """One-period three-state market carrying a two-vertex kernel family."""
    return load_model({
        "horizon": 1,
        "nodes": [
            {"id": "r", "time": 0},
            {"id": "a", "time": 1, "parent": "r"},
            {"id": "b", "time": 1, "parent": "r"},
            {"id": "c", "time": 1, "parent": "r"},
        ],
        "stock": {"dim": 1, "values": {"r": ["1"], "a": ["2"], "b": ["1"], "c": ["1/2"]}},
        "claim": {"values": {"r": "0", "a": "1", "b": "0", "c": "0"}},
        "weights": {"a": "1/3", "b": "1/3", "c": "1/3"},
        "kernels": {"r": [["1/2", "0", "1/2"], ["1/4", "1/2", "1/4"]]},
    })


# -- rational grids ------------------------------------------------------------


def _grid_value(rng: random.Random, lo: Q, hi: Q) -> Q:
    """Uniform-ish draw from the rational grid {k/d} inside [lo, hi]."""
    d = rng.choice(_DENOMS)
    lo_k = int(lo * d)
    hi_k = int(hi * d)
    if Q(lo_k, d) < lo:
        lo_k += 1
    return Q(rng.randint(lo_k, max(lo_k, hi_k)), d)


def _random_terminal(rng: random.Random, tree: EventTree) -> TerminalPayoff:
    return TerminalPayoff({leaf: _grid_value(rng, ZERO, Q(3)) for leaf in tree.leaves})


def _random_adapted(rng: random.Random, tree: EventTree, hi: Q = Q(3)) -> AdaptedProcess:
    values = {nid: (_grid_value(rng, ZERO, hi),) for nid in tree.nodes}
    return AdaptedProcess(dim=1, values=values)


# -- tree and stock factories --------------------------------------------------


def random_tree(rng: random.Random, horizon: int, max_branch: int = 3) -> EventTree:
    """Random event tree; ids follow discovery order so layouts reproduce.

    The root always branches as widely as allowed permits, so the
    market is degenerate only when max_branch is 1; deeper nodes may
    still thin out to single children.
    """
    nodes = [Node("n0", 0, None)]
    frontier = ["n0"]
    counter = 1
    for t in range(1, horizon + 1):
        lo = min(2, max_branch) if t == 1 else 1
        nxt: list[str] = []
        for parent in frontier:
            for _ in range(rng.randint(lo, max_branch)):
                nid = f"n{counter}"
                counter += 1
                nodes.append(Node(nid, t, parent))
                nxt.append(nid)
        frontier = nxt
    return EventTree(nodes, horizon)


def random_stock(rng: random.Random, tree: EventTree, dim: int = 1) -> AdaptedProcess:
    """Positive grid-valued stock whose one-step moves straddle the parent.

    Single children copy the parent price; with several children one
    move goes strictly up and one strictly down, which guarantees a
    full-support one-step martingale at every node.  A second component,
    when asked for, is an exact affine image of the first, so the same
    transition laws price it.
    """
    first: dict[str, Q] = {tree.root: rng.choice([ONE, Q(3, 2), Q(2)])}
    order = sorted(tree.nodes.values(), key=lambda node: (node.time, node.id))
    for node in order:
        kids = tree.children[node.id]
        if not kids:
            continue
        base = first[node.id]
        if len(kids) == 1:
            first[kids[0]] = base
            continue
        up = base * (ONE + rng.choice([Q(1, 4), Q(1, 2), ONE]))
        down = base * (ONE - rng.choice([Q(1, 4), Q(1, 2), Q(3, 4)]))
        moves = [up, down]
        for _ in range(len(kids) - 2):
            moves.append(base * (ONE + rng.choice([Q(-1, 2), Q(-1, 4), ZERO, Q(1, 4), Q(1, 2)])))
        rng.shuffle(moves)
        for kid, val in zip(kids, moves):
            first[kid] = val
    if dim == 1:
        return AdaptedProcess(dim=1, values={nid: (v,) for nid, v in first.items()})
    # affine second leg: martingale under exactly the same one-step laws
    values = {nid: (v, Q(2) + v / 2) for nid, v in first.items()}
    return AdaptedProcess(dim=2, values=values)


def node_interior(model: MarketModel) -> dict[str, dict[str, Q]] | None:
    """Per-node full-support one-step martingale laws, or None if some
    node admits no strictly positive martingale transition."""
    tree = model.tree
    out: dict[str, dict[str, Q]] = {}
    for nid in sorted(tree.nodes, key=lambda n: (tree.nodes[n].time, n)):
        kids = tree.children[nid]
        if not kids:
            continue
        lp = LinearProgram()
        qv = {kid: lp.add_var(f"q[{kid}]") for kid in kids}
        sv = lp.add_var("_s", nonneg=False)
        lp.add_constraint({qv[k]: ONE for k in kids}, "=", ONE, name="mass")
        here = model.stock.at(nid)
        for d in range(model.stock.dim):
            row = {}
            for kid in kids:
                step = model.stock.at(kid)[d] - here[d]
                if step:
                    row[qv[kid]] = step
            if row:
                lp.add_constraint(row, "=", ZERO, name=f"mart[{d}]")
        for kid in kids:
            lp.add_constraint({qv[kid]: ONE, sv: -ONE}, ">=", ZERO, name=f"int[{kid}]")
        lp.set_objective("max", {sv: ONE})
        res = solve(lp)
        if res.status != "optimal" or res.x(sv) <= ZERO:
            return None
        out[nid] = {kid: res.x(qv[kid]) for kid in kids}
    return out


def _product_path_measure(tree: EventTree, laws: dict[str, dict[str, Q]]) -> dict[int, Q]:
    out: dict[int, Q] = {}
    for pi, path in enumerate(tree.paths):
        q = ONE
        for a, b in zip(path, path[1:]):
            q *= laws[a].get(b, ZERO)
        if q:
            out[pi] = q
    return out


def _snell_root(
    tree: EventTree,
    proc: AdaptedProcess,
    laws: dict[str, dict[str, Q]],
    children_of=None,
) -> Q:
    """Root value of max(exercise, continuation) backward induction."""
    if children_of is None:
        children_of = lambda nid: tree.children[nid]
    env: dict[str, Q] = {}
    order = sorted(tree.nodes.values(), key=lambda node: -node.time)
    for node in order:
        here = proc.scalar(node.id)
        kids = children_of(node.id)
        if kids:
            cont = sum((laws[node.id][k] * env[k] for k in kids), ZERO)
            env[node.id] = max(here, cont)
        else:
            env[node.id] = here
    return env[tree.root]


def _clock_mean(tree: EventTree, proc: AdaptedProcess, pmeas: dict[int, Q]) -> Q:
    """E over paths of the time-average of an adapted payoff."""
    share = Q(1, tree.horizon + 1)
    total = ZERO
    for pi, q in pmeas.items():
        path = tree.paths[pi]
        total += q * share * sum((proc.scalar(nid) for nid in path), ZERO)
    return total


# -- strictly arbitrage-free market factory ------------------------------------


@dataclass
class GeneratedModel:
    """A market together with its construction-time interior certificate."""

    model: MarketModel
    laws: dict[str, dict[str, Q]]
    pmeas: dict[int, Q]
    seed: int | None = None


def _within_budget(model: MarketModel, cap: int = _MAX_TAUS) -> bool:
    T = model.tree.horizon
    epaths = len(model.tree.paths) * (T + 1) ** (model.N + 1)
    if epaths > _MAX_ENLARGED_PATHS:
        return False
    from .strategies import count_enlarged_stopping_times

    # the claim epigraph always enumerates stops on the n = N space;
    # longed asks additionally need them on the space with the extra clock
    depths = (model.N, model.N + 1) if model.M else (model.N,)
    for n in depths:
        enl = enlarge(model, n)
        if count_enlarged_stopping_times(enl, cap) > cap:
            return False
    return True


def random_sna_model(
    rng: random.Random,
    *,
    force_n: int | None = None,
    require_option: bool = False,
    seed: int | None = None,
) -> GeneratedModel:
    """Random market priced strictly inside its martingale polytope.

    Buy-side quotes sit a margin above, sell-side a margin below, the
    expectations under a full-support product martingale measure
    (American asks above the exercise envelope), so strict no-arbitrage
    holds with slack at least min(margin, smallest path mass).
    """
    for _ in range(64):
        N = force_n if force_n is not None else rng.choice([0, 1, 1, 2])
        if N >= 2:
            T = 1
        elif N == 1:
            T = rng.choice([1, 1, 2])
        else:
            T = rng.choice([1, 1, 2, 2, 3])
        max_branch = 2 if T == 3 or (N >= 1 and T >= 2) else 3
        M = rng.choice([0, 0, 1, 1, 2])
        if M:
            T = min(T, 2)
            if N >= 1 or M == 2:
                max_branch = 2
        L = rng.randint(0, 2)
        if require_option and L + M + N == 0:
            L = 1
        dim = 2 if rng.random() < 0.2 else 1
        tree = random_tree(rng, T, max_branch)
        stock = random_stock(rng, tree, dim)
        probe = MarketModel(tree=tree, stock=stock,
                            weights={leaf: Q(1, len(tree.paths)) for leaf in tree.leaves})
        laws = node_interior(probe)
        if laws is None:
            continue
        pmeas = _product_path_measure(tree, laws)

        europeans = []
        for _i in range(L):
            payoff = _random_terminal(rng, tree)
            mean = sum((pmeas[pi] * payoff.at(path[-1]) for pi, path in enumerate(tree.paths)), ZERO)
            europeans.append((payoff, mean + rng.choice(_MARGINS)))
        americans_long = []
        for _j in range(M):
            proc = _random_adapted(rng, tree)
            americans_long.append((proc, _snell_root(tree, proc, laws) + rng.choice(_MARGINS)))
        americans_short = []
        for _k in range(N):
            proc = _random_adapted(rng, tree)
            americans_short.append((proc, _clock_mean(tree, proc, pmeas) - rng.choice(_MARGINS)))

        model = MarketModel(
            tree=tree,
            stock=stock,
            europeans=europeans,
            americans_long=americans_long,
            americans_short=americans_short,
            claim=_random_adapted(rng, tree),
            weights={leaf: Q(1, len(tree.paths)) for leaf in tree.leaves},
        )
        if not _within_budget(model):
            continue
        return GeneratedModel(model=model, laws=laws, pmeas=pmeas, seed=seed)
    raise PropertyViolation("model factory failed to hit its budget in 64 attempts")


# -- adversarial corrosion of a healthy market ---------------------------------


def _long_envelope_min(pt: MeasurePolytope, j: int) -> Q:
    """min over the polytope of the best stopped expectation of ask j."""
    work = pt.lp.copy()
    uv = work.add_var("_u", nonneg=False)
    seen: set[tuple] = set()
    for tau in pt.taus:
        vec = pt._stopped_values_long(j, tau)
        key = tuple(vec[p] for p in pt.paths)
        if key in seen:
            continue
        seen.add(key)
        row = {pt.q_var[p]: -vec[p] for p in pt.paths if vec[p]}
        row[uv] = ONE
        work.add_constraint(row, ">=", ZERO, name=f"env[#{len(seen)}]")
    work.set_objective("min", {uv: ONE})
    out = solve(work)
    if out.status != "optimal":
        raise PropertyViolation(f"envelope LP unexpectedly {out.status}")
    return out.value


def _price_extremes(model: MarketModel, cap: int) -> tuple[MeasurePolytope, EnlargedModel]:
    enl = enlarge(model, model.N)
    return build_polytope(enl, cap=cap), enl


def inject_arbitrage(
    rng: random.Random, gm: GeneratedModel, *, cap: int = DEFAULT_ENUM_CAP
) -> tuple[MarketModel, str]:
    """Move one quote strictly past its polytope extreme.

    The resulting price system admits no consistent martingale measure
    at all, so deterministic arbitrage must be detected at every shift.
    """
    model = gm.model
    pt, enl = _price_extremes(model, cap)
    kinds = []
    if model.L:
        kinds.append("european")
    if model.M:
        kinds.append("long")
    if model.N:
        kinds.append("short")
    if not kinds:
        raise ValueError("arbitrage injection needs at least one quoted option")
    kind = rng.choice(kinds)
    margin = rng.choice([Q(1, 4), Q(1, 2), ONE])
    if kind == "european":
        i = rng.randrange(model.L)
        vec = {p: enl.european_value(i, p) for p in range(enl.num_paths)}
        vmin, _, _ = pt.solve_extremum(vec, "min")
        alphas = [a for _, a in model.europeans]
        alphas[i] = vmin - margin
        return model.with_prices(alphas=alphas), kind
    if kind == "long":
        j = rng.randrange(model.M)
        env = _long_envelope_min(pt, j)
        betas = [b for _, b in model.americans_long]
        betas[j] = env - margin
        return model.with_prices(betas=betas), kind
    k = rng.randrange(model.N)
    vec = {p: enl.short_value(k, p) for p in range(enl.num_paths)}
    vmax, _, _ = pt.solve_extremum(vec, "max")
    gammas = [c for _, c in model.americans_short]
    gammas[k] = vmax + margin
    return model.with_prices(gammas=gammas), kind


def boundary_model(
    rng: random.Random,
    gm: GeneratedModel,
    offset: Q = ZERO,
    *,
    cap: int = DEFAULT_ENUM_CAP,
) -> tuple[MarketModel, str]:
    """Pin one quote exactly at (or offset inside) its polytope extreme.

    At offset 0 the best uniform slack is exactly zero: prices are
    consistent but not strictly so.  A small positive offset keeps
    strict no-arbitrage alive with slack at most the offset.
    """
    model = gm.model
    pt, enl = _price_extremes(model, cap)
    kinds = []
    if model.L:
        kinds.append("european")
    if model.M:
        kinds.append("long")
    if model.N:
        kinds.append("short")
    if not kinds:
        raise ValueError("boundary pinning needs at least one quoted option")
    kind = rng.choice(kinds)
    if kind == "european":
        i = rng.randrange(model.L)
        vec = {p: enl.european_value(i, p) for p in range(enl.num_paths)}
        vmin, _, _ = pt.solve_extremum(vec, "min")
        alphas = [a for _, a in model.europeans]
        alphas[i] = vmin + offset
        return model.with_prices(alphas=alphas), kind
    if kind == "long":
        j = rng.randrange(model.M)
        env = _long_envelope_min(pt, j)
        betas = [b for _, b in model.americans_long]
        betas[j] = env + offset
        return model.with_prices(betas=betas), kind
    k = rng.randrange(model.N)
    vec = {p: enl.short_value(k, p) for p in range(enl.num_paths)}
    vmax, _, _ = pt.solve_extremum(vec, "max")
    gammas = [c for _, c in model.americans_short]
    gammas[k] = vmax - offset
    return model.with_prices(gammas=gammas), kind


# -- kernel-family factory -----------------------------------------------------


def _random_vertex(rng: random.Random, arity: int) -> tuple[Q, ...]:
    while True:
        raw = [rng.choice([0, 1, 1, 2, 3]) for _ in range(arity)]
        total = sum(raw)
        if total:
            return tuple(Q(w, total) for w in raw)


def _dominating_law(
    model: MarketModel, nid: str, vertices: list[tuple[Q, ...]]
) -> dict[str, Q] | None:
    """One-step martingale over the union support dominating every vertex."""
    tree = model.tree
    kids = tree.children[nid]
    supported = [kid for i, kid in enumerate(kids) if any(v[i] > 0 for v in vertices)]
    lp = LinearProgram()
    qv = {kid: lp.add_var(f"q[{kid}]") for kid in supported}
    sv = lp.add_var("_s", nonneg=False)
    lp.add_constraint({qv[k]: ONE for k in supported}, "=", ONE, name="mass")
    here = model.stock.at(nid)
    for d in range(model.stock.dim):
        row = {}
        for kid in supported:
            step = model.stock.at(kid)[d] - here[d]
            if step:
                row[qv[kid]] = step
        if row:
            lp.add_constraint(row, "=", ZERO, name=f"mart[{d}]")
    for vi, vert in enumerate(vertices):
        for i, kid in enumerate(kids):
            if vert[i] > 0:
                lp.add_constraint({qv[kid]: ONE, sv: -vert[i]}, ">=", ZERO, name=f"dom[{vi};{kid}]")
    lp.set_objective("max", {sv: ONE})
    res = solve(lp)
    if res.status != "optimal" or res.x(sv) <= ZERO:
        return None
    return {kid: res.x(qv[kid]) for kid in supported if res.x(qv[kid])}


def random_kernel_model(
    rng: random.Random, *, seed: int | None = None, cap: int = DEFAULT_ENUM_CAP
) -> tuple[RobustModel, GeneratedModel]:
    """Random market with per-node vertex families, consistently priced.

    Each node's law family admits a single martingale law dominating
    all its vertices at once, so the product measure dominates every
    selector uniformly and quasi-sure pricing consistency holds by
    construction.
    """
    for _ in range(64):
        T = rng.choice([1, 1, 2])
        max_branch = 3 if T == 1 else rng.choice([2, 3])
        L = rng.choice([0, 1])
        M = rng.choice([0, 1])
        N = rng.choice([0, 1])
        dim = 1
        tree = random_tree(rng, T, max_branch)
        stock = random_stock(rng, tree, dim)
        probe = MarketModel(tree=tree, stock=stock,
                            weights={leaf: Q(1, len(tree.paths)) for leaf in tree.leaves})
        interior = node_interior(probe)
        if interior is None:
            continue

        kernels: dict[str, list[tuple[Q, ...]]] = {}
        laws: dict[str, dict[str, Q]] = {}
        ok = True
        for nid in sorted(tree.nodes, key=lambda n: (tree.nodes[n].time, n)):
            kids = tree.children[nid]
            if not kids:
                continue
            law = None
            for _try in range(8):
                count = rng.choice([1, 2, 2])
                vertices = [_random_vertex(rng, len(kids)) for _ in range(count)]
                law = _dominating_law(probe, nid, vertices)
                if law is not None:
                    break
            if law is None:
                # fall back to the interior law as a singleton family
                vertices = [tuple(interior[nid][k] for k in kids)]
                law = dict(interior[nid])
            kernels[nid] = vertices
            laws[nid] = law
            if not law:
                ok = False
        if not ok:
            continue

        pmeas = _product_path_measure(tree, laws)
        supported_kids = {
            nid: [k for k in tree.children[nid] if laws[nid].get(k, ZERO) > 0]
            for nid in laws
        }

        europeans = []
        for _i in range(L):
            payoff = _random_terminal(rng, tree)
            mean = sum((pmeas.get(pi, ZERO) * payoff.at(path[-1])
                        for pi, path in enumerate(tree.paths)), ZERO)
            europeans.append((payoff, mean + rng.choice(_MARGINS)))
        americans_long = []
        for _j in range(M):
            proc = _random_adapted(rng, tree)
            root = _snell_root(tree, proc, laws,
                               children_of=lambda nid: supported_kids.get(nid, ()))
            americans_long.append((proc, root + rng.choice(_MARGINS)))
        americans_short = []
        for _k in range(N):
            proc = _random_adapted(rng, tree)
            americans_short.append((proc, _clock_mean(tree, proc, pmeas) - rng.choice(_MARGINS)))

        model = MarketModel(
            tree=tree,
            stock=stock,
            europeans=europeans,
            americans_long=americans_long,
            americans_short=americans_short,
            claim=_random_adapted(rng, tree),
            weights={leaf: Q(1, len(tree.paths)) for leaf in tree.leaves},
            kernels=kernels,
        )
        if not _within_budget(model):
            continue
        rm = build_robust(model)
        if rm.num_selectors() > 64:
            continue
        return rm, GeneratedModel(model=model, laws=laws, pmeas=pmeas, seed=seed)
    raise PropertyViolation("kernel factory failed to hit its budget in 64 attempts")


# -- battery: classical hedging dualities --------------------------------------


def _describe(model: MarketModel) -> dict:
    return {
        "horizon": model.tree.horizon,
        "paths": len(model.tree.paths),
        "dim": model.stock.dim,
        "L": model.L,
        "M": model.M,
        "N": model.N,
    }


def check_duality(model: MarketModel, *, cap: int = DEFAULT_ENUM_CAP) -> dict:
    """Sub and super prices against their measure-side counterparts.

    Equalities are exact; both optimal measures are re-validated from
    the model data, and the sub-side value is re-derived with the
    backward-induction envelope of the epigraph optimum.
    """
    enl_sub = enlarge(model, model.N)
    enl_sup = enlarge(model, model.N + 1)
    sub = subhedge(enl_sub)
    sup = superhedge(enl_sup)
    pt_sub = build_polytope(enl_sub, cap=cap)
    pt_sup = build_polytope(enl_sup, cap=cap)
    dsub = dual_subhedge(enl_sub, cap=cap, polytope=pt_sub)
    dsup = dual_superhedge(enl_sup, cap=cap, polytope=pt_sup)
    if sub.price != dsub.value:
        raise PropertyViolation(
            f"sub-hedge duality gap: {rat_str(sub.price)} vs {rat_str(dsub.value)}")
    if sup.price != dsup.value:
        raise PropertyViolation(
            f"super-hedge duality gap: {rat_str(sup.price)} vs {rat_str(dsup.value)}")
    if not sub.price <= sup.price:
        raise PropertyViolation("sub-hedge price exceeds super-hedge price")
    for pt, rep in ((pt_sub, dsub), (pt_sup, dsup)):
        ok, ledger = pt.check(rep.measure)
        if not ok:
            bad = [e for e in ledger if not e["ok"]]
            raise PropertyViolation(f"dual measure fails re-validation: {bad[:3]}")
    env = snell_value(enl_sub, extend_claim(enl_sub, "sub"), dsub.measure)
    if env != dsub.value:
        raise PropertyViolation(
            f"epigraph value {rat_str(dsub.value)} differs from envelope {rat_str(env)}")
    att = pt_sup.expectation(dsup.measure, extend_claim(enl_sup, "super"))
    if att != dsup.value:
        raise PropertyViolation("super-side maximizer does not attain its value")
    return {
        **_describe(model),
        "sub": rat_str(sub.price),
        "super": rat_str(sup.price),
        "tau_rows": pt_sub.num_tau_rows,
    }


# -- battery: pricing consistency across the shift grid -------------------------


def _na_closed(enl: EnlargedModel, prices, cap: int) -> bool:
    """Existence of a full-support measure in the closed polytope."""
    pt = build_polytope(enl, prices=prices, cap=cap, include_positivity=True)
    out = max_slack(pt.lp, pt.pos_rows)
    if out.status == "infeasible":
        return False
    if out.status != "optimal":
        raise PropertyViolation(f"support-slack LP unexpectedly {out.status}")
    return out.slack > ZERO


def check_ftap_grid(
    model: MarketModel, *, cap: int = DEFAULT_ENUM_CAP, expect: str | None = None
) -> tuple[dict, SnaReport]:
    """No-arbitrage of shifted prices against the measure-side criterion.

    For every shift the trading-side verdict must coincide with the
    existence of a full-support consistent measure at the shifted
    quotes; verdicts must be monotone in the shift, shifts below the
    uniform slack must stay clean, and a nonpositive slack must put
    arbitrage at every shift.
    """
    enl = enlarge(model, model.N)
    sna = check_sna(enl, cap=cap)
    if expect == "sna" and not sna.holds:
        raise PropertyViolation("factory promised strict no-arbitrage but it fails")
    if expect == "fail" and sna.holds:
        raise PropertyViolation("corrosion promised an inconsistency but none appears")
    alphas = [a for _, a in model.europeans]
    betas = [b for _, b in model.americans_long]
    gammas = [c for _, c in model.americans_short]
    rows = []
    seen_false = False
    for eps in sorted(EPS_GRID):    # ascending: verdicts may only degrade
        shifted = (
            [a - eps for a in alphas],
            [b - eps for b in betas],
            [c + eps for c in gammas],
        )
        na_primal = not detect_arbitrage(enl, prices=shifted).found
        na_dual = _na_closed(enl, shifted, cap)
        if na_primal != na_dual:
            raise PropertyViolation(
                f"at shift {rat_str(eps)} trading says NA={na_primal} "
                f"but measures say NA={na_dual}")
        if seen_false and na_primal:
            raise PropertyViolation("no-arbitrage verdict is not monotone in the shift")
        seen_false = seen_false or not na_primal
        if sna.holds and eps <= sna.epsilon and not na_primal:
            raise PropertyViolation(
                f"shift {rat_str(eps)} sits inside slack {rat_str(sna.epsilon)} "
                "yet arbitrage appeared")
        if not sna.holds and na_primal:
            raise PropertyViolation(
                f"slack is not positive yet shift {rat_str(eps)} shows no arbitrage")
        rows.append({"eps": rat_str(eps), "na": na_primal})
    record = {
        **_describe(model),
        "holds": sna.holds,
        "epsilon": rat_str(sna.epsilon) if sna.epsilon is not None else None,
        "grid": rows,
    }
    return record, sna


# -- battery: price chain and measure transport --------------------------------


def check_chain(
    model: MarketModel, sna: SnaReport, duality: dict, *, cap: int = DEFAULT_ENUM_CAP
) -> dict:
    """Three-term price chain plus lift and push transports.

    The chain ends must reproduce the hedging prices; when strict
    no-arbitrage holds, the certificate measure is lifted to the larger
    space, pushed onto sample stopping times, and used to bracket the
    closed maximum by strictly consistent measures.
    """
    enl_sub = enlarge(model, model.N)
    enl_sup = enlarge(model, model.N + 1)
    chain = e2_chain(enl_sub, enl_sup, cap=cap)
    if rat_str(chain.lower) != duality["sub"] or rat_str(chain.upper) != duality["super"]:
        raise PropertyViolation("chain ends disagree with the hedging prices")
    record = {
        "lower": rat_str(chain.lower),
        "middle": rat_str(chain.middle),
        "upper": rat_str(chain.upper),
        "strict_upper": chain.strict_upper,
        "num_taus": chain.num_taus,
    }
    if not sna.holds:
        return record
    cert = sna.certificate.measure
    pt_sup = build_polytope(enl_sup, cap=cap)
    lifted = lift_measure_uniform_clock(enl_sub, enl_sup, cert, cap=cap, polytope=pt_sup)
    taus = restricted_stopping_times(enl_sub, range(enl_sub.num_paths), cap)
    pushes = []
    for tau in (taus[0], taus[len(taus) // 2]):
        push = push_stopping_measure(enl_sub, enl_sup, cert, tau, cap=cap, polytope=pt_sup)
        if push.value > chain.middle:
            raise PropertyViolation("pushed stop value exceeds the best stopped value")
        pushes.append(rat_str(push.value))
    bracket = strict_value_bracket(pt_sup, extend_claim(enl_sup, "super"), lifted)
    lam, val = bracket[-1]
    record.update({
        "pushes": pushes,
        "bracket_lam": rat_str(lam),
        "bracket_gap": rat_str(chain.upper - val),
    })
    return record


# -- battery: structural degenerations -----------------------------------------


def check_degenerations(
    model: MarketModel, sna: SnaReport, duality: dict, *, cap: int = DEFAULT_ENUM_CAP
) -> dict:
    """Limiting cases with forced outcomes.

    A constant claim must price to that constant on both sides; prices,
    slack, and arbitrage verdicts must not react to the clock-weight
    profile; moving one quote against the hedger inside the slack
    budget must move prices weakly in its favor; and with no shorted
    options the enlarged space must collapse onto the base tree.
    """
    record: dict = {}
    N = model.N

    # clock weights never enter the consistent-measure polytope
    enl_sk = enlarge(model, N, clock_weights="skewed")
    sub_sk = subhedge(enl_sk)
    if rat_str(sub_sk.price) != duality["sub"]:
        raise PropertyViolation("sub-hedge price moved with the clock weights")
    sup_sk = superhedge(enlarge(model, N + 1, clock_weights="skewed"))
    if rat_str(sup_sk.price) != duality["super"]:
        raise PropertyViolation("super-hedge price moved with the clock weights")
    holds_sk, cert_sk = ftap_certificate(enl_sk, cap=cap)
    if holds_sk != sna.holds or cert_sk.slack != sna.epsilon:
        raise PropertyViolation("uniform slack moved with the clock weights")
    eps = Q(1, 16)
    shifted = (
        [a - eps for _, a in model.europeans],
        [b - eps for _, b in model.americans_long],
        [c + eps for _, c in model.americans_short],
    )
    if detect_arbitrage(enl_sk, prices=shifted).found != \
            detect_arbitrage(enlarge(model, N), prices=shifted).found:
        raise PropertyViolation("arbitrage verdict moved with the clock weights")
    record["clock_invariant"] = True

    if sna.holds:
        const = Q(5, 3)
        flat = AdaptedProcess(dim=1, values={nid: (const,) for nid in model.tree.nodes})
        m_flat = dataclasses.replace(model, claim=flat)
        lo = subhedge(enlarge(m_flat, N)).price
        hi = superhedge(enlarge(m_flat, N + 1)).price
        if lo != const or hi != const:
            raise PropertyViolation(
                f"constant claim prices to [{rat_str(lo)}, {rat_str(hi)}], not itself")
        record["constant_claim"] = rat_str(const)

        # weakening one quote can only help the hedger on both sides
        bump = sna.epsilon / 2
        sub0 = rat(duality["sub"])
        sup0 = rat(duality["super"])
        moved = []
        variants = []
        if model.L:
            alphas = [a for _, a in model.europeans]
            alphas[0] -= bump
            variants.append(("alpha", model.with_prices(alphas=alphas)))
        if model.M:
            betas = [b for _, b in model.americans_long]
            betas[0] -= bump
            variants.append(("beta", model.with_prices(betas=betas)))
        if model.N:
            gammas = [c for _, c in model.americans_short]
            gammas[0] += bump
            variants.append(("gamma", model.with_prices(gammas=gammas)))
        for name, m2 in variants:
            sub2 = subhedge(enlarge(m2, N)).price
            sup2 = superhedge(enlarge(m2, N + 1)).price
            if sub2 < sub0 or sup2 > sup0:
                raise PropertyViolation(
                    f"weakened {name} quote moved a price against the hedger")
            moved.append(name)
        record["monotone"] = moved

    if N == 0:
        enl0 = enlarge(model, 0)
        tree = model.tree
        if enl0.num_paths != len(tree.paths) or len(enl0.enodes) != len(tree.nodes):
            raise PropertyViolation("zero-clock space does not match the base tree")
        claim_at = extend_claim(enl0, "sub")
        for p in range(enl0.num_paths):
            ep = enl0.epaths[p]
            if ep.clocks != () or ep.base_index != p:
                raise PropertyViolation("zero-clock paths are not the base paths")
            if enl0.weight(p) != model.path_weight(p):
                raise PropertyViolation("zero-clock weights differ from the base weights")
            for t, v in enumerate(ep.node_seq):
                node = enl0.enode(v)
                if node.base != tree.paths[p][t] or node.status != ():
                    raise PropertyViolation("zero-clock nodes are not the base nodes")
                if model.claim is not None and claim_at[v] != model.claim.scalar(node.base):
                    raise PropertyViolation("zero-clock claim differs from the base claim")
        record["zero_clock_iso"] = True
    return record


def check_depth_zero() -> dict:
    """A single-date market: both prices equal the claim's root value."""
    const = Q(7, 4)
    tree = EventTree([Node("n0", 0, None)], 0)
    model = MarketModel(
        tree=tree,
        stock=AdaptedProcess(dim=1, values={"n0": (ONE,)}),
        claim=AdaptedProcess(dim=1, values={"n0": (const,)}),
        weights={"n0": ONE},
    )
    lo = subhedge(enlarge(model, 0)).price
    hi = superhedge(enlarge(model, 1)).price
    if lo != const or hi != const:
        raise PropertyViolation("single-date market does not price the claim to itself")
    return {"value": rat_str(const)}


# -- battery: singleton kernels degenerate to the classical engine --------------


def check_singleton_robust(
    gm: GeneratedModel, sna: SnaReport, duality: dict, *, cap: int = DEFAULT_ENUM_CAP
) -> dict:
    """A one-vertex full-support family must reproduce classical answers."""
    model = gm.model
    tree = model.tree
    kernels = {
        nid: [tuple(gm.laws[nid][k] for k in tree.children[nid])]
        for nid in gm.laws
    }
    rm = build_robust(model, kernels)
    renl_sub = enlarge_robust(rm, model.N)
    renl_sup = enlarge_robust(rm, model.N + 1)
    na = robust_na(renl_sub)
    if not na.holds:
        raise PropertyViolation("singleton family reports arbitrage in a clean market")
    sub = robust_subhedge(renl_sub, cap=cap)
    sup = robust_superhedge_full(renl_sup, cap=cap)
    if rat_str(sub.price) != duality["sub"] or rat_str(sup.price) != duality["super"]:
        raise PropertyViolation("singleton family moved a hedging price")
    rf = robust_ftap(renl_sub, cap=cap)
    if rf.holds != sna.holds:
        raise PropertyViolation("singleton family flipped the consistency verdict")
    return {"sub": rat_str(sub.price), "super": rat_str(sup.price), "holds": rf.holds}


# -- battery: divisibility -----------------------------------------------------


def check_divisibility(model: MarketModel) -> dict:
    report = verify_divisibility_equivalence(model)
    if not report.equal:
        raise PropertyViolation("clock-indexed and enlarged formulations disagree")
    return {
        **_describe(model),
        "sub": rat_str(report.sub_indexed),
        "super": rat_str(report.super_indexed),
        "european": rat_str(report.european_indexed),
        "lift_checks": report.lift_checks,
        "sna_grid": [(rat_str(e), a) for e, a, _ in report.sna_grid],
    }


# -- battery: kernel families --------------------------------------------------


def check_robust_model(
    rm: RobustModel,
    *,
    cap: int = DEFAULT_ENUM_CAP,
    submarkets: bool = False,
) -> dict:
    """Full quasi-sure battery for one kernel family.

    Stock-only price equals its backward induction, quoted options only
    cheapen the hedge, consistency holds and transfers to the space
    with the extra clock, and dropping a vertex can only shrink the
    support, moving prices weakly inward.
    """
    model = rm.model
    renl_sub = enlarge_robust(rm, model.N)
    renl_sup = enlarge_robust(rm, model.N + 1)

    na = robust_na(renl_sub)
    if not na.holds:
        raise PropertyViolation("kernel factory promised no arbitrage but it fails")

    zeta = extend_claim(renl_sup.enl, "super")
    stock_only = robust_superhedge_stock(renl_sup, zeta)
    dp = dp_superhedge(renl_sup, zeta)
    if stock_only.na_failed or stock_only.value != dp.value:
        raise PropertyViolation(
            "stock-only price disagrees with its backward induction")

    sub = robust_subhedge(renl_sub, cap=cap)
    sup = robust_superhedge_full(renl_sup, cap=cap)
    if not sub.price <= sup.price <= stock_only.value:
        raise PropertyViolation("quasi-sure prices are not sandwiched")

    if model.L:
        payoffs = [
            {p: renl_sup.enl.european_value(i, p) for p in renl_sup.supported_paths}
            for i in range(model.L)
        ]
        alphas = [a for _, a in model.europeans]
        ropt = robust_superhedge_options(renl_sup, zeta, payoffs, alphas)
        if not sup.price <= ropt.value <= stock_only.value:
            raise PropertyViolation("static buy-side book is not sandwiched")

    low, high = ftap_transfer(rm, cap=cap)
    if not low.holds:
        raise PropertyViolation("kernel factory promised consistency but it fails")
    if submarkets and model.M:
        rf = robust_ftap(renl_sub, cap=cap, submarkets=True)
        if rf.submarket_slacks is None:
            raise PropertyViolation("submarket sweep did not run")

    record = {
        **_describe(model),
        "selectors": rm.num_selectors(),
        "sub": rat_str(sub.price),
        "super": rat_str(sup.price),
        "stock_only": rat_str(stock_only.value),
        "dp_lps": dp.lp_count,
        "epsilon": rat_str(low.epsilon) if low.epsilon is not None else None,
    }

    # dropping a vertex shrinks the support: while the quotes stay
    # consistent on the smaller support, prices move weakly inward;
    # losing consistency outright is a legitimate outcome
    wide = next((nid for nid in rm.node_order if len(rm.kernels[nid]) > 1), None)
    if wide is not None:
        kernels2 = {nid: list(v) for nid, v in rm.kernels.items()}
        kernels2[wide] = kernels2[wide][:-1]
        rm2 = build_robust(model, kernels2)
        try:
            sub2 = robust_subhedge(enlarge_robust(rm2, model.N), cap=cap)
            sup2 = robust_superhedge_full(enlarge_robust(rm2, model.N + 1), cap=cap)
        except SnaFailure:
            record["dropped_vertex"] = wide
            record["dropped_consistent"] = False
        else:
            if sup2.price > sup.price or sub2.price < sub.price:
                raise PropertyViolation("shrinking the family widened the price interval")
            record["dropped_vertex"] = wide
            record["dropped_consistent"] = True
    return record


def check_minimax_instance(
    rng: random.Random, rm: RobustModel, *, cap: int = DEFAULT_ENUM_CAP
) -> dict:
    """Liquidation/measure interchange on explicit small generators."""
    renl = enlarge_robust(rm, rm.model.N)
    num_streams = rng.choice([1, 2])
    streams = []
    for _ in range(num_streams):
        streams.append({
            v: _grid_value(rng, Q(-1), Q(2)) for v in renl.supported_enodes()
        })
    selectors = renl.robust.selectors()
    if len(selectors) <= 3:
        vertices = None
        num_vertices = len(selectors)
    else:
        vertices = []
        for sel in selectors[:3]:
            base = renl.vertex_measure(sel)
            tilt = {p: q * rng.choice([ONE, Q(2), Q(3)]) for p, q in base.items()}
            total = sum(tilt.values(), ZERO)
            vertices.append({p: q / total for p, q in tilt.items()})
        num_vertices = len(vertices)
    report = verify_minimax(renl, streams, vertices, cap=cap)
    return {
        "value": rat_str(report.value),
        "streams": report.num_streams,
        "vertices": num_vertices,
        "taus": report.num_taus,
    }


# -- the campaign --------------------------------------------------------------


def run_campaign(
    seed: int,
    *,
    models: int = 50,
    cap: int = DEFAULT_ENUM_CAP,
    progress=None,
) -> dict:
    """Seeded end-to-end sweep; any property failure raises.

    The main corpus runs dualities, the shift grid, the price chain,
    degenerations, and the singleton-family reduction per model.
    Derived corpora cover corroded and boundary-pinned prices,
    divisibility, kernel families, and the liquidation interchange.
    """
    rng = random.Random(seed)

    def note(msg: str) -> None:
        if progress is not None:
            progress(msg)

    def scaled(base: int) -> int:
        return max(3, models * base // 50)

    sections: dict[str, list] = {
        "duality": [], "ftap": [], "chain": [], "degenerations": [],
        "singleton": [], "adversarial": [], "divisibility": [],
        "kernel": [], "minimax": [],
    }
    strict_gaps = 0

    for i in range(models):
        mseed = rng.randrange(2 ** 32)
        gm = random_sna_model(random.Random(mseed), seed=mseed)
        duality = check_duality(gm.model, cap=cap)
        grid, sna = check_ftap_grid(gm.model, cap=cap, expect="sna")
        chain = check_chain(gm.model, sna, duality, cap=cap)
        degen = check_degenerations(gm.model, sna, duality, cap=cap)
        singleton = check_singleton_robust(gm, sna, duality, cap=cap)
        for key, rec in (("duality", duality), ("ftap", grid), ("chain", chain),
                         ("degenerations", degen), ("singleton", singleton)):
            rec = dict(rec)
            rec["seed"] = mseed
            sections[key].append(rec)
        if chain["strict_upper"]:
            strict_gaps += 1
        note(f"model {i + 1}/{models} ok (seed {mseed})")

    n_adv = scaled(20)
    for i in range(n_adv):
        mseed = rng.randrange(2 ** 32)
        mrng = random.Random(mseed)
        gm = random_sna_model(mrng, require_option=True, seed=mseed)
        mode = i % 3
        if mode == 0:
            bad, kind = inject_arbitrage(mrng, gm, cap=cap)
            rec, sna = check_ftap_grid(bad, cap=cap, expect="fail")
            rec["mode"] = f"inject:{kind}"
        elif mode == 1:
            bad, kind = boundary_model(mrng, gm, ZERO, cap=cap)
            rec, sna = check_ftap_grid(bad, cap=cap, expect="fail")
            if sna.epsilon != ZERO:
                raise PropertyViolation("pinned quote should have exactly zero slack")
            rec["mode"] = f"pin:{kind}"
        else:
            bad, kind = boundary_model(mrng, gm, BOUNDARY_OFFSET, cap=cap)
            rec, sna = check_ftap_grid(bad, cap=cap, expect="sna")
            if sna.epsilon > BOUNDARY_OFFSET:
                raise PropertyViolation("offset quote should cap the slack")
            rec["mode"] = f"offset:{kind}"
        rec["seed"] = mseed
        sections["adversarial"].append(rec)
        note(f"adversarial {i + 1}/{n_adv} ok (seed {mseed})")

    n_div = scaled(20)
    for i in range(n_div):
        mseed = rng.randrange(2 ** 32)
        gm = random_sna_model(random.Random(mseed), force_n=1 + i % 2, seed=mseed)
        rec = check_divisibility(gm.model)
        rec["seed"] = mseed
        sections["divisibility"].append(rec)
        note(f"divisibility {i + 1}/{n_div} ok (seed {mseed})")

    n_kern = scaled(30)
    kernel_models = []
    for i in range(n_kern):
        mseed = rng.randrange(2 ** 32)
        mrng = random.Random(mseed)
        rm, _gm = random_kernel_model(mrng, seed=mseed, cap=cap)
        kernel_models.append((mseed, rm))
        rec = check_robust_model(rm, cap=cap, submarkets=(i % 3 == 0))
        rec["seed"] = mseed
        sections["kernel"].append(rec)
        note(f"kernel {i + 1}/{n_kern} ok (seed {mseed})")

    n_mm = scaled(20)
    for i in range(n_mm):
        mseed, rm = kernel_models[i % len(kernel_models)]
        rec = check_minimax_instance(random.Random(mseed ^ 0x5EED), rm, cap=cap)
        rec["seed"] = mseed
        sections["minimax"].append(rec)
        note(f"minimax {i + 1}/{n_mm} ok (seed {mseed})")

    depth0 = check_depth_zero()
    note("degenerate single-date market ok")

    # deterministic strict-gap witness: the chain can be properly strict
    wedge = strict_chain_market()
    wedge_duality = check_duality(wedge, cap=cap)
    _, wedge_sna = check_ftap_grid(wedge, cap=cap, expect="sna")
    wedge_chain = check_chain(wedge, wedge_sna, wedge_duality, cap=cap)
    if not wedge_chain["strict_upper"]:
        raise PropertyViolation("canonical strict-gap market lost its gap")
    strict_gaps += 1
    note("strict-gap witness ok")

    return {
        "seed": seed,
        "models": models,
        "counts": {name: len(rows) for name, rows in sections.items()},
        "strict_chain_gaps": strict_gaps,
        "depth_zero": depth0,
        "sections": sections,
        "ok": True,
    }
