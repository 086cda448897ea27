"""Instance families, their utilities, and the canonical file format.

Families: explicit tabular priors with stochastic-coverage utilities, product
priors over random cover systems, the bags round-complexity instance, and the
three-element truncation pair.  Families that admit closed-form or vectorized
scoring install fast_marginals/fast_sav hooks on the built instance.
"""
from __future__ import annotations

import itertools
import json
import math
from typing import Any, Iterable, Sequence

import numpy as np

from .engine import cap_value
from .errors import (
    InconsistentObservationError,
    InfeasibleError,
    MalformedInputError,
    TooLargeError,
)
from .model import (
    AlreadyObservedError,
    CoverageSpec,
    Instance,
    PartialRealization,
    Prior,
    ProductPrior,
    Realization,
    TablePrior,
    UtilityFunction,
)

# --- utility families --------------------------------------------------------


class CoverUtility(UtilityFunction):
    """Weighted stochastic coverage: (element, outcome) covers a fixed subset
    of a universe; f = total weight of the union of covered subsets.

    Monotone and adaptive submodular for any prior when covers depend only on
    the element's own outcome.
    """

    def __init__(
        self,
        universe: int,
        covers: Sequence[Sequence[Iterable[int]]],
        weights: Sequence[float] | None = None,
    ):
        if universe < 0:
            raise MalformedInputError("universe size cannot be negative")
        self.universe = universe
        self.covers = tuple(
            tuple(frozenset(int(u) for u in per_outcome) for per_outcome in per_element)
            for per_element in covers
        )
        for per_element in self.covers:
            for s in per_element:
                for u in s:
                    if not (0 <= u < universe):
                        raise MalformedInputError(f"covered item {u} outside universe")
        if weights is not None:
            weights = tuple(float(w) for w in weights)
            if len(weights) != universe:
                raise MalformedInputError("item weight vector length must equal universe size")
            if any(w < 0 for w in weights):
                raise MalformedInputError("item weights must be non-negative")
        self.weights = weights
        self.name = "coverage"
        self._bits = tuple(
            tuple(self._to_bits(s) for s in per_element) for per_element in self.covers
        )
        self._grid: np.ndarray | None = None

    @staticmethod
    def _to_bits(items: frozenset[int]) -> int:
        acc = 0
        for u in items:
            acc |= 1 << u
        return acc

    def num_outcomes(self) -> int:
        return max((len(p) for p in self.covers), default=0)

    def covered_bits(self, psi: PartialRealization) -> int:
        acc = 0
        for e, o in psi.pairs:
            acc |= self._bits[e][o]
        return acc

    def __call__(self, psi: PartialRealization) -> float:
        acc = self.covered_bits(psi)
        if self.weights is None:
            return float(acc.bit_count())
        total = 0.0
        u = 0
        while acc:
            if acc & 1:
                total += self.weights[u]
            acc >>= 1
            u += 1
        return total

    def grid(self) -> np.ndarray:
        """(n, m, U) float mask grid, item weights folded in; built lazily."""
        if self._grid is None:
            n = len(self.covers)
            m = self.num_outcomes()
            g = np.zeros((n, m, self.universe))
            for e, per_element in enumerate(self.covers):
                for o, s in enumerate(per_element):
                    for u in s:
                        g[e, o, u] = 1.0 if self.weights is None else self.weights[u]
            self._grid = g
        return self._grid


class BagCountUtility(UtilityFunction):
    """Number of distinct outcome labels observed (outcomes encode group ids)."""

    def __init__(self):
        self.name = "bag-count"

    def __call__(self, psi: PartialRealization) -> float:
        return float(len({o for _e, o in psi.pairs}))


class MatchPairUtility(UtilityFunction):
    """Three elements x=0, y=1, z=2: z contributes 1; exactly one of x, y
    contributes 1; both contribute 2 on equal outcomes and 0 otherwise.
    With truncated=True the value is capped at 1, which is the standard
    counterexample to truncation preserving the diminishing-returns property.
    """

    def __init__(self, truncated: bool = False):
        self.truncated = truncated
        self.name = "match-pair-trunc" if truncated else "match-pair"

    def __call__(self, psi: PartialRealization) -> float:
        v = 1.0 if 2 in psi else 0.0
        has_x, has_y = 0 in psi, 1 in psi
        if has_x and has_y:
            v += 2.0 if psi.outcome(0) == psi.outcome(1) else 0.0
        elif has_x or has_y:
            v += 1.0
        return min(v, 1.0) if self.truncated else v


class ModularUtility(UtilityFunction):
    """Additive per-(element, outcome) values."""

    def __init__(self, values: Sequence[Sequence[float]]):
        self.values = tuple(tuple(float(v) for v in row) for row in values)
        self.name = "modular"

    def __call__(self, psi: PartialRealization) -> float:
        return math.fsum(self.values[e][o] for e, o in psi.pairs)


# --- bags prior ---------------------------------------------------------------


def _multinomial(n: int, sizes: Sequence[int]) -> int:
    total = math.factorial(n)
    for c in sizes:
        total //= math.factorial(c)
    return total


class BagsPrior(Prior):
    """Uniformly random decomposition of the ground set into bags of fixed
    sizes; the outcome of an element is its bag id.

    Exchangeability gives closed-form free-slot conditionals:
    P(element in bag j | psi) = (remaining capacity of j) / (unassigned count).
    """

    def __init__(self, sizes: Sequence[int], _base: PartialRealization | None = None):
        sizes = tuple(int(c) for c in sizes)
        if not sizes or any(c < 1 for c in sizes):
            raise MalformedInputError("bag sizes must be positive")
        self.sizes = sizes
        self.n = sum(sizes)
        self.num_outcomes = len(sizes)
        self.kind = "bags"
        self._base = _base if _base is not None else PartialRealization()
        self._check(self._base)

    def _check(self, psi: PartialRealization) -> list[int]:
        free = list(self.sizes)
        for e, o in psi.pairs:
            if not (0 <= o < self.num_outcomes):
                raise InconsistentObservationError(f"bag id {o} out of range")
            free[o] -= 1
            if free[o] < 0:
                raise InconsistentObservationError(f"bag {o} over capacity in {psi!r}")
        return free

    def _merged(self, psi: PartialRealization) -> PartialRealization:
        return self._base.union(psi) if len(self._base) else psi

    def support_size(self) -> int:
        free = self._check(self._base)
        return _multinomial(self.n - len(self._base), [c for c in free])

    def support(self):
        cap = cap_value("max_support")
        if self.support_size() > cap:
            raise TooLargeError(
                f"bag decomposition support {self.support_size()} exceeds cap {cap}"
            )
        w = 1.0 / self.support_size()
        base = dict(self._base.pairs)
        unassigned = [e for e in range(self.n) if e not in base]
        free = self._check(self._base)

        def rec(idx: int, free: list[int], acc: dict[int, int]):
            if idx == len(unassigned):
                yield tuple(acc[e] for e in range(self.n)), w
                return
            e = unassigned[idx]
            for j in range(self.num_outcomes):
                if free[j] > 0:
                    free[j] -= 1
                    acc[e] = j
                    yield from rec(idx + 1, free, acc)
                    free[j] += 1
            acc.pop(e, None)

        yield from rec(0, free, dict(base))

    def sample(self, rng) -> Realization:
        if len(self._base) == 0:
            # Unconditioned: lay bag labels over a random permutation.
            perm = rng.permutation(self.n)
            labels = np.repeat(np.arange(self.num_outcomes), self.sizes)
            out = np.empty(self.n, dtype=int)
            out[perm] = labels
            return tuple(int(o) for o in out)
        free = self._check(self._base)
        out = dict(self._base.pairs)
        left = self.n - len(out)
        for e in range(self.n):
            if e in out:
                continue
            u = rng.random() * left
            acc = 0.0
            pick = self.num_outcomes - 1
            for j in range(self.num_outcomes):
                acc += free[j]
                if u < acc:
                    pick = j
                    break
            out[e] = pick
            free[pick] -= 1
            left -= 1
        return tuple(out[e] for e in range(self.n))

    def outcome_dist(self, e: int, psi: PartialRealization):
        merged = self._merged(psi)
        if e in merged:
            raise AlreadyObservedError(f"element {e} already observed")
        free = self._check(merged)
        left = self.n - len(merged)
        return tuple((j, free[j] / left) for j in range(self.num_outcomes) if free[j] > 0)

    def condition(self, psi: PartialRealization) -> "BagsPrior":
        return BagsPrior(self.sizes, _base=self._merged(psi))

    def mass(self, psi: PartialRealization) -> float:
        try:
            merged = self._merged(psi)
        except InconsistentObservationError:
            return 0.0
        try:
            free = self._check(merged)
        except InconsistentObservationError:
            return 0.0
        # Sequential slot draws for the part of psi beyond the base.
        base_free = self._check(self._base)
        p = 1.0
        left = self.n - len(self._base)
        free_now = list(base_free)
        for e, o in psi.pairs:
            if e in self._base:
                continue
            p *= free_now[o] / left
            free_now[o] -= 1
            left -= 1
        return p

    def min_weight(self) -> float:
        return 1.0 / self.support_size()


# --- family builders ----------------------------------------------------------


def _bags_reveal(phi: Realization, e: int) -> list[tuple[int, int]]:
    bag = phi[e]
    return [(i, bag) for i, o in enumerate(phi) if o == bag]


def _bags_fast_marginals(inst: Instance, psi: PartialRealization, cands, cap=None):
    sizes = inst.prior.sizes
    seen = {o for _e, o in psi.pairs}
    left = inst.n - len(psi)
    if left <= 0:
        return [0.0 for _ in cands]
    free = list(sizes)
    for _e, o in psi.pairs:
        free[o] -= 1
    unseen_mass = sum(free[j] for j in range(len(sizes)) if j not in seen)
    const = unseen_mass / left
    return [0.0 if e in psi else const for e in cands]


def _bags_fast_sav(inst: Instance, psi: PartialRealization, pending, cands, ctx, cap=None):
    sizes = inst.prior.sizes
    k = len(sizes)
    seen = {o for _e, o in psi.pairs}
    free = list(sizes)
    for _e, o in psi.pairs:
        free[o] -= 1
    T = inst.n - len(psi)
    m = len(pending)
    blocked = set(psi.domain) | set(pending)
    if T - m <= 0:
        return [0.0 for _ in cands], 0.0

    sav_const = 0.0
    denom_mass = 0.0
    for j in range(k):
        if j in seen or free[j] == 0:
            continue
        # e lands in j, then the batch avoids j's remaining slots
        avoid_given_e = 1.0
        for i in range(m):
            avoid_given_e *= ((T - 1 - i) - (free[j] - 1)) / (T - 1 - i)
        sav_const += (free[j] / T) * avoid_given_e
        # the batch avoids j entirely (for the post-batch best marginal)
        avoid = 1.0
        for i in range(m):
            avoid *= ((T - i) - free[j]) / (T - i)
        denom_mass += free[j] * avoid
    denom = denom_mass / (T - m)
    savs = [0.0 if e in blocked else sav_const for e in cands]
    return savs, denom


def build_bags(k: int, seed: int | None = None) -> Instance:
    """Ground set of 2^k − 1 elements in k bags of sizes 2^0..2^{k−1} under a
    uniformly random decomposition; value = distinct bags among selections;
    selecting an element also reveals all of its bag-mates.

    The family is permutation-symmetric, so the seed does not alter the
    distribution; the parameter exists for interface uniformity.
    """
    if k < 1:
        raise MalformedInputError("bag count must be >= 1")
    if k > 12:
        raise TooLargeError("bag count above 12 (ground set 2^k - 1 is unmanageable)")
    sizes = tuple(2**j for j in range(k))
    prior = BagsPrior(sizes)
    return Instance(
        name=f"bags-k{k}",
        n=prior.n,
        num_outcomes=k,
        prior=prior,
        utility=BagCountUtility(),
        coverage=CoverageSpec(quota=float(k), eta=1.0),
        reveal=_bags_reveal,
        fast_marginals=_bags_fast_marginals,
        fast_sav=_bags_fast_sav,
    )


def build_truncation_pair() -> tuple[Instance, Instance]:
    """The three-element pair: f in-class, g = min(f, 1) with a known violation."""
    prior = ProductPrior([[0.5, 0.5], [0.5, 0.5], [1.0, 0.0]])
    f_inst = Instance(
        name="trunc-f", n=3, num_outcomes=2, prior=prior, utility=MatchPairUtility(False)
    )
    g_inst = Instance(
        name="trunc-g", n=3, num_outcomes=2, prior=prior, utility=MatchPairUtility(True)
    )
    return f_inst, g_inst


def _cover_fast_hooks(prior: ProductPrior, utility: CoverUtility):
    """Vectorized marginal/batch scoring for product priors over cover systems."""

    n = prior.n
    m = utility.num_outcomes()
    grid = None  # (n, m, U), built on first use
    marg = None  # (n, m) outcome probabilities

    def _ensure():
        nonlocal grid, marg
        if grid is None:
            grid = utility.grid()
            mm = np.zeros((n, m))
            for e in range(n):
                for o, p in enumerate(prior.marginals[e]):
                    mm[e, o] = p
            marg = mm

    def _branches(pending, ctx):
        """(outcome matrix (B, q), weights (B,)) for the pending batch."""
        nnz = [prior._nonzero[e] for e in pending]
        count = 1
        for opts in nnz:
            count *= len(opts)
        if count <= cap_value("branch_cap"):
            outs = np.array(
                [c for c in itertools.product(*[[o for o, _p in opts] for opts in nnz])],
                dtype=int,
            ).reshape(count, len(pending))
            ws = np.ones(count)
            for col, opts in enumerate(nnz):
                probs = {o: p for o, p in opts}
                ws *= np.array([probs[o] for o in outs[:, col]])
            return outs, ws
        if ctx is not None:
            ctx.flags.add("sav-mc")
        rng = ctx.rng if ctx is not None else np.random.default_rng(0)
        B = cap_value("mc_fallback")
        outs = np.empty((B, len(pending)), dtype=int)
        for col, opts in enumerate(nnz):
            labels = np.array([o for o, _p in opts])
            probs = np.array([p for _o, p in opts])
            outs[:, col] = labels[
                np.searchsorted(np.cumsum(probs), rng.random(B), side="right").clip(
                    0, len(labels) - 1
                )
            ]
        return outs, np.full(B, 1.0 / B)

    def fast_sav(inst, psi, pending, cands, ctx, cap=None):
        _ensure()
        w_items = (
            np.ones(utility.universe)
            if utility.weights is None
            else np.array(utility.weights)
        )
        covered = np.zeros(utility.universe, dtype=bool)
        for e, o in psi.pairs:
            covered |= grid[e, o] > 0
        uw = w_items * ~covered
        blocked = set(psi.domain) | set(pending)
        allowed = np.array([e not in blocked for e in range(n)])
        if not allowed.any():
            return [0.0 for _ in cands], 0.0
        if pending:
            outs, ws = _branches(list(pending), ctx)
            B = outs.shape[0]
            branch_cov = np.zeros((B, utility.universe), dtype=bool)
            for col, p in enumerate(pending):
                branch_cov |= grid[p, outs[:, col]] > 0
            R = uw * ~branch_cov
        else:
            R = uw[None, :]
            ws = np.ones(1)
            B = 1
        gains = R @ grid.reshape(n * m, utility.universe).T  # (B, n*m)
        if cap is not None:
            base_val = float(w_items[covered].sum())
            val_b = base_val + (uw.sum() - R.sum(axis=1))
            headroom = np.maximum(cap - val_b, 0.0)
            gains = np.minimum(gains, headroom[:, None])
        eg = (gains.reshape(B, n, m) * marg[None, :, :]).sum(axis=2)  # (B, n)
        sav_all = ws @ eg
        denom = float(ws @ eg[:, allowed].max(axis=1))
        savs = [0.0 if e in blocked else float(sav_all[e]) for e in cands]
        return savs, denom

    def fast_marginals(inst, psi, cands, cap=None):
        savs, _denom = fast_sav(inst, psi, [], cands, None, cap)
        return savs

    return fast_marginals, fast_sav


def build_stochastic_cover(
    n: int, universe_size: int, outcomes_per_element: int = 2, seed: int = 0
) -> Instance:
    """Random cover system under an independent product prior.

    Each (element, outcome) covers a random subset of the universe; every item
    is additionally assigned to one element under all its outcomes, so the full
    ground set always covers everything and the quota (the whole universe,
    eta = 1) is reachable on every realization.
    """
    if n < 0 or universe_size < 0:
        raise MalformedInputError("sizes cannot be negative")
    if outcomes_per_element < 1:
        raise MalformedInputError("need at least one outcome per element")
    rng = np.random.default_rng(seed)
    m = outcomes_per_element
    marginals = []
    for _e in range(n):
        if m == 1:
            marginals.append([1.0])
            continue
        raw = rng.uniform(0.15, 0.85, size=m)
        marginals.append([float(x) for x in raw / raw.sum()])
    covers = [[set() for _o in range(m)] for _e in range(n)]
    for e in range(n):
        for o in range(m):
            for u in range(universe_size):
                if rng.random() < 0.3:
                    covers[e][o].add(u)
    if n > 0:
        for u in range(universe_size):
            anchor = int(rng.integers(0, n))
            for o in range(m):
                covers[anchor][o].add(u)
    prior = ProductPrior(marginals)
    utility = CoverUtility(universe_size, [[sorted(s) for s in row] for row in covers])
    fm, fs = _cover_fast_hooks(prior, utility)
    return Instance(
        name=f"cover-n{n}-u{universe_size}-m{m}-s{seed}",
        n=n,
        num_outcomes=m,
        prior=prior,
        utility=utility,
        coverage=CoverageSpec(quota=float(universe_size), eta=1.0),
        fast_marginals=fm,
        fast_sav=fs,
    )


def build_random_tabular(
    n: int,
    m_realizations: int,
    seed: int = 0,
    universe_size: int | None = None,
    max_attempts: int = 200,
) -> Instance:
    """Random correlated prior (m weighted realizations over binary outcomes)
    with a coverage-composed utility, certified before use.

    The cover set of an element is the same for every outcome, so the value of
    a partial view depends only on which elements were picked.  Expected
    marginal gains are then independent of the conditioning prior, and the
    classic diminishing-returns argument for set cover applies verbatim under
    *any* prior — the certification loop is a guard and accepts the first draw.
    """
    if n < 1:
        raise MalformedInputError("need at least one element")
    if not (1 <= m_realizations <= 2**n):
        raise MalformedInputError(f"support size must lie in [1, 2^{n}]")
    if universe_size is None:
        universe_size = max(4, 2 * n)
    from .verifiers import check_adaptive_monotone, check_adaptive_submodular

    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        picks = rng.choice(2**n, size=m_realizations, replace=False)
        rows = []
        raw_w = rng.random(m_realizations) + 0.1
        raw_w /= raw_w.sum()
        for idx, code in enumerate(sorted(int(c) for c in picks)):
            phi = tuple((code >> e) & 1 for e in range(n))
            rows.append((phi, float(raw_w[idx])))
        covers = []
        for _e in range(n):
            subset = sorted(u for u in range(universe_size) if rng.random() < 0.4)
            covers.append([subset, subset])
        inst = Instance(
            name=f"tab-n{n}-m{m_realizations}-s{seed}",
            n=n,
            num_outcomes=2,
            prior=TablePrior(rows, num_outcomes=2),
            utility=CoverUtility(universe_size, covers),
        )
        if check_adaptive_monotone(inst).satisfied and check_adaptive_submodular(inst).satisfied:
            return inst
    raise InfeasibleError(
        f"no certified instance after {max_attempts} draws (n={n}, m={m_realizations}, seed={seed})"
    )


# --- canonical file format ----------------------------------------------------


def _utility_doc(utility: UtilityFunction) -> dict[str, Any]:
    if isinstance(utility, CoverUtility):
        doc: dict[str, Any] = {
            "family": "coverage",
            "universe": utility.universe,
            "covers": [[sorted(s) for s in row] for row in utility.covers],
        }
        if utility.weights is not None:
            doc["weights"] = list(utility.weights)
        return doc
    if isinstance(utility, BagCountUtility):
        return {"family": "bag-count"}
    if isinstance(utility, MatchPairUtility):
        return {"family": "match-pair", "truncated": utility.truncated}
    if isinstance(utility, ModularUtility):
        return {"family": "modular", "values": [list(row) for row in utility.values]}
    raise MalformedInputError(f"utility {utility.name!r} has no serial form")


def _prior_doc(prior: Prior) -> dict[str, Any]:
    if isinstance(prior, TablePrior):
        return {
            "kind": "table",
            "rows": [
                {"outcomes": list(phi), "weight": w} for phi, w in prior.support()
            ],
        }
    if isinstance(prior, ProductPrior):
        return {"kind": "product", "marginals": [list(row) for row in prior.marginals]}
    if isinstance(prior, BagsPrior):
        return {"kind": "bags", "sizes": list(prior.sizes)}
    raise MalformedInputError(f"prior kind {prior.kind!r} has no serial form")


def instance_to_doc(inst: Instance) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "name": inst.name,
        "elements": inst.n,
        "outcomes": inst.num_outcomes,
        "prior": _prior_doc(inst.prior),
        "utility": _utility_doc(inst.utility),
    }
    if inst.coverage is not None:
        cov: dict[str, Any] = {"quota": inst.coverage.quota, "eta": inst.coverage.eta}
        if inst.coverage.costs is not None:
            cov["costs"] = list(inst.coverage.costs)
        doc["coverage"] = cov
    return doc


def save_instance(inst: Instance, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(instance_to_doc(inst), sort_keys=True, indent=2))
        fh.write("\n")


def _need(doc: dict, field: str, where: str):
    if field not in doc:
        raise MalformedInputError(f"{where}: missing field {field!r}")
    return doc[field]


def instance_from_doc(doc: dict[str, Any]) -> Instance:
    if not isinstance(doc, dict):
        raise MalformedInputError("instance document must be an object")
    name = str(_need(doc, "name", "instance"))
    n = _need(doc, "elements", "instance")
    num_outcomes = _need(doc, "outcomes", "instance")
    if not isinstance(n, int) or n < 0:
        raise MalformedInputError("instance.elements: must be a non-negative integer")
    if not isinstance(num_outcomes, int) or num_outcomes < 1:
        raise MalformedInputError("instance.outcomes: must be a positive integer")

    pdoc = _need(doc, "prior", "instance")
    kind = _need(pdoc, "kind", "instance.prior")
    if kind == "table":
        rows = []
        raw_sum = 0.0
        for i, row in enumerate(_need(pdoc, "rows", "instance.prior")):
            outs = _need(row, "outcomes", f"instance.prior.rows[{i}]")
            w = _need(row, "weight", f"instance.prior.rows[{i}]")
            if len(outs) != n:
                raise MalformedInputError(
                    f"instance.prior.rows[{i}]: expected {n} outcomes, got {len(outs)}"
                )
            for e, o in enumerate(outs):
                if not isinstance(o, int) or not (0 <= o < num_outcomes):
                    raise MalformedInputError(
                        f"instance.prior.rows[{i}].outcomes[{e}]: label {o} out of range"
                    )
            if not isinstance(w, (int, float)) or w < 0:
                raise MalformedInputError(f"instance.prior.rows[{i}].weight: must be >= 0")
            raw_sum += float(w)
            rows.append((tuple(int(o) for o in outs), float(w)))
        if abs(raw_sum - 1.0) > 1e-6:
            raise MalformedInputError(
                f"instance.prior: weights sum to {raw_sum!r}, outside 1 +/- 1e-6"
            )
        prior: Prior = TablePrior(rows, num_outcomes=num_outcomes)
    elif kind == "product":
        margs = _need(pdoc, "marginals", "instance.prior")
        if len(margs) != n:
            raise MalformedInputError(
                f"instance.prior.marginals: expected {n} rows, got {len(margs)}"
            )
        for e, row in enumerate(margs):
            if len(row) != num_outcomes:
                raise MalformedInputError(
                    f"instance.prior.marginals[{e}]: expected {num_outcomes} probabilities"
                )
            s = math.fsum(float(p) for p in row)
            if abs(s - 1.0) > 1e-6:
                raise MalformedInputError(
                    f"instance.prior.marginals[{e}]: sums to {s!r}, outside 1 +/- 1e-6"
                )
        prior = ProductPrior(margs)
    elif kind == "bags":
        sizes = _need(pdoc, "sizes", "instance.prior")
        prior = BagsPrior(sizes)
        if prior.n != n:
            raise MalformedInputError(
                f"instance.prior.sizes: sum {prior.n} disagrees with elements {n}"
            )
        if prior.num_outcomes != num_outcomes:
            raise MalformedInputError(
                "instance.outcomes: must equal the number of bags for a bags prior"
            )
    else:
        raise MalformedInputError(f"instance.prior.kind: unknown kind {kind!r}")

    udoc = _need(doc, "utility", "instance")
    family = _need(udoc, "family", "instance.utility")
    if family == "coverage":
        covers = _need(udoc, "covers", "instance.utility")
        if len(covers) != n:
            raise MalformedInputError(
                f"instance.utility.covers: expected {n} rows, got {len(covers)}"
            )
        utility: UtilityFunction = CoverUtility(
            int(_need(udoc, "universe", "instance.utility")),
            covers,
            udoc.get("weights"),
        )
    elif family == "bag-count":
        utility = BagCountUtility()
    elif family == "match-pair":
        utility = MatchPairUtility(bool(udoc.get("truncated", False)))
    elif family == "modular":
        utility = ModularUtility(_need(udoc, "values", "instance.utility"))
    else:
        raise MalformedInputError(f"instance.utility.family: unknown family {family!r}")

    coverage = None
    if "coverage" in doc and doc["coverage"] is not None:
        cdoc = doc["coverage"]
        costs = cdoc.get("costs")
        coverage = CoverageSpec(
            quota=float(_need(cdoc, "quota", "instance.coverage")),
            eta=float(_need(cdoc, "eta", "instance.coverage")),
            costs=tuple(float(c) for c in costs) if costs is not None else None,
        )

    reveal = fm = fs = None
    if isinstance(prior, BagsPrior) and isinstance(utility, BagCountUtility):
        reveal, fm, fs = _bags_reveal, _bags_fast_marginals, _bags_fast_sav
    elif isinstance(prior, ProductPrior) and isinstance(utility, CoverUtility):
        fm, fs = _cover_fast_hooks(prior, utility)

    return Instance(
        name=name,
        n=n,
        num_outcomes=num_outcomes,
        prior=prior,
        utility=utility,
        coverage=coverage,
        reveal=reveal,
        fast_marginals=fm,
        fast_sav=fs,
    )


def load_instance(path: str) -> Instance:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise MalformedInputError(f"cannot read instance file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"{path}:{exc.lineno}: invalid syntax ({exc.msg})") from exc
    return instance_from_doc(doc)
