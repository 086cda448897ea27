"""Policy constructors: greedy, threshold, semi-adaptive, batch, and DP-optimal.

Every constructor returns an engine.Policy whose play() generator follows the
Select/Query/Stop protocol.  Policies keep their own view of observations
(accumulated Query responses); the runner owns the global trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable
from weakref import WeakKeyDictionary

from .engine import (
    EXACT_SEED,
    QUERY,
    Policy,
    PolicyContext,
    Select,
    argmax_pairs,
    cap_value,
    marginals_for,
)
from .errors import InfeasibleError, MalformedInputError, TooLargeError
from .model import (
    EMPTY,
    AlreadyObservedError,
    CoverageSpec,
    Instance,
    PartialRealization,
)

# Tolerance for score-versus-threshold equality.  Thresholds are produced by
# the same arithmetic that produces scores, so exact ties are the common case
# and this only absorbs last-bit noise.
_EQ_TOL = 1e-12

# Value-versus-quota tolerance for coverage stopping.  The precision
# parameter eta of a coverage instance is assumed to exceed this, which
# verify_eta checks explicitly.
_COVER_TOL = 1e-9


def _active_spec(inst: Instance, spec: CoverageSpec | None) -> CoverageSpec:
    if spec is not None:
        return spec
    if inst.coverage is None:
        raise MalformedInputError(f"instance {inst.name} has no coverage goal")
    return inst.coverage


def covered(inst: Instance, psi: PartialRealization, spec: CoverageSpec | None = None) -> bool:
    spec = _active_spec(inst, spec)
    return inst.utility(psi) >= spec.quota - _COVER_TOL


def _spec_cost(spec: CoverageSpec, e: int) -> float:
    return 1.0 if spec.costs is None else spec.costs[e]


# --- one greedy step, shared by every marginal-driven policy ----------------


def _greedy_step(
    inst: Instance, view: dict[int, int], selected: set[int], cap: float | None = None
) -> tuple[int, float]:
    """Best (element, marginal) among unselected elements; ties to smallest id."""
    cands = [e for e in range(inst.n) if e not in selected]
    psi = PartialRealization(view)
    scores = marginals_for(inst, psi, cands, cap)
    return argmax_pairs(zip(cands, scores))


def greedy_max(k: int) -> Policy:
    """Fully adaptive greedy: k rounds of select-best-marginal then observe."""
    if k < 0:
        raise MalformedInputError("budget must be >= 0")

    def play(inst: Instance, ctx: PolicyContext):
        if k > inst.n:
            raise MalformedInputError(f"budget {k} exceeds ground set size {inst.n}")
        view: dict[int, int] = {}
        selected: set[int] = set()
        for _ in range(k):
            e, _score = _greedy_step(inst, view, selected)
            selected.add(e)
            yield Select(e)
            resp = yield QUERY
            view.update(resp)

    return Policy(name=f"greedy(k={k})", play=play)


def greedy_coverage(spec: CoverageSpec | None = None) -> Policy:
    """Fully adaptive cost-benefit greedy, run until the quota is reached.

    Scores are quota-capped (gains past the quota do not count), so the ratio
    rule optimizes exactly the remaining coverage headroom.  The coverage goal
    defaults to the instance's own; pass a spec to override it.
    """

    def play(inst: Instance, ctx: PolicyContext):
        goal = _active_spec(inst, spec)
        view: dict[int, int] = {}
        selected: set[int] = set()
        while not covered(inst, PartialRealization(view), goal):
            cands = [e for e in range(inst.n) if e not in selected]
            if not cands:
                ctx.flags.add("uncovered")
                return
            psi = PartialRealization(view)
            scores = marginals_for(inst, psi, cands, goal.quota)
            e, best = argmax_pairs(
                (c, s / _spec_cost(goal, c)) for c, s in zip(cands, scores)
            )
            if best <= _EQ_TOL:
                ctx.flags.add("uncovered")
                return
            selected.add(e)
            yield Select(e)
            resp = yield QUERY
            view.update(resp)

    return Policy(name="greedy-cov", play=play)


# --- threshold policies and their calibration -------------------------------


def _passes(score: float, tau: float, inclusive: bool) -> bool:
    if inclusive:
        return score >= tau - _EQ_TOL
    return score > tau + _EQ_TOL


def threshold_policy(tau: float, coin_p: float = 0.0, mode: str = "marginal") -> Policy:
    """Greedy that stops at the threshold tau.

    One coin is flipped per run: with probability coin_p scores equal to tau
    keep the policy going (inclusive rule), otherwise they stop it (strict
    rule).  A single coin makes the expected selection count exactly linear
    in coin_p, which is what calibration relies on; per-tie coins would break
    that linearity whenever a trajectory hits the threshold more than once.
    mode "marginal" re-scores adaptively after each observation; mode "sav"
    selects a single batch scored by expected marginals over the still
    unobserved batch, then observes once.
    """
    if not 0.0 <= coin_p <= 1.0:
        raise MalformedInputError("coin_p must lie in [0, 1]")
    if mode not in ("marginal", "sav"):
        raise MalformedInputError(f"unknown threshold mode {mode!r}")

    def play(inst: Instance, ctx: PolicyContext):
        inclusive = bool(ctx.theta)
        if mode == "marginal":
            view: dict[int, int] = {}
            selected: set[int] = set()
            while len(selected) < inst.n:
                e, score = _greedy_step(inst, view, selected)
                if not _passes(score, tau, inclusive):
                    return
                selected.add(e)
                yield Select(e)
                resp = yield QUERY
                view.update(resp)
        else:
            pending: list[int] = []
            taken: set[int] = set()
            while len(taken) < inst.n:
                cands = [e for e in range(inst.n) if e not in taken]
                savs, _denom = _sav_and_denom(inst, EMPTY, pending, cands, ctx)
                e, score = argmax_pairs(zip(cands, savs))
                if not _passes(score, tau, inclusive):
                    break
                taken.add(e)
                pending.append(e)
                yield Select(e)
            if pending:
                yield QUERY

    name = f"threshold(tau={tau:.12g},p={coin_p:.12g}"
    name += ")" if mode == "marginal" else ",sav)"
    space = ((True, coin_p), (False, 1.0 - coin_p))
    return Policy(name=name, play=play, seed_space=space)


def _marginal_trajectories(inst: Instance) -> list[tuple[float, list[float]]]:
    """Greedy run to exhaustion under each realization: (weight, score path)."""
    out = []
    for phi, w in inst.prior.support():
        view: dict[int, int] = {}
        selected: set[int] = set()
        scores: list[float] = []
        for _ in range(inst.n):
            e, s = _greedy_step(inst, view, selected)
            scores.append(s)
            selected.add(e)
            for e2, o2 in inst.observe(phi, e):
                view.setdefault(e2, o2)
        out.append((w, scores))
    return out


def _sav_trajectory(inst: Instance, ctx: PolicyContext) -> list[tuple[float, list[float]]]:
    """Batch-mode score path; observation-free, so a single weight-1 path."""
    pending: list[int] = []
    taken: set[int] = set()
    scores: list[float] = []
    for _ in range(inst.n):
        cands = [e for e in range(inst.n) if e not in taken]
        savs, _denom = _sav_and_denom(inst, EMPTY, pending, cands, ctx)
        e, s = argmax_pairs(zip(cands, savs))
        scores.append(s)
        taken.add(e)
        pending.append(e)
    return [(1.0, scores)]


def _count_until_fail(scores: list[float], tau: float, inclusive: bool) -> int:
    for t, s in enumerate(scores):
        if not _passes(s, tau, inclusive):
            return t
    return len(scores)


@dataclass(frozen=True)
class ThresholdCalibration:
    """Threshold level and coin bias realizing a target expected selection count.

    alpha and beta are the expected counts under the strict (>) and inclusive
    (>=) acceptance rules at tau_i; the coin interpolates between them, so
    alpha <= i <= beta and the calibrated policy's exact expected count is i.
    """

    tau_i: float
    i: float
    alpha: float
    beta: float
    coin_p: float

    @property
    def tau(self) -> float:
        return self.tau_i

    def policy(self, mode: str = "marginal") -> Policy:
        return threshold_policy(self.tau_i, self.coin_p, mode)


def calibrate_tau(inst: Instance, i: float, mode: str = "marginal") -> ThresholdCalibration:
    """Threshold and coin bias making the stopped greedy select i elements on average.

    Scans candidate thresholds (the observed score levels, descending) for the
    first whose inclusive stop count reaches i, then interpolates between the
    strict and inclusive rules with the coin.
    """
    if mode not in ("marginal", "sav"):
        raise MalformedInputError(f"unknown threshold mode {mode!r}")
    if i < 0 or i > inst.n:
        raise InfeasibleError(f"target count {i} outside [0, {inst.n}]")
    if mode == "marginal":
        trajs = _marginal_trajectories(inst)
    else:
        trajs = _sav_trajectory(inst, PolicyContext(seed=EXACT_SEED))

    levels = sorted({s for _w, scores in trajs for s in scores}, reverse=True)
    if not levels:
        raise InfeasibleError("instance has no selectable elements")

    for v in levels:
        beta = math.fsum(w * _count_until_fail(scores, v, True) for w, scores in trajs)
        if beta >= i - 1e-9:
            alpha = math.fsum(w * _count_until_fail(scores, v, False) for w, scores in trajs)
            if beta - alpha <= 1e-12:
                return ThresholdCalibration(tau_i=v, i=i, alpha=alpha, beta=beta, coin_p=0.0)
            p = min(1.0, max(0.0, (i - alpha) / (beta - alpha)))
            return ThresholdCalibration(tau_i=v, i=i, alpha=alpha, beta=beta, coin_p=p)
    raise InfeasibleError(f"no threshold reaches an average of {i} selections")


# --- expected batch marginals (scores for semi-adaptive selection) ----------


def _sav_and_denom(
    inst: Instance,
    psi: PartialRealization,
    pending: list[int],
    cands: list[int],
    ctx: PolicyContext,
    cap: float | None = None,
) -> tuple[list[float], float]:
    """Batch scores and the adaptive reference term, in one pass.

    Score of e: expected marginal of e after the pending batch resolves,
    E_b[ marginal(e | psi + b) ].  Reference term: E_b[ max_e marginal ],
    the per-branch best the fully adaptive policy would see.  Exact when the
    joint over pending enumerates under the branch cap, else a seeded Monte
    Carlo fallback (flagged "sav-mc").  cap=Q scores against min(f, Q).
    """
    if inst.fast_sav is not None:
        return inst.fast_sav(inst, psi, pending, cands, ctx, cap)
    if not pending:
        margs = marginals_for(inst, psi, cands, cap)
        return list(margs), (max(margs) if margs else 0.0)
    try:
        branches = inst.prior.joint_dist(psi, pending, cap=cap_value("branch_cap"))
    except TooLargeError:
        return _sav_mc(inst, psi, pending, cands, ctx, cap)
    savs = [0.0] * len(cands)
    denom = 0.0
    for assign, p in branches:
        ext = dict(zip(pending, assign))
        psi_b = psi.union(PartialRealization(ext))
        margs = marginals_for(inst, psi_b, cands, cap)
        for j, m in enumerate(margs):
            savs[j] += p * m
        denom += p * max(margs)
    return savs, denom


def _sav_mc(
    inst: Instance,
    psi: PartialRealization,
    pending: list[int],
    cands: list[int],
    ctx: PolicyContext,
    cap: float | None = None,
) -> tuple[list[float], float]:
    ctx.flags.add("sav-mc")
    samples = cap_value("mc_fallback")
    post = inst.prior.condition(psi)
    rng = ctx.rng
    savs = [0.0] * len(cands)
    denom = 0.0
    w = 1.0 / samples
    for _ in range(samples):
        phi = post.sample(rng)
        ext = {e: phi[e] for e in pending}
        psi_b = psi.union(PartialRealization(ext))
        margs = marginals_for(inst, psi_b, cands, cap)
        for j, m in enumerate(margs):
            savs[j] += w * m
        denom += w * max(margs)
    return savs, denom


def sav_values(
    inst: Instance,
    psi: PartialRealization,
    pending: Iterable[int],
    cands: Iterable[int] | None = None,
    ctx: PolicyContext | None = None,
    cap: float | None = None,
) -> list[float]:
    pend = list(pending)
    blocked = set(psi.domain) | set(pend)
    cl = list(cands) if cands is not None else [e for e in range(inst.n) if e not in blocked]
    ctx = ctx or PolicyContext(seed=0)
    savs, _ = _sav_and_denom(inst, psi, pend, cl, ctx, cap)
    return savs


@dataclass(frozen=True)
class SemiAdaptiveState:
    """Decision state of a batching policy: queried observations psi, the
    selected set, and the selected-but-unqueried batch."""

    psi: PartialRealization
    selected: tuple[int, ...]
    pending: tuple[int, ...]
    step: int = 0

    def __post_init__(self):
        if any(e in self.psi for e in self.pending):
            raise MalformedInputError("pending elements must be unobserved")
        if len(set(self.pending)) != len(self.pending):
            raise MalformedInputError("pending repeats an element")

    @classmethod
    def make(cls, psi: PartialRealization, selected: Iterable[int]) -> "SemiAdaptiveState":
        sel = tuple(selected)
        return cls(
            psi=psi,
            selected=sel,
            pending=tuple(e for e in sel if e not in psi),
            step=len(sel),
        )


def semi_adaptive_value(
    inst: Instance,
    state: SemiAdaptiveState,
    e: int,
    ctx: PolicyContext | None = None,
) -> float:
    """Expected marginal of e once the pending batch resolves, given psi."""
    if e in state.psi or e in state.pending:
        raise AlreadyObservedError(f"element {e} is already in the decision state")
    ctx = ctx or PolicyContext(seed=EXACT_SEED)
    savs, _ = _sav_and_denom(inst, state.psi, list(state.pending), [e], ctx)
    return savs[0]


def _gap_parts(
    inst: Instance,
    psi: PartialRealization,
    pending: list[int],
    ctx: PolicyContext,
    cap: float | None = None,
) -> tuple[float, float, float]:
    """(best batch score, best current marginal, reference term)."""
    blocked = set(psi.domain) | set(pending)
    cands = [e for e in range(inst.n) if e not in blocked]
    if not cands:
        return 0.0, 0.0, 0.0
    savs, denom = _sav_and_denom(inst, psi, pending, cands, ctx, cap)
    open_elems = [e for e in range(inst.n) if e not in psi]
    best_marg = max(marginals_for(inst, psi, open_elems, cap)) if open_elems else 0.0
    return max(savs), best_marg, denom


def information_gap(
    inst: Instance,
    state: SemiAdaptiveState,
    ctx: PolicyContext | None = None,
) -> float:
    """Best batch score over the expected adaptive best; 1.0 when the batch is
    empty or the reference term vanishes."""
    ctx = ctx or PolicyContext(seed=EXACT_SEED)
    best_sav, _, denom = _gap_parts(inst, state.psi, list(state.pending), ctx)
    if denom <= 0.0:
        return 1.0
    return best_sav / denom


def restricted_information_gap(
    inst: Instance,
    state: SemiAdaptiveState,
    ctx: PolicyContext | None = None,
) -> float:
    """Best pre-batch marginal (pending elements count as candidates) over the
    expected adaptive best; shares its denominator with information_gap."""
    ctx = ctx or PolicyContext(seed=EXACT_SEED)
    _, best_marg, denom = _gap_parts(inst, state.psi, list(state.pending), ctx)
    if denom <= 0.0:
        return 1.0
    return best_marg / denom


# --- semi-adaptive policies --------------------------------------------------


def _gap_ratio(best_sav: float, best_marg: float, denom: float, gap: str) -> float:
    if denom <= 0.0:
        return 1.0
    return (best_sav if gap == "ig" else best_marg) / denom


def semi_adaptive_greedy_max(k: int, eps: float, gap: str = "ig") -> Policy:
    """Budgeted greedy that keeps extending the current batch while the gap
    ratio stays above 1 - eps, observing only when it drops below."""
    if k < 0:
        raise MalformedInputError("budget must be >= 0")
    if eps < 0:
        raise MalformedInputError("eps must be >= 0")
    if gap not in ("ig", "rig"):
        raise MalformedInputError(f"unknown gap kind {gap!r}")

    def play(inst: Instance, ctx: PolicyContext):
        if k > inst.n:
            raise MalformedInputError(f"budget {k} exceeds ground set size {inst.n}")
        view: dict[int, int] = {}
        selected: set[int] = set()
        pending: list[int] = []
        budget = k
        while budget > 0:
            cands = [e for e in range(inst.n) if e not in selected]
            if not cands:
                break
            psi = PartialRealization(view)
            savs, denom = _sav_and_denom(inst, psi, pending, cands, ctx)
            if pending:
                open_elems = [e for e in range(inst.n) if e not in psi]
                best_marg = max(marginals_for(inst, psi, open_elems))
                ratio = _gap_ratio(max(savs), best_marg, denom, gap)
                if ratio < 1.0 - eps - _EQ_TOL:
                    resp = yield QUERY
                    view.update(resp)
                    pending.clear()
                    continue
            e, _s = argmax_pairs(zip(cands, savs))
            selected.add(e)
            pending.append(e)
            budget -= 1
            yield Select(e)
        if pending:
            yield QUERY

    return Policy(name=f"semi(k={k},eps={eps:.6g},{gap})", play=play)


def semi_adaptive_greedy_coverage(
    spec: CoverageSpec | None = None, eps: float = 0.1, gap: str = "rig"
) -> Policy:
    """Coverage greedy with batched observation, guarded by the gap ratio.

    Extends the batch while the ratio holds and quota-capped batch scores stay
    positive; otherwise observes and re-checks the quota.  Stops with flag
    "uncovered" if the quota is unreachable with what remains.
    """
    if eps < 0:
        raise MalformedInputError("eps must be >= 0")
    if gap not in ("ig", "rig"):
        raise MalformedInputError(f"unknown gap kind {gap!r}")

    def play(inst: Instance, ctx: PolicyContext):
        goal = _active_spec(inst, spec)
        view: dict[int, int] = {}
        selected: set[int] = set()
        pending: list[int] = []
        while True:
            if covered(inst, PartialRealization(view), goal):
                return
            cands = [e for e in range(inst.n) if e not in selected]
            if not cands:
                if pending:
                    resp = yield QUERY
                    view.update(resp)
                    pending.clear()
                    continue
                ctx.flags.add("uncovered")
                return
            psi = PartialRealization(view)
            savs, denom = _sav_and_denom(inst, psi, pending, cands, ctx, goal.quota)
            if max(savs) <= _EQ_TOL:
                # Nothing left helps in expectation, either because the batch
                # already reaches the quota on every branch or because the
                # quota is out of reach.  Resolve the batch first; with no
                # batch outstanding the quota really is unreachable.
                if pending:
                    resp = yield QUERY
                    view.update(resp)
                    pending.clear()
                    continue
                ctx.flags.add("uncovered")
                return
            if pending:
                open_elems = [e for e in range(inst.n) if e not in psi]
                best_marg = max(marginals_for(inst, psi, open_elems, goal.quota))
                ratio = _gap_ratio(max(savs), best_marg, denom, gap)
                if ratio < 1.0 - eps - _EQ_TOL:
                    resp = yield QUERY
                    view.update(resp)
                    pending.clear()
                    continue
            e, _s = argmax_pairs(
                (c, s / _spec_cost(goal, c)) for c, s in zip(cands, savs)
            )
            selected.add(e)
            pending.append(e)
            yield Select(e)

    return Policy(name=f"semi-cov(eps={eps:.6g},{gap})", play=play)


def fixed_batch_greedy(r: int, k: int) -> Policy:
    """Budgeted greedy that observes only after every r-th selection.

    Within a batch, each pick maximizes the expected marginal over the still
    unresolved batch outcomes.  r=1 reproduces the fully sequential greedy;
    r=k selects everything in one shot.
    """
    if r < 1:
        raise MalformedInputError("batch size must be >= 1")
    if k < 0:
        raise MalformedInputError("budget must be >= 0")

    def play(inst: Instance, ctx: PolicyContext):
        view: dict[int, int] = {}
        selected: set[int] = set()
        pending: list[int] = []
        budget = min(k, inst.n)
        while budget > 0:
            cands = [e for e in range(inst.n) if e not in selected]
            if not cands:
                break
            psi = PartialRealization(view)
            savs, _denom = _sav_and_denom(inst, psi, pending, cands, ctx)
            e, _s = argmax_pairs(zip(cands, savs))
            selected.add(e)
            pending.append(e)
            budget -= 1
            yield Select(e)
            if len(pending) >= r:
                resp = yield QUERY
                view.update(resp)
                pending.clear()
        if pending:
            yield QUERY

    return Policy(name=f"batch(r={r},k={k})", play=play)


def fixed_sequence_policy(seq: Iterable[int]) -> Policy:
    """Select a fixed element sequence, observing after each selection."""
    elems = tuple(seq)
    if len(set(elems)) != len(elems):
        raise MalformedInputError("fixed sequence repeats an element")

    def play(inst: Instance, ctx: PolicyContext):
        for e in elems:
            yield Select(e)
            yield QUERY

    return Policy(name=f"seq{list(elems)}", play=play)


# --- exact optima by dynamic programming ------------------------------------

_DP_MAX_CACHE: "WeakKeyDictionary[Instance, dict]" = WeakKeyDictionary()
_DP_COV_CACHE: "WeakKeyDictionary[Instance, dict]" = WeakKeyDictionary()


def _dp_value(inst: Instance, psi: PartialRealization, budget: int, memo: dict) -> float:
    key = (psi.pairs, budget)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if budget == 0 or len(psi) == inst.n:
        v = inst.utility(psi)
    else:
        if len(memo) >= cap_value("max_states"):
            raise TooLargeError(f"budget-{budget} optimum exceeds the state cap on {inst.name}")
        v = -math.inf
        for e in range(inst.n):
            if e in psi:
                continue
            ev = math.fsum(
                p * _dp_value(inst, psi.extend(e, o), budget - 1, memo)
                for o, p in inst.prior.outcome_dist(e, psi)
            )
            if ev > v:
                v = ev
    memo[key] = v
    return v


def _dp_argmax(inst: Instance, psi: PartialRealization, budget: int, memo: dict) -> int:
    best_e, best = None, -math.inf
    for e in range(inst.n):
        if e in psi:
            continue
        ev = math.fsum(
            p * _dp_value(inst, psi.extend(e, o), budget - 1, memo)
            for o, p in inst.prior.outcome_dist(e, psi)
        )
        if ev > best:
            best_e, best = e, ev
    assert best_e is not None
    return best_e


def optimal_value(inst: Instance, k: int) -> float:
    """Expected value of the best k-selection policy (exact, memoized)."""
    memo = _DP_MAX_CACHE.setdefault(inst, {})
    return _dp_value(inst, EMPTY, min(k, inst.n), memo)


def optimal_policy_dp(k: int) -> Policy:
    """Policy realizing the exact budget-k optimum.

    Decisions condition on selected elements only, so extra observations an
    instance reveals for free are ignored by design.
    """
    if k < 0:
        raise MalformedInputError("budget must be >= 0")

    def play(inst: Instance, ctx: PolicyContext):
        memo = _DP_MAX_CACHE.setdefault(inst, {})
        psi = EMPTY
        selected: set[int] = set()
        for _ in range(min(k, inst.n)):
            e = _dp_argmax(inst, psi, min(k, inst.n) - len(selected), memo)
            selected.add(e)
            yield Select(e)
            resp = yield QUERY
            psi = psi.extend(e, resp[e]) if e in resp else psi
        return

    return Policy(name=f"opt-dp(k={k})", play=play)


def _dp_cov_cost(inst: Instance, psi: PartialRealization, memo: dict, spec) -> float:
    key = psi.pairs
    hit = memo.get(key)
    if hit is not None:
        return hit
    if covered(inst, psi, spec):
        v = 0.0
    elif len(psi) == inst.n:
        raise InfeasibleError(f"realization {psi!r} cannot reach the quota on {inst.name}")
    else:
        if len(memo) >= cap_value("max_states"):
            raise TooLargeError(f"coverage optimum exceeds the state cap on {inst.name}")
        v = math.inf
        for e in range(inst.n):
            if e in psi:
                continue
            ev = _spec_cost(spec, e) + math.fsum(
                p * _dp_cov_cost(inst, psi.extend(e, o), memo, spec)
                for o, p in inst.prior.outcome_dist(e, psi)
            )
            if ev < v:
                v = ev
    memo[key] = v
    return v


def optimal_coverage_cost(inst: Instance, spec: CoverageSpec | None = None) -> float:
    """Expected cost of the cheapest quota-reaching policy (exact, memoized)."""
    goal = _active_spec(inst, spec)
    memo = _DP_COV_CACHE.setdefault(inst, {}).setdefault(goal, {})
    return _dp_cov_cost(inst, EMPTY, memo, goal)


def optimal_coverage_dp(spec: CoverageSpec | None = None) -> Policy:
    """Policy realizing the exact minimum expected coverage cost."""

    def play(inst: Instance, ctx: PolicyContext):
        goal = _active_spec(inst, spec)
        memo = _DP_COV_CACHE.setdefault(inst, {}).setdefault(goal, {})
        psi = EMPTY
        while not covered(inst, psi, goal):
            if len(psi) == inst.n:
                ctx.flags.add("uncovered")
                return
            best_e, best = None, math.inf
            for e in range(inst.n):
                if e in psi:
                    continue
                ev = _spec_cost(goal, e) + math.fsum(
                    p * _dp_cov_cost(inst, psi.extend(e, o), memo, goal)
                    for o, p in inst.prior.outcome_dist(e, psi)
                )
                if ev < best:
                    best_e, best = e, ev
            assert best_e is not None
            yield Select(best_e)
            resp = yield QUERY
            psi = psi.extend(best_e, resp[best_e]) if best_e in resp else psi

    return Policy(name="opt-cov-dp", play=play)
