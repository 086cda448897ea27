"""Policy execution and expectation engine.

A policy is an interactive procedure: it emits Select/Query/Stop actions and
receives observed outcomes in response to Query.  Policies are written as
generator functions so the runner can drive any of them, including
combinators, through one protocol:

    action = gen.send(response)   # response is the dict revealed by the
                                  # previous Query, else None

Expectations are computed exactly by enumerating the prior support times the
policy's seed space, or by Monte Carlo sampling with a seeded generator.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator
from weakref import WeakKeyDictionary

import numpy as np

from .errors import PolicyBugError, TooLargeError, MalformedInputError
from .model import (
    EMPTY,
    AlreadyObservedError,
    Instance,
    PartialRealization,
    Prior,
    Realization,
    UtilityFunction,
)

# Enumeration caps; each can be overridden by the matching ADASUB_* env var
# or per call.  Documented in the CLI help and README.
CAP_DEFAULTS = {
    "max_support": 10**6,   # prior support size x policy seed branches
    "max_states": 10**5,    # memoized states in dynamic programs
    "branch_cap": 10**4,    # exact joint pending-outcome branches
    "mc_fallback": 10**4,   # samples used when the branch cap is exceeded
}


def cap_value(name: str, override: int | None = None) -> int:
    if override is not None:
        return int(override)
    env = os.environ.get("ADASUB_" + name.upper())
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise MalformedInputError(f"ADASUB_{name.upper()}={env!r} is not an integer") from exc
    return CAP_DEFAULTS[name]


@dataclass(frozen=True)
class Select:
    element: int


class _Singleton:
    def __init__(self, label: str):
        self._label = label

    def __repr__(self) -> str:
        return self._label


QUERY = _Singleton("Query")
STOP = _Singleton("Stop")

Action = Any  # Select | QUERY | STOP


@dataclass
class PolicyContext:
    """Per-run context handed to a policy generator.

    theta is the resolved seed-space value for randomized policies; rng is a
    lazily created deterministic generator for internal sampling fallbacks.
    flags collect notes (for example "sav-mc") that surface in reports.
    """

    theta: Any = None
    seed: int = 0
    flags: set[str] = field(default_factory=set)
    _rng: np.random.Generator | None = None

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = np.random.default_rng(self.seed)
        return self._rng

    def child(self, theta: Any, salt: int) -> "PolicyContext":
        # Children share the flag set so fallback notes propagate to the trace.
        return PolicyContext(theta=theta, seed=(self.seed * 1000003 + salt) & 0x7FFFFFFF, flags=self.flags)


@dataclass(frozen=True, eq=False)
class Policy:
    """Named interactive policy with an explicit finite seed space.

    play(instance, ctx) returns a generator yielding actions.  seed_space
    lists (theta, probability) branches; deterministic policies keep the
    default single branch.
    """

    name: str
    play: Callable[[Instance, PolicyContext], Iterator[Action]]
    seed_space: tuple[tuple[Any, float], ...] = ((None, 1.0),)


@dataclass(frozen=True)
class PolicyTrace:
    """One deterministic run of a policy against a fixed realization."""

    selected: tuple[int, ...]
    final_psi: PartialRealization
    observed: PartialRealization
    value: float
    cost: float
    rounds: int
    gains: tuple[float, ...]
    flags: tuple[str, ...]
    round_views: tuple[PartialRealization, ...] | None = None


def _execute(
    policy: Policy,
    inst: Instance,
    phi: Realization,
    theta: Any,
    rng_seed: int,
    collect_rounds: bool = False,
) -> PolicyTrace:
    ctx = PolicyContext(theta=theta, seed=rng_seed)
    gen = policy.play(inst, ctx)
    f = inst.utility
    selected: list[int] = []
    sel_set: set[int] = set()
    observed: dict[int, int] = {}
    pending: list[int] = []
    rounds = 0
    gains: list[float] = []
    cost = 0.0
    last_val = f(EMPTY)
    round_views: list[PartialRealization] = [] if collect_rounds else None  # type: ignore

    resp: dict[int, int] | None = None
    while True:
        try:
            action = gen.send(resp)
        except StopIteration:
            break
        resp = None
        if isinstance(action, Select):
            e = action.element
            if not (0 <= e < inst.n):
                raise PolicyBugError(f"{policy.name} selected element {e} outside ground set")
            if e in sel_set:
                raise PolicyBugError(f"{policy.name} selected element {e} twice")
            sel_set.add(e)
            selected.append(e)
            pending.append(e)
            cost += inst.cost(e)
            val = f(PartialRealization.project(phi, selected))
            gains.append(val - last_val)
            last_val = val
        elif action is QUERY:
            # The response repeats outcomes of the queried elements even when
            # a reveal hook exposed them earlier; a round is counted only if
            # something genuinely new came back.
            newly: dict[int, int] = {}
            reply: dict[int, int] = {}
            for p in pending:
                reply[p] = phi[p]
                for e2, o2 in inst.observe(phi, p):
                    reply[e2] = o2
                    if e2 not in observed:
                        newly[e2] = o2
            pending.clear()
            if newly:
                rounds += 1
                observed.update(newly)
                if collect_rounds:
                    round_views.append(PartialRealization(observed))
            resp = dict(sorted(reply.items()))
        elif action is STOP:
            break
        else:
            raise PolicyBugError(f"{policy.name} yielded unknown action {action!r}")

    return PolicyTrace(
        selected=tuple(selected),
        final_psi=PartialRealization.project(phi, selected),
        observed=PartialRealization(observed),
        value=last_val,
        cost=cost,
        rounds=rounds,
        gains=tuple(gains),
        flags=tuple(sorted(ctx.flags)),
        round_views=tuple(round_views) if collect_rounds else None,
    )


EXACT_SEED = 0x5EED  # fixed internal seed so exact mode stays deterministic


def run_policy(
    policy: Policy,
    inst: Instance,
    phi: Realization,
    seed: int = 0,
    theta: Any = "__draw__",
    collect_rounds: bool = False,
) -> PolicyTrace:
    """Run a policy against one realization; deterministic given (policy, phi, seed)."""
    if theta == "__draw__":
        if len(policy.seed_space) == 1:
            theta = policy.seed_space[0][0]
        else:
            u = float(np.random.default_rng(seed).random())
            acc = 0.0
            theta = policy.seed_space[-1][0]
            for t, p in policy.seed_space:
                acc += p
                if u < acc:
                    theta = t
                    break
    return _execute(policy, inst, phi, theta, rng_seed=seed, collect_rounds=collect_rounds)


# --- marginals -------------------------------------------------------------

_MARGINAL_CACHE: "WeakKeyDictionary[Instance, dict]" = WeakKeyDictionary()


def marginal(f: UtilityFunction, prior: Prior, psi: PartialRealization, e: int) -> float:
    """Expected gain of observing element e on top of psi.

    Strict contract version: e must not be in dom(psi).  Policies use
    marginals_for, which returns 0 for already-observed elements instead.
    """
    if e in psi:
        raise AlreadyObservedError(f"element {e} already observed")
    base = f(psi)
    return math.fsum(p * (f(psi.extend(e, o)) - base) for o, p in prior.outcome_dist(e, psi))


def marginals_for(
    inst: Instance,
    psi: PartialRealization,
    cands: list[int],
    cap: float | None = None,
) -> list[float]:
    """Marginal of every candidate, with caching; observed candidates score 0.

    With cap=Q the utility is replaced by min(f, Q), so gains past the quota
    do not count.  Coverage policies score with the cap; budget policies
    score with the raw utility.
    """
    if inst.fast_marginals is not None:
        return inst.fast_marginals(inst, psi, cands, cap)
    cache = _MARGINAL_CACHE.setdefault(inst, {})
    key_base = psi.pairs
    out = []
    base = None
    for e in cands:
        if e in psi:
            out.append(0.0)
            continue
        key = (key_base, e, cap)
        v = cache.get(key)
        if v is None:
            if base is None:
                base = inst.utility(psi)
                if cap is not None:
                    base = min(base, cap)
            if cap is None:
                v = math.fsum(
                    p * (inst.utility(psi.extend(e, o)) - base)
                    for o, p in inst.prior.outcome_dist(e, psi)
                )
            else:
                v = math.fsum(
                    p * (min(inst.utility(psi.extend(e, o)), cap) - base)
                    for o, p in inst.prior.outcome_dist(e, psi)
                )
            cache[key] = v
        out.append(v)
    return out


def argmax_pairs(pairs) -> tuple[int, float]:
    """(element, score) with the highest score; ties keep the earliest pair,
    so callers that list candidates in ascending id order get the smallest id."""
    best_e = None
    best = -math.inf
    for e, s in pairs:
        if s > best:
            best_e, best = e, s
    if best_e is None:
        raise PolicyBugError("argmax over an empty candidate set")
    return best_e, best


# --- reports ---------------------------------------------------------------

EVAL_COLUMNS = (
    "policy",
    "instance",
    "mode",
    "f_avg",
    "c_avg",
    "expected_rounds",
    "samples",
    "stderr",
    "wall_ms",
    "flags",
)


@dataclass(frozen=True)
class EvalReport:
    """Flat evaluation record; one row per (policy, instance, mode)."""

    policy: str
    instance: str
    mode: str
    f_avg: float
    c_avg: float
    expected_rounds: float
    samples: int = 0
    stderr: float = 0.0
    wall_ms: float = 0.0
    flags: tuple[str, ...] = ()

    def to_row(self) -> dict[str, str]:
        return {
            "policy": self.policy,
            "instance": self.instance,
            "mode": self.mode,
            "f_avg": repr(self.f_avg),
            "c_avg": repr(self.c_avg),
            "expected_rounds": repr(self.expected_rounds),
            "samples": str(self.samples),
            "stderr": repr(self.stderr),
            "wall_ms": repr(self.wall_ms),
            "flags": ";".join(self.flags),
        }


def evaluate_exact(policy: Policy, inst: Instance, max_support: int | None = None) -> EvalReport:
    """Exact expectations by enumerating prior support x policy seed branches."""
    cap = cap_value("max_support", max_support)
    size = inst.prior.support_size() * len(policy.seed_space)
    if size > cap:
        raise TooLargeError(
            f"exact evaluation needs {size} traces (support x seed branches), cap {cap}"
        )
    f_terms: list[float] = []
    c_terms: list[float] = []
    r_terms: list[float] = []
    flags: set[str] = set()
    for phi, w in inst.prior.support():
        for theta, pt in policy.seed_space:
            if pt <= 0:
                continue
            tr = _execute(policy, inst, phi, theta, rng_seed=EXACT_SEED)
            wp = w * pt
            f_terms.append(wp * tr.value)
            c_terms.append(wp * tr.cost)
            r_terms.append(wp * tr.rounds)
            flags.update(tr.flags)
    return EvalReport(
        policy=policy.name,
        instance=inst.name,
        mode="exact",
        f_avg=math.fsum(f_terms),
        c_avg=math.fsum(c_terms),
        expected_rounds=math.fsum(r_terms),
        flags=tuple(sorted(flags)),
    )


def f_avg_exact(policy: Policy, inst: Instance, max_support: int | None = None) -> float:
    return evaluate_exact(policy, inst, max_support).f_avg


def c_avg_exact(policy: Policy, inst: Instance, max_support: int | None = None) -> float:
    return evaluate_exact(policy, inst, max_support).c_avg


def _draw_theta(policy: Policy, u: float) -> Any:
    acc = 0.0
    for t, p in policy.seed_space:
        acc += p
        if u < acc:
            return t
    return policy.seed_space[-1][0]


def evaluate_mc(policy: Policy, inst: Instance, samples: int, seed: int) -> EvalReport:
    """Monte Carlo expectations; deterministic given the seed."""
    if samples < 1:
        raise MalformedInputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    vals = np.empty(samples)
    costs = np.empty(samples)
    rounds = np.empty(samples)
    flags: set[str] = set()
    randomized = len(policy.seed_space) > 1
    for i in range(samples):
        phi = inst.prior.sample(rng)
        theta = _draw_theta(policy, float(rng.random())) if randomized else policy.seed_space[0][0]
        child_seed = int(rng.integers(0, 2**31 - 1))
        tr = _execute(policy, inst, phi, theta, rng_seed=child_seed)
        vals[i] = tr.value
        costs[i] = tr.cost
        rounds[i] = tr.rounds
        flags.update(tr.flags)
    stderr = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return EvalReport(
        policy=policy.name,
        instance=inst.name,
        mode="mc",
        f_avg=float(vals.mean()),
        c_avg=float(costs.mean()),
        expected_rounds=float(rounds.mean()),
        samples=samples,
        stderr=stderr,
        flags=tuple(sorted(flags)),
    )


def f_avg_mc(policy: Policy, inst: Instance, samples: int, seed: int) -> EvalReport:
    return evaluate_mc(policy, inst, samples, seed)


# --- combinators -----------------------------------------------------------


def _product_seed_space(a: Policy, b: Policy) -> tuple[tuple[Any, float], ...]:
    return tuple(
        ((t1, t2), p1 * p2)
        for t1, p1 in a.seed_space
        for t2, p2 in b.seed_space
        if p1 * p2 > 0
    )


def concat(first: Policy, second: Policy) -> Policy:
    """Run `first` to completion, then `second` from a fresh information state.

    The second policy sees only its own observations at decision time; its
    re-selections of elements the first already took are absorbed here (no
    second cost, no duplicate in the trace) and answered from known outcomes.
    """

    def play(inst: Instance, ctx: PolicyContext):
        t1, t2 = ctx.theta
        known: dict[int, int] = {}
        sel_first: set[int] = set()

        gen = first.play(inst, ctx.child(t1, 1))
        resp = None
        while True:
            try:
                action = gen.send(resp)
            except StopIteration:
                break
            resp = None
            if isinstance(action, Select):
                sel_first.add(action.element)
                yield action
            elif action is QUERY:
                revealed = yield QUERY
                known.update(revealed)
                resp = dict(revealed)
            elif action is STOP:
                break
            else:
                yield action

        gen2 = second.play(inst, ctx.child(t2, 2))
        resp = None
        absorbed: list[int] = []
        while True:
            try:
                action = gen2.send(resp)
            except StopIteration:
                break
            resp = None
            if isinstance(action, Select):
                e = action.element
                if e in sel_first:
                    absorbed.append(e)  # already selected in phase one
                else:
                    yield action
            elif action is QUERY:
                revealed = yield QUERY
                known.update(revealed)
                merged = dict(revealed)
                for e in absorbed:
                    if e in known:
                        merged[e] = known[e]
                absorbed.clear()
                resp = dict(sorted(merged.items()))
            elif action is STOP:
                break
            else:
                yield action

    return Policy(
        name=f"{first.name}@{second.name}",
        play=play,
        seed_space=_product_seed_space(first, second),
    )


def truncate(policy: Policy, limit: int) -> Policy:
    """Stop the policy after `limit` selections (pending batch still queried)."""
    if limit < 0:
        raise MalformedInputError("truncation limit must be >= 0")

    def play(inst: Instance, ctx: PolicyContext):
        if limit == 0:
            return
        gen = policy.play(inst, ctx.child(ctx.theta, 3))
        resp = None
        n_sel = 0
        flush = False
        while True:
            try:
                action = gen.send(resp)
            except StopIteration:
                break
            resp = None
            if isinstance(action, Select):
                yield action
                n_sel += 1
                if n_sel >= limit:
                    flush = True
                    break
            elif action is QUERY:
                resp = yield QUERY
            elif action is STOP:
                break
        if flush:
            yield QUERY

    return Policy(name=f"{policy.name}[{limit}]", play=play, seed_space=policy.seed_space)


def limit_rounds(policy: Policy, max_rounds: int) -> Policy:
    """Stop the policy after its `max_rounds`-th Query completes.

    Selections are buffered until their Query goes through, so selections
    whose query would exceed the limit never happen at all; a limit of 0
    yields the empty policy.
    """
    if max_rounds < 0:
        raise MalformedInputError("round limit must be >= 0")

    def play(inst: Instance, ctx: PolicyContext):
        gen = policy.play(inst, ctx.child(ctx.theta, 4))
        resp = None
        used = 0
        buffered: list[Select] = []
        while True:
            try:
                action = gen.send(resp)
            except StopIteration:
                break
            resp = None
            if isinstance(action, Select):
                buffered.append(action)
            elif action is QUERY:
                if used >= max_rounds:
                    break
                for sel in buffered:
                    yield sel
                buffered.clear()
                used += 1
                resp = yield QUERY
            elif action is STOP:
                break
        # A trailing unqueried batch is dropped: it would need one more round.

    return Policy(name=f"{policy.name}^{max_rounds}", play=play, seed_space=policy.seed_space)
