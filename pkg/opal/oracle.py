""" Brute-force opacity checks straight from the definitions.

These enumerate runs instead of building estimators and exist to cross-check
the verifiers on small systems. For an observed run x0 ... xn the search keeps
every run y0 ... yn from an initial state that stays within delta of it, as
(last state, positions where y is non-secret). A property is violated when

initial   x0 is a secret initial state and no kept run has y0 non-secret
current   xn is secret and no kept run has yn non-secret
infinite  some secret xk has no kept run with yk non-secret

Only positions that can still be violated are tracked. Observed runs that
agree on the last state, the kept set and those positions behave the same
from then on, so only the first of them in breadth-first, lexicographic order
is extended.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import OpalError, Run, StateSet, DEFAULT_SLACK
from .opacity import INITIAL_STATE, CURRENT_STATE, INFINITE_STEP, check_property
from .estimator import INITIAL, CURRENT

log = logging.getLogger(__name__)

DEFAULT_ENUMERATION_BUDGET = 10 ** 7


class EnumerationBudgetExceeded(OpalError, RuntimeError):
    pass


@dataclass
class OracleVerdict:
    property: str
    delta: float
    depth: int
    holds: bool
    system: object = None
    witness: Optional[Run] = None
    secret_instant: Optional[int] = None

    def to_dict(self):
        return {'property': self.property, 'delta': self.delta, 'depth': self.depth,
                'holds_up_to_depth': self.holds, 'secret_instant': self.secret_instant,
                'witness': None if self.witness is None else self.witness.to_dict(self.system)}


def closeness(system, delta, slack=DEFAULT_SLACK):
    """ (n, n) boolean matrix of delta-close state pairs """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return system.distances <= delta + slack


def equal_outputs(system):
    """ (n, n) boolean matrix of pairs with identical outputs """
    out = system.outputs
    return np.all(out[:, None, :] == out[None, :, :], axis=2)


class _Budget(object):

    def __init__(self, limit):
        self.limit = limit
        self.used = 0

    def spend(self, n):
        self.used += n
        if self.used > self.limit:
            raise EnumerationBudgetExceeded("run enumeration exceeds budget of %d" % self.limit)


def _watch(system, prop, watched, x, position):
    """ Positions whose secret status can still be violated after observing x. """
    secret = system.states[x].secret
    bit = 1 << position
    if prop == INITIAL_STATE:
        return bit if position == 0 and secret else watched
    if prop == CURRENT_STATE:
        return bit if secret else 0
    return watched | bit if secret else watched


def _start(system, prop, match, x0):
    """ (kept runs, watched positions) after observing the initial state x0 """
    watched = _watch(system, prop, 0, x0, 0)
    kept = frozenset((y, watched if not system.states[y].secret else 0)
                     for y in system.initial_set if match[x0, y])
    return kept, watched


def _extend(system, prop, match, kept, watched, x_next, position):
    watched = _watch(system, prop, watched, x_next, position)
    bit = 1 << position
    out = set()
    for y, mask in kept:
        for _, y2 in system.successors(y):
            if match[x_next, y2]:
                new = mask | (bit if not system.states[y2].secret else 0)
                out.add((y2, new & watched))
    return frozenset(out), watched


def _violation(kept, watched):
    """ lowest watched position no kept run covers, or None """
    covered = 0
    for _, mask in kept:
        covered |= mask
    open_ = watched & ~covered
    if not open_:
        return None
    return (open_ & -open_).bit_length() - 1


def _search(system, prop, depth, match, budget):
    check_property(prop)
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    budget = _Budget(budget)
    seen = set()
    frontier = []
    fallback = None
    for x0 in system.initial_set:
        kept, watched = _start(system, prop, match, x0)
        budget.spend(len(kept) + 1)
        k = _violation(kept, watched)
        if k is not None and fallback is None:
            fallback = (Run((x0,)), k)
        key = (x0, kept, watched)
        if key not in seen:
            seen.add(key)
            frontier.append(((x0,), (), kept, watched))
    for n in range(1, depth + 1):
        candidates = {}
        for states, inputs, kept, watched in frontier:
            for u, x2 in system.successors(states[-1]):
                seq = states + (x2,)
                if seq in candidates:
                    continue
                kept2, watched2 = _extend(system, prop, match, kept, watched, x2, n)
                budget.spend(len(kept2) + 1)
                candidates[seq] = (inputs + (u,), kept2, watched2)
        frontier = []
        for seq in sorted(candidates):
            inputs, kept, watched = candidates[seq]
            k = _violation(kept, watched)
            if k is not None:
                return Run(seq, inputs), k
            key = (seq[-1], kept, watched)
            if key not in seen:
                seen.add(key)
                frontier.append((seq, inputs, kept, watched))
        log.debug("oracle layer %d: %d observed runs", n, len(frontier))
        if not frontier:
            break
    return fallback if fallback is not None else (None, None)


def oracle_opacity(system, delta, prop, depth, slack=DEFAULT_SLACK,
                   budget=DEFAULT_ENUMERATION_BUDGET):
    """ Checks prop at delta on every run of length <= depth.

    holds means no violating run of length <= depth exists. A violation of
    length >= 1 is preferred over a bare violating initial state, matching the
    verifiers' witness choice.

    For infinite-step opacity every secret position stays watched, so runs
    rarely merge and the work grows with the number of runs. In practice
    depth 7 is fine for systems of about five states, while depth 10 already
    exhausts the default budget there (EnumerationBudgetExceeded).
    """
    match = closeness(system, delta, slack)
    run, k = _search(system, prop, depth, match, budget)
    return OracleVerdict(prop, float(delta), depth, run is None, system=system,
                         witness=run, secret_instant=k)


def exact_opacity(system, prop, depth, budget=DEFAULT_ENUMERATION_BUDGET):
    """ Like oracle_opacity, but runs must produce exactly the same outputs. """
    run, k = _search(system, prop, depth, equal_outputs(system), budget)
    return OracleVerdict(prop, 0.0, depth, run is None, system=system,
                         witness=run, secret_instant=k)


def witness_violates(system, delta, prop, run, secret_instant=None, slack=DEFAULT_SLACK):
    """ True if run, observed with precision delta, violates prop.

    The run must be a valid run from an initial state. For infinite-step
    opacity a specific secret_instant may be named; otherwise any instant
    counts.
    """
    check_property(prop)
    if not run.is_valid(system) or run.states[0] not in system.initial_set:
        return False
    match = closeness(system, delta, slack)
    kept, watched = _start(system, prop, match, run.states[0])
    for pos, x in enumerate(run.states[1:], start=1):
        kept, watched = _extend(system, prop, match, kept, watched, x, pos)
    if prop == INFINITE_STEP and secret_instant is not None:
        if not (watched >> secret_instant) & 1:
            return False
        return not any((mask >> secret_instant) & 1 for _, mask in kept)
    return _violation(kept, watched) is not None


def oracle_belief(system, delta, kind, run, slack=DEFAULT_SLACK,
                  budget=DEFAULT_ENUMERATION_BUDGET):
    """ The set of states consistent with a run, by enumerating all runs.

    run is a run of the system in its own forward order x0 ... xn.

    kind 'current': final states yn of runs y0 ... yn with y0 initial and
    every yi within delta of xi.
    kind 'initial': first states y0 (initial or not) of runs y0 ... yn with
    every yi within delta of xi. This is what the initial-state estimator
    holds after walking the run backward from xn to x0.
    """
    match = closeness(system, delta, slack)
    spent = _Budget(budget)
    xs = run.states
    n = len(xs) - 1
    found = set()
    if kind == CURRENT:
        stack = [(y, 0) for y in system.initial_set if match[xs[0], y]]
        while stack:
            y, i = stack.pop()
            spent.spend(1)
            if i == n:
                found.add(y)
                continue
            for _, y2 in system.successors(y):
                if match[xs[i + 1], y2]:
                    stack.append((y2, i + 1))
    elif kind == INITIAL:
        stack = [(y, n) for y in range(system.n_states) if match[xs[n], y]]
        while stack:
            y, i = stack.pop()
            spent.spend(1)
            if i == 0:
                found.add(y)
                continue
            for _, y2 in system.predecessors(y):
                if match[xs[i - 1], y2]:
                    stack.append((y2, i - 1))
    else:
        raise ValueError("unknown estimator kind '%s'" % kind)
    return StateSet.from_indices(sorted(found), system.n_states)
