""" Approximate initial-state, current-state and infinite-step opacity.

Each verifier builds the relevant estimator(s) and scans the reachable nodes:

initial   a node (x, q) with x in X0 & XS and q & X0 inside XS is a violation
current   a node (x, q) with q inside XS is a violation
infinite  a pair of nodes, one from each estimator, sharing a secret
          reference x, whose beliefs intersect inside XS is a violation

Witnesses are shortest violating runs. When the non-triviality check fails the
shortest violation of length >= 1 is preferred over the bare initial state.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from .models import Run, DEFAULT_SLACK
from .estimator import (build_initial_estimator, build_current_estimator,
                        DEFAULT_NODE_CAP)

log = logging.getLogger(__name__)

INITIAL_STATE = 'initial'
CURRENT_STATE = 'current'
INFINITE_STEP = 'infinite'
PROPERTIES = (INITIAL_STATE, CURRENT_STATE, INFINITE_STEP)


@dataclass
class OpacityVerdict:
    property: str
    delta: float
    holds: bool
    system: object = None
    witness: Optional[Run] = None
    trivially_failed: bool = False
    offending_state: Optional[int] = None
    secret_instant: Optional[int] = None
    stats: dict = field(default_factory=dict)

    @property
    def system_name(self):
        return getattr(self.system, 'name', "")

    def to_dict(self):
        s = self.system
        return {
            'property': self.property,
            'delta': self.delta,
            'holds': self.holds,
            'trivially_failed': self.trivially_failed,
            'offending_state': (None if self.offending_state is None
                                else s.labels[self.offending_state]),
            'secret_instant': self.secret_instant,
            'witness': None if self.witness is None else self.witness.to_dict(s),
            'stats': self.stats,
        }


def check_property(prop):
    if prop not in PROPERTIES:
        raise ValueError("unknown property '%s' (expected one of %s)"
                         % (prop, ", ".join(PROPERTIES)))
    return prop


def _check_delta(delta):
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return float(delta)


def _pick(candidates):
    """ Chooses (length, key, payload): shortest of length >= 1
    if any, else shortest overall. """
    positive = [c for c in candidates if c[0] >= 1]
    pool = positive or candidates
    return min(pool, key=lambda c: (c[0], c[1])) if pool else None


def _single_estimator_witness(est, bad, reverse):
    """ Shortest path from an initial node to any bad node. """
    dist0, parent0, dist1, parent1 = est.distances()
    candidates = []
    for i in bad:
        if dist0[i] >= 0:
            candidates.append((int(dist0[i]), i, (i, False)))
        if dist1[i] >= 0:
            candidates.append((int(dist1[i]), i, (i, True)))
    length, _, (target, use1) = _pick(candidates)
    ids, inputs = est.path_to(target, parent0, parent1 if use1 else None)
    refs = [est.reference(i) for i in ids]
    if reverse:
        return Run(refs[::-1], inputs[::-1])
    return Run(refs, inputs)


def verify_initial_state(system, delta, slack=DEFAULT_SLACK, node_cap=DEFAULT_NODE_CAP):
    """ Decides delta-approximate initial-state opacity.

    The witness, on failure, is a run from a secret initial state that no run
    from a non-secret initial state follows within delta. It is rebuilt by
    reversing the estimator path that reaches the violating node.
    """
    delta = _check_delta(delta)
    nontrivial = system.check_nontriviality(delta, slack)
    est = build_initial_estimator(system, delta, slack=slack, node_cap=node_cap)
    x0s = system.initial_set & system.secret_set
    bad = [i for i, (x, q) in enumerate(est.nodes)
           if x in x0s and (q & system.initial_set).issubset(system.secret_set)]
    verdict = OpacityVerdict(INITIAL_STATE, delta, not bad, system=system,
                             trivially_failed=not nontrivial.passed,
                             offending_state=nontrivial.state,
                             stats=est.stats)
    if bad:
        verdict.witness = _single_estimator_witness(est, bad, reverse=True)
        verdict.secret_instant = 0
    log.info("initial-state opacity at delta=%g: %s", delta, verdict.holds)
    return verdict


def verify_current_state(system, delta, slack=DEFAULT_SLACK, node_cap=DEFAULT_NODE_CAP,
                         strict=False):
    """ Decides delta-approximate current-state opacity.

    Fails iff some reachable current-state estimator node has its whole belief
    inside the secret set; the witness is the reference run to that node.
    """
    delta = _check_delta(delta)
    nontrivial = system.check_nontriviality(delta, slack)
    est = build_current_estimator(system, delta, slack=slack, node_cap=node_cap,
                                  strict=strict)
    bad = [i for i, (_, q) in enumerate(est.nodes) if q.issubset(system.secret_set)]
    verdict = OpacityVerdict(CURRENT_STATE, delta, not bad, system=system,
                             trivially_failed=not nontrivial.passed,
                             offending_state=nontrivial.state,
                             stats=est.stats)
    if bad:
        verdict.witness = _single_estimator_witness(est, bad, reverse=False)
        verdict.secret_instant = len(verdict.witness)
    log.info("current-state opacity at delta=%g: %s", delta, verdict.holds)
    return verdict


def verify_infinite_step(system, delta, slack=DEFAULT_SLACK, node_cap=DEFAULT_NODE_CAP,
                         strict=False):
    """ Decides delta-approximate infinite-step opacity.

    Both estimators are built and their nodes grouped by reference. Every pair
    (x, q) from the initial-state estimator and (x, q') from the current-state
    estimator with x secret must leave a non-secret state in q & q'. The pairs
    need not be reachable under a common input word.

    The witness runs forward along the current-state path to x, then follows
    the reversed initial-state path away from x; secret_instant is the
    position of x in it.
    """
    delta = _check_delta(delta)
    nontrivial = system.check_nontriviality(delta, slack)
    est_i = build_initial_estimator(system, delta, slack=slack, node_cap=node_cap)
    est_c = build_current_estimator(system, delta, slack=slack, node_cap=node_cap,
                                    strict=strict)
    secret = system.secret_set
    by_ref = {}
    for j, (x, _) in enumerate(est_c.nodes):
        if x in secret:
            by_ref.setdefault(x, []).append(j)

    dist_i = est_i.distances()
    dist_c = est_c.distances()
    candidates = []
    for i, (x, q) in enumerate(est_i.nodes):
        for j in by_ref.get(x, ()):
            if not (q & est_c.belief(j)).issubset(secret):
                continue
            for use_c1 in (False, True):
                dc = (dist_c[2] if use_c1 else dist_c[0])[j]
                for use_i1 in (False, True):
                    di = (dist_i[2] if use_i1 else dist_i[0])[i]
                    if dc >= 0 and di >= 0:
                        candidates.append((int(dc + di), (x, j, i, use_c1, use_i1),
                                           (j, i, use_c1, use_i1)))

    stats = {'nodes': est_i.stats['nodes'] + est_c.stats['nodes'],
             'transitions': est_i.stats['transitions'] + est_c.stats['transitions'],
             'initial_estimator_nodes': est_i.stats['nodes'],
             'current_estimator_nodes': est_c.stats['nodes']}
    verdict = OpacityVerdict(INFINITE_STEP, delta, not candidates, system=system,
                             trivially_failed=not nontrivial.passed,
                             offending_state=nontrivial.state,
                             stats=stats)
    if candidates:
        _, _, (j, i, use_c1, use_i1) = _pick(candidates)
        c_ids, c_inputs = est_c.path_to(j, dist_c[1], dist_c[3] if use_c1 else None)
        i_ids, i_inputs = est_i.path_to(i, dist_i[1], dist_i[3] if use_i1 else None)
        forward = [est_c.reference(k) for k in c_ids]
        backward = [est_i.reference(k) for k in i_ids][::-1]
        verdict.witness = Run(forward + backward[1:], c_inputs + i_inputs[::-1])
        verdict.secret_instant = len(c_inputs)
    log.info("infinite-step opacity at delta=%g: %s", delta, verdict.holds)
    return verdict


VERIFIERS = {
    INITIAL_STATE: verify_initial_state,
    CURRENT_STATE: verify_current_state,
    INFINITE_STEP: verify_infinite_step,
}


def verify(system, delta, prop, slack=DEFAULT_SLACK, node_cap=DEFAULT_NODE_CAP,
           strict=False):
    """ Dispatches to the verifier for prop ('initial', 'current', 'infinite'). """
    check_property(prop)
    if prop == INITIAL_STATE:
        return verify_initial_state(system, delta, slack=slack, node_cap=node_cap)
    return VERIFIERS[prop](system, delta, slack=slack, node_cap=node_cap, strict=strict)


def _shifted(d, slack):
    """ d - slack, clipped at 0 and nudged up until d <= c + slack holds in floats """
    c = max(d - slack, 0.0)
    while c + slack < d:
        c = math.nextafter(c, math.inf)
    return c


def opacity_threshold(system, prop, slack=DEFAULT_SLACK, node_cap=DEFAULT_NODE_CAP,
                      strict=False):
    """ Least delta at which prop holds, or None if it fails at every delta.

    Verdicts only change where delta + slack reaches a pairwise output
    distance and are monotone in delta, so a binary search over those points
    finds the least one that holds.
    """
    check_property(prop)
    candidates = sorted(set(_shifted(d, slack) for d in system.candidate_deltas()))

    def holds(k):
        ok = verify(system, candidates[k], prop, slack=slack, node_cap=node_cap,
                    strict=strict).holds
        log.info("threshold search for %s: delta=%g holds=%s", prop, candidates[k], ok)
        return ok

    if not holds(len(candidates) - 1):
        return None
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if holds(mid):
            hi = mid
        else:
            lo = mid + 1
    return candidates[lo]
