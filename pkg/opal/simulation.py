""" Opacity-preserving approximate simulation relations.

A relation R between the states of Sa and Sb is stored as an (na, nb) boolean
matrix. Three kinds are supported:

InitSOP   preserves initial-state opacity
CurSOP    preserves current-state opacity
InfSOP    preserves infinite-step opacity (both of the above at once)

Every kind has three groups of conditions: (1) constrains the initial states
globally, (2) bounds the output distance of each related pair by epsilon, and
(3) asks each related pair to match transitions in one or both directions,
possibly restricted to secret or non-secret successors.

Condition (1) for CurSOP and InfSOP also relates every initial state of Sb to
an initial state of Sa, and CurSOP relates every non-secret initial state of
Sb to a non-secret initial state of Sa. Without them a relation can pass the
transition clauses while an alternative run of Sb has no counterpart in Sa,
and a positive transfer would conclude opacity of an Sa that is not opaque.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from .models import OpalError, ModelError, SaveMixin, NORM_METRIC, DEFAULT_SLACK
from .opacity import INITIAL_STATE, CURRENT_STATE, INFINITE_STEP

log = logging.getLogger(__name__)

INIT_SOP = 'InitSOP'
CUR_SOP = 'CurSOP'
INF_SOP = 'InfSOP'
KINDS = (INIT_SOP, CUR_SOP, INF_SOP)
KIND_OF_PROPERTY = {INITIAL_STATE: INIT_SOP, CURRENT_STATE: CUR_SOP, INFINITE_STEP: INF_SOP}
TRANSFER_TOL = 1e-12


class PreconditionError(OpalError, ValueError):
    pass


def check_kind(kind):
    if kind not in KINDS:
        raise ValueError("unknown relation kind '%s' (expected one of %s)"
                         % (kind, ", ".join(KINDS)))
    return kind


#-------------------------------------------------------------
# Relation records


@dataclass
class Violation:
    clause: str
    states: tuple
    message: str

    def to_dict(self):
        return {'clause': self.clause, 'states': list(self.states), 'message': self.message}


@dataclass
class SimRelation(SaveMixin):
    """ A relation from a source system Sa to a target system Sb.

    pairs holds (source label, target label) tuples in index order. It is None
    when the relation is only known to exist, e.g. the canonical relation
    between a control system and its symbolic model.

    validated   conditions (2) and (3) of the kind hold
    simulates   condition (1) holds as well, so Sa is simulated by Sb
    """
    kind: str
    epsilon: float
    pairs: Optional[tuple] = None
    source: str = ""
    target: str = ""
    validated: bool = False
    simulates: bool = False
    violation: Optional[Violation] = None
    certified_by: str = "check"

    def __contains__(self, pair):
        return self.pairs is not None and tuple(pair) in set(self.pairs)

    def __len__(self):
        return 0 if self.pairs is None else len(self.pairs)

    def matrix(self, sa, sb):
        return relation_matrix(sa, sb, self.pairs or ())

    def to_frame(self):
        return pd.DataFrame(list(self.pairs or ()), columns=['source', 'target'])

    def to_dict(self):
        return {
            'kind': self.kind,
            'epsilon': self.epsilon,
            'pairs': None if self.pairs is None else [list(p) for p in self.pairs],
            'source': self.source,
            'target': self.target,
            'validated': self.validated,
            'simulates': self.simulates,
            'violation': None if self.violation is None else self.violation.to_dict(),
            'certified_by': self.certified_by,
        }

    @classmethod
    def from_dict(cls, document):
        viol = document.get('violation')
        if viol is not None:
            viol = Violation(viol['clause'], tuple(viol['states']), viol['message'])
        pairs = document.get('pairs')
        return cls(kind=check_kind(document['kind']),
                   epsilon=float(document['epsilon']),
                   pairs=None if pairs is None else tuple(tuple(p) for p in pairs),
                   source=document.get('source', ""),
                   target=document.get('target', ""),
                   validated=bool(document.get('validated', False)),
                   simulates=bool(document.get('simulates', False)),
                   violation=viol,
                   certified_by=document.get('certified_by', "check"))


@dataclass
class TransferResult:
    direction: str
    kind: str
    epsilon: float
    premise: dict = field(default_factory=dict)
    conclusion: dict = field(default_factory=dict)

    def to_dict(self):
        return {'direction': self.direction, 'kind': self.kind, 'epsilon': self.epsilon,
                'premise': dict(self.premise), 'conclusion': dict(self.conclusion)}


def load_relation(document):
    """ Reads a relation file: {"pairs": [[a, b], ...], "kind": K, "epsilon": E}.

    kind and epsilon are optional. Returns (pairs, kind, epsilon).
    """
    if isinstance(document, str):
        if os.path.isfile(document):
            with open(document, 'r', encoding='utf-8') as f:
                document = f.read()
        elif not document.lstrip().startswith(('{', '[')):
            raise ModelError("relation: no such file '%s'" % document)
        try:
            document = json.loads(document)
        except json.JSONDecodeError as err:
            raise ModelError("relation: invalid JSON (%s)" % err)
    if isinstance(document, list):
        document = {'pairs': document}
    if not isinstance(document, dict) or not isinstance(document.get('pairs'), list):
        raise ModelError("relation: expected an object with a 'pairs' array")
    for k in document:
        if k not in ('pairs', 'kind', 'epsilon'):
            raise ModelError("relation: unknown key '%s'" % k)
    pairs = []
    for i, p in enumerate(document['pairs']):
        if not isinstance(p, list) or len(p) != 2:
            raise ModelError("relation.pairs[%d]: expected [labelA, labelB]" % i)
        pairs.append(tuple(p))
    kind = document.get('kind')
    if kind is not None and kind not in KINDS:
        raise ModelError("relation.kind: unknown kind '%s'" % kind)
    return pairs, kind, document.get('epsilon')


def relation_matrix(sa, sb, pairs):
    mat = np.zeros((sa.n_states, sb.n_states), dtype=bool)
    for k, (a, b) in enumerate(pairs):
        try:
            mat[sa.state(a), sb.state(b)] = True
        except (ModelError, IndexError):
            raise ModelError("relation.pairs[%d]: unknown state in (%s, %s)" % (k, a, b))
    return mat


def _pairs_of(sa, sb, mat):
    return tuple((sa.labels[i], sb.labels[j]) for i, j in np.argwhere(mat))


#-------------------------------------------------------------
# Distances and clauses


def cross_distance(sa, sb):
    """ (na, nb) matrix of output distances between the states of sa and sb """
    if sa.output_dim != sb.output_dim:
        raise ModelError("output dimensions differ (%d != %d)"
                         % (sa.output_dim, sb.output_dim))
    if sa.metric == NORM_METRIC and sb.metric == NORM_METRIC:
        return cdist(sa.outputs, sb.outputs, 'chebyshev')
    if sa is sb or sa == sb:
        return np.array(sa.distances)
    raise ModelError("explicit distance tables can only relate a system to itself")


def _compose(a, b):
    return (a.astype(np.int64) @ b.astype(np.int64)) > 0


def _forward_bad(R, Pa, Pb, a_cols=None, b_cols=None):
    """ Pairs with an Sa move (to a_cols) that no Sb move (to b_cols) matches in R. """
    na, nb = R.shape
    a_cols = np.ones(na, dtype=bool) if a_cols is None else a_cols
    b_cols = np.ones(nb, dtype=bool) if b_cols is None else b_cols
    matched = _compose(R[:, b_cols], Pb[:, b_cols].T)
    return _compose(Pa[:, a_cols], ~matched[a_cols, :])


def _backward_bad(R, Pa, Pb, a_cols=None, b_cols=None):
    """ Pairs with an Sb move (to b_cols) that no Sa move (to a_cols) matches in R. """
    na, nb = R.shape
    a_cols = np.ones(na, dtype=bool) if a_cols is None else a_cols
    b_cols = np.ones(nb, dtype=bool) if b_cols is None else b_cols
    matched = _compose(Pa[:, a_cols], R[a_cols, :])
    return _compose(~matched[:, b_cols], Pb[:, b_cols].T)


def _transition_clauses(kind, sa, sb):
    """ [(name, bad(R))] for condition (3) of kind """
    Pa = sa.transition_matrix()
    Pb = sb.transition_matrix()
    sec_a = np.array([s.secret for s in sa.states])
    sec_b = np.array([s.secret for s in sb.states])
    forward = ('(3)(a)', lambda R: _forward_bad(R, Pa, Pb))
    if kind == INIT_SOP:
        return [forward, ('(3)(b)', lambda R: _backward_bad(R, Pa, Pb))]
    return [
        forward,
        ('(3)(b)', lambda R: _forward_bad(R, Pa, Pb, sec_a, sec_b)),
        ('(3)(c)', lambda R: _backward_bad(R, Pa, Pb)),
        ('(3)(d)', lambda R: _backward_bad(R, Pa, Pb, ~sec_a, ~sec_b)),
    ]


def _initial_clauses(kind, sa, sb):
    """ [(name, check(R) -> offending state label or None)] for condition (1) """
    a0 = np.array([s.initial for s in sa.states])
    b0 = np.array([s.initial for s in sb.states])
    sec_a = np.array([s.secret for s in sa.states])
    sec_b = np.array([s.secret for s in sb.states])

    def every_a(a_mask, b_mask):
        def check(R):
            ok = R[:, b_mask].any(axis=1)
            bad = np.nonzero(a_mask & ~ok)[0]
            return sa.labels[bad[0]] if len(bad) else None
        return check

    def every_b(b_mask, a_mask):
        def check(R):
            ok = R[a_mask, :].any(axis=0)
            bad = np.nonzero(b_mask & ~ok)[0]
            return sb.labels[bad[0]] if len(bad) else None
        return check

    all_initial = every_a(a0, b0)
    secret_initial = every_a(a0 & sec_a, b0 & sec_b)
    public_initial = every_b(b0 & ~sec_b, a0 & ~sec_a)
    # alternative runs of sb may start anywhere in its initial set and must
    # be carried back into sa
    back_initial = every_b(b0, a0)
    if kind == INIT_SOP:
        return [('(1)(a)', secret_initial), ('(1)(b)', public_initial)]
    if kind == CUR_SOP:
        return [('(1)(a)', all_initial), ('(1)(b)', back_initial), ('(1)(c)', public_initial)]
    return [('(1)(a)', all_initial), ('(1)(b)', secret_initial), ('(1)(c)', public_initial),
            ('(1)(d)', back_initial)]


def _initial_violation(kind, sa, sb, R):
    for name, check in _initial_clauses(kind, sa, sb):
        bad = check(R)
        if bad is not None:
            return Violation(name, (bad,),
                             "initial state %s has no related initial state as %s requires"
                             % (bad, name))
    return None


#-------------------------------------------------------------
# Operations


def check_relation(sa, sb, pairs, epsilon, kind, slack=DEFAULT_SLACK):
    """ Validates a user-supplied relation from sa to sb.

    Parameters
    ----------
    sa, sb (MetricSystem)
        Source and target; their outputs must share a dimension.
    pairs (iterable of (state of sa, state of sb)) or boolean matrix
    epsilon (nonnegative float)
    kind ('InitSOP', 'CurSOP' or 'InfSOP')

    Conditions are checked in the order (1), (2), (3). The first failing
    clause is reported with its lexicographically smallest offending pair.
    """
    check_kind(kind)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    D = cross_distance(sa, sb)
    if isinstance(pairs, np.ndarray):
        R = pairs.astype(bool)
    else:
        R = relation_matrix(sa, sb, pairs)
    rel = SimRelation(kind=kind, epsilon=float(epsilon), pairs=_pairs_of(sa, sb, R),
                      source=sa.name, target=sb.name)

    local = None
    far = np.argwhere(R & (D > epsilon + slack))
    if len(far):
        i, j = far[0]
        local = Violation('(2)', (sa.labels[i], sb.labels[j]),
                          "d(H(%s), H(%s)) = %g exceeds epsilon = %g"
                          % (sa.labels[i], sb.labels[j], D[i, j], epsilon))
    if local is None:
        for name, bad in _transition_clauses(kind, sa, sb):
            hits = np.argwhere(R & bad(R))
            if len(hits):
                i, j = hits[0]
                local = Violation(name, (sa.labels[i], sb.labels[j]),
                                  "pair (%s, %s) cannot match transitions as %s requires"
                                  % (sa.labels[i], sb.labels[j], name))
                break
    viol = _initial_violation(kind, sa, sb, R) or local
    rel.violation = viol
    rel.validated = local is None
    rel.simulates = viol is None
    if viol is not None:
        log.info("%s relation rejected: %s %s", kind, viol.clause, viol.message)
    return rel


def compute_maximal_relation(sa, sb, epsilon, kind, slack=DEFAULT_SLACK):
    """ Greatest relation satisfying conditions (2) and (3) of kind.

    Starts from all pairs within epsilon and repeatedly drops pairs that break
    a clause of condition (3). Every clause only gets harder to satisfy as R
    shrinks, so the iteration stops at the greatest fixpoint, which contains
    every relation that check_relation accepts. At most na * nb rounds.

    simulates on the result reports whether condition (1) holds on it, that
    is whether sa is kind-simulated by sb at all.
    """
    check_kind(kind)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    D = cross_distance(sa, sb)
    R = D <= epsilon + slack
    clauses = _transition_clauses(kind, sa, sb)
    rounds = 0
    while True:
        rounds += 1
        bad = np.zeros_like(R)
        for _, clause in clauses:
            bad |= clause(R)
        drop = R & bad
        if not drop.any():
            break
        log.debug("round %d: dropping %d pairs", rounds, int(drop.sum()))
        R = R & ~drop
    viol = _initial_violation(kind, sa, sb, R)
    rel = SimRelation(kind=kind, epsilon=float(epsilon), pairs=_pairs_of(sa, sb, R),
                      source=sa.name, target=sb.name, validated=True,
                      simulates=viol is None, violation=viol, certified_by="fixpoint")
    log.info("maximal %s relation at epsilon=%g: %d pairs after %d rounds, simulates=%s",
             kind, epsilon, len(rel), rounds, rel.simulates)
    return rel


def transfer(premise, relation, delta=None):
    """ Carries an opacity verdict across a simulation relation.

    Positive direction: relation shows Sa is simulated by Sb and premise says
    Sb is opaque at premise.delta. Then Sa is opaque at premise.delta + 2
    epsilon, or at any explicit delta with epsilon <= delta / 2 and
    premise.delta <= delta - 2 epsilon.

    Negative direction: relation shows Sb is simulated by Sa and premise says
    Sb is not opaque at premise.delta. Then Sa is not opaque at premise.delta -
    2 epsilon, which must be nonnegative.

    Nothing is verified on the concluded system.
    """
    kind = KIND_OF_PROPERTY[premise.property]
    if relation.kind != kind:
        raise PreconditionError("relation kind %s does not preserve %s-state opacity"
                                % (relation.kind, premise.property))
    if not relation.simulates:
        raise PreconditionError("relation does not establish simulation")
    eps = relation.epsilon
    name = premise.system_name
    if premise.holds:
        direction = 'positive'
        if name and relation.target and name != relation.target:
            raise PreconditionError("premise is about %s but the relation targets %s"
                                    % (name, relation.target))
        conclusion_system = relation.source
        if delta is None:
            delta = premise.delta + 2 * eps
        if eps > delta / 2 + TRANSFER_TOL:
            raise PreconditionError("precondition epsilon <= delta/2 violated "
                                    "(epsilon=%g, delta=%g)" % (eps, delta))
        if premise.delta > delta - 2 * eps + TRANSFER_TOL:
            raise PreconditionError("premise must hold at delta - 2 epsilon = %g"
                                    % (delta - 2 * eps))
    else:
        direction = 'negative'
        if name and relation.source and name != relation.source:
            raise PreconditionError("premise is about %s but the relation starts at %s"
                                    % (name, relation.source))
        conclusion_system = relation.target
        if delta is None:
            delta = premise.delta - 2 * eps
            if -TRANSFER_TOL < delta < 0:
                delta = 0.0
        if delta < 0 or premise.delta < delta + 2 * eps - TRANSFER_TOL:
            raise PreconditionError("premise must fail at delta + 2 epsilon with "
                                    "delta >= 0")
    result = TransferResult(
        direction=direction, kind=kind, epsilon=eps,
        premise={'system': name, 'property': premise.property,
                 'delta': premise.delta, 'holds': premise.holds},
        conclusion={'system': conclusion_system, 'property': premise.property,
                    'delta': float(delta), 'holds': premise.holds})
    log.info("transfer (%s): %s opacity %s at delta=%g", direction, premise.property,
             "holds" if premise.holds else "fails", delta)
    return result
