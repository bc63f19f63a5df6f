""" Metric transition systems, state sets and runs.

A metric system is a finite transition system whose states carry a real output
vector, plus a metric over those outputs. Everything else in opal (estimators,
opacity checks, simulation relations, symbolic abstractions) consumes the
objects defined here.
"""
import json
import logging
import os
from collections import namedtuple

import numpy as np
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

DEFAULT_SLACK = 0.0
NORM_METRIC = 'inf'
TABLE_METRIC = 'table'
MODEL_KEYS = ('states', 'inputs', 'transitions', 'metric', 'name')
STATE_KEYS = ('label', 'output', 'initial', 'secret')


class OpalError(Exception):
    pass


class ModelError(OpalError, ValueError):
    pass


class SaveMixin(object):
    """ Bakes in JSON save settings for objects that know to_dict/from_dict.

    Subclasses implement to_dict() and a from_dict() classmethod; this mixin
    gives them save() and load_saved() with a stable, sorted layout.
    """

    def save(self, save_path):
        with open(save_path, 'w', encoding='utf-8') as f:
            f.write(dumps(self.to_dict()))

    @classmethod
    def load_saved(cls, save_path):
        with open(save_path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def dumps(payload):
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


#-------------------------------------------------------------
# State sets


class StateSet(object):
    """ Immutable set of state indices, stored as an int bitmask.

    Bit i is set iff state i is a member. The size is the number of states of
    the owning system and only matters for complements and printing.
    """
    __slots__ = ('bits', 'size')

    def __init__(self, bits, size):
        object.__setattr__(self, 'bits', int(bits))
        object.__setattr__(self, 'size', int(size))

    def __setattr__(self, name, value):
        raise AttributeError("StateSet is immutable")

    @classmethod
    def from_indices(cls, indices, size):
        bits = 0
        for i in indices:
            if not 0 <= i < size:
                raise IndexError("state index %d out of range" % i)
            bits |= 1 << i
        return cls(bits, size)

    @classmethod
    def empty(cls, size):
        return cls(0, size)

    @classmethod
    def full(cls, size):
        return cls((1 << size) - 1, size)

    def indices(self):
        return list(iter_bits(self.bits))

    def labels(self, system):
        return [system.labels[i] for i in iter_bits(self.bits)]

    def complement(self):
        return StateSet(~self.bits & ((1 << self.size) - 1), self.size)

    def issubset(self, other):
        return self.bits & ~_bits(other) == 0

    def isdisjoint(self, other):
        return self.bits & _bits(other) == 0

    def __iter__(self):
        return iter_bits(self.bits)

    def __len__(self):
        return bin(self.bits).count("1")

    def __bool__(self):
        return self.bits != 0

    def __contains__(self, i):
        return i >= 0 and (self.bits >> i) & 1 == 1

    def __or__(self, other):
        return StateSet(self.bits | _bits(other), self.size)

    def __and__(self, other):
        return StateSet(self.bits & _bits(other), self.size)

    def __sub__(self, other):
        return StateSet(self.bits & ~_bits(other), self.size)

    def __le__(self, other):
        return self.issubset(other)

    def __eq__(self, other):
        if isinstance(other, StateSet):
            return self.bits == other.bits
        if isinstance(other, (set, frozenset)):
            return set(self.indices()) == other
        return NotImplemented

    def __hash__(self):
        return hash(self.bits)

    def sort_key(self):
        return tuple(self.indices())

    def __repr__(self):
        return "StateSet(%s)" % self.indices()


def _bits(other):
    return other.bits if isinstance(other, StateSet) else int(other)


def iter_bits(bits):
    """ yields the positions of set bits, lowest first """
    while bits:
        low = bits & -bits
        yield low.bit_length() - 1
        bits ^= low


#-------------------------------------------------------------
# Systems

StateRecord = namedtuple('StateRecord', ['label', 'output', 'initial', 'secret'])
Nontriviality = namedtuple('Nontriviality', ['passed', 'state'])


class MetricSystem(SaveMixin):
    """ Finite transition system with secret states and a metric output map.

    Parameters
    ----------
    states (list of StateRecord)
        Label, output vector, initial flag and secret flag per state. Outputs
        must all have the same dimension m >= 1.
    inputs (list of strings)
        Input labels. Inputs are internal: an observer only sees outputs.
    transitions (iterable of (source, input, target) index triples)
        Duplicates are rejected.
    metric (None or (n, n) array)
        None selects the infinity norm on outputs; an array is an explicit,
        symmetric distance table indexed by state.
    name (string)
        Used in provenance and relation reports only.

    Instances are immutable once built; all queries are pure.
    """

    def __init__(self, states, inputs, transitions, metric=None, name=""):
        self.states = tuple(StateRecord(s.label, tuple(float(v) for v in s.output),
                                        bool(s.initial), bool(s.secret))
                            for s in states)
        self.inputs = tuple(inputs)
        self.name = name
        n = len(self.states)
        if n == 0:
            raise ModelError("states: at least one state is required")
        self.labels = tuple(s.label for s in self.states)
        self._index = dict((lab, i) for i, lab in enumerate(self.labels))
        if len(self._index) != n:
            raise ModelError("states: duplicate state label")
        self._input_index = dict((lab, i) for i, lab in enumerate(self.inputs))
        if len(self._input_index) != len(self.inputs):
            raise ModelError("inputs: duplicate input label")
        dims = set(len(s.output) for s in self.states)
        if len(dims) != 1 or 0 in dims:
            raise ModelError("states: output vectors must share one dimension m >= 1")
        self.outputs = np.array([s.output for s in self.states], dtype=np.float64)
        self.outputs.setflags(write=False)
        if not any(s.initial for s in self.states):
            raise ModelError("states: at least one initial state is required")

        trans = []
        seen = set()
        for k, (x, u, y) in enumerate(transitions):
            if not (0 <= x < n and 0 <= y < n and 0 <= u < len(self.inputs)):
                raise ModelError("transitions[%d]: index out of range" % k)
            if (x, u, y) in seen:
                raise ModelError("transitions[%d]: duplicate transition" % k)
            seen.add((x, u, y))
            trans.append((int(x), int(u), int(y)))
        self.transitions = tuple(sorted(trans))

        self._post = [[0] * n for _ in self.inputs]
        self._pre = [[0] * n for _ in self.inputs]
        for x, u, y in self.transitions:
            self._post[u][x] |= 1 << y
            self._pre[u][y] |= 1 << x
        self._post_any = [0] * n
        self._pre_any = [0] * n
        for u in range(len(self.inputs)):
            for x in range(n):
                self._post_any[x] |= self._post[u][x]
                self._pre_any[x] |= self._pre[u][x]

        if metric is None:
            self.metric = NORM_METRIC
            dmat = cdist(self.outputs, self.outputs, 'chebyshev')
        else:
            self.metric = TABLE_METRIC
            dmat = np.array(metric, dtype=np.float64)
            _check_table(dmat, n)
        dmat.setflags(write=False)
        self.distances = dmat

        self.initial_set = StateSet.from_indices(
            [i for i, s in enumerate(self.states) if s.initial], n)
        self.secret_set = StateSet.from_indices(
            [i for i, s in enumerate(self.states) if s.secret], n)

    # sizes and lookups

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_inputs(self):
        return len(self.inputs)

    @property
    def output_dim(self):
        return self.outputs.shape[1]

    def index_of(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise ModelError("unknown label '%s'" % label)

    def input_index_of(self, label):
        try:
            return self._input_index[label]
        except KeyError:
            raise ModelError("unknown input label '%s'" % label)

    def state(self, x):
        """ accepts an index or a label """
        return self.index_of(x) if isinstance(x, str) else int(x)

    def state_set(self, members):
        return StateSet.from_indices([self.state(m) for m in members], self.n_states)

    # metric

    def distance(self, x, y):
        """ d(H(x), H(y)); the table overrides the infinity norm when present """
        return float(self.distances[self.state(x), self.state(y)])

    def diameter(self):
        return float(self.distances.max())

    def candidate_deltas(self):
        """ Sorted distinct values at which an opacity verdict can change. """
        vals = np.unique(np.concatenate([[0.0], self.distances.ravel()]))
        return [float(v) for v in vals]

    def close_set(self, x, delta, slack=DEFAULT_SLACK):
        """ {x' : d(H(x), H(x')) <= delta + slack}, always containing x """
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        row = self.distances[self.state(x)]
        members = np.nonzero(row <= delta + slack)[0]
        return StateSet.from_indices(members.tolist(), self.n_states) | (1 << self.state(x))

    def close_masks(self, delta, slack=DEFAULT_SLACK):
        """ close_set bits for every state at once """
        return [self.close_set(x, delta, slack).bits for x in range(self.n_states)]

    # transition structure

    def post_set(self, q, u):
        bits = 0
        post = self._post[self._input(u)]
        for x in iter_bits(_bits(q)):
            bits |= post[x]
        return StateSet(bits, self.n_states)

    def pre_set(self, q, u):
        bits = 0
        pre = self._pre[self._input(u)]
        for x in iter_bits(_bits(q)):
            bits |= pre[x]
        return StateSet(bits, self.n_states)

    def post_any(self, q):
        """ union of post_set over every input """
        bits = 0
        for x in iter_bits(_bits(q)):
            bits |= self._post_any[x]
        return StateSet(bits, self.n_states)

    def pre_any(self, q):
        bits = 0
        for x in iter_bits(_bits(q)):
            bits |= self._pre_any[x]
        return StateSet(bits, self.n_states)

    def successors(self, x):
        """ sorted (input, target) pairs leaving x """
        x = self.state(x)
        return [(u, y) for u in range(self.n_inputs)
                for y in iter_bits(self._post[u][x])]

    def predecessors(self, x):
        x = self.state(x)
        return [(u, y) for u in range(self.n_inputs)
                for y in iter_bits(self._pre[u][x])]

    def has_transition(self, x, u, y):
        return (self._post[u][x] >> y) & 1 == 1

    def transition_matrix(self):
        """ (n, n) boolean matrix of x -> y under some input """
        n = self.n_states
        mat = np.zeros((n, n), dtype=bool)
        for x, _, y in self.transitions:
            mat[x, y] = True
        return mat

    def _input(self, u):
        return self.input_index_of(u) if isinstance(u, str) else int(u)

    # secrets

    def check_nontriviality(self, delta, slack=DEFAULT_SLACK):
        """ Checks that no initial state gives the secret away at time zero.

        Fails at the first x0 in X0 whose delta-close initial states all lie in
        the secret set; the opacity notions are then violated trivially.
        """
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        for x0 in self.initial_set:
            close0 = self.close_set(x0, delta, slack) & self.initial_set
            if close0.issubset(self.secret_set):
                log.warning("non-triviality fails at delta=%g for initial state %s",
                            delta, self.labels[x0])
                return Nontriviality(False, x0)
        return Nontriviality(True, None)

    # serialization

    def to_dict(self):
        d = {
            'states': [{'label': s.label, 'output': list(s.output),
                        'initial': s.initial, 'secret': s.secret}
                       for s in self.states],
            'inputs': list(self.inputs),
            'transitions': [[self.labels[x], self.inputs[u], self.labels[y]]
                            for x, u, y in self.transitions],
        }
        if self.metric == TABLE_METRIC:
            n = self.n_states
            d['metric'] = {'type': TABLE_METRIC,
                           'entries': [[self.labels[i], self.labels[j],
                                        float(self.distances[i, j])]
                                       for i in range(n) for j in range(i + 1, n)]}
        if self.name:
            d['name'] = self.name
        return d

    @classmethod
    def from_dict(cls, document):
        return load_system(document)

    def __eq__(self, other):
        if not isinstance(other, MetricSystem):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = object.__hash__

    def __repr__(self):
        return "MetricSystem(%r, %d states, %d inputs, %d transitions)" % (
            self.name, self.n_states, self.n_inputs, len(self.transitions))


def _check_table(dmat, n):
    if dmat.shape != (n, n):
        raise ModelError("metric: table must cover %d x %d state pairs" % (n, n))
    if np.any(np.isnan(dmat)):
        raise ModelError("metric: missing distance in table")
    if np.any(dmat < 0):
        raise ModelError("metric: distances must be nonnegative")
    if np.any(np.diag(dmat) != 0):
        raise ModelError("metric: distance table must be zero on the diagonal")
    if not np.array_equal(dmat, dmat.T):
        raise ModelError("metric: asymmetric distance table")


#-------------------------------------------------------------
# Model files


def load_system(document, name=""):
    """ Builds a validated MetricSystem from a model document.

    Parameters
    ----------
    document (dict, JSON string, or path to a .json file)
        Top-level keys 'states', 'inputs', 'transitions' and optionally
        'metric' ({"type": "table", "entries": [[a, b, d], ...]}) and 'name'.
        Transitions reference states and inputs by label.
    name (string)
        Overrides the document name. Paths fall back to the file stem when
        the document has no name.

    Errors are ModelError instances whose message starts with the offending
    location.
    """
    stem = ""
    if isinstance(document, str):
        if os.path.isfile(document):
            stem = os.path.splitext(os.path.basename(document))[0]
            with open(document, 'r', encoding='utf-8') as f:
                document = f.read()
        elif not document.lstrip().startswith(('{', '[')):
            raise ModelError("document: no such file '%s'" % document)
        try:
            document = json.loads(document)
        except json.JSONDecodeError as err:
            raise ModelError("document: invalid JSON (%s)" % err)
    if not isinstance(document, dict):
        raise ModelError("document: expected a JSON object")
    for k in document:
        if k not in MODEL_KEYS:
            raise ModelError("document: unknown key '%s'" % k)
    for k in ('states', 'inputs', 'transitions'):
        if k not in document:
            raise ModelError("document: missing key '%s'" % k)
        if not isinstance(document[k], list):
            raise ModelError("%s: expected an array" % k)

    states = []
    for i, rec in enumerate(document['states']):
        where = "states[%d]" % i
        if not isinstance(rec, dict):
            raise ModelError("%s: expected an object" % where)
        for k in rec:
            if k not in STATE_KEYS:
                raise ModelError("%s: unknown key '%s'" % (where, k))
        if not isinstance(rec.get('label'), str):
            raise ModelError("%s.label: expected a string" % where)
        out = rec.get('output')
        if not isinstance(out, list) or not out or not all(_is_number(v) for v in out):
            raise ModelError("%s.output: expected a nonempty array of numbers" % where)
        if states and len(out) != len(states[0].output):
            raise ModelError("%s.output: dimension mismatch (%d != %d)"
                             % (where, len(out), len(states[0].output)))
        for flag in ('initial', 'secret'):
            if not isinstance(rec.get(flag, False), bool):
                raise ModelError("%s.%s: expected a boolean" % (where, flag))
        states.append(StateRecord(rec['label'], out, rec.get('initial', False),
                                  rec.get('secret', False)))

    labels = dict((s.label, i) for i, s in enumerate(states))
    if len(labels) != len(states):
        raise ModelError("states: duplicate state label")
    inputs = document['inputs']
    for i, u in enumerate(inputs):
        if not isinstance(u, str):
            raise ModelError("inputs[%d]: expected a string" % i)
    in_labels = dict((u, i) for i, u in enumerate(inputs))

    transitions = []
    for i, t in enumerate(document['transitions']):
        where = "transitions[%d]" % i
        if not isinstance(t, list) or len(t) != 3:
            raise ModelError("%s: expected [source, input, target]" % where)
        if t[0] not in labels:
            raise ModelError("%s[0]: unknown label '%s'" % (where, t[0]))
        if t[1] not in in_labels:
            raise ModelError("%s[1]: unknown label '%s'" % (where, t[1]))
        if t[2] not in labels:
            raise ModelError("%s[2]: unknown label '%s'" % (where, t[2]))
        transitions.append((labels[t[0]], in_labels[t[1]], labels[t[2]]))
    if len(set(transitions)) != len(transitions):
        raise ModelError("transitions: duplicate transition")

    metric = None
    if 'metric' in document:
        metric = _table_from_document(document['metric'], labels)
    return MetricSystem(states, inputs, transitions, metric=metric,
                        name=name or document.get('name') or stem)


def _table_from_document(spec, labels):
    if not isinstance(spec, dict) or spec.get('type') != TABLE_METRIC:
        raise ModelError("metric: expected {\"type\": \"table\", \"entries\": [...]}")
    for k in spec:
        if k not in ('type', 'entries'):
            raise ModelError("metric: unknown key '%s'" % k)
    n = len(labels)
    dmat = np.full((n, n), np.nan)
    np.fill_diagonal(dmat, 0.0)
    for i, e in enumerate(spec.get('entries', [])):
        where = "metric.entries[%d]" % i
        if not isinstance(e, list) or len(e) != 3 or not _is_number(e[2]):
            raise ModelError("%s: expected [labelA, labelB, distance]" % where)
        for j in (0, 1):
            if e[j] not in labels:
                raise ModelError("%s[%d]: unknown label '%s'" % (where, j, e[j]))
        a, b, d = labels[e[0]], labels[e[1]], float(e[2])
        if d < 0:
            raise ModelError("%s: distances must be nonnegative" % where)
        if a == b and d != 0:
            raise ModelError("%s: distance table must be zero on the diagonal" % where)
        for (p, r) in ((a, b), (b, a)):
            if not np.isnan(dmat[p, r]) and dmat[p, r] != d:
                raise ModelError("%s: asymmetric distance table" % where)
            dmat[p, r] = d
    if np.any(np.isnan(dmat)):
        i, j = np.argwhere(np.isnan(dmat))[0]
        inv = dict((v, k) for k, v in labels.items())
        raise ModelError("metric: missing distance for (%s, %s)" % (inv[i], inv[j]))
    return dmat


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def dump_system(system):
    """ JSON text for a system; load_system(dump_system(s)) == s """
    return dumps(system.to_dict())


#-------------------------------------------------------------
# Runs


class Run(object):
    """ A finite state run x0 -u1-> x1 ... -un-> xn of a system.

    states holds n+1 state indices and inputs the n input indices between them.
    """

    def __init__(self, states, inputs=()):
        self.states = tuple(int(x) for x in states)
        self.inputs = tuple(int(u) for u in inputs)
        if not self.states:
            raise ValueError("a run needs at least one state")
        if len(self.inputs) != len(self.states) - 1:
            raise ValueError("a run of %d states needs %d inputs"
                             % (len(self.states), len(self.states) - 1))

    def __len__(self):
        return len(self.inputs)

    def __eq__(self, other):
        return (isinstance(other, Run) and self.states == other.states
                and self.inputs == other.inputs)

    def __hash__(self):
        return hash((self.states, self.inputs))

    def __repr__(self):
        return "Run(%s, %s)" % (list(self.states), list(self.inputs))

    def is_valid(self, system):
        return all(system.has_transition(x, u, y) for x, u, y in
                   zip(self.states[:-1], self.inputs, self.states[1:]))

    def labels(self, system):
        return [system.labels[x] for x in self.states]

    def outputs(self, system):
        return [list(system.states[x].output) for x in self.states]

    def to_dict(self, system):
        return {'states': self.labels(system),
                'inputs': [system.inputs[u] for u in self.inputs],
                'outputs': self.outputs(system)}

    @classmethod
    def from_labels(cls, system, states, inputs=None):
        """ Builds a run from labels; inputs are inferred when omitted. """
        idx = [system.state(x) for x in states]
        if inputs is None:
            inputs = []
            for x, y in zip(idx[:-1], idx[1:]):
                us = [u for u, t in system.successors(x) if t == y]
                if not us:
                    raise ModelError("no transition %s -> %s" % (system.labels[x],
                                                                 system.labels[y]))
                inputs.append(us[0])
        else:
            inputs = [system.input_index_of(u) if isinstance(u, str) else u
                      for u in inputs]
        return cls(idx, inputs)
