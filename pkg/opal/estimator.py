""" Initial-state and current-state estimators.

An estimator node is a pair (reference, belief): a state of the system and the
set of states an observer with output precision delta cannot tell apart from
it. The initial-state estimator walks runs backward and tracks which initial
states remain plausible; the current-state estimator walks forward and tracks
which current states remain plausible.
"""
import logging
from collections import deque

import numpy as np
import pandas as pd

from .models import OpalError, StateSet, DEFAULT_SLACK, iter_bits

log = logging.getLogger(__name__)

DEFAULT_NODE_CAP = 1000000
INITIAL = 'initial'
CURRENT = 'current'


class StateSpaceExceeded(OpalError, RuntimeError):
    pass


class EstimatorPathError(OpalError, ValueError):
    pass


class Estimator(object):
    """ Reachable fragment of an initial-state or current-state estimator.

    Nodes are (reference index, StateSet) tuples in canonical order: by
    reference, then by the sorted members of the belief. transitions holds
    (source node id, input index, target node id) triples, sorted.
    """

    def __init__(self, system, kind, delta, nodes, initial_nodes, transitions,
                 slack=DEFAULT_SLACK, strict=False):
        self.system = system
        self.kind = kind
        self.delta = float(delta)
        self.slack = slack
        self.strict = strict
        self.nodes = nodes
        self.initial_nodes = initial_nodes
        self.transitions = transitions
        self._index = dict((node, i) for i, node in enumerate(nodes))
        self._out = [[] for _ in nodes]
        for src, u, dst in transitions:
            self._out[src].append((u, dst))

    def __len__(self):
        return len(self.nodes)

    @property
    def stats(self):
        return {'nodes': len(self.nodes), 'transitions': len(self.transitions)}

    def node_id(self, node):
        """ Accepts a node id, a (reference, StateSet) tuple, or labels. """
        if isinstance(node, (int, np.integer)):
            if not 0 <= node < len(self.nodes):
                raise EstimatorPathError("no node %d in estimator" % node)
            return int(node)
        ref, belief = node
        ref = self.system.state(ref)
        if not isinstance(belief, StateSet):
            belief = self.system.state_set(belief)
        try:
            return self._index[(ref, belief)]
        except KeyError:
            raise EstimatorPathError("node (%s, %s) is not reachable" % (
                self.system.labels[ref], belief.labels(self.system)))

    def successors(self, node_id):
        return self._out[node_id]

    def reference(self, node_id):
        return self.nodes[node_id][0]

    def belief(self, node_id):
        return self.nodes[node_id][1]

    def nodes_with_reference(self, x):
        x = self.system.state(x)
        return [i for i, (ref, _) in enumerate(self.nodes) if ref == x]

    def step(self, node_id, u, reference):
        """ id of the successor of node_id under input u with the given reference """
        for v, dst in self._out[node_id]:
            if v == u and self.nodes[dst][0] == reference:
                return dst
        raise EstimatorPathError("no transition from node %d under input %s to %s" % (
            node_id, self.system.inputs[u], self.system.labels[reference]))

    def distances(self):
        """ Shortest path lengths from the initial nodes.

        Returns (dist0, parent0, dist1, parent1): dist0 is the plain BFS
        distance; dist1 the length of the shortest path of length >= 1, with
        -1 for unreachable. parents are (node id, input) pairs.
        """
        n = len(self.nodes)
        dist0 = np.full(n, -1, dtype=np.int64)
        parent0 = [None] * n
        queue = deque()
        for i in self.initial_nodes:
            dist0[i] = 0
            queue.append(i)
        while queue:
            i = queue.popleft()
            for u, j in self._out[i]:
                if dist0[j] < 0:
                    dist0[j] = dist0[i] + 1
                    parent0[j] = (i, u)
                    queue.append(j)
        dist1 = np.full(n, -1, dtype=np.int64)
        parent1 = [None] * n
        for i in np.argsort(dist0, kind='stable'):
            if dist0[i] < 0:
                continue
            for u, j in self._out[i]:
                if dist1[j] < 0 or dist0[i] + 1 < dist1[j]:
                    dist1[j] = dist0[i] + 1
                    parent1[j] = (i, u)
        return dist0, parent0, dist1, parent1

    def path_to(self, target, parent0, parent1=None):
        """ (node ids, inputs) of the recorded shortest path to target.

        With parent1 given the path has length >= 1.
        """
        ids, inputs = [target], []
        if parent1 is not None:
            i, u = parent1[target]
            ids.append(i)
            inputs.append(u)
        while parent0[ids[-1]] is not None:
            i, u = parent0[ids[-1]]
            ids.append(i)
            inputs.append(u)
        return ids[::-1], inputs[::-1]

    # exports

    def to_frame(self):
        labels = self.system.labels
        initial = set(self.initial_nodes)
        rows = [{'node': i,
                 'reference': labels[ref],
                 'belief': ",".join(belief.labels(self.system)),
                 'initial': i in initial,
                 'out_degree': len(self._out[i])}
                for i, (ref, belief) in enumerate(self.nodes)]
        return pd.DataFrame(rows, columns=['node', 'reference', 'belief',
                                           'initial', 'out_degree']).set_index('node')

    def to_dict(self):
        labels = self.system.labels
        return {
            'kind': self.kind,
            'delta': self.delta,
            'strict': self.strict,
            'nodes': [{'id': i, 'reference': labels[ref],
                       'belief': belief.labels(self.system)}
                      for i, (ref, belief) in enumerate(self.nodes)],
            'initial_nodes': list(self.initial_nodes),
            'transitions': [[src, self.system.inputs[u], dst]
                            for src, u, dst in self.transitions],
            'stats': self.stats,
        }

    def to_dot(self):
        labels = self.system.labels
        initial = set(self.initial_nodes)
        lines = ['digraph %s_estimator {' % self.kind, '  rankdir=LR;']
        for i, (ref, belief) in enumerate(self.nodes):
            shape = 'doublecircle' if i in initial else 'ellipse'
            lines.append('  n%d [shape=%s, label="(%s, {%s})"];' % (
                i, shape, labels[ref], ",".join(belief.labels(self.system))))
        for src, u, dst in self.transitions:
            lines.append('  n%d -> n%d [label="%s"];' % (src, dst, self.system.inputs[u]))
        lines.append('}')
        return "\n".join(lines) + "\n"


def _explore(system, kind, delta, roots, step, node_cap, slack, strict=False):
    """ Breadth-first closure of roots under step, then canonical renumbering. """
    if len(roots) > node_cap:
        raise StateSpaceExceeded("estimator exceeds node cap %d" % node_cap)
    index = {}
    order = []
    edges = []
    queue = deque()

    def add(node):
        i = index.get(node)
        if i is None:
            if len(order) >= node_cap:
                raise StateSpaceExceeded("estimator exceeds node cap %d" % node_cap)
            i = index[node] = len(order)
            order.append(node)
            queue.append(i)
        return i

    root_ids = [add(node) for node in roots]
    while queue:
        i = queue.popleft()
        for u, node in step(order[i]):
            edges.append((i, u, add(node)))
        if len(order) % 10000 == 0:
            log.debug("%s estimator: %d nodes, frontier %d", kind, len(order), len(queue))

    def key(i):
        ref, bits = order[i]
        return (ref, tuple(iter_bits(bits)))

    perm = sorted(range(len(order)), key=key)
    rank = np.empty(len(order), dtype=np.int64)
    rank[perm] = np.arange(len(order))
    size = system.n_states
    nodes = [(order[i][0], StateSet(order[i][1], size)) for i in perm]
    initial_nodes = sorted(set(int(rank[i]) for i in root_ids))
    transitions = sorted(set((int(rank[i]), u, int(rank[j])) for i, u, j in edges))
    log.info("%s estimator at delta=%g: %d nodes, %d transitions",
             kind, delta, len(nodes), len(transitions))
    return Estimator(system, kind, delta, nodes, initial_nodes, transitions,
                     slack=slack, strict=strict)


def build_initial_estimator(system, delta, slack=DEFAULT_SLACK, node_cap=DEFAULT_NODE_CAP):
    """ Reachable part of the delta-approximate initial-state estimator.

    Every state x gives an initial node (x, close_set(x, delta)). A node (x, q)
    moves under u to (x', q') whenever x' -u-> x is a transition of the
    system, with q' the predecessors of q (under any input) that are
    delta-close to x'.

    Parameters
    ----------
    system (MetricSystem)
    delta (nonnegative float)
    slack (float)
        Added to delta in every closeness comparison.
    node_cap (int)
        StateSpaceExceeded is raised rather than returning a truncated
        estimator.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    close = system.close_masks(delta, slack)
    pre_any = [system.pre_any(1 << x).bits for x in range(system.n_states)]
    pre = [[system.pre_set(1 << x, u).bits for x in range(system.n_states)]
           for u in range(system.n_inputs)]

    def step(node):
        x, q = node
        back = 0
        for y in iter_bits(q):
            back |= pre_any[y]
        for u in range(system.n_inputs):
            for x2 in iter_bits(pre[u][x]):
                yield u, (x2, back & close[x2])

    roots = [(x, close[x]) for x in range(system.n_states)]
    return _explore(system, INITIAL, delta, roots, step, node_cap, slack)


def build_current_estimator(system, delta, slack=DEFAULT_SLACK, node_cap=DEFAULT_NODE_CAP,
                            strict=False):
    """ Reachable part of the delta-approximate current-state estimator.

    Initial nodes are (x0, close_set(x0, delta) & X0) for x0 in X0. A node
    (x, q) moves under u to (x', q') whenever x -u-> x' is a transition, with q'
    the successors of q (under any input) that are delta-close to x'.

    With strict=True the belief update uses the successors of the reference x
    alone instead of the whole belief q.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    close = system.close_masks(delta, slack)
    post_any = [system.post_any(1 << x).bits for x in range(system.n_states)]
    post = [[system.post_set(1 << x, u).bits for x in range(system.n_states)]
            for u in range(system.n_inputs)]

    def step(node):
        x, q = node
        if strict:
            forward = post_any[x]
        else:
            forward = 0
            for y in iter_bits(q):
                forward |= post_any[y]
        for u in range(system.n_inputs):
            for x2 in iter_bits(post[u][x]):
                yield u, (x2, forward & close[x2])

    initial = system.initial_set.bits
    roots = [(x, close[x] & initial) for x in system.initial_set]
    return _explore(system, CURRENT, delta, roots, step, node_cap, slack, strict=strict)


def belief_after(estimator, node, inputs, references):
    """ Replays an estimator path and returns the final belief.

    Parameters
    ----------
    estimator (Estimator)
    node (node id, or (reference, belief) tuple)
        Must be an initial node.
    inputs (sequence of input labels or indices)
    references (sequence of state labels or indices)
        Reference states visited after node, one per input.
    """
    system = estimator.system
    if len(inputs) != len(references):
        raise EstimatorPathError("path needs one reference state per input")
    i = estimator.node_id(node)
    if i not in estimator.initial_nodes:
        raise EstimatorPathError("path must start at an initial node")
    for u, ref in zip(inputs, references):
        u = system.input_index_of(u) if isinstance(u, str) else int(u)
        i = estimator.step(i, u, system.state(ref))
    return estimator.belief(i)
