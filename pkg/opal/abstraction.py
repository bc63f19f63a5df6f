""" Symbolic models of discrete-time control systems.

A control system x+ = f(x, u) lives on box-union domains. Quantizing the state
domain with pitch eta and the input domain with pitch mu (both lattices
anchored at the origin) gives a finite MetricSystem S_q whose transitions
connect x_q to every grid point within eta of f(x_q, u_q). When (eta, mu)
satisfy the stability-based quantization conditions for a precision epsilon,
the relation {(x, x_q) : |x - x_q| <= alpha^-1(epsilon)} makes the control
system and S_q simulate each other for all three opacity notions, so opacity
verified on S_q at delta - 2 epsilon carries over at delta.
"""
from __future__ import annotations

import itertools
import logging
import math
import os
import tomllib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy.optimize import bisect

from .models import MetricSystem, StateRecord, ModelError, DEFAULT_SLACK
from .kfunctions import (QuantizationError, KFunction, LinearK, ISSCertificate,
                         LyapunovCertificate, k_function, linear_certificate)
from .estimator import DEFAULT_NODE_CAP
from .opacity import verify, check_property, OpacityVerdict
from .simulation import (PreconditionError, SimRelation, TransferResult,
                         KIND_OF_PROPERTY, transfer)

log = logging.getLogger(__name__)

GRID_TOL = 1e-9
CERTIFICATE_TOL = 1e-12
SEARCH_RTOL = 1e-9
REPORT_COLUMNS = ['clause', 'x', 'x_q', 'u', 'u_q', 'bound', 'observed']


#-------------------------------------------------------------
# Box unions and grids


class BoxUnion(object):
    """ Finite union of closed boxes, each an (n, 2) array of [lo, hi] rows. """

    def __init__(self, boxes, dim=None):
        arrs = []
        for k, b in enumerate(boxes):
            b = np.atleast_2d(np.asarray(b, dtype=np.float64))
            if b.ndim != 2 or b.shape[1] != 2:
                raise ModelError("box %d: expected [lo, hi] pairs" % k)
            if np.any(b[:, 0] > b[:, 1]):
                raise ModelError("box %d: lower bound exceeds upper bound" % k)
            arrs.append(b)
        dims = set(b.shape[0] for b in arrs)
        if dim is not None:
            dims.add(dim)
        if len(dims) > 1:
            raise ModelError("boxes differ in dimension")
        if not dims:
            raise ModelError("empty box union needs an explicit dimension")
        self.boxes = arrs
        self.dim = dims.pop()

    @classmethod
    def from_config(cls, value, dim=None, where="domain"):
        """ Accepts [lo, hi], a list of [lo, hi] (1-d boxes), or a list of boxes
        given as lists of [lo, hi] rows. """
        try:
            if len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
                return cls([[value]], dim=dim)
            boxes = []
            for b in value:
                if len(b) == 2 and all(isinstance(v, (int, float)) for v in b):
                    boxes.append([b])
                else:
                    boxes.append(b)
            return cls(boxes, dim=dim)
        except ModelError as err:
            raise ModelError("%s: %s" % (where, err))
        except TypeError:
            raise ModelError("%s: expected a list of boxes" % where)

    def __len__(self):
        return len(self.boxes)

    def is_empty(self):
        return not self.boxes

    def span(self):
        """ smallest side length over all boxes; infinite for the empty union """
        if not self.boxes:
            return math.inf
        return float(min((b[:, 1] - b[:, 0]).min() for b in self.boxes))

    def bounds(self):
        stacked = np.stack(self.boxes)
        return stacked[:, :, 0].min(axis=0), stacked[:, :, 1].max(axis=0)

    def contains(self, point, tol=GRID_TOL):
        p = np.asarray(point, dtype=np.float64)
        return any(np.all(p >= b[:, 0] - tol) and np.all(p <= b[:, 1] + tol)
                   for b in self.boxes)

    def sample(self, rng):
        b = self.boxes[rng.integers(len(self.boxes))]
        return rng.uniform(b[:, 0], b[:, 1])

    def to_list(self):
        return [b.tolist() for b in self.boxes]


def grid_indices(domain, pitch, tol=GRID_TOL):
    """ Integer lattice coordinates k with k * pitch inside domain, sorted. """
    if pitch <= 0:
        raise QuantizationError("grid pitch must be positive")
    if pitch > domain.span() + tol:
        raise QuantizationError("grid pitch %g exceeds span %g" % (pitch, domain.span()))
    keys = set()
    for b in domain.boxes:
        ranges = [range(math.ceil(lo / pitch - tol), math.floor(hi / pitch + tol) + 1)
                  for lo, hi in b]
        keys.update(itertools.product(*ranges))
    return sorted(keys)


def grid_points(domain, pitch, tol=GRID_TOL):
    """ The origin-anchored lattice points of pitch inside domain.

    Returns an (N, n) array, deduplicated and lexicographically ordered.
    """
    keys = grid_indices(domain, pitch, tol)
    return np.array(keys, dtype=np.float64).reshape(len(keys), domain.dim) * pitch


def format_point(p):
    return ",".join(repr(round(float(v), 10) + 0.0) for v in np.atleast_1d(p))


#-------------------------------------------------------------
# Control systems


@dataclass
class Quantization:
    eta: float
    mu: float
    epsilon: float

    def __post_init__(self):
        if not (self.eta > 0 and self.mu > 0):
            raise QuantizationError("quantization needs eta > 0 and mu > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    def check_spans(self, cs, tol=GRID_TOL):
        limit = min(cs.secret.span(), cs.complement.span())
        if self.eta > limit + tol:
            raise QuantizationError("eta = %g exceeds min(span(secret), span(complement)) = %g"
                                    % (self.eta, limit))
        if self.mu > cs.inputs.span() + tol:
            raise QuantizationError("mu = %g exceeds span(input) = %g"
                                    % (self.mu, cs.inputs.span()))

    def to_dict(self):
        return {'eta': self.eta, 'mu': self.mu, 'epsilon': self.epsilon}


@dataclass
class ControlSystem:
    """ Discrete-time control system x+ = f(x, u), y = h(x).

    The dynamics are affine (A x + B u + c) unless a callable `dynamics` is
    given. The output is the identity unless C (and optionally d) is given.
    alpha bounds |h(x) - h(y)| by alpha(|x - y|); it defaults to the linear
    function with gain |C|.
    """
    state: BoxUnion
    secret: BoxUnion
    complement: BoxUnion
    inputs: BoxUnion
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    dynamics: Optional[Callable] = None
    C: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    alpha: Optional[KFunction] = None
    certificate: object = None
    name: str = "control"

    def __post_init__(self):
        n, m = self.state.dim, self.inputs.dim
        for dom in (self.secret, self.complement):
            if dom.dim != n:
                raise ModelError("domains: secret and complement must match the state dimension")
        if self.dynamics is None:
            if self.A is None or self.B is None:
                raise ModelError("dynamics: affine dynamics need A and B")
            self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
            self.B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
            self.c = (np.zeros(n) if self.c is None
                      else np.asarray(self.c, dtype=np.float64).reshape(n))
            if self.A.shape != (n, n):
                raise ModelError("dynamics.A: expected a %d x %d matrix" % (n, n))
            if self.B.shape != (n, m):
                raise ModelError("dynamics.B: expected a %d x %d matrix" % (n, m))
        if self.C is not None:
            self.C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
            if self.C.shape[1] != n:
                raise ModelError("output.C: expected %d columns" % n)
            self.d = (np.zeros(self.C.shape[0]) if self.d is None
                      else np.asarray(self.d, dtype=np.float64).reshape(self.C.shape[0]))
        if self.alpha is None:
            gain = 1.0 if self.C is None else float(np.linalg.norm(self.C, np.inf))
            self.alpha = LinearK(gain)

    def f(self, x, u):
        x = np.asarray(x, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        if self.dynamics is not None:
            return np.asarray(self.dynamics(x, u), dtype=np.float64).reshape(x.shape)
        return self.A @ x + self.B @ u + self.c

    def h(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.C is None:
            return x
        return self.C @ x + self.d


#-------------------------------------------------------------
# Quantization conditions


@dataclass
class QuantizationCheck:
    feasible: bool
    margin: float
    margins: dict = field(default_factory=dict)
    contractive: bool = True
    radius: float = 0.0

    def to_dict(self):
        return {'feasible': self.feasible, 'margin': self.margin,
                'margins': dict(self.margins), 'contractive': self.contractive,
                'radius': self.radius}


def check_quantization_iss(beta1, gamma, alpha, q):
    """ Evaluates beta1(a) + gamma(mu) + eta <= a with a = alpha^-1(epsilon).

    margin is a minus the left-hand side. contractive reports beta1(a) < a,
    without which no (eta, mu) can be feasible.
    """
    a = float(alpha.inverse(q.epsilon))
    lhs = float(beta1(a)) + float(gamma(q.mu)) + q.eta
    margin = a - lhs
    return QuantizationCheck(feasible=margin >= -CERTIFICATE_TOL, margin=margin,
                             margins={'iss': margin},
                             contractive=float(beta1(a)) < a, radius=a)


def check_quantization_lyapunov(cert, alpha, q):
    """ Evaluates the two Lyapunov quantization inequalities.

    With s = alpha1(alpha^-1(epsilon)):
        alpha2(eta) <= s
        max{kappa(s), lambda(mu)} + gamma_hat(eta) <= s

    kappa must satisfy kappa(s) < s; this is sampled and QuantizationError
    raised otherwise.
    """
    a = float(alpha.inverse(q.epsilon))
    s = float(cert.alpha1(a))
    if not cert.kappa.is_contractive(max(s, 1.0) * 10):
        raise QuantizationError("kappa is not contractive on sampled points")
    m1 = s - float(cert.alpha2(q.eta))
    m2 = s - (max(float(cert.kappa(s)), float(cert.lam(q.mu))) + float(cert.gamma_hat(q.eta)))
    margin = min(m1, m2)
    return QuantizationCheck(feasible=margin >= -CERTIFICATE_TOL, margin=margin,
                             margins={'sublevel': m1, 'decay': m2},
                             contractive=float(cert.kappa(s)) < s, radius=a)


def check_quantization(certificate, alpha, q):
    if isinstance(certificate, ISSCertificate):
        return check_quantization_iss(certificate.beta1, certificate.gamma, alpha, q)
    if isinstance(certificate, LyapunovCertificate):
        return check_quantization_lyapunov(certificate, alpha, q)
    raise QuantizationError("no stability certificate given")


def suggest_quantization(certificate, alpha, epsilon, cs=None):
    """ Largest feasible eta with mu = eta / 2, or None if infeasible.

    The margin is decreasing in eta, so the boundary is found by bisection to
    a relative tolerance of 1e-9 and then clamped to the span bounds of cs.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon == 0:
        return None

    def margin(eta):
        q = Quantization(eta, eta / 2, epsilon)
        return check_quantization(certificate, alpha, q).margin

    trial = check_quantization(certificate, alpha, Quantization(1.0, 0.5, epsilon))
    if not trial.contractive:
        log.info("no quantization: certificate is not contractive at epsilon=%g", epsilon)
        return None
    hi = trial.radius if trial.radius > 0 else 1.0
    for _ in range(64):
        if margin(hi) < 0:
            break
        hi *= 2
    else:
        hi = None
    if hi is None:
        eta = math.inf
    else:
        lo = hi * 1e-12
        if margin(lo) < 0:
            log.info("no quantization: margin is negative even at eta=%g", lo)
            return None
        eta = bisect(margin, lo, hi, rtol=SEARCH_RTOL)
        while margin(eta) < -CERTIFICATE_TOL:
            eta *= 1 - SEARCH_RTOL
    mu = eta / 2
    if cs is not None:
        eta = min(eta, cs.secret.span(), cs.complement.span())
        mu = min(mu, cs.inputs.span())
    if not (0 < eta < math.inf and 0 < mu < math.inf):
        return None
    q = Quantization(eta, mu, epsilon)
    log.info("suggested quantization eta=%g mu=%g for epsilon=%g", eta, mu, epsilon)
    return q


#-------------------------------------------------------------
# Symbolic model


def build_symbolic_model(cs, q, strict_invariance=False, tol=GRID_TOL):
    """ Builds the finite symbolic model S_q of cs.

    States are the eta-grid of the state domain, all initial, secret iff they
    lie on the eta-grid of the secret domain. Inputs are the mu-grid of the
    input domain. x_q -u_q-> x'_q iff |x'_q - f(x_q, u_q)| <= eta.

    Every f(x_q, u_q) must lie within eta of the state grid so that each pair
    has a successor; strict_invariance additionally requires f(x_q, u_q) to
    lie in the state domain. Grid points outside both the secret and the
    complement domain are rejected.
    """
    q.check_spans(cs, tol)
    eta, mu = q.eta, q.mu
    keys = grid_indices(cs.state, eta, tol)
    ukeys = grid_indices(cs.inputs, mu, tol)
    if not ukeys:
        raise QuantizationError("input grid is empty")
    secret_keys = set(grid_indices(cs.secret, eta, tol)) if not cs.secret.is_empty() else set()
    index = dict((k, i) for i, k in enumerate(keys))
    points = np.array(keys, dtype=np.float64).reshape(len(keys), cs.state.dim) * eta
    upoints = np.array(ukeys, dtype=np.float64).reshape(len(ukeys), cs.inputs.dim) * mu

    states = []
    for k, x in zip(keys, points):
        secret = k in secret_keys
        if not secret and not cs.complement.contains(x, tol):
            raise QuantizationError("grid point %s lies in neither the secret nor the "
                                    "complement domain" % format_point(x))
        states.append(StateRecord(format_point(x), cs.h(x).tolist(), True, secret))

    transitions = []
    for i, x in enumerate(points):
        for j, u in enumerate(upoints):
            fx = cs.f(x, u)
            if strict_invariance and not cs.state.contains(fx, tol):
                raise QuantizationError("positive invariance violated: f(%s, %s) = %s"
                                        % (format_point(x), format_point(u), format_point(fx)))
            z = fx / eta
            ranges = [range(math.ceil(zi - 1 - tol), math.floor(zi + 1 + tol) + 1) for zi in z]
            succ = [index[k] for k in itertools.product(*ranges) if k in index]
            if not succ:
                raise QuantizationError("positive invariance violated: f(%s, %s) = %s has no "
                                        "grid point within eta" % (format_point(x),
                                                                   format_point(u),
                                                                   format_point(fx)))
            transitions.extend((i, j, s) for s in succ)
    model = MetricSystem(states, [format_point(u) for u in upoints], transitions,
                         name="%s_q" % cs.name)
    log.info("symbolic model %s: %d states, %d inputs, %d transitions",
             model.name, model.n_states, model.n_inputs, len(model.transitions))
    return model


def canonical_relation(cs, q, kind, reverse=False):
    """ The canonical relation between cs and its symbolic model.

    It is certified by the quantization conditions rather than enumerated, so
    pairs is None. reverse gives the relation from the model back to cs.
    """
    check = check_quantization(cs.certificate, cs.alpha, q)
    names = (cs.name, "%s_q" % cs.name)
    if reverse:
        names = names[::-1]
    return SimRelation(kind=kind, epsilon=q.epsilon, pairs=None, source=names[0],
                       target=names[1], validated=check.feasible,
                       simulates=check.feasible, certified_by="quantization")


def canonical_relation_check(cs, model, q, sample_count, seed=0, certificate=None):
    """ Samples the canonical relation and tests the matching steps numerically.

    For sampled related pairs (x, x_q) and inputs u with nearest grid input
    u_q, the following are checked:

    increment   |f(x, u) - f(x_q, u_q)| <= beta1(|x - x_q|) + gamma(|u - u_q|)
                (Lyapunov: V(f(x, u), f(x_q, u_q)) <= max{kappa(V), lambda(|u - u_q|)})
    forward     every successor x'_q of (x_q, u_q) is related to f(x, u)
    backward    every successor x'_q of (x_q, u_q) is related to f(x, u_q)

    Returns a DataFrame of counterexamples (empty when none are found). A
    counterexample falsifies the certificate, not the construction.
    """
    cert = certificate if certificate is not None else cs.certificate
    rng = np.random.default_rng(seed)
    if sample_count <= 0:
        return pd.DataFrame(columns=REPORT_COLUMNS)
    a = float(cs.alpha.inverse(q.epsilon))
    lyapunov = isinstance(cert, LyapunovCertificate)
    if lyapunov:
        level = float(cert.alpha1(a))
        dist = cert.V
    elif isinstance(cert, ISSCertificate):
        level = a
        dist = lambda x, y: float(np.max(np.abs(np.asarray(x) - np.asarray(y))))
    else:
        raise QuantizationError("no stability certificate given")

    # same lattices, same order as build_symbolic_model
    points = grid_points(cs.state, q.eta)
    upoints = grid_points(cs.inputs, q.mu)
    if len(points) != model.n_states or len(upoints) != model.n_inputs:
        raise QuantizationError("model was not built from this system and quantization")
    lo, hi = cs.state.bounds()
    rows = []
    tol = 1e-9
    for _ in range(sample_count):
        i = rng.integers(len(points))
        xq = points[i]
        x = None
        for _ in range(100):
            cand = rng.uniform(np.maximum(lo, xq - a), np.minimum(hi, xq + a))
            if cs.state.contains(cand) and dist(cand, xq) <= level:
                x = cand
                break
        if x is None:
            continue
        u = cs.inputs.sample(rng)
        j = int(np.argmin(np.max(np.abs(upoints - u), axis=1)))
        uq = upoints[j]
        du = float(np.max(np.abs(u - uq)))
        fx, fq, fxq = cs.f(x, u), cs.f(xq, uq), cs.f(x, uq)
        if lyapunov:
            bound = max(float(cert.kappa(dist(x, xq))), float(cert.lam(du)))
        else:
            bound = float(cert.beta1(dist(x, xq))) + float(cert.gamma(du))
        observed = dist(fx, fq)
        record = {'x': format_point(x), 'x_q': format_point(xq),
                  'u': format_point(u), 'u_q': format_point(uq)}
        if observed > bound + tol:
            rows.append(dict(record, clause='increment', bound=bound, observed=observed))
        succ = [points[s] for uu, s in model.successors(i) if uu == j]
        fwd = max(dist(fx, s) for s in succ)
        if fwd > level + tol:
            rows.append(dict(record, clause='forward', bound=level, observed=fwd))
        bwd = max(dist(fxq, s) for s in succ)
        if bwd > level + tol:
            rows.append(dict(record, clause='backward', bound=level, observed=bwd))
    report = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    log.info("canonical relation check: %d samples, %d counterexamples",
             sample_count, len(report))
    return report


#-------------------------------------------------------------
# Pipeline


@dataclass
class PipelineResult:
    property: str
    delta: float
    epsilon: float
    quantization: Quantization
    abstraction: OpacityVerdict
    outcome: str
    concluded_delta: Optional[float] = None
    transfer: Optional[TransferResult] = None
    model_stats: dict = field(default_factory=dict)

    @property
    def holds(self):
        return {'holds': True, 'fails': False}.get(self.outcome)

    def to_dict(self):
        return {'property': self.property, 'delta': self.delta, 'epsilon': self.epsilon,
                'quantization': self.quantization.to_dict(),
                'abstraction': self.abstraction.to_dict(),
                'outcome': self.outcome, 'concluded_delta': self.concluded_delta,
                'relation_kind': KIND_OF_PROPERTY[self.property],
                'transfer': None if self.transfer is None else self.transfer.to_dict(),
                'model': dict(self.model_stats)}


def end_to_end_verify(cs, epsilon, delta, prop, q=None, slack=DEFAULT_SLACK,
                      node_cap=DEFAULT_NODE_CAP):
    """ Certifies opacity of cs at delta through its symbolic model.

    The symbolic model is verified at delta - 2 epsilon. If it holds, cs holds
    at delta. If it fails, cs fails at delta - 4 epsilon when that is
    nonnegative; otherwise the outcome is 'inconclusive'.

    Parameters
    ----------
    cs (ControlSystem)
        Must carry a certificate.
    epsilon, delta (floats)
        epsilon <= delta / 2 is required.
    prop ('initial', 'current' or 'infinite')
    q (Quantization or None)
        Suggested from the certificate when omitted.
    """
    check_property(prop)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon > delta / 2 + CERTIFICATE_TOL:
        raise PreconditionError("precondition epsilon <= delta/2 violated "
                                "(epsilon=%g, delta=%g)" % (epsilon, delta))
    if q is None:
        q = suggest_quantization(cs.certificate, cs.alpha, epsilon, cs)
        if q is None:
            raise QuantizationError("no feasible quantization for epsilon=%g" % epsilon)
    elif q.epsilon != epsilon:
        q = Quantization(q.eta, q.mu, epsilon)
    check = check_quantization(cs.certificate, cs.alpha, q)
    if not check.feasible:
        raise QuantizationError("quantization eta=%g mu=%g is infeasible for epsilon=%g "
                                "(margin %g)" % (q.eta, q.mu, epsilon, check.margin))
    model = build_symbolic_model(cs, q)
    inner = max(delta - 2 * epsilon, 0.0)
    verdict = verify(model, inner, prop, slack=slack, node_cap=node_cap)
    kind = KIND_OF_PROPERTY[prop]
    if verdict.holds:
        carried = transfer(verdict, canonical_relation(cs, q, kind), delta=delta)
        outcome = 'holds'
    else:
        try:
            carried = transfer(verdict, canonical_relation(cs, q, kind, reverse=True))
            outcome = 'fails'
        except PreconditionError as err:
            log.info("pipeline: no negative conclusion (%s)", err)
            carried, outcome = None, 'inconclusive'
    concluded = None if carried is None else carried.conclusion['delta']
    log.info("pipeline: %s opacity of %s at delta=%g is %s", prop, cs.name, delta, outcome)
    return PipelineResult(prop, float(delta), float(epsilon), q, verdict, outcome, concluded,
                          transfer=carried,
                          model_stats={'states': model.n_states, 'inputs': model.n_inputs,
                                       'transitions': len(model.transitions)})


#-------------------------------------------------------------
# Config files


def _matrix(section, key, where):
    if key not in section:
        return None
    try:
        return np.atleast_2d(np.asarray(section[key], dtype=np.float64))
    except (TypeError, ValueError):
        raise ModelError("%s.%s: expected a numeric matrix" % (where, key))


def _certificate(section, A, B):
    kind = section.get('type')
    where = "certificate"
    if kind == 'iss':
        for k in ('beta1', 'gamma'):
            if k not in section:
                raise ModelError("%s.%s: missing" % (where, k))
        return ISSCertificate(k_function(section['beta1'], where + ".beta1"),
                              k_function(section['gamma'], where + ".gamma"))
    if kind == 'lyapunov':
        keys = ('alpha1', 'alpha2', 'kappa', 'lambda', 'gamma_hat')
        for k in keys:
            if k not in section:
                raise ModelError("%s.%s: missing" % (where, k))
        fns = [k_function(section[k], "%s.%s" % (where, k)) for k in keys]
        extra = dict((k, k_function(section[k], "%s.%s" % (where, k)))
                     for k in ('rho', 'sigma') if k in section)
        P = _matrix(section, 'P', where)
        return LyapunovCertificate(*fns, P=P, **extra)
    if kind == 'linear':
        if A is None or B is None:
            raise ModelError("%s: type 'linear' needs affine dynamics A and B" % where)
        return linear_certificate(A, B)
    raise ModelError("%s.type: expected 'iss', 'lyapunov' or 'linear'" % where)


def load_control_system(source, name=None):
    """ Reads a control system from TOML text or a .toml path.

    Returns (ControlSystem, Quantization or None). When [quantization] gives
    epsilon without eta and mu, they are suggested from the certificate.
    """
    if os.path.isfile(source):
        if name is None:
            name = os.path.splitext(os.path.basename(source))[0]
        with open(source, 'rb') as f:
            doc = tomllib.load(f)
    elif '\n' not in source and '=' not in source:
        raise ModelError("config: no such file '%s'" % source)
    else:
        try:
            doc = tomllib.loads(source)
        except tomllib.TOMLDecodeError as err:
            raise ModelError("config: invalid TOML (%s)" % err)
    for k in doc:
        if k not in ('name', 'dynamics', 'output', 'domains', 'certificate', 'quantization'):
            raise ModelError("config: unknown section '%s'" % k)
    domains = doc.get('domains', {})
    for k in ('state', 'secret', 'complement', 'input'):
        if k not in domains:
            raise ModelError("domains.%s: missing" % k)
    state = BoxUnion.from_config(domains['state'], where="domains.state")
    dim = state.dim
    secret = BoxUnion.from_config(domains['secret'], dim=dim, where="domains.secret")
    complement = BoxUnion.from_config(domains['complement'], dim=dim,
                                      where="domains.complement")
    inputs = BoxUnion.from_config(domains['input'], where="domains.input")
    dyn = doc.get('dynamics', {})
    A, B = _matrix(dyn, 'A', 'dynamics'), _matrix(dyn, 'B', 'dynamics')
    c = dyn.get('c')
    out = doc.get('output', {})
    alpha = k_function(out['alpha'], "output.alpha") if 'alpha' in out else None
    cert = _certificate(doc['certificate'], A, B) if 'certificate' in doc else None
    cs = ControlSystem(state, secret, complement, inputs, A=A, B=B, c=c,
                       C=_matrix(out, 'C', 'output'), d=out.get('d'), alpha=alpha,
                       certificate=cert, name=doc.get('name', name or "control"))
    q = None
    if 'quantization' in doc:
        qd = doc['quantization']
        if 'epsilon' not in qd:
            raise ModelError("quantization.epsilon: missing")
        if 'eta' in qd and 'mu' in qd:
            q = Quantization(float(qd['eta']), float(qd['mu']), float(qd['epsilon']))
        elif 'eta' in qd or 'mu' in qd:
            raise ModelError("quantization: give both eta and mu, or neither")
        else:
            q = suggest_quantization(cert, cs.alpha, float(qd['epsilon']), cs)
            if q is None:
                raise QuantizationError("no feasible quantization for epsilon=%g"
                                        % qd['epsilon'])
    return cs, q
