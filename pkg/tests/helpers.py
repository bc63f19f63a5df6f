from opal.models import MetricSystem, StateRecord, load_system
from tests.config import paths

OUTPUT_GRID = (0.0, 0.1, 0.2, 0.3)


def ex1():
    return load_system(paths['ex1'])


def labels_of(system, nodes):
    """ (reference label, sorted belief labels) for estimator nodes """
    return [(system.labels[x], tuple(q.labels(system))) for x, q in nodes]


def random_system(rng, max_states=5, max_inputs=2, density=0.35):
    """ Small random system with 1-d outputs on a coarse grid.

    At least one state is initial; secrets and transitions are drawn freely,
    so deadlocks and unreachable states do occur.
    """
    n = int(rng.integers(2, max_states + 1))
    m = int(rng.integers(1, max_inputs + 1))
    initial = rng.random(n) < 0.5
    initial[rng.integers(n)] = True
    secret = rng.random(n) < 0.4
    states = [StateRecord("s%d" % i, [float(rng.choice(OUTPUT_GRID))],
                          bool(initial[i]), bool(secret[i])) for i in range(n)]
    transitions = [(x, u, y) for x in range(n) for u in range(m) for y in range(n)
                   if rng.random() < density]
    return MetricSystem(states, ["u%d" % u for u in range(m)], transitions,
                        name="random")


def perturbed(system, rng, scale):
    """ Copy of system with every output coordinate moved by at most scale. """
    states = [StateRecord(s.label, [v + float(rng.uniform(-scale, scale)) for v in s.output],
                          s.initial, s.secret) for s in system.states]
    return MetricSystem(states, system.inputs, system.transitions,
                        name="%s_perturbed" % system.name)
