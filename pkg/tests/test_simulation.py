import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from opal.models import MetricSystem, StateRecord, ModelError, load_system
from opal.opacity import verify, INITIAL_STATE, CURRENT_STATE, INFINITE_STEP
from opal.simulation import (check_relation, compute_maximal_relation, transfer,
                             load_relation, cross_distance, SimRelation, PreconditionError,
                             INIT_SOP, CUR_SOP, INF_SOP, KINDS, KIND_OF_PROPERTY)
from opal.abstraction import load_control_system, build_symbolic_model, Quantization
from tests.config import paths
from tests.helpers import ex1, random_system, perturbed

IDENTITY = [('A', 'A'), ('B', 'B'), ('C', 'C'), ('D', 'D')]


""" check_relation """


@pytest.mark.parametrize('kind', KINDS)
def test_identity_relation_simulates(kind):
    s = ex1()
    rel = check_relation(s, s, IDENTITY, 0.0, kind)
    assert rel.validated and rel.simulates
    assert rel.violation is None
    assert rel.pairs == tuple(IDENTITY)
    assert ('B', 'B') in rel


def test_missing_secret_initial_pair():
    s = ex1()
    rel = check_relation(s, s, [p for p in IDENTITY if p != ('B', 'B')], 0.0, INIT_SOP)
    assert not rel.simulates
    assert rel.violation.clause == '(1)(a)'
    assert rel.violation.states == ('B',)


def test_distant_pair_breaks_output_condition():
    s = ex1()
    rel = check_relation(s, s, IDENTITY + [('A', 'D')], 0.1, CUR_SOP)
    assert rel.violation.clause == '(2)'
    assert rel.violation.states == ('A', 'D')


def test_unmatched_transition():
    s = ex1()
    rel = check_relation(s, s, IDENTITY + [('A', 'B')], 0.1, INIT_SOP)
    assert not rel.validated
    assert rel.violation.clause == '(3)(a)'
    assert rel.violation.states == ('A', 'B')


def test_relation_accepts_matrix():
    s = ex1()
    rel = check_relation(s, s, np.eye(4, dtype=bool), 0.0, INF_SOP)
    assert rel.simulates
    assert_array_equal(rel.matrix(s, s), np.eye(4, dtype=bool))


def test_unknown_state_in_relation():
    s = ex1()
    with pytest.raises(ModelError, match=r"relation.pairs\[0\]"):
        check_relation(s, s, [('A', 'Z')], 0.0, INIT_SOP)


def test_unknown_kind():
    s = ex1()
    with pytest.raises(ValueError, match="unknown relation kind"):
        check_relation(s, s, IDENTITY, 0.0, 'BiSOP')


""" compute_maximal_relation """


@pytest.mark.parametrize('kind', KINDS)
def test_maximal_relation_contains_identity(kind):
    s = ex1()
    rel = compute_maximal_relation(s, s, 0.0, kind)
    assert set(IDENTITY) <= set(rel.pairs)
    assert rel.simulates
    assert rel.certified_by == 'fixpoint'


@pytest.mark.parametrize('kind', KINDS)
def test_maximal_relation_passes_its_own_check(kind):
    s = ex1()
    rel = compute_maximal_relation(s, s, 0.1, kind)
    again = check_relation(s, s, rel.pairs, 0.1, kind)
    assert again.validated


def test_maximal_relation_drops_unmatched_pairs():
    s = ex1()
    rel = compute_maximal_relation(s, s, 0.1, INIT_SOP)
    # A loops, B only moves to D, and A is not within 0.1 of D
    assert ('A', 'B') not in rel


def test_refined_models_simulate_each_other():
    cs, q = load_control_system(paths['linear1d'])
    coarse = build_symbolic_model(cs, q)
    fine = build_symbolic_model(cs, Quantization(0.05, 0.05, 0.4))
    assert fine.n_states == 21
    for sa, sb in ((coarse, fine), (fine, coarse)):
        rel = compute_maximal_relation(sa, sb, 0.4, INIT_SOP)
        assert rel.simulates


def test_distance_tables_only_relate_a_system_to_itself():
    s = ex1()
    t = load_system(paths['table3'])
    assert cross_distance(t, t)[0, 2] == 2.0
    with pytest.raises(ModelError):
        cross_distance(s, t)


def _pair_systems():
    """ sa has one secret initial state; sb adds a public twin with the same output """
    sa = MetricSystem([StateRecord('s', [0.0], True, True)], ['u'], [(0, 0, 0)], name='sa')
    sb = MetricSystem([StateRecord('p', [0.0], True, True), StateRecord('r', [0.0], True, False)],
                      ['u'], [(0, 0, 0), (1, 0, 1)], name='sb')
    return sa, sb


def test_cursop_relates_every_initial_state_of_target():
    s = ex1()
    rel = check_relation(s, s, [('A', 'B'), ('B', 'B'), ('C', 'C'), ('D', 'D')], 0.1, CUR_SOP)
    assert not rel.simulates
    assert rel.violation.clause == '(1)(b)'
    assert rel.violation.states == ('A',)


def test_cursop_relates_public_initial_states():
    sa, sb = _pair_systems()
    rel = check_relation(sa, sb, [('s', 'p'), ('s', 'r')], 0.0, CUR_SOP)
    assert rel.violation.clause == '(1)(c)'
    assert rel.violation.states == ('r',)


def test_cursop_rejects_source_that_exposes_its_secret():
    sa, sb = _pair_systems()
    assert verify(sb, 0.0, CURRENT_STATE).holds
    assert not verify(sa, 0.0, CURRENT_STATE).holds
    rel = compute_maximal_relation(sa, sb, 0.0, CUR_SOP)
    assert rel.pairs == (('s', 'p'),)
    assert not rel.simulates
    assert rel.violation.clause == '(1)(b)'
    with pytest.raises(PreconditionError, match="does not establish"):
        transfer(verify(sb, 0.0, CURRENT_STATE), rel)


""" relation files """


def test_load_relation(tmp_path):
    path = tmp_path / 'rel.json'
    path.write_text(json.dumps({'pairs': [['A', 'A'], ['B', 'B']], 'kind': 'CurSOP',
                                'epsilon': 0.1}))
    pairs, kind, eps = load_relation(str(path))
    assert pairs == [('A', 'A'), ('B', 'B')]
    assert kind == CUR_SOP and eps == 0.1
    with pytest.raises(ModelError, match="unknown kind"):
        load_relation({'pairs': [], 'kind': 'Other'})
    with pytest.raises(ModelError, match="relation: no such file 'nowhere/rel.json'"):
        load_relation('nowhere/rel.json')


def test_relation_save_and_load(tmp_path):
    s = ex1()
    rel = check_relation(s, s, IDENTITY + [('A', 'B')], 0.1, INIT_SOP)
    path = str(tmp_path / 'rel.json')
    rel.save(path)
    back = SimRelation.load_saved(path)
    assert back == rel
    assert back.to_frame().shape == (5, 2)


""" transfer """


def _identity(epsilon, kind):
    return SimRelation(kind=kind, epsilon=epsilon, pairs=tuple(IDENTITY), source='ex1',
                       target='ex1', validated=True, simulates=True)


def test_positive_transfer_adds_two_epsilon():
    premise = verify(ex1(), 0.1, CURRENT_STATE)
    assert premise.holds
    result = transfer(premise, _identity(0.1, CUR_SOP))
    assert result.direction == 'positive'
    assert result.conclusion['delta'] == pytest.approx(0.3)
    assert result.conclusion['holds'] is True
    assert result.conclusion['system'] == 'ex1'


def test_positive_transfer_at_explicit_delta():
    premise = verify(ex1(), 0.1, CURRENT_STATE)
    result = transfer(premise, _identity(0.05, CUR_SOP), delta=0.25)
    assert result.conclusion['delta'] == 0.25
    with pytest.raises(PreconditionError, match="epsilon <= delta/2"):
        transfer(premise, _identity(0.1, CUR_SOP), delta=0.15)
    with pytest.raises(PreconditionError, match="delta - 2 epsilon"):
        transfer(premise, _identity(0.05, CUR_SOP), delta=0.15)


def test_negative_transfer_subtracts_two_epsilon():
    premise = verify(ex1(), 0.1, INITIAL_STATE)
    assert not premise.holds
    result = transfer(premise, _identity(0.05, INIT_SOP))
    assert result.direction == 'negative'
    assert result.conclusion['delta'] == pytest.approx(0.0)
    assert result.conclusion['holds'] is False
    with pytest.raises(PreconditionError):
        transfer(premise, _identity(0.1, INIT_SOP))


def test_transfer_rejects_wrong_kind():
    premise = verify(ex1(), 0.15, INFINITE_STEP)
    with pytest.raises(PreconditionError, match="does not preserve"):
        transfer(premise, _identity(0.0, CUR_SOP))


def test_transfer_rejects_non_simulating_relation():
    s = ex1()
    premise = verify(s, 0.1, CURRENT_STATE)
    rel = check_relation(s, s, IDENTITY + [('A', 'D')], 0.1, CUR_SOP)
    with pytest.raises(PreconditionError, match="does not establish"):
        transfer(premise, rel)


def test_transfer_rejects_wrong_system():
    premise = verify(ex1(), 0.1, CURRENT_STATE)
    rel = _identity(0.05, CUR_SOP)
    rel.target = 'other'
    with pytest.raises(PreconditionError, match="relation targets other"):
        transfer(premise, rel)


""" random pairs """

TRANSFER_SEEDS = range(200)
TRANSFER_DELTAS = (0.0, 0.1, 0.2, 0.3, 0.4)


def _random_pairs(seed):
    rng = np.random.default_rng(seed)
    sa = random_system(rng)
    yield sa, perturbed(sa, rng, 0.02)
    yield sa, random_system(rng)


def test_transfer_agrees_with_direct_verification():
    certified = dict((kind, 0) for kind in KINDS)
    for seed in TRANSFER_SEEDS:
        for sa, sb in _random_pairs(seed):
            cache = {}

            def holds(system, delta, prop):
                key = (id(system), delta, prop)
                if key not in cache:
                    cache[key] = verify(system, delta, prop)
                return cache[key]

            for prop, kind in KIND_OF_PROPERTY.items():
                for eps in (0.0, 0.05, 0.1):
                    rel = compute_maximal_relation(sa, sb, eps, kind)
                    if not rel.simulates:
                        continue
                    for delta in TRANSFER_DELTAS:
                        premise = holds(sb, delta, prop)
                        if premise.holds:
                            result = transfer(premise, rel)
                            concluded = result.conclusion['delta']
                            assert holds(sa, concluded, prop).holds, (seed, kind, eps, delta)
                            certified[kind] += 1
                        premise = holds(sa, delta, prop)
                        if not premise.holds and delta - 2 * eps >= 0:
                            result = transfer(premise, rel)
                            concluded = result.conclusion['delta']
                            assert not holds(sb, concluded, prop).holds, (seed, kind, eps, delta)
    for kind in KINDS:
        assert certified[kind] >= 100, certified


@pytest.mark.parametrize('seed', range(40))
def test_maximal_relation_cannot_grow(seed):
    sa, sb = next(_random_pairs(seed))
    for kind in KINDS:
        rel = compute_maximal_relation(sa, sb, 0.1, kind)
        R = rel.matrix(sa, sb)
        assert check_relation(sa, sb, R, 0.1, kind).validated
        for i, j in np.argwhere(~R):
            grown = R.copy()
            grown[i, j] = True
            assert not check_relation(sa, sb, grown, 0.1, kind).validated, (seed, kind, i, j)
