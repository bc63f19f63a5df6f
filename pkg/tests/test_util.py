import json
import os

import pytest

from opal import __version__
from opal.util import main, Usage, build_parser, ensure_dir
from tests.config import paths

# Tests for the command-line front end. main() returns the exit code instead
# of exiting, so each test calls it directly and inspects captured output.


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


""" verify """


def test_verify_fails_with_witness(capsys):
    code, out, _ = _run(capsys, 'verify', paths['ex1'], '--property', 'current',
                        '--delta', '0.05')
    assert code == 1
    payload = json.loads(out)
    assert payload['holds'] is False
    assert payload['witness']['states'] == ['B', 'D', 'B']
    assert payload['trivially_failed'] is True


def test_verify_holds(capsys):
    code, out, _ = _run(capsys, 'verify', paths['ex1'], '--property', 'initial',
                        '--delta', '0.15')
    assert code == 0
    assert json.loads(out)['holds'] is True


def test_verify_with_oracle(capsys):
    code, out, _ = _run(capsys, 'verify', paths['ex1'], '--property', 'infinite',
                        '--delta', '0.1', '--oracle', '4')
    assert code == 1
    payload = json.loads(out)
    assert payload['oracle']['holds_up_to_depth'] is False
    assert payload['oracle']['witness']['states'] == payload['witness']['states']


def test_negative_delta_is_a_usage_error(capsys):
    code, _, err = _run(capsys, 'verify', paths['ex1'], '--property', 'current',
                        '--delta', '-1')
    assert code == 2
    assert "delta must be nonnegative" in err


def test_unknown_property(capsys):
    code, _, err = _run(capsys, 'verify', paths['ex1'], '--property', 'final',
                        '--delta', '0.1')
    assert code == 2
    assert "invalid choice" in err


def test_bad_model_file(capsys, tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"states": [], "inputs": [], "transitions": [], "extra": 1}')
    code, _, err = _run(capsys, 'verify', str(path), '--property', 'current',
                        '--delta', '0.1')
    assert code == 2
    assert err.startswith("opal: error: document: unknown key 'extra'")


def test_missing_model_file(capsys, tmp_path):
    code, _, err = _run(capsys, 'verify', str(tmp_path / 'nope.json'), '--property',
                        'current', '--delta', '0.1')
    assert code == 2
    assert err.startswith("opal: error: document: no such file")


""" estimator, threshold, oracle """


def test_estimator_writes_dot(capsys, tmp_path):
    dot = tmp_path / 'est.dot'
    code, out, _ = _run(capsys, 'estimator', paths['ex1'], '--kind', 'cur',
                        '--delta', '0.1', '--dot', str(dot))
    assert code == 0
    assert json.loads(out)['stats'] == {'nodes': 4, 'transitions': 5}
    assert dot.read_text().startswith('digraph current_estimator {')


def test_threshold(capsys):
    code, out, _ = _run(capsys, 'threshold', paths['ex1'], '--property', 'current')
    assert code == 0
    assert out.strip() == '0.1'
    code, out, _ = _run(capsys, 'threshold', paths['ex1'], '--property', 'initial')
    assert out.strip() == '0.15'


def test_oracle_command(capsys):
    code, out, _ = _run(capsys, 'oracle', paths['ex1'], '--property', 'current',
                        '--delta', '0.05', '--depth', '3')
    assert code == 1
    assert json.loads(out)['witness']['states'] == ['B', 'D', 'B']


""" relate """


def test_relate_computes_maximal_relation(capsys):
    code, out, _ = _run(capsys, 'relate', paths['ex1'], paths['ex1'], '--kind', 'InfSOP',
                        '--epsilon', '0')
    assert code == 0
    payload = json.loads(out)
    assert payload['certified_by'] == 'fixpoint'
    assert ['B', 'B'] in payload['pairs']


def test_relate_checks_relation_file(capsys, tmp_path):
    rel = tmp_path / 'rel.json'
    rel.write_text(json.dumps({'pairs': [['A', 'A'], ['C', 'C'], ['D', 'D']],
                               'kind': 'InitSOP', 'epsilon': 0.0}))
    code, out, _ = _run(capsys, 'relate', paths['ex1'], paths['ex1'], '--relation', str(rel))
    assert code == 1
    assert json.loads(out)['violation']['clause'] == '(1)(a)'


def test_relate_needs_kind(capsys):
    code, _, err = _run(capsys, 'relate', paths['ex1'], paths['ex1'], '--epsilon', '0')
    assert code == 2
    assert "--kind and --epsilon are required" in err


""" abstract and pipeline """


def test_abstract(capsys):
    code, out, _ = _run(capsys, 'abstract', '--config', paths['linear1d'])
    assert code == 0
    model = json.loads(out)
    assert model['name'] == 'linear1d_q'
    assert len(model['states']) == 11
    assert model['inputs'] == ['-0.05', '0.0', '0.05']


def test_abstract_overrides(capsys):
    code, out, _ = _run(capsys, 'abstract', '--config', paths['linear1d'], '--eta', '0.05')
    assert code == 0
    assert len(json.loads(out)['states']) == 21


def test_pipeline_holds(capsys):
    code, out, _ = _run(capsys, 'pipeline', '--config', paths['linear1d'], '--delta', '2.0',
                        '--epsilon', '0.4', '--property', 'current')
    assert code == 0
    payload = json.loads(out)
    assert payload['outcome'] == 'holds'
    assert payload['relation_kind'] == 'CurSOP'


def test_pipeline_inconclusive(capsys):
    code, out, _ = _run(capsys, 'pipeline', '--config', paths['linear1d'], '--delta', '0.8',
                        '--epsilon', '0.4', '--property', 'initial')
    assert code == 1
    assert json.loads(out)['outcome'] == 'inconclusive'


def test_pipeline_precondition(capsys):
    code, _, err = _run(capsys, 'pipeline', '--config', paths['linear1d'], '--delta', '0.5',
                        '--epsilon', '0.4', '--property', 'initial')
    assert code == 2
    assert "epsilon <= delta/2" in err


""" output files """


def test_out_writes_provenance(capsys, tmp_path):
    out_path = tmp_path / 'results' / 'verdict.json'
    code, out, _ = _run(capsys, 'verify', paths['ex1'], '--property', 'current',
                        '--delta', '0.1', '--out', str(out_path))
    assert code == 0
    assert out == ''
    assert json.loads(out_path.read_text())['holds'] is True
    prov = json.loads((tmp_path / 'results' / 'verdict.json.provenance.json').read_text())
    assert prov['version'] == __version__
    assert prov['argv'][0] == 'verify'
    assert 'created' in prov


def test_parser_raises_usage():
    with pytest.raises(Usage):
        build_parser().parse_args(['nothing'])


def test_ensure_dir(tmp_path):
    target = tmp_path / 'a' / 'b'
    ensure_dir(str(target))
    assert target.is_dir()
    (target / 'f.txt').write_text('x')
    ensure_dir(str(target), overwrite=True)
    assert os.listdir(str(target)) == []
    afile = tmp_path / 'file.txt'
    afile.write_text('x')
    with pytest.raises(ValueError):
        ensure_dir(str(afile))
