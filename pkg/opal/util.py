#!/usr/bin/env python
""" Command-line front end.

    opal verify --property P --delta D model.json
    opal estimator --kind init|cur --delta D model.json
    opal relate --kind K --epsilon E a.json b.json [--relation r.json]
    opal threshold --property P model.json
    opal abstract --config sys.toml
    opal pipeline --config sys.toml --delta D --epsilon E --property P
    opal oracle --property P --delta D --depth N model.json

Exit codes: 0 when the checked property holds, 1 when it fails, 2 on errors.
"""
import argparse
import datetime
import logging
import os
import sys

from .models import OpalError, load_system, dump_system, dumps, DEFAULT_SLACK
from .estimator import (build_initial_estimator, build_current_estimator,
                        DEFAULT_NODE_CAP)
from .opacity import verify, opacity_threshold, PROPERTIES
from .simulation import (check_relation, compute_maximal_relation, load_relation,
                         KINDS)
from .abstraction import (load_control_system, build_symbolic_model,
                          end_to_end_verify, suggest_quantization, Quantization)
from .kfunctions import QuantizationError
from .oracle import oracle_opacity

log = logging.getLogger(__name__)

EXIT_HOLDS = 0
EXIT_FAILS = 1
EXIT_ERROR = 2

help_message = __doc__


class Usage(Exception):
    def __init__(self, msg=help_message):
        self.msg = msg


class _Parser(argparse.ArgumentParser):
    """ ArgumentParser that raises Usage instead of exiting """

    def error(self, message):
        raise Usage(msg="%s: %s" % (self.prog, message))


def ensure_dir(dir_path, overwrite=False):
    from shutil import rmtree
    from os.path import isdir, exists
    from os import makedirs
    if not dir_path:
        return
    if exists(dir_path):
        if not isdir(dir_path):
            raise ValueError("%s is a file..." % dir_path)
        if overwrite:
            rmtree(dir_path)
    if not exists(dir_path):
        makedirs(dir_path)


def _nonnegative(name):
    def parse(text):
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError("%s must be a number" % name)
        if value < 0:
            raise argparse.ArgumentTypeError("%s must be nonnegative" % name)
        return value
    return parse


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument('--slack', type=_nonnegative('slack'), default=DEFAULT_SLACK,
                        help="tolerance added to every distance comparison")
    common.add_argument('--node-cap', type=int, default=DEFAULT_NODE_CAP,
                        help="maximum number of estimator nodes")
    common.add_argument('--out', help="write the JSON payload here instead of stdout")
    common.add_argument('--strict-def5', action='store_true',
                        help="update current-state beliefs from the reference state only")
    common.add_argument('-v', '--verbose', action='count', default=0)

    parser = _Parser(prog='opal', description="approximate opacity analysis")
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)
    sub.required = True

    p = sub.add_parser('verify', parents=[common], help="decide an opacity property")
    p.add_argument('model')
    p.add_argument('--property', required=True, choices=PROPERTIES)
    p.add_argument('--delta', required=True, type=_nonnegative('delta'))
    p.add_argument('--oracle', type=int, metavar='DEPTH',
                   help="cross-check with the brute-force oracle to this depth")

    p = sub.add_parser('estimator', parents=[common], help="build an estimator")
    p.add_argument('model')
    p.add_argument('--kind', required=True, choices=('init', 'cur'))
    p.add_argument('--delta', required=True, type=_nonnegative('delta'))
    p.add_argument('--dot', help="also write the estimator as DOT to this path")

    p = sub.add_parser('relate', parents=[common], help="check or compute a relation")
    p.add_argument('source')
    p.add_argument('target')
    p.add_argument('--kind', choices=KINDS)
    p.add_argument('--epsilon', type=_nonnegative('epsilon'))
    p.add_argument('--relation', help="relation file to validate")

    p = sub.add_parser('threshold', parents=[common], help="least delta at which opacity holds")
    p.add_argument('model')
    p.add_argument('--property', required=True, choices=PROPERTIES)

    p = sub.add_parser('abstract', parents=[common], help="build a symbolic model")
    p.add_argument('--config', required=True)
    p.add_argument('--eta', type=float)
    p.add_argument('--mu', type=float)
    p.add_argument('--epsilon', type=_nonnegative('epsilon'))

    p = sub.add_parser('pipeline', parents=[common], help="verify a control system")
    p.add_argument('--config', required=True)
    p.add_argument('--property', required=True, choices=PROPERTIES)
    p.add_argument('--delta', required=True, type=_nonnegative('delta'))
    p.add_argument('--epsilon', required=True, type=_nonnegative('epsilon'))

    p = sub.add_parser('oracle', parents=[common], help="brute-force opacity check")
    p.add_argument('model')
    p.add_argument('--property', required=True, choices=PROPERTIES)
    p.add_argument('--delta', required=True, type=_nonnegative('delta'))
    p.add_argument('--depth', type=int, default=6)
    return parser


def _emit(args, payload, argv):
    text = payload if isinstance(payload, str) else dumps(payload)
    if args.out:
        ensure_dir(os.path.dirname(os.path.abspath(args.out)))
        with open(args.out, 'w', encoding='utf-8') as f:
            f.write(text)
        from . import __version__
        provenance = {
            'argv': list(argv),
            'version': __version__,
            'created': datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        with open(args.out + '.provenance.json', 'w', encoding='utf-8') as f:
            f.write(dumps(provenance))
    else:
        sys.stdout.write(text)


def _quantization(args, q):
    """ merges --eta/--mu/--epsilon over the config's quantization """
    eta = args.eta if args.eta is not None else (q.eta if q else None)
    mu = args.mu if args.mu is not None else (q.mu if q else None)
    eps = args.epsilon if args.epsilon is not None else (q.epsilon if q else None)
    return eta, mu, eps


def cmd_verify(args, argv):
    system = load_system(args.model)
    verdict = verify(system, args.delta, args.property, slack=args.slack,
                     node_cap=args.node_cap, strict=args.strict_def5)
    payload = verdict.to_dict()
    if args.oracle is not None:
        check = oracle_opacity(system, args.delta, args.property, args.oracle,
                               slack=args.slack)
        payload['oracle'] = check.to_dict()
        witness_len = None if verdict.witness is None else len(verdict.witness)
        agree = (check.holds == verdict.holds if verdict.holds or witness_len <= args.oracle
                 else True)
        if not agree:
            raise OpalError("oracle disagrees with verifier at depth %d" % args.oracle)
    _emit(args, payload, argv)
    return EXIT_HOLDS if verdict.holds else EXIT_FAILS


def cmd_estimator(args, argv):
    system = load_system(args.model)
    if args.kind == 'init':
        est = build_initial_estimator(system, args.delta, slack=args.slack,
                                      node_cap=args.node_cap)
    else:
        est = build_current_estimator(system, args.delta, slack=args.slack,
                                      node_cap=args.node_cap, strict=args.strict_def5)
    if args.dot:
        with open(args.dot, 'w', encoding='utf-8') as f:
            f.write(est.to_dot())
    _emit(args, est.to_dict(), argv)
    return EXIT_HOLDS


def cmd_relate(args, argv):
    sa, sb = load_system(args.source), load_system(args.target)
    kind, epsilon = args.kind, args.epsilon
    if args.relation:
        pairs, file_kind, file_eps = load_relation(args.relation)
        kind = kind or file_kind
        epsilon = epsilon if epsilon is not None else file_eps
    if kind is None or epsilon is None:
        raise Usage(msg="relate: --kind and --epsilon are required "
                        "unless the relation file supplies them")
    if args.relation:
        rel = check_relation(sa, sb, pairs, epsilon, kind, slack=args.slack)
    else:
        rel = compute_maximal_relation(sa, sb, epsilon, kind, slack=args.slack)
    _emit(args, rel.to_dict(), argv)
    return EXIT_HOLDS if rel.simulates else EXIT_FAILS


def cmd_threshold(args, argv):
    system = load_system(args.model)
    value = opacity_threshold(system, args.property, slack=args.slack,
                              node_cap=args.node_cap, strict=args.strict_def5)
    if args.out:
        _emit(args, {'property': args.property, 'threshold': value}, argv)
    else:
        print("none" if value is None else format(value, '.12g'))
    return EXIT_HOLDS


def cmd_abstract(args, argv):
    cs, q = load_control_system(args.config)
    eta, mu, eps = _quantization(args, q)
    if eta is None or mu is None:
        if eps is None:
            raise Usage(msg="abstract: give --epsilon or a [quantization] section")
        q = suggest_quantization(cs.certificate, cs.alpha, eps, cs)
        if q is None:
            raise QuantizationError("no feasible quantization for epsilon=%g" % eps)
    else:
        q = Quantization(eta, mu, eps if eps is not None else 0.0)
    model = build_symbolic_model(cs, q)
    _emit(args, dump_system(model), argv)
    return EXIT_HOLDS


def cmd_pipeline(args, argv):
    cs, q = load_control_system(args.config)
    result = end_to_end_verify(cs, args.epsilon, args.delta, args.property, q=q,
                               slack=args.slack, node_cap=args.node_cap)
    _emit(args, result.to_dict(), argv)
    return EXIT_HOLDS if result.outcome == 'holds' else EXIT_FAILS


def cmd_oracle(args, argv):
    system = load_system(args.model)
    verdict = oracle_opacity(system, args.delta, args.property, args.depth, slack=args.slack)
    _emit(args, verdict.to_dict(), argv)
    return EXIT_HOLDS if verdict.holds else EXIT_FAILS


COMMANDS = {
    'verify': cmd_verify,
    'estimator': cmd_estimator,
    'relate': cmd_relate,
    'threshold': cmd_threshold,
    'abstract': cmd_abstract,
    'pipeline': cmd_pipeline,
    'oracle': cmd_oracle,
}


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = build_parser().parse_args(argv)
        level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
        logging.basicConfig(level=level, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args, argv)
    except Usage as err:
        print(str(err.msg), file=sys.stderr)
        print("for help use --help", file=sys.stderr)
        return EXIT_ERROR
    except (OpalError, ValueError, OSError) as err:
        print("opal: error: %s" % err, file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
