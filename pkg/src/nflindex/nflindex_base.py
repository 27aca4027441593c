"""Module containing the commandline interface for the nflindex package."""
from __future__ import annotations
from typing import TYPE_CHECKING

import sys
import argparse
import dataclasses
import logging

import numpy as np

from nflindex import __version__ as __nflindex_version__
from nflindex import bench, errors, util
from nflindex.config import BenchConfig, FlowConfig, Settings, load_config
from nflindex.enums import DatasetKind, Engine, FlowMode, WorkloadMix
from nflindex.keycodec import fit_codec
from nflindex.numflow import FlowParams, bypass_params, evaluate_log_likelihood, load_flow, save_flow, train_flow, train_flow_with_report, \
    transform_keys
from nflindex.conflict import evaluate_switch
from nflindex.workloads import DatasetSpec, gen_dataset, save_keys

if TYPE_CHECKING:
    from typing import Any, Dict, List, Optional, Tuple

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
DEFAULT_LOG_LEVEL = "ERROR"
DEFAULT_DATASET_SIZE = 1_000_000
REPEATED_LOG_RESET_SECONDS = 60

LOG: logging.Logger = logging.getLogger("nflindex")


def _add_dataset_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--keys', help='Key file (little-endian float64, optional u64 count header)')
    source.add_argument('--dist', choices=[kind.value for kind in DatasetKind if kind != DatasetKind.FILE],
                        help='Generate the keys instead of reading a file')
    parser.add_argument('--n', type=int, default=None, help='Number of keys to generate (default: 1000000) or to sample from the key file '
                        '(default: all)')
    parser.add_argument('--dataset-seed', dest='dataset_seed', type=int, default=None, help='Seed of the generated dataset (default: --seed)')


def _flow_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    names: Tuple[Tuple[str, str], ...] = (('sample_frac', 'sample_fraction'), ('epochs', 'epochs'), ('batch', 'batch_size'),
                                          ('lr', 'learning_rate'), ('dims', 'dims'), ('layers', 'layers'), ('hidden', 'hidden_mult'))
    return {field_name: getattr(args, arg) for arg, field_name in names if getattr(args, arg, None) is not None}


class CLI():  # pylint: disable=too-few-public-methods
    """
    Class containing the commandline interface for the nflindex package.
    """

    def __init__(self, logger: logging.Logger, name: str, description: str) -> None:
        self.logger = logger

        self.parser = argparse.ArgumentParser(
            prog=name,
            description=description)
        self.parser.add_argument('--version', action='version', version=f'%(prog)s {__nflindex_version__}')
        self.parser.add_argument('--config', help='Path to a configuration file (JSON, comments allowed)', default=None)

        logging_group = self.parser.add_argument_group('Logging')
        logging_group.add_argument('-v', '--verbose', action="append_const", help='Logging level (verbosity)', const=-1,)
        logging_group.add_argument('--logging-format', dest='logging_format', help='Logging format configured for python logging '
                                   '(default: %%(asctime)s:%%(levelname)s:%%(message)s)', default=None)
        logging_group.add_argument('--logging-date-format', dest='logging_date_format', help='Logging format configured for python logging '
                                   '(default: %%Y-%%m-%%dT%%H:%%M:%%S%%z)', default=None)
        logging_group.add_argument('--hide-repeated-log', dest='hide_repeated_log', help='Hide repeated log messages from the same module', action='store_true')

        subparsers = self.parser.add_subparsers(dest='command', required=True, title='commands')

        gen_parser = subparsers.add_parser('gen', help='Generate a key file')
        gen_parser.add_argument('--dist', required=True, choices=[kind.value for kind in DatasetKind if kind != DatasetKind.FILE],
                                help='Key distribution')
        gen_parser.add_argument('--n', type=int, required=True, help='Number of unique keys')
        gen_parser.add_argument('--seed', type=int, default=None, help='Generator seed (default: NFL_SEED or 0)')
        gen_parser.add_argument('--out', required=True, help='Output key file')
        gen_parser.add_argument('--no-header', dest='no_header', action='store_true', help='Write the keys without count header')

        train_parser = subparsers.add_parser('train-flow', help='Train a flow on a key file and write the flow file')
        train_parser.add_argument('--keys', required=True, help='Key file')
        train_parser.add_argument('--out', required=True, help='Output flow file')
        train_parser.add_argument('--sample-frac', dest='sample_frac', type=float, default=None, help='Fraction of keys sampled for training')
        train_parser.add_argument('--epochs', type=int, default=None, help='Passes over the sample')
        train_parser.add_argument('--batch', type=int, default=None, help='Minibatch size')
        train_parser.add_argument('--lr', type=float, default=None, help='Learning rate')
        train_parser.add_argument('--seed', type=int, default=None, help='Training seed (default: configuration, NFL_SEED or 0)')
        train_parser.add_argument('--dims', type=int, default=None, help='Features per key')
        train_parser.add_argument('--layers', type=int, default=None, help='Number of flow layers')
        train_parser.add_argument('--hidden', type=int, default=None, help='Hidden width multiplier')

        bench_parser = subparsers.add_parser('bench', help='Run a workload and report throughput and latency')
        _add_dataset_arguments(bench_parser)
        bench_parser.add_argument('--flow-file', dest='flow_file', default=None, help='Pre-trained flow (default: train on the bulk-loaded keys)')
        bench_parser.add_argument('--workload', choices=[mix.value for mix in WorkloadMix], default=None, help='Read/insert mix')
        bench_parser.add_argument('--bulk-frac', dest='bulk_frac', type=float, default=None, help='Fraction of keys bulk loaded (default: 0.5)')
        bench_parser.add_argument('--ops', type=int, default=None, help='Number of requests')
        bench_parser.add_argument('--zipf', type=float, default=None, help='Zipf skew of reads')
        bench_parser.add_argument('--batch', type=int, default=None, help='Requests per batch')
        bench_parser.add_argument('--flow', choices=[mode.value for mode in FlowMode], default=None, help='Flow switching override')
        bench_parser.add_argument('--engine', choices=[engine.value for engine in Engine], default=None, help='Index engine')
        bench_parser.add_argument('--repeat', type=int, default=None, help='Number of runs averaged (default: 5)')
        bench_parser.add_argument('--seed', type=int, default=None, help='Workload seed (default: configuration, NFL_SEED or 0)')
        bench_parser.add_argument('--report', default=None, help='CSV file with one row per run')
        bench_parser.add_argument('--json', default=None, help='JSON summary file')
        bench_parser.add_argument('--verify', action='store_true', default=None, help='Compare every result with the reference map')

        inspect_parser = subparsers.add_parser('inspect', help='Print conflict figures, transform latencies and index statistics')
        _add_dataset_arguments(inspect_parser)
        inspect_parser.add_argument('--flow-file', dest='flow_file', default=None, help='Flow to inspect (default: train one on the keys)')
        inspect_parser.add_argument('--seed', type=int, default=None, help='Seed (default: configuration, NFL_SEED or 0)')
        inspect_parser.add_argument('--bulkload', action='store_true', help='Bulk load the keys and print index statistics')
        inspect_parser.add_argument('--sweep-architectures', dest='sweep_architectures', action='store_true',
                                    help='Also measure the transform latency of the 2H2L, 2H4L, 4H3L and 4H4L flows')
        inspect_parser.add_argument('--sample', type=int, default=8192, help='Keys transformed per batch size (default: 8192)')
        inspect_parser.add_argument('--csv', default=None, help='CSV file with columns section,item,value')

    def _keys(self, args: argparse.Namespace, seed: int) -> Tuple[np.ndarray, str]:
        if args.keys is not None:
            return gen_dataset(DatasetSpec(kind=DatasetKind.FILE, n=args.n or 0, seed=seed, path=args.keys)), args.keys
        dataset_seed: int = seed if args.dataset_seed is None else args.dataset_seed
        return gen_dataset(DatasetSpec(kind=DatasetKind(args.dist), n=args.n or DEFAULT_DATASET_SIZE, seed=dataset_seed)), args.dist

    def _gen(self, args: argparse.Namespace, settings: Settings) -> None:
        seed: int = settings.seed_for('bench', args.seed)
        keys: np.ndarray = gen_dataset(DatasetSpec(kind=DatasetKind(args.dist), n=args.n, seed=seed))
        save_keys(args.out, keys, header=not args.no_header)
        print(f'{keys.size} keys written to {args.out}, span [{keys[0]!r}, {keys[-1]!r}]')

    def _train(self, args: argparse.Namespace, settings: Settings) -> None:
        config: FlowConfig = dataclasses.replace(settings.flow, seed=settings.seed_for('flow', args.seed), **_flow_overrides(args))
        keys: np.ndarray = gen_dataset(DatasetSpec(kind=DatasetKind.FILE, n=0, path=args.keys))
        flow, report = train_flow_with_report(keys, config)
        save_flow(flow, args.out)
        switch = evaluate_switch(keys, transform_keys(keys, flow), settings.index.gamma, settings.index.alpha)
        print(f'Flow written to {args.out} ({report.steps} steps on {report.sample_size} keys, {report.seconds:.2f}s)')
        print(f'Mean log-likelihood: initial {report.initial_log_likelihood:.6f}, final {report.final_log_likelihood:.6f}')
        print(f'Tail conflict degree: before {switch.tail_before}, after {switch.tail_after}'
              f'{"" if switch.order_preserved else " (order not preserved)"}')

    def _bench(self, args: argparse.Namespace, settings: Settings) -> None:
        overrides: Dict[str, Any] = {'workload': args.workload, 'bulk_fraction': args.bulk_frac, 'ops': args.ops, 'zipf_s': args.zipf,
                                     'batch': args.batch, 'flow_mode': args.flow, 'engine': args.engine, 'repeat': args.repeat,
                                     'verify': args.verify}
        config: BenchConfig = dataclasses.replace(settings.bench, seed=settings.seed_for('bench', args.seed),
                                                  **{name: value for name, value in overrides.items() if value is not None})
        keys, dataset = self._keys(args, config.seed)
        flow: Optional[FlowParams] = load_flow(args.flow_file) if args.flow_file is not None else None
        report: bench.BenchReport = bench.run_bench(keys, config, settings.index, settings.flow, flow=flow, dataset=dataset)
        print(report.table())
        if args.report is not None:
            bench.write_csv(args.report, [report])
        if args.json is not None:
            bench.write_json(args.json, [report])

    def _inspect(self, args: argparse.Namespace, settings: Settings) -> None:
        seed: int = settings.seed_for('flow', args.seed)
        keys, _ = self._keys(args, seed)
        if args.flow_file is not None:
            flow: FlowParams = load_flow(args.flow_file)
        elif settings.flow.epochs == 0:
            flow = bypass_params(settings.flow, fit_codec(keys, settings.flow.theta, settings.flow.dims))
        else:
            flow = train_flow(keys, dataclasses.replace(settings.flow, seed=seed))
        self.logger.info('Mean log-likelihood of the keys: %f', evaluate_log_likelihood(keys, flow))
        report: bench.InspectReport = bench.inspect_keys(keys, flow, settings.index, bulk=args.bulkload,
                                                         architectures=args.sweep_architectures, sample=args.sample)
        print(report.table())
        if args.csv is not None:
            report.write_csv(args.csv)

    # pylint: disable-next=too-many-statements,too-many-branches
    def main(self, argv: Optional[List[str]] = None) -> None:  # noqa: C901
        """
        Entry point for the command-line interface.
        """
        args = self.parser.parse_args(argv)
        log_level = LOG_LEVELS.index(DEFAULT_LOG_LEVEL)
        for adjustment in args.verbose or ():
            log_level = min(len(LOG_LEVELS) - 1, max(log_level + adjustment, 0))

        try:
            settings: Settings = load_config(args.config) if args.config is not None else Settings()
        except FileNotFoundError as e:
            self.logger.critical('Could not find configuration file %s (%s)', args.config, e)
            sys.exit('Could not find configuration file')
        except errors.ConfigurationError as e:
            self.logger.critical('There was a problem with the configuration: %s', e)
            sys.exit('There was a problem with the configuration')

        level: str = LOG_LEVELS[log_level] if args.verbose or settings.log_level is None else settings.log_level
        logging.basicConfig(level=level, format=args.logging_format or settings.log_format or '%(asctime)s:%(levelname)s:%(message)s',
                            datefmt=args.logging_date_format or settings.log_date_format or '%Y-%m-%dT%H:%M:%S%z')
        if args.hide_repeated_log:
            for handler in logging.root.handlers:
                handler.addFilter(util.DuplicateFilter(filter_reset_seconds=REPEATED_LOG_RESET_SECONDS))

        commands = {'gen': self._gen, 'train-flow': self._train, 'bench': self._bench, 'inspect': self._inspect}
        try:
            commands[args.command](args, settings)
        except FileNotFoundError as e:
            self.logger.critical('Could not find file: %s', e)
            sys.exit('Could not find file')
        except errors.ConfigurationError as e:
            self.logger.critical('There was a problem with the configuration: %s', e)
            sys.exit('There was a problem with the configuration')
        except errors.FlowFileError as e:
            self.logger.critical('Could not read flow file: %s', e)
            sys.exit('Could not read flow file')
        except errors.VerificationError as e:
            self.logger.critical('Results differ from the reference map (%d mismatches): %s', e.mismatches, e)
            sys.exit('Results differ from the reference map')
        except errors.IndexAuditError as e:
            self.logger.critical('Index structure is inconsistent at %s: %s', e.path, e)
            sys.exit('Index structure is inconsistent')
        except errors.WorkloadError as e:
            self.logger.critical('There was a problem with the keys or the workload: %s', e)
            sys.exit('There was a problem with the keys or the workload')
        except errors.FlowError as e:
            self.logger.critical('There was a problem with the flow: %s', e)
            sys.exit('There was a problem with the flow')
        except errors.NflIndexError as e:
            self.logger.critical('There was a problem: %s', e)
            sys.exit('There was a problem')


def main(argv: Optional[List[str]] = None) -> None:
    """
    Entry point for the nflindex application.

    Args:
        argv (Optional[List[str]]): Arguments, defaults to sys.argv.
    """
    cli: CLI = CLI(logger=LOG, name='nflindex', description='Generate key sets, train flows, benchmark and inspect the flow-based learned index')
    cli.main(argv)
