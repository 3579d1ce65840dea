"""Command-line interface: dataset synthesis, training, evaluation, MI analysis, reports

Exit codes are 0 on success, 1 when a run fails, and 2 for invalid usage or input.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import List, Optional, Sequence
from pathlib import Path
import argparse
import logging
import math
import csv
import os

import numpy as np
import yaml

from fpm_codesign import __version__
from fpm_codesign.channel import make_rng
from fpm_codesign.dataset import load_dataset, save_dataset
from fpm_codesign.exceptions import ContractError
from fpm_codesign.infotheory import MiEstimate, estimate_mi
from fpm_codesign.network import ConvNetSpec
from fpm_codesign.optics import PRESETS, led_is_brightfield, load_preset, synthetic_na
from fpm_codesign.report import render_report
from fpm_codesign.trainer import (CaseSpec, EvalResult, TrainSchedule, evaluate, load_model,
                                  read_led_history, train)
from fpm_codesign.utils.interface import execute_source

logger = logging.getLogger(__name__)

DEFAULT_PRESETS = {'mnist': 'table1', 'image-dir': 'table2', 'binary16': 'table3'}


@dataclass
class ExperimentSpec:
    """Everything needed to repeat a command

    Args:
        command (str): Sub-command name
        preset (str): Optical preset name or path
        seed (int): Seed of all random streams
        out (str): Output file or directory
        case_id (int): Training case
        m ([float]): Noise factor(s)
        options (dict): Remaining flags (schedule overrides, input paths, ...)
    """

    command: str
    preset: Optional[str]
    seed: int
    out: Optional[str]
    case_id: Optional[int] = None
    m: List[float] = field(default_factory=list)
    options: dict = field(default_factory=dict)

    def to_manifest(self) -> dict:
        output = asdict(self)
        output['m'] = [_format_m(v) for v in self.m]
        output['version'] = __version__
        output['created'] = datetime.now(timezone.utc).isoformat()
        return output


def _format_m(m: float):
    return 'inf' if math.isinf(m) else float(m)


def noise_factor(text: str) -> float:
    """Parse a noise factor, accepting ``inf`` for a noiseless channel"""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'invalid noise factor: {text!r}')
    if not value > 0:
        raise argparse.ArgumentTypeError(f'noise factor must be positive, got {text}')
    return value


def require_path(path: Optional[str], flag: str):
    """Fail with a usage error if an input path given on the command line is missing"""
    if path is not None and not os.path.exists(path):
        raise ContractError(f'{flag}: {path} does not exist')


def write_manifest(path: Path, manifest: dict):
    with open(path, 'w') as fp:
        yaml.safe_dump(manifest, fp, sort_keys=True, default_flow_style=False)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]):
    with open(path, 'w', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)


def synth_data(args: argparse.Namespace) -> int:
    preset = args.preset or DEFAULT_PRESETS[args.dataset]
    config = load_preset(preset)
    if args.dataset != 'binary16' and args.input is None:
        raise ContractError(f'--input is required for the {args.dataset} dataset')
    require_path(args.input, '--input')
    context = {'seed': args.seed}
    if args.subset is not None:
        context['subset'] = args.subset

    dataset = execute_source(args.dataset, args.input, config, context)
    out = Path(args.out)
    if out.parent != Path(''):
        os.makedirs(out.parent, exist_ok=True)
    save_dataset(out, dataset)

    spec = ExperimentSpec('synth-data', preset, args.seed, str(out),
                          options={'dataset': args.dataset, 'input': args.input,
                                   'subset': args.subset})
    manifest = spec.to_manifest()
    brightfield = led_is_brightfield(config)
    manifest['dataset'] = {'provenance': dataset.provenance, 'encoder': dataset.encoder,
                           'splits': dict(dataset.split_sizes), 'shape': list(dataset.shape)}
    manifest['optics'] = {'config': config.to_dict(), 'synthetic_na': synthetic_na(config),
                          'brightfield_leds': int(brightfield.sum()),
                          'darkfield_leds': int((~brightfield).sum())}
    write_manifest(Path(f'{out}.manifest.yaml'), manifest)
    logger.info(f'Wrote {len(dataset)} objects to {out}')
    return 0


def _resolve_preset(requested: Optional[str], dataset_preset: str) -> str:
    if requested is not None:
        return requested
    if dataset_preset in PRESETS:
        return dataset_preset
    raise ContractError(f'Dataset was built with preset "{dataset_preset}"; pass --preset')


def train_command(args: argparse.Namespace) -> int:
    require_path(args.dataset, '--dataset')
    dataset = load_dataset(args.dataset)
    preset = _resolve_preset(args.preset, dataset.preset)
    config = load_preset(preset)
    case = CaseSpec.from_id(args.case)
    schedule = TrainSchedule(iterations=args.iters, batch_size=args.batch_size, lr0=args.lr,
                             adversarial=not args.no_adversarial,
                             log_interval=args.log_interval,
                             snapshot_interval=args.snapshot_interval)
    net_spec = ConvNetSpec(upsample=config.downsample)
    if args.no_dropout:
        net_spec = ConvNetSpec(upsample=config.downsample, dropout_layers=())

    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    spec = ExperimentSpec('train', preset, args.seed, str(out), case_id=args.case, m=[args.m],
                          options={'schedule': schedule.to_dict(),
                                   'network': net_spec.to_dict()})
    manifest = spec.to_manifest()
    manifest['dataset'] = os.path.abspath(args.dataset)
    write_manifest(out / 'manifest.yaml', manifest)

    result = train(case, dataset, config, args.m, schedule, args.seed, out, net_spec=net_spec)
    logger.info(f'Final checkpoint: {result.checkpoint}')
    return 0


def eval_command(args: argparse.Namespace) -> int:
    require_path(args.checkpoint, '--checkpoint')
    require_path(args.dataset, '--dataset')
    model, header = load_model(args.checkpoint, use_ema=True)
    dataset = load_dataset(args.dataset)
    if args.m_sweep:
        ms = list(args.m_sweep)
    elif args.m is not None:
        ms = [args.m]
    else:
        ms = [float(header['m'])]

    streams = [make_rng(s) for s in np.random.SeedSequence(args.seed).spawn(len(ms))]

    def run(i: int) -> EvalResult:
        return evaluate(model, dataset, ms[i], split=args.dataset_split, rng=streams[i],
                        samples=args.samples)

    if len(ms) > 1:
        with ThreadPoolExecutor(max_workers=len(ms)) as pool:
            results = list(pool.map(run, range(len(ms))))
    else:
        results = [run(0)]

    for r in results:
        logger.info(f'm={r.m}: mean M={r.mean_M:.6g}, mean G={r.mean_G:.6g} over {r.count}'
                    f' {r.split} objects')
    _write_csv(Path(args.out), EvalResult.csv_header(), [r.csv_row() for r in results])
    return 0


def mi_command(args: argparse.Namespace) -> int:
    require_path(args.dataset, '--dataset')
    require_path(args.checkpoint, '--checkpoint')
    require_path(args.pattern_file, '--pattern-file')
    dataset = load_dataset(args.dataset)
    if args.checkpoint is not None:
        model, _ = load_model(args.checkpoint, use_ema=True)
        config = model.config
        snapshots = [('checkpoint', model.led.data)]
    else:
        config = load_preset(_resolve_preset(args.preset, dataset.preset))
        snapshots = [(str(it), w) for it, w in read_led_history(args.pattern_file)]

    rows = []
    for name, weights in snapshots:
        estimate: MiEstimate = estimate_mi(dataset, weights, config, args.m, args.samples,
                                           seed=args.seed, split=args.split)
        logger.info(f'Snapshot {name}: {estimate.bits:.4f} bits')
        rows.append(estimate.csv_row(name))
    _write_csv(Path(args.out), MiEstimate.csv_header(), rows)
    return 0


def report_command(args: argparse.Namespace) -> int:
    render_report(args.run_dir, examples=args.examples, split=args.split, seed=args.seed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='fpm-codesign',
        description='Jointly optimize LED illumination and reconstruction networks for'
                    ' single-shot Fourier ptychographic microscopy')
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('-v', '--verbose', action='store_true', help='Log debugging messages')
    subparsers = parser.add_subparsers(dest='command', required=True)

    p = subparsers.add_parser('synth-data', help='Build a dataset archive')
    p.add_argument('--dataset', choices=['mnist', 'binary16', 'image-dir'], required=True)
    p.add_argument('--preset', help='table1, table2, table3 or a YAML file.'
                                    ' Defaults to the preset matching the dataset')
    p.add_argument('--input', help='MNIST directory/file or image directory')
    p.add_argument('--out', required=True, help='Path of the dataset archive')
    p.add_argument('--subset', type=int, help='Keep only the first N images of each split')
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(handler=synth_data)

    p = subparsers.add_parser('train', help='Train one experimental case')
    p.add_argument('--dataset', required=True, help='Dataset archive')
    p.add_argument('--preset', help='Defaults to the preset the dataset was built with')
    p.add_argument('--case', type=int, choices=[1, 2, 3, 4], required=True)
    p.add_argument('--m', type=noise_factor, default=1.0, help='Noise factor (inf: noiseless)')
    p.add_argument('--iters', type=int, default=TrainSchedule.iterations)
    p.add_argument('--batch-size', type=int, default=TrainSchedule.batch_size)
    p.add_argument('--lr', type=float, default=TrainSchedule.lr0)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--out', required=True, help='Run directory')
    p.add_argument('--no-dropout', action='store_true')
    p.add_argument('--no-adversarial', action='store_true',
                   help='Train without the discriminator')
    p.add_argument('--log-interval', type=int, default=TrainSchedule.log_interval)
    p.add_argument('--snapshot-interval', type=int, default=TrainSchedule.snapshot_interval)
    p.set_defaults(handler=train_command)

    p = subparsers.add_parser('eval', help='Average reconstruction errors of a checkpoint')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--dataset', required=True, help='Dataset archive')
    p.add_argument('--dataset-split', choices=['train', 'validation', 'test'], default='test')
    group = p.add_mutually_exclusive_group()
    group.add_argument('--m', type=noise_factor, help='Defaults to the training value')
    group.add_argument('--m-sweep', type=noise_factor, nargs='+')
    p.add_argument('--samples', type=int, help='Evaluate only the first N objects')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', default='eval.csv')
    p.set_defaults(handler=eval_command)

    p = subparsers.add_parser('mi', help='Mutual information of an LED pattern')
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument('--checkpoint', help='Use the averaged LED pattern of a checkpoint')
    group.add_argument('--pattern-file', help='Use every row of a led_pattern.csv file')
    p.add_argument('--dataset', required=True, help='Dataset archive')
    p.add_argument('--preset', help='Defaults to the preset the dataset was built with')
    p.add_argument('--split', choices=['train', 'validation', 'test'], default='train')
    p.add_argument('--m', type=noise_factor, default=1.0)
    p.add_argument('--samples', type=int, default=1000000)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', default='mi_report.csv')
    p.set_defaults(handler=mi_command)

    p = subparsers.add_parser('report', help='Render images of a training run')
    p.add_argument('--run-dir', required=True)
    p.add_argument('--examples', type=int, default=4)
    p.add_argument('--split', choices=['train', 'validation', 'test'], default='test')
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(handler=report_command)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.handler(args)
    except ValueError as e:
        logger.error(str(e))
        return 2
    except (RuntimeError, OSError) as e:
        logger.error(str(e))
        return 1


if __name__ == '__main__':
    raise SystemExit(main())
