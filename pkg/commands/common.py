"""
Общие части подкоманд: состояние запуска, загрузка входов, вывод отчетов
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import click

import dmri
from config_env import Config, resolve_parameters
from dmri.basis import shore_dictionary
from dmri.fitting import build_fit_operator, fit_volume
from dmri.gradients import read_scheme
from dmri.volumes import Mask, gather_channels, read_nifti
from utils.error_handler import DimensionMismatchError
from utils.logger import StageTimer, log_execution_time
from utils.manifest import RunManifest
from validators import EvenRadialOrder, PositiveNumber

logger = logging.getLogger('dmriboot.cli')


@dataclass
class CliState:
    """Контекст запуска, общий для всех подкоманд."""
    config: type = Config
    json_config: Dict = field(default_factory=dict)
    threads: Optional[int] = None
    timer: StageTimer = field(default_factory=StageTimer)

    def resolve(self, command, **flags):
        return resolve_parameters(command, self.config, self.json_config, flags)

    def stage(self, name):
        return log_execution_time(logger, name, self.timer, warn_after=self.config.SLOW_STAGE_SECONDS)

    @property
    def chunk_size(self):
        return self.config.CHUNK_SIZE

    def manifest(self, subcommand, parameters, seed=None):
        return RunManifest(
            tool_version=dmri.__version__,
            subcommand=subcommand,
            parameters=dict(parameters),
            seed=seed,
        )

    def finish(self, manifest, out_dir):
        manifest.timings = self.timer.as_dict()
        return manifest.write(out_dir)


pass_state = click.make_pass_decorator(CliState, ensure=True)


def flag(value):
    """Булевы флаги могут только включать параметр; иначе решает конфигурация."""
    return True if value else None


def load_scheme(bvals, bvecs, b0_threshold):
    scheme = read_scheme(bvals, bvecs, b0_threshold=b0_threshold)
    logger.info(f"Scheme: {scheme.n_b0} b0 + {scheme.n_dw} DW channels")
    return scheme


def load_scan(path, scheme):
    volume = read_nifti(path)
    if volume.n_channels != scheme.n_channels:
        raise DimensionMismatchError(
            f"{path}: {volume.n_channels} channels, scheme describes {scheme.n_channels}",
            details={'volume': volume.n_channels, 'scheme': scheme.n_channels}
        )
    return volume


def load_mask(path, volume):
    """Маска из NIfTI (ненулевые воксели первого канала) или вся сетка."""
    if path is None:
        return Mask.full(volume.spatial_dims)
    mask = Mask(read_nifti(path).data[..., 0] != 0)
    mask.check_compatible(volume)
    logger.info(f"Mask: {mask.count} voxel(s)")
    return mask


def output_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def scale_tag(r):
    return f'{r:g}'


def emit_json(payload, out=None):
    """JSON отчет в файл или в stdout."""
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + '\n', encoding='utf-8')
        logger.info(f"Report written to {out}")
    else:
        click.echo(text)


def _apply(options):
    def decorator(func):
        for option in reversed(options):
            func = option(func)
        return func
    return decorator


def scheme_options(func):
    """--bvals, --bvecs, --b0-threshold."""
    return _apply([
        click.option('--bvals', required=True, type=click.Path(exists=True, dir_okay=False),
                     help='FSL bvals file (one row).'),
        click.option('--bvecs', required=True, type=click.Path(exists=True, dir_okay=False),
                     help='FSL bvecs file (three rows).'),
        click.option('--b0-threshold', type=float, callback=PositiveNumber(allow_zero=True),
                     help='Channels with b <= threshold are b0 (default 50).'),
    ])(func)


def basis_options(func):
    """--radial-order, --zeta, --tau."""
    return _apply([
        click.option('--radial-order', type=int, callback=EvenRadialOrder(),
                     help='SHORE radial order, even (default 6).'),
        click.option('--zeta', type=float, callback=PositiveNumber(), help='SHORE scale (default 700).'),
        click.option('--tau', type=float, callback=PositiveNumber(),
                     help='Diffusion time constant; default 1/(4*pi^2) gives q = sqrt(b).'),
    ])(func)


def fit_options(func):
    """--ridge, --center-residuals."""
    return _apply([
        click.option('--ridge', type=float, callback=PositiveNumber(allow_zero=True),
                     help='Tikhonov parameter (default 0: plain pseudoinverse).'),
        click.option('--center-residuals', is_flag=True, default=False,
                     help='Subtract the per-voxel mean from residuals before correction.'),
    ])(func)


def fit_scan(state, scan, scheme, mask, params):
    """Словарь, оператор и аппроксимация DW каналов скана."""
    with state.stage('dictionary'):
        dictionary = shore_dictionary(scheme, params['radial_order'], params['zeta'], params['tau'])
        operator = build_fit_operator(dictionary, params['ridge'])
    dwi = gather_channels(scan, scheme.dw_indices)
    with state.stage('fit'):
        fits = fit_volume(
            operator, dictionary, dwi, mask,
            center_residuals=bool(params.get('center_residuals')),
            threads=state.threads,
            chunk_size=state.chunk_size,
        )
    return dictionary, operator, fits
