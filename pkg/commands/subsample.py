"""
Подкоманда subsample: прореживание протокола и каналов скана
"""
import json
import logging

import click

from commands.common import load_scan, load_scheme, output_dir, pass_state, scheme_options
from dmri.gradients import PROTOCOL_PRESETS, protocol_preset, subsample, write_scheme
from dmri.volumes import gather_channels, write_nifti
from utils.error_handler import UsageError, handle_errors
from validators import IndexList, PositiveNumber, ShellSpec

logger = logging.getLogger('dmriboot.cli.subsample')

STRATEGIES = ('farthest_point', 'indices')


@click.command('subsample')
@click.option('--dwi', type=click.Path(exists=True, dir_okay=False), help='Optional scan to subsample.')
@click.option('--out-dir', required=True, type=click.Path(file_okay=False), help='Output directory.')
@click.option('--shells', callback=ShellSpec(), help='Shells and counts, e.g. "1000:18,2000:18".')
@click.option('--b0-count', type=int, callback=PositiveNumber(allow_zero=True), help='b0 channels to keep.')
@click.option('--strategy', type=click.Choice(STRATEGIES), help='Selection strategy (default farthest_point).')
@click.option('--indices', callback=IndexList(), help='Explicit channel indices for --strategy indices.')
@click.option('--preset', type=click.Choice(sorted(PROTOCOL_PRESETS)), help='Named protocol variant.')
@click.option('--shell-tolerance', type=float, callback=PositiveNumber(), help='Shell clustering tolerance.')
@click.option('--prefix', default='subsampled', show_default=True, help='Output file name prefix.')
@scheme_options
@pass_state
@handle_errors(logger)
def subsample_cmd(state, dwi, out_dir, shells, b0_count, strategy, indices, preset, shell_tolerance,
                  prefix, bvals, bvecs, b0_threshold):
    """Reduce a gradient scheme (and optionally a scan) to a protocol subset."""
    params = state.resolve(
        'subsample', shells=shells, b0_count=b0_count, strategy=strategy, indices=indices,
        preset=preset, b0_threshold=b0_threshold, shell_tolerance=shell_tolerance,
    )
    strategy = params['strategy'] or 'farthest_point'
    shell_spec = params['shells']
    b0_count = params['b0_count']
    if params['preset']:
        preset_spec, preset_b0 = protocol_preset(params['preset'])
        shell_spec = shell_spec if shell_spec is not None else preset_spec
        b0_count = b0_count if b0_count is not None else preset_b0
    if strategy == 'farthest_point' and (shell_spec is None or b0_count is None):
        raise UsageError("farthest_point subsampling needs --shells and --b0-count (or --preset)")
    shell_spec = [(float(b), int(n)) for b, n in (shell_spec or [])]
    params.update(strategy=strategy, shells=shell_spec, b0_count=b0_count)

    scheme = load_scheme(bvals, bvecs, params['b0_threshold'])
    reduced, index_map = subsample(
        scheme, shell_spec, b0_count or 0, strategy=strategy,
        explicit_indices=params['indices'], tolerance=params['shell_tolerance'],
    )

    out = output_dir(out_dir)
    write_scheme(reduced, out / f'{prefix}.bvals', out / f'{prefix}.bvecs')
    (out / f'{prefix}_index_map.json').write_text(
        json.dumps([int(i) for i in index_map]), encoding='utf-8'
    )
    if dwi is not None:
        scan = load_scan(dwi, scheme)
        with state.stage('gather'):
            write_nifti(gather_channels(scan, index_map), out / f'{prefix}.nii')

    manifest = state.manifest('subsample', params)
    manifest.add_input('dwi', dwi)
    manifest.add_input('bvals', bvals)
    manifest.add_input('bvecs', bvecs)
    manifest.report = {'n_channels': reduced.n_channels, 'n_b0': reduced.n_b0, 'n_dw': reduced.n_dw}
    state.finish(manifest, out)
