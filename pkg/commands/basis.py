"""
Подкоманда basis dump: матрица словаря SHORE для сравнения реализаций
"""
import logging

import click

from commands.common import basis_options, load_scheme, output_dir, pass_state, scheme_options
from dmri.basis import dump_dictionary, shore_dictionary, singular_value_ratio
from utils.error_handler import handle_errors

logger = logging.getLogger('dmriboot.cli.basis')


@click.group('basis')
def basis_group():
    """Dictionary inspection."""


@basis_group.command('dump')
@click.option('--out-dir', required=True, type=click.Path(file_okay=False), help='Output directory.')
@scheme_options
@basis_options
@pass_state
@handle_errors(logger)
def dump_cmd(state, out_dir, bvals, bvecs, b0_threshold, radial_order, zeta, tau):
    """Write D as dictionary.txt plus dictionary.json (atom labels, params)."""
    params = state.resolve('basis', radial_order=radial_order, zeta=zeta, tau=tau, b0_threshold=b0_threshold)
    scheme = load_scheme(bvals, bvecs, params['b0_threshold'])
    with state.stage('dictionary'):
        dictionary = shore_dictionary(scheme, params['radial_order'], params['zeta'], params['tau'])
    out = output_dir(out_dir)
    matrix_path, sidecar_path = dump_dictionary(dictionary, out)

    manifest = state.manifest('basis', params)
    manifest.add_input('bvals', bvals)
    manifest.add_input('bvecs', bvecs)
    manifest.report = {
        'n_channels': dictionary.n_channels,
        'n_atoms': dictionary.n_atoms,
        'singular_value_ratio': singular_value_ratio(dictionary),
    }
    state.finish(manifest, out)
    logger.info(f"Dictionary {dictionary.n_channels}x{dictionary.n_atoms} written to {matrix_path}")
