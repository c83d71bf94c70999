"""
Подкоманда fit: коэффициенты, подогнанный сигнал и скорректированные остатки
"""
import logging

import click

from commands.common import (
    basis_options,
    emit_json,
    fit_options,
    fit_scan,
    flag,
    load_mask,
    load_scan,
    load_scheme,
    output_dir,
    pass_state,
    scheme_options,
)
from dmri.fitting import fit_report
from dmri.volumes import write_nifti
from utils.error_handler import handle_errors

logger = logging.getLogger('dmriboot.cli.fit')


@click.command('fit')
@click.option('--dwi', required=True, type=click.Path(exists=True, dir_okay=False), help='dMRI scan (NIfTI-1).')
@click.option('--mask', type=click.Path(exists=True, dir_okay=False), help='Mask NIfTI (nonzero = inside).')
@click.option('--out-dir', required=True, type=click.Path(file_okay=False), help='Output directory.')
@click.option('--output-dtype', type=click.Choice(['float32', 'float64']), help='On-disk dtype of outputs.')
@scheme_options
@basis_options
@fit_options
@pass_state
@handle_errors(logger)
def fit_cmd(state, dwi, mask, out_dir, output_dtype, bvals, bvecs, b0_threshold,
            radial_order, zeta, tau, ridge, center_residuals):
    """Fit the SHORE dictionary to every masked voxel."""
    params = state.resolve(
        'fit', radial_order=radial_order, zeta=zeta, tau=tau, ridge=ridge,
        center_residuals=flag(center_residuals), b0_threshold=b0_threshold, output_dtype=output_dtype,
    )
    scheme = load_scheme(bvals, bvecs, params['b0_threshold'])
    scan = load_scan(dwi, scheme)
    mask_volume = load_mask(mask, scan)

    _, operator, fits = fit_scan(state, scan, scheme, mask_volume, params)

    out = output_dir(out_dir)
    with state.stage('write'):
        for name, volume in fits.to_volumes().items():
            write_nifti(volume, out / f'{name}.nii', dtype_on_disk=params['output_dtype'])
    report = fit_report(operator, fits)
    emit_json(report, out / 'fit_report.json')

    manifest = state.manifest('fit', params)
    manifest.add_input('dwi', dwi)
    manifest.add_input('bvals', bvals)
    manifest.add_input('bvecs', bvecs)
    manifest.add_input('mask', mask)
    manifest.report = {'hat_diag': report['hat_diag'], 'n_voxels': report['n_voxels']}
    state.finish(manifest, out)
