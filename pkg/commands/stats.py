"""
Подкоманда stats: оценка шума, SNR и leverages скана
"""
import logging

import click

from commands.common import (
    basis_options,
    emit_json,
    fit_scan,
    load_mask,
    load_scan,
    load_scheme,
    pass_state,
    scheme_options,
)
from dmri.bootstrap import estimate_noise_sigma
from dmri.fitting import fit_report
from dmri.metrics import snr_report
from utils.error_handler import handle_errors
from validators import PositiveNumber

logger = logging.getLogger('dmriboot.cli.stats')


@click.command('stats')
@click.option('--dwi', required=True, type=click.Path(exists=True, dir_okay=False), help='dMRI scan (NIfTI-1).')
@click.option('--mask', type=click.Path(exists=True, dir_okay=False), help='Mask NIfTI (nonzero = inside).')
@click.option('--ridge', type=float, callback=PositiveNumber(allow_zero=True), help='Tikhonov parameter.')
@click.option('--out', type=click.Path(dir_okay=False), help='Write JSON here instead of stdout.')
@scheme_options
@basis_options
@pass_state
@handle_errors(logger)
def stats_cmd(state, dwi, mask, ridge, out, bvals, bvecs, b0_threshold, radial_order, zeta, tau):
    """Noise sigma (pooled and per channel), SNR of b0 and DW channels, leverage summary."""
    params = state.resolve(
        'stats', radial_order=radial_order, zeta=zeta, tau=tau, ridge=ridge, b0_threshold=b0_threshold,
    )
    scheme = load_scheme(bvals, bvecs, params['b0_threshold'])
    scan = load_scan(dwi, scheme)
    mask_volume = load_mask(mask, scan)

    _, operator, fits = fit_scan(state, scan, scheme, mask_volume, params)
    noise = estimate_noise_sigma(fits, mask_volume)
    report = {
        'sigma': noise.to_dict(),
        'hat_diag': fit_report(operator, fits)['hat_diag'],
        'n_voxels': len(fits),
    }
    if noise.pooled > 0:
        snr = snr_report(scan, mask_volume, noise.pooled)
        per_channel = snr['per_channel']
        report['snr'] = {
            'per_channel': per_channel,
            'b0_mean': sum(per_channel[i] for i in scheme.b0_indices) / scheme.n_b0 if scheme.n_b0 else None,
            'dw_mean': sum(per_channel[i] for i in scheme.dw_indices) / scheme.n_dw,
        }
    else:
        logger.warning("Estimated noise sigma is zero; SNR is undefined")
        report['snr'] = None
    emit_json(report, out)
