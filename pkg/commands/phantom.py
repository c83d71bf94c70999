"""
Подкоманда phantom: синтетический скан с известным сигналом
"""
import json
import logging

import click

from commands.common import basis_options, flag, output_dir, pass_state
from dmri.basis import shore_dictionary
from dmri.gradients import hcp_like_scheme, write_scheme
from dmri.phantom import (
    NOISE_MODELS,
    PhantomSpec,
    add_noise,
    embed_dw_channels,
    generate,
    generate_in_span,
    phantom_mask,
)
from dmri.volumes import write_nifti
from utils.error_handler import UsageError, handle_errors
from validators import IndexList, PositiveNumber

logger = logging.getLogger('dmriboot.cli.phantom')

DEFAULT_DIMS = (32, 32, 32)


def _dims(value):
    dims = tuple(int(d) for d in value)
    if len(dims) != 3:
        raise UsageError(f"dims must have 3 values, got {list(dims)}")
    return dims


@click.command('phantom')
@click.option('--out-dir', required=True, type=click.Path(file_okay=False), help='Output directory.')
@click.option('--dims', callback=IndexList(), help='Grid size "nx,ny,nz" (default 32,32,32).')
@click.option('--noise', type=click.Choice(NOISE_MODELS), help='Noise model (default none).')
@click.option('--sigma', type=float, callback=PositiveNumber(allow_zero=True), help='Noise std.')
@click.option('--s0', type=float, callback=PositiveNumber(), help='b0 intensity (default 100).')
@click.option('--seed', type=int, callback=PositiveNumber(allow_zero=True), help='Noise seed.')
@click.option('--in-span', is_flag=True, default=False,
              help='Emit signals in the span of the SHORE dictionary instead of multi-tensor ones.')
@click.option('--b0-threshold', type=float, callback=PositiveNumber(allow_zero=True))
@basis_options
@pass_state
@handle_errors(logger)
def phantom_cmd(state, out_dir, dims, noise, sigma, s0, seed, in_span, b0_threshold,
                radial_order, zeta, tau):
    """Synthetic HCP-like phantom: signals, ground truth, mask and scheme."""
    params = state.resolve(
        'phantom', dims=dims, noise=noise, sigma=sigma, s0=s0, seed=seed, in_span=flag(in_span),
        b0_threshold=b0_threshold, radial_order=radial_order, zeta=zeta, tau=tau,
    )
    dims = _dims(params['dims'] or DEFAULT_DIMS)
    noise = params['noise'] or 'none'
    sigma = float(params['sigma'] or 0.0)
    s0 = float(params['s0'] or 100.0)
    params.update(dims=list(dims), noise=noise, sigma=sigma, s0=s0, in_span=bool(params['in_span']))

    out = output_dir(out_dir)
    scheme = hcp_like_scheme(b0_threshold=params['b0_threshold'])

    with state.stage('phantom'):
        if params['in_span']:
            dictionary = shore_dictionary(scheme, params['radial_order'], params['zeta'], params['tau'])
            dw = generate_in_span(dictionary, dims, seed=params['seed'], coefficient_scale=s0)
            noise_free = embed_dw_channels(dw, scheme, b0_value=s0)
            signals = add_noise(noise_free, sigma, params['seed'], model=noise)
            mask = phantom_mask(dims)
            spec_payload = {'in_span': True, 'dims': list(dims), 's0': s0, 'noise': noise,
                            'sigma': sigma, 'seed': params['seed'], 'dictionary': dictionary.to_dict()}
        else:
            spec = PhantomSpec(dims=dims, s0=s0, noise=noise, sigma=sigma, seed=params['seed'])
            signals, noise_free, mask = generate(spec, scheme)
            spec_payload = spec.to_dict()

    with state.stage('write'):
        write_nifti(signals, out / 'signals.nii', dtype_on_disk='float64')
        write_nifti(noise_free, out / 'ground_truth.nii', dtype_on_disk='float64')
        write_nifti(mask.to_volume(), out / 'mask.nii', dtype_on_disk='uint8')
        write_scheme(scheme, out / 'scheme.bvals', out / 'scheme.bvecs')
        (out / 'phantom.json').write_text(json.dumps(spec_payload, indent=2), encoding='utf-8')

    manifest = state.manifest('phantom', params, seed=params['seed'])
    state.finish(manifest, out)
    logger.info(f"Phantom written to {out}")
