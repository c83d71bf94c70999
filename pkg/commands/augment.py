"""
Подкоманда augment: масштабированный остаточный бутстрап скана
"""
import logging
import shutil
from pathlib import Path

import click

from commands.common import (
    basis_options,
    fit_options,
    fit_scan,
    flag,
    load_mask,
    load_scan,
    load_scheme,
    output_dir,
    pass_state,
    scale_tag,
    scheme_options,
)
from dmri.bootstrap import BootstrapPlan, bootstrap_scan, estimate_noise_sigma
from dmri.gradients import PROTOCOL_PRESETS, protocol_preset, subsample, write_scheme
from dmri.volumes import gather_channels, write_nifti
from utils.error_handler import UsageError, handle_errors
from validators import PositiveNumber, ScaleList

logger = logging.getLogger('dmriboot.cli.augment')


def _output_names(plan):
    """Имена boot_r{r}_rep{k}.nii; разные масштабы с одинаковым тегом отклоняются."""
    names = [f'boot_r{scale_tag(r)}_rep{replicate}.nii' for _, r, replicate in plan.outputs()]
    if len(set(names)) != len(names):
        raise UsageError(
            "scale factors map to the same output file name",
            details={'scales': list(plan.scales), 'names': names}
        )
    return names


def _copy_scheme_file(source, target):
    """Копия исходного файла схемы байт в байт."""
    try:
        shutil.copyfile(source, target)
    except shutil.SameFileError:
        pass


def _write_subsampled(out, preset, scan, scheme, boots, dtype, tolerance):
    """Исходный и бутстрап-сканы, прореженные по варианту протокола."""
    shell_spec, b0_count = protocol_preset(preset)
    reduced, index_map = subsample(scheme, shell_spec, b0_count, tolerance=tolerance)
    write_nifti(gather_channels(scan, index_map), out / f'orig_{preset}.nii', dtype_on_disk=dtype)
    for boot in boots:
        name = f'boot_r{scale_tag(boot.scale)}_rep{boot.replicate}_{preset}.nii'
        write_nifti(gather_channels(boot.volume, index_map), out / name, dtype_on_disk=dtype)
    write_scheme(reduced, out / f'scheme_{preset}.bvals', out / f'scheme_{preset}.bvecs')
    return [int(i) for i in index_map]


@click.command('augment')
@click.option('--dwi', required=True, type=click.Path(exists=True, dir_okay=False), help='dMRI scan (NIfTI-1).')
@click.option('--mask', type=click.Path(exists=True, dir_okay=False), help='Mask NIfTI (nonzero = inside).')
@click.option('--out-dir', required=True, type=click.Path(file_okay=False), help='Output directory.')
@click.option('--scales', callback=ScaleList(), help='Scaling factors r, e.g. "2,3,4".')
@click.option('--replicates', type=int, callback=PositiveNumber(), help='Replicates per scale (default 1).')
@click.option('--seed', type=int, callback=PositiveNumber(allow_zero=True), help='64-bit seed.')
@click.option('--clip-at-zero', is_flag=True, default=False, help='Clip negative bootstrap intensities.')
@click.option('--couple-scales', is_flag=True, default=False,
              help='Reuse identical residual draws for every scale.')
@click.option('--preset', type=click.Choice(sorted(PROTOCOL_PRESETS)),
              help='Also write outputs subsampled to this protocol variant.')
@click.option('--output-dtype', type=click.Choice(['float32', 'float64']), help='On-disk dtype of outputs.')
@scheme_options
@basis_options
@fit_options
@pass_state
@handle_errors(logger)
def augment_cmd(state, dwi, mask, out_dir, scales, replicates, seed, clip_at_zero, couple_scales,
                preset, output_dtype, bvals, bvecs, b0_threshold, radial_order, zeta, tau,
                ridge, center_residuals):
    """Generate boot_r{r}_rep{k}.nii for every scale and replicate."""
    params = state.resolve(
        'augment', scales=scales, replicates=replicates, seed=seed, radial_order=radial_order,
        zeta=zeta, tau=tau, ridge=ridge, center_residuals=flag(center_residuals),
        clip_at_zero=flag(clip_at_zero), couple_scales=flag(couple_scales),
        b0_threshold=b0_threshold, output_dtype=output_dtype, preset=preset,
    )
    plan = BootstrapPlan(
        scales=tuple(params['scales']),
        seed=params['seed'],
        replicates_per_scale=params['replicates'],
        couple_scales=bool(params['couple_scales']),
    )
    names = _output_names(plan)

    scheme = load_scheme(bvals, bvecs, params['b0_threshold'])
    scheme.require_bootstrap_ready()
    scan = load_scan(dwi, scheme)
    mask_volume = load_mask(mask, scan)

    _, operator, fits = fit_scan(state, scan, scheme, mask_volume, params)
    noise = estimate_noise_sigma(fits, mask_volume) if mask_volume.count else None

    with state.stage('bootstrap'):
        boots = bootstrap_scan(
            scan, scheme, fits, plan, mask_volume,
            clip_at_zero=bool(params['clip_at_zero']),
            threads=state.threads,
            chunk_size=state.chunk_size,
        )

    out = output_dir(out_dir)
    dtype = params['output_dtype']
    outputs = []
    with state.stage('write'):
        for boot, name in zip(boots, names):
            write_nifti(boot.volume, out / name, dtype_on_disk=dtype)
            outputs.append(name)
        _copy_scheme_file(Path(bvals), out / 'scheme.bvals')
        _copy_scheme_file(Path(bvecs), out / 'scheme.bvecs')
        index_map = None
        if params['preset']:
            index_map = _write_subsampled(out, params['preset'], scan, scheme, boots, dtype,
                                          state.config.SHELL_TOLERANCE)

    manifest = state.manifest('augment', params, seed=plan.seed)
    manifest.add_input('dwi', dwi)
    manifest.add_input('bvals', bvals)
    manifest.add_input('bvecs', bvecs)
    manifest.add_input('mask', mask)
    manifest.report = {
        'plan': plan.to_dict(),
        'outputs': outputs,
        'sigma': noise.to_dict() if noise else None,
        'hat_diag_max': float(operator.hat_diag.max()),
    }
    if index_map is not None:
        manifest.report['preset_index_map'] = index_map
    state.finish(manifest, out)
    logger.info(f"Wrote {len(outputs)} augmented scan(s) to {out}")
