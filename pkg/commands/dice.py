"""
Подкоманда dice: сравнение двух многоканальных масок трактов
"""
import logging

import click

from commands.common import emit_json, pass_state
from dmri.metrics import LabelVolume, dice_report
from dmri.volumes import read_nifti
from utils.error_handler import handle_errors
from validators import IndexList, PositiveNumber

logger = logging.getLogger('dmriboot.cli.dice')


@click.command('dice')
@click.argument('segmentation', type=click.Path(exists=True, dir_okay=False))
@click.argument('reference', type=click.Path(exists=True, dir_okay=False))
@click.option('--labels', callback=IndexList(), help='Label channels to compare (default: all).')
@click.option('--worst', type=int, callback=PositiveNumber(allow_zero=True),
              help='How many lowest-scoring labels to list (default 3).')
@click.option('--out', type=click.Path(dir_okay=False), help='Write JSON here instead of stdout.')
@pass_state
@handle_errors(logger)
def dice_cmd(state, segmentation, reference, labels, worst, out):
    """Per-label and mean Dice between SEGMENTATION and REFERENCE."""
    params = state.resolve('dice', labels=labels, worst=worst)
    a = LabelVolume.from_volume(read_nifti(segmentation))
    b = LabelVolume.from_volume(read_nifti(reference))
    worst = params['worst'] if params['worst'] is not None else 3
    report = dice_report(a, b, params['labels'], worst=worst)
    emit_json(report, out)
