"""
Командная строка dmriboot: сборка группы команд и отображение ошибок в коды выхода
"""
import logging
import sys

import click

import dmri
from commands.augment import augment_cmd
from commands.basis import basis_group
from commands.common import CliState
from commands.dice import dice_cmd
from commands.fit import fit_cmd
from commands.phantom import phantom_cmd
from commands.stats import stats_cmd
from commands.subsample import subsample_cmd
from config_env import config as config_registry, get_config, load_json_config
from utils.error_handler import DmriBootError, ErrorLogger, InternalError
from utils.logger import LOGGER_NAME, setup_logging

logger = logging.getLogger(LOGGER_NAME)

EXIT_OK = 0
EXIT_USAGE = 1


def _configure(config_class, log_dir):
    if log_dir is None:
        return config_class
    return type(config_class.__name__, (config_class,), {'LOG_DIR': log_dir, 'LOG_TO_FILE': True})


def create_cli():
    """Фабрика группы команд"""

    @click.group('dmriboot', context_settings={'help_option_names': ['-h', '--help']})
    @click.version_option(dmri.__version__, prog_name='dmriboot')
    @click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                  help='JSON config (flat, per-command sections, or a previous manifest.json).')
    @click.option('--env', type=click.Choice(sorted(config_registry)),
                  help='Configuration environment (default: DMRIBOOT_ENV or default).')
    @click.option('-v', '--verbose', count=True, help='More console logging (-vv for debug).')
    @click.option('-q', '--quiet', is_flag=True, default=False, help='Errors only on the console.')
    @click.option('--threads', type=click.IntRange(min=1), help='Worker threads (default: all CPUs).')
    @click.option('--log-dir', type=click.Path(file_okay=False), help='Also log to files in this directory.')
    @click.pass_context
    def cli(ctx, config_path, env, verbose, quiet, threads, log_dir):
        """Scaled residual bootstrap augmentation for diffusion MRI."""
        config_class = _configure(get_config(env), log_dir)
        level = None
        if quiet:
            level = 'ERROR'
        elif verbose >= 2:
            level = 'DEBUG'
        elif verbose == 1:
            level = 'INFO'
        setup_logging(config_class, level=level)

        ctx.obj = CliState(
            config=config_class,
            json_config=load_json_config(config_path),
            threads=threads if threads is not None else config_class.THREADS,
        )
        logger.debug(f"Environment config: {config_class.__name__}")

    # Регистрация команд
    cli.add_command(phantom_cmd)
    cli.add_command(basis_group)
    cli.add_command(fit_cmd)
    cli.add_command(augment_cmd)
    cli.add_command(subsample_cmd)
    cli.add_command(dice_cmd)
    cli.add_command(stats_cmd)

    return cli


def run(argv=None):
    """
    Выполнить команду и вернуть код выхода.

    0 успех; 1 ошибка использования; 2 ошибка формата входа;
    3 численное вырождение; 4 внутренняя ошибка.
    """
    cli = create_cli()
    error_logger = ErrorLogger(logger)
    if not logger.handlers:
        setup_logging(get_config())

    try:
        result = cli.main(args=argv, prog_name='dmriboot', standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        click.echo('Aborted!', err=True)
        return EXIT_USAGE
    except InternalError as e:
        # уже записана в лог декоратором handle_errors
        return e.exit_code
    except DmriBootError as e:
        error_logger.log_error(e)
        return e.exit_code
    except Exception as e:
        error = InternalError(f"internal error: {e}", details={'type': type(e).__name__})
        logger.error(f"{error.error_code}: {error.message}", exc_info=True)
        return error.exit_code

    # --help / --version возвращают код click, команды None
    return result if isinstance(result, int) else EXIT_OK


def main():
    """Точка входа приложения"""
    sys.exit(run())


if __name__ == '__main__':
    main()
