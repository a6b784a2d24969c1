"""
Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

import logging
import sys

import click

from .config import RunConfig, get_config_manager, get_default_log_level
from .exceptions import ConfigError, LandmarkRetrievalError
from .pipeline import ENCODER_KINDS, cmd_eval, cmd_generate, cmd_train

logger = logging.getLogger("landmark_retrieval")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def configure_logging(config: RunConfig) -> None:
    level = config.logging.level.upper()
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if config.logging.file:
        handlers.append(logging.FileHandler(config.logging.file))
    logging.basicConfig(level=level, format=config.logging.format, handlers=handlers, force=True)


def run_options(func):
    """Options shared by every subcommand."""
    options = [
        click.option("--config", "config_name", default=None, help="Config name under config/ or a YAML path."),
        click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                     help="Dotted override, e.g. --set train.tau=0.05 (repeatable)."),
        click.option("--output-dir", default=None, help="Run directory."),
        click.option("--seed", type=int, default=None, help="Root seed."),
        click.option("--threads", type=int, default=None, help="Worker threads."),
        click.option("--dataset", "dataset_dir", default=None, help="Dataset directory."),
        click.option("--checkpoint", default=None, help="Encoder checkpoint."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_config(config_name, overrides, **flags) -> RunConfig:
    """Defaults < config file < --set overrides < dedicated flags."""
    config = get_config_manager().build_run_config(config_name, list(overrides), flags)
    configure_logging(config)
    return config


@click.group()
@click.version_option(package_name="landmark-retrieval")
def cli():
    """
    Learn patch embeddings by landmark retrieval on synthetic posed RGB-D
    scenes, and evaluate them on retrieval, segmentation and pose tasks.
    """
    logging.basicConfig(
        level=get_default_log_level(), format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )


@cli.command()
@run_options
def generate(config_name, overrides, **flags):
    """
    Generate the synthetic dataset.

    Example:
    landmark-retrieval generate --output-dir runs/data --seed 0
    """
    config = build_config(config_name, overrides, **flags)
    path = cmd_generate(config)
    click.echo(f"Dataset written: {path}")


@cli.command()
@run_options
@click.option("--resume", is_flag=True, help="Continue from <output-dir>/checkpoints/last.ckpt.")
def train(config_name, overrides, resume, **flags):
    """
    Train a patch encoder.

    Example:
    landmark-retrieval train --dataset runs/data --output-dir runs/train
    """
    config = build_config(config_name, overrides, **flags)
    path = cmd_train(config, resume=resume)
    click.echo(f"Training finished: {path}")


def _eval_command(name: str, which: str, summary: str):
    @run_options
    @click.option("--encoder", "encoder_kind", type=click.Choice(ENCODER_KINDS), default="trained",
                  help="Encoder to evaluate.")
    def command(config_name, overrides, encoder_kind, **flags):
        config = build_config(config_name, overrides, **flags)
        path = cmd_eval(config, which, encoder_kind)
        click.echo(f"Report written: {path}")

    command.__doc__ = summary
    return cli.command(name=name)(command)


_eval_command("eval-retrieval", "retrieval", "Vectorized smooth AP and exact AP on train and validation.")
_eval_command("eval-segment", "segment", "Linear-probe semantic and panoptic segmentation.")
_eval_command("eval-pose", "pose", "Relative pose on low-overlap validation pairs.")
_eval_command("coseg", "coseg", "Co-segmentation overlays for random query patches.")


def main(argv=None) -> int:
    """Console entry point; maps errors to exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except (click.UsageError, ConfigError) as e:
        logger.error(f"{e}")
        click.echo(f"Error: {e}", err=True)
        return EXIT_USAGE
    except click.Abort:
        click.echo("Aborted.", err=True)
        return EXIT_RUNTIME
    except (LandmarkRetrievalError, OSError, RuntimeError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        click.echo(f"Error: {e}", err=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
