import argparse
import logging
from pathlib import Path

from nusg.config import RunConfig, load as load_config
from nusg.train import trace
from nusg.train import train as run_training
from cli.app import Module, UsageError, argument, command

logger = logging.getLogger(__name__)


def _load(path: str) -> RunConfig:
    if not Path(path).is_file():
        raise UsageError(f"config file {path} does not exist")
    return load_config(path)


class TrainModule(Module):
    @command(name="train")
    @argument("--config", default="config.toml", help="run configuration (TOML)")
    @argument("--no-progress", action="store_true", help="hide the progress bar")
    def train(self, args: argparse.Namespace) -> None:
        """
        Trains a model from a run configuration.
        """

        config = _load(args.config)
        result = run_training(config, progress=not args.no_progress)

        last = result.records[-1]
        print(f"{config.arch.value}: {len(result.records)} steps, final loss {last.loss:.6f}")
        print(f"checkpoint {result.checkpoint}")
        print(f"log {result.log}")

    @command(name="schedule")
    @argument("--config", default="config.toml", help="run configuration (TOML)")
    def schedule(self, args: argparse.Namespace) -> None:
        """
        Prints the learning rate of every step of the configured run.
        """

        config = _load(args.config)
        print("step,lr")
        for step, lr in trace(config.build_schedule()):
            print(f"{step},{lr:.8g}")
