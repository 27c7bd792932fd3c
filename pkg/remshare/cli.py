"""
The remshare command line.

Subcommands are registered on a Dispatcher with add_command; each
one lives in its own module under remshare.commands. Every run
writes its outputs and a manifest.json into the output directory;
failures write error.json instead and map to exit codes:

    0   success
    1   configuration or model error
    2   numerical failure (step failure, floor violation, non-convergence)
"""

import argparse
import json
import logging
import os
import platform
import sys
from typing import Callable, Dict, List, Optional

import numpy
import scipy
import trio

import remshare
from remshare.commands import register_all
from remshare.config import RunConfig, parse_config
from remshare.errors import ConfigError, ConfigIssue, NumericalError, RemshareError
from remshare.persist import FORMATS, write_json

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


class Context:
    """What a subcommand gets to work with."""

    def __init__(
        self,
        subcommand: str,
        config: Optional[RunConfig],
        output_dir: str,
        fmt: str = "csv",
        args: Optional[argparse.Namespace] = None,
        logger: Optional[logging.Logger] = None,
    ):
        self.subcommand = subcommand
        self.config = config
        self.output_dir = output_dir
        self.fmt = fmt
        self.args = args or argparse.Namespace()
        self.logger = logger or logging.getLogger(__name__)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def require_config(self) -> RunConfig:
        if self.config is None:
            raise ConfigError([ConfigIssue(0, "", "{} needs --config".format(self.subcommand))])

        return self.config


def versions() -> Dict[str, str]:
    return {
        "remshare": remshare.__version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "trio": trio.__version__,
        "python": platform.python_version(),
    }


def manifest(subcommand: str, config: Optional[RunConfig]) -> dict:
    """Everything needed to re-run a command exactly."""

    return {
        "schema_version": config.schema_version if config else None,
        "seed": config.seed if config else None,
        "subcommand": subcommand,
        "config": config.to_text() if config else None,
        "versions": versions(),
    }


def read_config_source(path: str) -> RunConfig:
    """Reads a configuration text file, or the config embedded in a manifest.json.

    Raises:
        ConfigError: Unreadable file, manifest without config, or a bad config.
    """

    try:
        with open(path) as source:
            text = source.read()

    except OSError as err:
        raise ConfigError([ConfigIssue(0, "", "cannot read {}: {}".format(path, err))])

    if path.endswith(".json"):
        try:
            text = json.loads(text)["config"]

        except (ValueError, KeyError, TypeError):
            raise ConfigError([ConfigIssue(0, "", "{} is not a manifest with a config".format(path))])

        if not isinstance(text, str):
            raise ConfigError([ConfigIssue(0, "", "{} carries no config".format(path))])

    return parse_config(text)


def error_payload(err: Exception, code: int) -> dict:
    payload = {"error": type(err).__name__, "message": str(err), "exit_code": code}

    if isinstance(err, ConfigError):
        payload["issues"] = [issue.as_dict() for issue in err.issues]

    for attribute in ("time", "point", "diagnostics"):
        value = getattr(err, attribute, None)

        if value is not None:
            payload[attribute] = value

    return payload


class Dispatcher:
    """The table of subcommands, and the code mapping their failures to exit codes."""

    def __init__(self, logger: Optional[logging.Logger] = None):
        self.commands = {}  # type: Dict[str, Callable]
        self.help = {}  # type: Dict[str, str]
        self.arguments = {}  # type: Dict[str, Callable]
        self.logger = logger or logging.getLogger(__name__)

    def add_command(self, name: str, help_string: Optional[str] = None, arguments=None):
        """Adds a subcommand, by supplying a 'define' function. Use a closure
        (decorated with the 'define' argument) to actually define the command.

            >>> dispatcher = Dispatcher()
            >>> @dispatcher.add_command("hello", "Says hello.")
            ... def _hello(define):
            ...     @define
            ...     def hello(ctx):
            ...         return None
            >>> sorted(dispatcher.commands), dispatcher.help["hello"]
            (['hello'], 'Says hello.')

        Arguments:
            name {str} -- The subcommand name.

        Keyword Arguments:
            help_string {Optional[str]} -- Shown by --help. (default: {None})
            arguments {Optional[Callable]} -- Adds extra arguments to the subparser. (default: {None})
        """

        def _decorator(func):
            def define(definition):
                self.commands[name] = definition

                return definition

            if help_string:
                self.help[name] = help_string

            if arguments:
                self.arguments[name] = arguments

            return func(define)

        return _decorator

    def parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog="remshare",
            description="Weighted processor-sharing simulation and fluid-limit solvers.",
        )
        subparsers = parser.add_subparsers(dest="subcommand", metavar="subcommand")
        subparsers.required = True

        for name in sorted(self.commands):
            sub = subparsers.add_parser(name, help=self.help.get(name))
            sub.add_argument("--config", help="config text file, or a manifest.json to re-run")
            sub.add_argument("--output", default="output", help="output directory (default: output)")
            sub.add_argument("--seed", type=int, help="overrides the configured seed")
            sub.add_argument("--format", choices=FORMATS, default="csv", help="table format")
            sub.add_argument(
                "--log-level",
                default="WARNING",
                choices=("DEBUG", "INFO", "WARNING", "ERROR"),
                help="logging level (default: WARNING)",
            )

            if name in self.arguments:
                self.arguments[name](sub)

        return parser

    def _fail(self, ctx: Context, err: Exception, code: int) -> int:
        self.logger.error("%s failed: %s", ctx.subcommand, err)

        try:
            write_json(ctx.path("error.json"), error_payload(err, code))

        except OSError as io_err:
            self.logger.error("cannot write error.json: %s", io_err)

        print("{}: {}".format(type(err).__name__, err), file=sys.stderr)
        return code

    def dispatch(self, ctx: Context) -> int:
        """Runs one subcommand, then writes its manifest.

        Returns:
            int -- The exit code.
        """

        if ctx.subcommand not in self.commands:
            return self._fail(
                ctx,
                ConfigError([ConfigIssue(0, "", "unknown subcommand {!r}".format(ctx.subcommand))]),
                EXIT_INPUT,
            )

        try:
            os.makedirs(ctx.output_dir, exist_ok=True)
            self.commands[ctx.subcommand](ctx)

        except NumericalError as err:
            return self._fail(ctx, err, EXIT_NUMERICAL)

        except RemshareError as err:
            return self._fail(ctx, err, EXIT_INPUT)

        write_json(ctx.path("manifest.json"), manifest(ctx.subcommand, ctx.config))
        return EXIT_OK

    def main(self, argv: Optional[List[str]] = None) -> int:
        args = self.parser().parse_args(argv)
        logging.basicConfig(
            level=getattr(logging, args.log_level),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )

        ctx = Context(args.subcommand, None, args.output, args.format, args, self.logger)

        if args.config is not None:
            try:
                ctx.config = read_config_source(args.config)

            except ConfigError as err:
                os.makedirs(args.output, exist_ok=True)
                return self._fail(ctx, err, EXIT_INPUT)

            if args.seed is not None:
                if not 0 <= args.seed < 2 ** 64:
                    os.makedirs(args.output, exist_ok=True)
                    issue = ConfigIssue(0, "seed", "expected an unsigned 64-bit integer")
                    return self._fail(ctx, ConfigError([issue]), EXIT_INPUT)

                ctx.config = ctx.config.with_seed(args.seed)

        return self.dispatch(ctx)


def make_dispatcher(logger: Optional[logging.Logger] = None) -> Dispatcher:
    """A Dispatcher with every remshare subcommand registered."""

    dispatcher = Dispatcher(logger)
    register_all(dispatcher)
    return dispatcher


def main(argv: Optional[List[str]] = None) -> int:
    return make_dispatcher().main(argv)
