import argparse
import inspect
import logging
import re
from typing import Any, Callable, Dict, List, Optional, Self, Sequence

from nusg.config import ConfigError
from nusg.errors import NusgError

logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


CAMEL_CASE_REGEX = re.compile(r"(?<!^)(?=[A-Z])")


def _to_kebab_case(text: str) -> str:
    return CAMEL_CASE_REGEX.sub("-", text).lower()


class UsageError(NusgError):
    """
    Bad command-line input caught after argument parsing.
    """

    pass


type Handler = Callable[..., Optional[int]]


class Argument(object):
    flags: Sequence[str]
    options: Dict[str, Any]

    def __init__(self, flags: Sequence[str], options: Dict[str, Any]):
        self.flags = flags
        self.options = options


class Command(object):
    """
    A subcommand: a module method plus the argparse arguments it takes.
    """

    name: str
    description: str
    callback: Handler
    arguments: List[Argument]
    binding: Optional[Any]

    def __init__(
        self,
        callback: Handler,
        *,
        name: str,
        description: str,
        arguments: List[Argument],
        binding: Optional[Any] = None,
    ):
        self.callback = callback
        self.name = name
        self.description = description
        self.arguments = arguments
        self.binding = binding

    def _copy_with(self, binding: Any) -> Self:
        return type(self)(
            self.callback,
            name=self.name,
            description=self.description,
            arguments=list(self.arguments),
            binding=binding,
        )

    def configure(self, parser: argparse.ArgumentParser) -> None:
        for argument in self.arguments:
            parser.add_argument(*argument.flags, **argument.options)

    def invoke(self, args: argparse.Namespace) -> int:
        if self.binding is None:
            raise TypeError(f"command {self.name} is not bound to a module")
        code = self.callback(self.binding, args)
        return EXIT_OK if code is None else code


def command(name: Optional[str] = None, description: Optional[str] = None) -> Callable[[Handler], Command]:
    """
    Turns a module method into a subcommand. The first docstring line is the
    description when none is given.
    """

    def decorator(callback: Handler) -> Command:
        doc = inspect.cleandoc(callback.__doc__ or "")
        return Command(
            callback,
            name=name or callback.__name__.replace("_", "-"),
            description=description or (doc.splitlines()[0] if doc else ""),
            # Decorators apply bottom-up, so the list is reversed
            arguments=list(reversed(getattr(callback, "__cli_arguments__", []))),
        )

    return decorator


def argument(*flags: str, **options: Any) -> Callable[[Handler], Handler]:
    """
    Adds an argparse argument to the command below it.
    """

    def decorator(callback: Handler) -> Handler:
        if isinstance(callback, Command):
            raise TypeError("@argument must sit below @command")
        arguments = getattr(callback, "__cli_arguments__", [])
        callback.__cli_arguments__ = arguments + [Argument(flags, options)]
        return callback

    return decorator


class ModuleMeta(type):
    """
    Metaclass for defining modules.
    """

    def __new__(cls, *args: Any, **kwargs: Any):
        name, bases, attrs = args

        try:
            module_name = kwargs.pop("name")
        except KeyError:
            module_name = _to_kebab_case(name.removesuffix("Module"))

        attrs["__module_name__"] = module_name

        module_commands = {}

        new_cls = super().__new__(cls, name, bases, attrs, **kwargs)
        for base in reversed(new_cls.__mro__):
            for elem, value in base.__dict__.items():
                if isinstance(value, staticmethod) and isinstance(value.__func__, Command):
                    raise TypeError(f"Command in method {base}.{elem!r} must not be staticmethod.")

                if isinstance(value, Command):
                    module_commands[elem] = value

        new_cls.__commands__ = list(module_commands.values())

        return new_cls


class Module(metaclass=ModuleMeta):
    """
    A group of related subcommands sharing whatever state the module was
    constructed with.
    """

    __commands__: List[Command]
    __module_name__: str

    def __new__(cls, *args: Any, **kwargs: Any) -> Self:
        self = super().__new__(cls)
        self.__commands__ = [c._copy_with(binding=self) for c in cls.__commands__]
        return self


class App(object):
    """
    Application.

    Collects the commands of every module into one argparse parser and maps
    the outcome of a command to an exit code.
    """

    prog: str
    description: str
    modules: List[Module]

    def __init__(self, prog: str, description: str = ""):
        self.prog = prog
        self.description = description
        self.modules = []

    def add_module(self, module: Module) -> None:
        self.modules.append(module)

    @property
    def commands(self) -> Dict[str, Command]:
        commands = {}
        for module in self.modules:
            for cmd in module.__commands__:
                if cmd.name in commands:
                    raise TypeError(f"command {cmd.name} registered twice")
                commands[cmd.name] = cmd
        return commands

    def parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog=self.prog, description=self.description)
        subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)
        for cmd in self.commands.values():
            sub = subparsers.add_parser(cmd.name, help=cmd.description, description=cmd.description)
            cmd.configure(sub)
            sub.set_defaults(__command__=cmd)
        return parser

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        try:
            args = self.parser().parse_args(argv)
        except SystemExit as e:
            # argparse exits 2 on bad usage and 0 after --help
            return e.code if isinstance(e.code, int) else EXIT_USAGE

        cmd: Command = args.__command__
        logger.debug(f"running {cmd.name}")

        try:
            return cmd.invoke(args)
        except ConfigError as e:
            logger.error(f"invalid config ({e.key}): {e}")
            return EXIT_USAGE
        except UsageError as e:
            logger.error(f"{cmd.name}: {e}")
            return EXIT_USAGE
        except (NusgError, OSError) as e:
            logger.error(f"{cmd.name} failed: {e}")
            return EXIT_FAILURE
