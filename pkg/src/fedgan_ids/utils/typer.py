#
# Helpers for the `typer` package.
#
import sys
import traceback
from collections.abc import Iterator
from contextlib import contextmanager
from typing import Any, ClassVar

import typer
from typer.core import TyperCommand

from fedgan_ids.errors import CheckpointError, ConfigError, DatasetFormatError
from fedgan_ids.utils.logging import stderr_console

# Exit codes: usage and input errors versus failures while running.
EXIT_RUNTIME_ERROR = 1
EXIT_USAGE_ERROR = 2

INPUT_ERRORS = (ConfigError, DatasetFormatError, CheckpointError)


@contextmanager
def exit_on_input_errors() -> Iterator[None]:
    """Turn errors in user-supplied files into a message and exit code 2."""
    try:
        yield
    except INPUT_ERRORS as e:
        stderr_console().print(f"[bold red]Error:[/bold red] {e}", highlight=False)
        raise typer.Exit(code=EXIT_USAGE_ERROR) from e


def run_typer_app_as_main(app: typer.Typer, *args: Any, **kwargs: Any) -> Any | None:
    """Run a typer app as the main function.

    Catch any uncaught exceptions, print them to stderr and exit with code 1.
    """
    try:
        return app(*args, **kwargs)
    except typer.Exit as e:
        sys.exit(e.exit_code)
    except INPUT_ERRORS as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_USAGE_ERROR)
    except Exception:
        traceback.print_exc()
        sys.exit(EXIT_RUNTIME_ERROR)


def expand_variadic_options(args: list[str], names: frozenset[str]) -> list[str]:
    """Repeat a variadic option's flag before each of the values that follow it.

    `--inputs a b --impacts 1 1` becomes
    `--inputs a --inputs b --impacts 1 --impacts 1`. A token starting with `-`
    ends the run unless it reads as a number.
    """
    expanded: list[str] = []
    current: str | None = None
    for index, arg in enumerate(args):
        if arg == "--":
            return expanded + args[index:]
        if arg.startswith("-") and not _is_number(arg):
            current = arg if arg in names else None
        elif current is not None and expanded[-1] != current:
            expanded.append(current)
        expanded.append(arg)
    return expanded


def _is_number(arg: str) -> bool:
    try:
        float(arg)
    except ValueError:
        return False
    return True


class VariadicOptionCommand(TyperCommand):
    """A command whose `variadic_options` accept several values after one flag."""

    variadic_options: ClassVar[frozenset[str]] = frozenset()

    def parse_args(self, ctx: Any, args: list[str]) -> list[str]:
        return super().parse_args(
            ctx, expand_variadic_options(args, self.variadic_options)
        )
