import logging
import os
import re
import shlex
import unittest
from pathlib import Path
from typing import List, Optional, Tuple

from click.testing import CliRunner
from parameterized import parameterized

from ..cli import main

SCENARIOS: List[Tuple[str, Path]] = sorted(
    # parameterized turns the first item into the test name, so it has to be
    # an identifier; subTest below prints the real path.
    (p.with_suffix("").name, p)
    for p in Path(__file__).parent.joinpath("scenarios").glob("*.txt")
)

LOG_LINE_TIMESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2},\d{3} ", re.M)
LOG_LINE_NUMERIC_LINE_RE = re.compile(r"^([A-Z]+\s+[a-z_.]+:)\d+(?= )", re.M)


def load_scenario(path: Path) -> Tuple[Tuple[str, ...], int, str]:
    """
    A scenario is optional `#` comments, one `$ ttvsr ...` line, an
    `exit N` line, then the expected output.
    """
    command: Optional[Tuple[str, ...]] = None
    exit_code = 0
    output: str = ""
    state = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            if state == 0 and line.startswith("#"):
                pass
            elif state == 0 and line.startswith("$"):
                parts = shlex.split(line[1:])
                assert parts[0] == "ttvsr"
                command = tuple(parts[1:])
                state = 1
            elif state == 1 and line.startswith("exit "):
                exit_code = int(line.split()[1])
                state = 2
            elif state == 2:
                output += line

    assert state == 2
    assert command is not None
    return (command, exit_code, output)


def save_scenario(path: Path, exit_code: int, new_output: str) -> None:
    buf = ""
    with open(path, encoding="utf-8") as f:
        for line in f:
            buf += line
            if line.startswith("$"):
                break
    if not buf.endswith("\n"):
        buf += "\n"
    path.write_text(buf + f"exit {exit_code}\n" + new_output, encoding="utf-8")


class CliScenariosTest(unittest.TestCase):
    maxDiff = None

    @parameterized.expand(SCENARIOS)  # type:ignore[misc]
    def test_scenario(self, _unused_name: str, path: Path) -> None:
        with self.subTest(path):
            command, exit_code, output = load_scenario(path)

            runner = CliRunner()
            with runner.isolated_filesystem():
                del logging.root.handlers[:]
                result = runner.invoke(main, command, catch_exceptions=False)

            cleaned_output = LOG_LINE_TIMESTAMP_RE.sub("", result.output)
            cleaned_output = LOG_LINE_NUMERIC_LINE_RE.sub(
                lambda m: (m.group(1) + "<n>"), cleaned_output
            )

            if os.getenv("UPDATE_SCENARIOS"):
                save_scenario(path, result.exit_code, cleaned_output)
            else:
                self.assertEqual(output, cleaned_output)
                self.assertEqual(exit_code, result.exit_code)
