from __future__ import annotations

import json
import re
import shlex
from pathlib import Path

import numpy as np
from conftest import Workspace
from pytest import CaptureFixture, MonkeyPatch, fixture
from pytest_bdd import given, parsers, scenarios, then, when
from typeguard import typechecked

from heatgeo.cli import main
from heatgeo.io import read_table

scenarios("cli.feature")


# Commands write into the working directory, so every scenario gets its own.
@fixture(autouse=True)
def in_tmp_path(tmp_path: Path, monkeypatch: MonkeyPatch):
    monkeypatch.chdir(tmp_path)


def _run(arguments: str, workspace: Workspace, capsys: CaptureFixture) -> int:
    code = main(shlex.split(arguments))
    output = capsys.readouterr().out
    workspace.values["exit_code"] = code
    workspace.values["report"] = json.loads(output) if code == 0 else None
    return code


def _report(workspace: Workspace) -> dict:
    report = workspace.values.get("report")
    assert report is not None, f"no report, exit code {workspace.values.get('exit_code')}"
    return report


@given(parsers.parse('I have run "heatgeo {arguments}"'))
@typechecked
def given_run(arguments: str, workspace: Workspace, capsys: CaptureFixture):
    assert _run(arguments, workspace, capsys) == 0, f"heatgeo {arguments} failed"


@given(parsers.parse('the file "{name}" containing {content}'))
@typechecked
def given_file(name: str, content: str):
    Path(name).write_text(content)


@given(parsers.parse('the labels file "{name}" with the values {values}'))
@typechecked
def given_labels(name: str, values: str):
    labels = re.split(r",\s*|\s+and\s+", values)
    Path(name).write_text("\n".join(labels) + "\n")


@when(parsers.parse('I run "heatgeo {arguments}"'))
@typechecked
def when_run(arguments: str, workspace: Workspace, capsys: CaptureFixture):
    _run(arguments, workspace, capsys)


@then(parsers.parse("the exit code should be {code:d}"))
@typechecked
def should_exit(code: int, workspace: Workspace):
    assert workspace.values["exit_code"] == code


@then(parsers.parse('the file "{name}" should exist'))
@typechecked
def should_exist(name: str):
    assert Path(name).is_file(), f"missing {name}"


@then(parsers.parse('the file "{name}" should have {rows:d} data rows and {columns:d} columns'))
@typechecked
def should_have_shape(name: str, rows: int, columns: int):
    _, data = read_table(name)
    assert len(data) == rows
    assert all(len(cells) == columns for _, cells in data)


@then(parsers.parse('the file "{name}" should be {size:d} bytes long'))
@typechecked
def should_have_size(name: str, size: int):
    assert Path(name).stat().st_size == size


@then(parsers.parse('the files "{first}" and "{second}" should be identical'))
@typechecked
def should_be_identical(first: str, second: str):
    assert Path(first).read_bytes() == Path(second).read_bytes()


@then(parsers.parse("the report should list {count:d} files"))
@typechecked
def should_list_files(count: int, workspace: Workspace):
    files = _report(workspace)["files"]
    assert len(files) == count
    assert all(Path(f).is_file() for f in files)


@then(parsers.parse('the report should have "{key}" equal to {value:g}'))
@typechecked
def should_report(key: str, value: float, workspace: Workspace):
    assert abs(_report(workspace)[key] - value) <= 1e-9, f"{key} = {_report(workspace)[key]}"


@then(parsers.parse("the report should have the keys {keys}"))
@typechecked
def should_have_keys(keys: str, workspace: Workspace):
    report = _report(workspace)
    for key in re.findall(r'"([^"]+)"', keys):
        assert key in report, f"no {key} in {sorted(report)}"


@then("the reported diffusion time should be one of the reported grid times")
@typechecked
def should_pick_grid_time(workspace: Workspace):
    report = _report(workspace)
    selection = report["time_selection"]
    assert selection is not None
    assert report["t"] == selection["chosen"]
    assert report["t"] in selection["grid"]


@then(
    parsers.parse(
        "the reported diffusion time should be one of {count:d} log-spaced times from {start:g} to {stop:g}"
    )
)
@typechecked
def should_pick_log_time(count: int, start: float, stop: float, workspace: Workspace):
    t = _report(workspace)["t"]
    assert np.isclose(np.geomspace(start, stop, count), t, rtol=1e-12).any(), f"t = {t}"
