"""CSV traces and tables with a commented provenance header."""
from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import ValidationError
from .timeseries import METER, TRANSMISSION, TimeSeries

TIMESERIES_HEADER = "time_s,value"
UNIFORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Provenance:
    command: str = "none"
    config_sha256: str = "none"
    seed: int | None = None

    def lines(self) -> list[str]:
        return [
            f"# tool: cryocavity {__version__}",
            f"# command: {self.command}",
            f"# config_sha256: {self.config_sha256}",
            f"# seed: {'none' if self.seed is None else self.seed}",
        ]


def _write(path, header_lines: list[str], body: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(header_lines))
        fh.write("\n")
        fh.write(body)


def _format_columns(columns, fmts) -> str:
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack(columns), fmt=fmts, delimiter=",")
    return buf.getvalue()


def write_timeseries(trace: TimeSeries, path, provenance: Provenance = Provenance()) -> None:
    """Write ``time_s,value`` rows at full double precision."""
    unit = "meter" if trace.unit == METER else "transmission"
    header = provenance.lines() + [f"# unit: {unit}", f"# dt_s: {trace.dt_s!r}", TIMESERIES_HEADER]
    _write(path, header, _format_columns([trace.times, trace.values], ["%.17g", "%.17g"]))


def read_timeseries(path) -> TimeSeries:
    unit = None
    dt_declared = None
    header_line = None
    with open(path, encoding="utf-8") as fh:
        lineno = 0
        for raw in fh:
            lineno += 1
            line = raw.strip()
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                key, value = key.strip(), value.strip()
                if key == "unit":
                    if value not in (METER, TRANSMISSION):
                        raise ValidationError(f"{path}:{lineno}: unknown unit {value!r}", line=lineno)
                    unit = value
                elif key == "dt_s":
                    dt_declared = float(value)
                continue
            if not line:
                continue
            header_line = lineno
            if line.replace(" ", "") != TIMESERIES_HEADER:
                raise ValidationError(
                    f"{path}:{lineno}: expected header {TIMESERIES_HEADER!r}, got {line!r}", line=lineno
                )
            break
    if header_line is None:
        raise ValidationError(f"{path}: no {TIMESERIES_HEADER!r} header found")
    if unit is None:
        raise ValidationError(f"{path}: missing '# unit: meter|transmission' line", line=header_line)

    try:
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=header_line, ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed data row: {exc}") from None
    if data.shape[1] != 2:
        raise ValidationError(f"{path}: expected 2 columns, found {data.shape[1]}")
    if data.shape[0] < 2:
        raise ValidationError(f"{path}: need at least 2 samples")
    t, v = data[:, 0], data[:, 1]
    steps = np.diff(t)
    dt = dt_declared if dt_declared is not None else (t[-1] - t[0]) / (t.size - 1)
    if not dt > 0:
        raise ValidationError(f"{path}: time must increase")
    bad = np.nonzero(np.abs(steps - dt) > UNIFORM_TOLERANCE * dt)[0]
    if bad.size:
        row = int(bad[0]) + 1  # 0-based data row index of the offending sample
        raise ValidationError(
            f"{path}:{header_line + 1 + row}: non-uniform sampling at data row {row + 1} "
            f"(step {steps[bad[0]]!r} s vs {dt!r} s)",
            line=header_line + 1 + row,
        )
    return TimeSeries(float(dt), v, unit, float(t[0]))


def write_table(path, columns: dict[str, np.ndarray], provenance: Provenance = Provenance(), fmts=None) -> None:
    names = list(columns)
    fmts = fmts or ["%.17g"] * len(names)
    header = provenance.lines() + [",".join(names)]
    _write(path, header, _format_columns([np.asarray(columns[n]) for n in names], fmts))


def read_table(path) -> dict[str, np.ndarray]:
    """Read a comma-separated table with a header row; non-numeric columns stay strings."""
    with open(path, encoding="utf-8") as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ValidationError(f"{path}: empty table")
    names = [n.strip() for n in rows[0].split(",")]
    cols: dict[str, list[str]] = {n: [] for n in names}
    for i, row in enumerate(rows[1:], start=2):
        cells = [c.strip() for c in row.split(",")]
        if len(cells) != len(names):
            raise ValidationError(f"{path}: row {i} has {len(cells)} fields, expected {len(names)}", line=i)
        for n, c in zip(names, cells):
            cols[n].append(c)
    out = {}
    for n, values in cols.items():
        try:
            out[n] = np.array([float(x) for x in values])
        except ValueError:
            out[n] = np.array(values, dtype=object)
    return out


def write_metrics(path, metrics: dict, provenance: Provenance = Provenance(), extra_header: list[str] = ()) -> None:
    lines = []
    for key, value in metrics.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    header = provenance.lines() + [f"# {ln}" if ln else "#" for ln in extra_header]
    _write(path, header, "\n".join(lines) + "\n")


def read_metrics(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
