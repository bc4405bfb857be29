"""CSV and JSON writers with fixed formatting, so reruns diff byte-for-byte."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from .experiment import PeakFit, SpectroscopyDataset
from .spectrum import GapMap
from .topology import PhaseDiagram


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def gap_map_rows(gap_map: GapMap):
    has_bands = gap_map.bands_low is not None
    for i, kx in enumerate(gap_map.kx_values):
        for j, ky in enumerate(gap_map.ky_values):
            value = None if (gap_map.mask is not None and gap_map.mask[i, j]) else gap_map.gap[i, j]
            row = [kx, ky, value]
            if has_bands:
                row += [gap_map.bands_low[i, j], gap_map.bands_high[i, j]]
            yield row


def write_gap_map(directory: Path, gap_map: GapMap, stem: str = "gapmap") -> list[Path]:
    header = ["kx", "ky", "gap"] + (["E_low", "E_high"] if gap_map.bands_low is not None else [])
    csv_path = Path(directory) / f"{stem}.csv"
    json_path = Path(directory) / f"{stem}.json"
    write_csv(csv_path, header, gap_map_rows(gap_map))
    write_json(json_path, gap_map.header())
    return [csv_path, json_path]


def write_phase_diagram(directory: Path, diagram: PhaseDiagram) -> list[Path]:
    directory = Path(directory)
    table = directory / "phase_diagram.csv"
    write_csv(
        table,
        [diagram.parameter, "node_count", "min_gap_mhz"],
        zip(diagram.lambda_values, diagram.node_counts, diagram.min_gaps),
    )
    report = directory / "phase_diagram.json"
    write_json(report, diagram.to_dict())
    traj = directory / "trajectories.csv"
    write_csv(traj, [diagram.parameter, "node_id", "kx", "ky", "charge"], diagram.trajectory_rows())
    return [table, report, traj]


def write_dataset(directory: Path, dataset: SpectroscopyDataset, fits: list[list[PeakFit]], save_traces: bool = False) -> list[Path]:
    """Dataset bundle: metadata (enough to regenerate every trace), per-cell fits, optional raw traces."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = directory / "metadata.json"
    write_json(meta, dict(dataset.metadata(), sha256_traces=dataset.digest()))
    fit_path = directory / "fits.csv"
    write_csv(
        fit_path,
        ["i", "j", "kx", "ky", "center", "fwhm", "amplitude", "baseline", "rms_residual", "converged"],
        (
            [i, j, dataset.kx_values[i], dataset.ky_values[j], p.center, p.fwhm, p.amplitude, p.baseline, p.rms_residual, p.converged]
            for i, row in enumerate(fits)
            for j, p in enumerate(row)
        ),
    )
    paths = [meta, fit_path]
    if save_traces:
        trace_path = directory / "traces.csv"

        def rows():
            f = dataset.freq_axis
            for i, kx in enumerate(dataset.kx_values):
                for j, ky in enumerate(dataset.ky_values):
                    for fv, a in zip(f, dataset.amplitudes[i, j]):
                        yield [i, j, kx, ky, fv, a]

        write_csv(trace_path, ["i", "j", "kx", "ky", "f", "amplitude"], rows())
        paths.append(trace_path)
    return paths
