"""Command-line entry point: one subcommand per result family.

    ptbands spectrum     --config run.json --out out/   # band structure and gap map
    ptbands nodes        ...                            # crossings with Z2 charges
    ptbands symmetry     ...                            # P, T, PT verdicts
    ptbands scan         ...                            # phase diagram over a parameter
    ptbands spectroscopy ...                            # synthetic measurement and reconstruction

Exit codes: 0 ok, 1 configuration error, 2 numerical or consistency error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import GridSpec, RunConfig, parse_config
from .errors import ConfigError, PTBandsError
from .experiment import (
    compare_maps,
    deep_minima,
    fit_dataset,
    momentum_cell_distance,
    reconstruct_gap_map,
    synth_dataset,
)
from .io import sha256_file, write_dataset, write_gap_map, write_json, write_phase_diagram
from .spectrum import min_gap, sample_gap_map
from .symmetry import classify_symmetries
from .topology import annotate_nodes, find_nodes, lambda_scan

OUTPUT_ENV = "PTBANDS_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("ptbands")


def _run_spectrum(config: RunConfig, out: Path) -> list[Path]:
    gm = sample_gap_map(config.model, None, config.grid.nx, config.grid.ny, store_bands=True)
    return write_gap_map(out, gm)


def _nodes_report(config: RunConfig) -> dict:
    a = config.analysis
    nodes = find_nodes(config.model, None, a.seed_grid_n, a.node_tol)
    nodes = annotate_nodes(config.model, None, nodes, a.loop_radius)
    k, gap = min_gap(config.model, None, max(a.seed_grid_n, 16))
    return {
        "params": config.model.resolve(),
        "omega_mhz": config.model.omega,
        "node_count": len(nodes),
        "nodes": [n.to_dict() for n in nodes],
        "min_gap_mhz": gap,
        "min_gap_k": list(k),
    }


def _run_nodes(config: RunConfig, out: Path) -> list[Path]:
    path = out / "nodes.json"
    write_json(path, _nodes_report(config))
    return [path]


def _symmetry_report(config: RunConfig) -> dict:
    a = config.analysis
    reports = classify_symmetries(config.model, None, a.symmetry_grid_n, a.symmetry_tol)
    return {
        "params": config.model.resolve(),
        "g1_identically_zero": config.model.component_vanishes(0),
        "reports": [r.to_dict() for r in reports],
    }


def _run_symmetry(config: RunConfig, out: Path) -> list[Path]:
    path = out / "symmetry.json"
    write_json(path, _symmetry_report(config))
    return [path]


def _run_scan(config: RunConfig, out: Path) -> list[Path]:
    if config.scan is None:
        raise ConfigError("the scan subcommand needs a 'scan' section", "/scan")
    a = config.analysis
    diagram = lambda_scan(config.model, config.scan.values(), a.seed_grid_n, config.scan.parameter, radius=a.loop_radius)
    return write_phase_diagram(out, diagram)


def freq_axis_for(config: RunConfig) -> np.ndarray | None:
    """Configured probe axis, or None to let the dataset pick its default."""
    s = config.spectroscopy
    omega = config.model.omega
    if s.freq_start is None and s.freq_stop is None and s.freq_step is None:
        return None
    start = 0.0 if s.freq_start is None else s.freq_start
    step = omega / 1000.0 if s.freq_step is None else s.freq_step
    stop = 2.5 * omega if s.freq_stop is None else s.freq_stop
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _run_spectroscopy(config: RunConfig, out: Path) -> list[Path]:
    model = config.model
    nx, ny = config.grid.nx, config.grid.ny
    dataset = synth_dataset(model, None, nx, ny, freq_axis_for(config), config.spectroscopy.profile())
    fits = fit_dataset(dataset)
    rec = reconstruct_gap_map(dataset, fits)
    analytic = sample_gap_map(model, None, nx, ny)
    report = compare_maps(analytic, rec)
    nodes = find_nodes(model, None, config.analysis.seed_grid_n, config.analysis.node_tol)
    minima = deep_minima(rec)
    node_errors = [min((momentum_cell_distance(n.k, c, rec) for c in minima), default=None) for n in nodes]
    converged = float(np.mean([[p.converged for p in row] for row in fits]))

    paths = write_dataset(out / "dataset", dataset, fits, config.output.save_traces)
    paths += write_gap_map(out, rec, stem="gapmap_reconstructed")
    recon = out / "reconstruction.json"
    write_json(
        recon,
        dict(
            report.to_dict(),
            converged_fraction=converged,
            analytic_nodes=[list(n.k) for n in nodes],
            node_to_minimum_cells=node_errors,
            dataset_sha256=dataset.digest(),
        ),
    )
    return paths + [recon]


SUBCOMMANDS = {
    "spectrum": _run_spectrum,
    "nodes": _run_nodes,
    "symmetry": _run_symmetry,
    "scan": _run_scan,
    "spectroscopy": _run_spectroscopy,
}


def run_subcommand(name: str, config: RunConfig, out: Path) -> list[Path]:
    """Run one subcommand, write its files and a manifest into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = SUBCOMMANDS[name](config, out)
    manifest = out / "manifest.json"
    write_json(
        manifest,
        {
            "tool": "ptbands",
            "version": __version__,
            "subcommand": name,
            "config": config.to_dict(),
            "config_sha256": config.sha256(),
            "seeds": {"spectroscopy": config.spectroscopy.seed},
            "files": {str(p.relative_to(out)): sha256_file(p) for p in paths},
            "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        },
    )
    return paths + [manifest]


def _grid(text: str) -> GridSpec:
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NxM, got {text!r}") from None
    if nx < 2 or ny < 2:
        raise argparse.ArgumentTypeError("grid sizes must be at least 2")
    return GridSpec(nx, ny)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptbands", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    parser.add_argument("--out", type=Path, help=f"output directory (default: config, then ${OUTPUT_ENV})")
    parser.add_argument("--seed", type=int, help="override the spectroscopy noise seed")
    parser.add_argument("--grid", type=_grid, help="override the grid, e.g. 81x81")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would read as a numerical failure
        if exc.code:
            return EXIT_CONFIG
        raise
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        config = parse_config(text)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative", "--seed")
            config = config.replace(spectroscopy=replace(config.spectroscopy, seed=args.seed))
        if args.grid is not None:
            config = config.replace(grid=args.grid)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out or config.output.directory or os.environ.get(OUTPUT_ENV) or "ptbands-out"
    try:
        paths = run_subcommand(args.subcommand, config, Path(out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PTBandsError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
