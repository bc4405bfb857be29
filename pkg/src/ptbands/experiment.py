"""Synthetic transmon spectroscopy of the simulated bands.

Each momentum is realised by a drive setting (Rabi rates along x and y and a
detuning along z).  The measured quantity is an absorption trace whose
resonance sits at the band splitting, broadened to a Lorentzian of FWHM
1/(pi T2*).  Peaks are fitted back and assembled into a gap map.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import PTBandsError
from .model import BlochModel, Momentum, periodic_delta
from .spectrum import GapMap, bz_grid, grid_local_minima


class UnusableDatasetError(PTBandsError, RuntimeError):
    pass


@dataclass(frozen=True)
class DriveParams:
    omega1: float
    omega2: float
    omega3: float
    carrier_detuning: float
    amplitude: float
    phase: float

    @property
    def splitting(self) -> float:
        return math.sqrt(self.omega1**2 + self.omega2**2 + self.omega3**2)


def drive_from_vector(g, omega: float) -> DriveParams:
    o1, o2, o3 = (omega * float(x) for x in g)
    return DriveParams(o1, o2, o3, o3, math.hypot(o1, o2), math.atan2(o2, o1))


def k_to_drive(k, lambda_: float = 0.0, eta: float = 0.0, epsilon: float = 0.0, omega: float = 10.0) -> DriveParams:
    """Drive rates (MHz) realising the lattice model at ``k``: Omega_i = omega * g_i(k)."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    kx, ky = k
    return drive_from_vector((epsilon, math.sin(kx) + eta, lambda_ + math.cos(ky)), omega)


def model_drive(model: BlochModel, k, params=None) -> DriveParams:
    return drive_from_vector(model.bloch_vector(float(k[0]), float(k[1]), params), model.omega)


@dataclass(frozen=True)
class InstrumentProfile:
    omega21_over_2pi: float = 6.8310  # GHz
    omega10_over_2pi: float = 7.17155  # GHz
    t1: float = 15.0  # us
    t2_star: float = 4.3  # us
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.t1, self.t2_star, self.omega10_over_2pi, self.omega21_over_2pi) <= 0:
            raise ValueError("instrument times and frequencies must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def fwhm(self) -> float:
        """Homogeneous linewidth in MHz (times are in microseconds)."""
        return 1.0 / (math.pi * self.t2_star)

    def to_dict(self) -> dict:
        return asdict(self)


def default_freq_axis(omega: float = 10.0, max_splitting: float = 0.0) -> np.ndarray:
    """0 to 2.5 omega in steps of omega / 1000, extended with 5% headroom if ``max_splitting`` needs it."""
    step = omega / 1000.0
    n = max(2501, int(np.ceil(1.05 * max_splitting / step)) + 1)
    return np.arange(n) * step


def lorentzian(f, center: float, fwhm: float):
    x = (np.asarray(f, dtype=float) - center) / (0.5 * fwhm)
    return 1.0 / (1.0 + x * x)


@dataclass
class SpectrumTrace:
    k: Momentum
    freq_axis: np.ndarray
    amplitude: np.ndarray


def _noise(profile: InstrumentProfile, index: tuple[int, int], size: int) -> np.ndarray:
    if profile.noise_sigma == 0:
        return np.zeros(size)
    rng = np.random.default_rng([profile.seed, index[0], index[1]])
    return rng.normal(0.0, profile.noise_sigma, size)


def synth_trace(
    model: BlochModel,
    params,
    k,
    freq_axis,
    profile: InstrumentProfile,
    index: tuple[int, int] = (0, 0),
) -> SpectrumTrace:
    """Absorption trace at ``k``; noise comes from a stream keyed by (seed, index)."""
    f = np.asarray(freq_axis, dtype=float)
    center = model.omega * float(np.linalg.norm(model.bloch_vector(float(k[0]), float(k[1]), params)))
    if not f[0] <= center <= f[-1]:
        raise ValueError(f"resonance at {center:.6g} MHz lies outside the frequency axis [{f[0]}, {f[-1]}]")
    amp = lorentzian(f, center, profile.fwhm) + _noise(profile, index, f.size)
    return SpectrumTrace(Momentum(float(k[0]), float(k[1])), f, amp)


@dataclass
class SpectroscopyDataset:
    """Traces on the spectrum-module grid; ``amplitudes[i, j]`` is the trace at (kx[i], ky[j])."""

    kx_values: np.ndarray
    ky_values: np.ndarray
    freq_axis: np.ndarray
    amplitudes: np.ndarray
    profile: InstrumentProfile
    model: BlochModel
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.kx_values) * len(self.ky_values)

    def trace(self, i: int, j: int) -> SpectrumTrace:
        return SpectrumTrace(Momentum(float(self.kx_values[i]), float(self.ky_values[j])), self.freq_axis, self.amplitudes[i, j])

    @property
    def traces(self):
        for i in range(len(self.kx_values)):
            for j in range(len(self.ky_values)):
                yield self.trace(i, j)

    def metadata(self) -> dict:
        f = self.freq_axis
        return {
            "nx": len(self.kx_values),
            "ny": len(self.ky_values),
            "freq_start_mhz": float(f[0]),
            "freq_step_mhz": float(f[1] - f[0]) if f.size > 1 else 0.0,
            "freq_count": int(f.size),
            "profile": self.profile.to_dict(),
            "fwhm_mhz": self.profile.fwhm,
            "model": self.model.to_dict(),
            "params": dict(self.params),
        }

    def digest(self) -> str:
        """SHA-256 over the metadata and the raw float64 trace bytes."""
        h = hashlib.sha256()
        h.update(json.dumps(self.metadata(), sort_keys=True).encode())
        h.update(np.ascontiguousarray(self.kx_values).tobytes())
        h.update(np.ascontiguousarray(self.ky_values).tobytes())
        h.update(np.ascontiguousarray(self.freq_axis).tobytes())
        h.update(np.ascontiguousarray(self.amplitudes, dtype="<f8").tobytes())
        return h.hexdigest()


def synth_dataset(
    model: BlochModel,
    params=None,
    nx: int = 81,
    ny: int = 81,
    freq_axis=None,
    profile: InstrumentProfile | None = None,
) -> SpectroscopyDataset:
    profile = profile or InstrumentProfile()
    kx, ky = bz_grid(nx, ny)
    if freq_axis is None:
        KX, KY = np.meshgrid(kx, ky, indexing="ij")
        top = model.omega * float(np.linalg.norm(model.bloch_vector(KX, KY, params), axis=-1).max())
        f = default_freq_axis(model.omega, top)
    else:
        f = np.asarray(freq_axis, dtype=float)
    amps = np.empty((nx, ny, f.size))
    for i, x in enumerate(kx):
        for j, y in enumerate(ky):
            amps[i, j] = synth_trace(model, params, (x, y), f, profile, index=(i, j)).amplitude
    return SpectroscopyDataset(kx, ky, f, amps, profile, model, model.resolve(params))


@dataclass(frozen=True)
class PeakFit:
    center: float
    fwhm: float
    amplitude: float
    baseline: float
    rms_residual: float
    converged: bool


def _peak_model(p, f):
    center, fwhm, amp, base = p
    x = (f - center) / (0.5 * fwhm)
    return base + amp / (1.0 + x * x)


def _peak_jac(p, f):
    center, fwhm, amp, base = p
    half = 0.5 * fwhm
    x = (f - center) / half
    d = 1.0 / (1.0 + x * x)
    d2 = d * d
    jac = np.empty((f.size, 4))
    jac[:, 0] = amp * d2 * 2.0 * x / half
    jac[:, 1] = 2.0 * amp * d2 * x * x / fwhm
    jac[:, 2] = d
    jac[:, 3] = 1.0
    return jac


def fit_peak(trace: SpectrumTrace, fwhm_guess: float | None = None, window: float = 25.0) -> PeakFit:
    """Lorentzian-plus-baseline least-squares fit around the brightest bin.

    Only samples within ``window`` initial linewidths of the brightest bin are
    used.  ``converged`` additionally requires a resolvable width and a peak
    well above the fit residual, so featureless traces come back unconverged.
    """
    f = np.asarray(trace.freq_axis, dtype=float)
    y = np.asarray(trace.amplitude, dtype=float)
    if f.size < 16:
        raise ValueError("fit_peak needs at least 16 frequency samples")
    span = float(f[-1] - f[0])
    step = span / (f.size - 1)
    w0 = fwhm_guess if fwhm_guess else span / 10.0
    top = int(np.argmax(y))

    half_width = max(window * w0, 8 * step)
    sel = np.abs(f - f[top]) <= half_width
    if sel.sum() < 16:
        lo = max(0, min(top - 8, f.size - 16))
        sel = np.zeros(f.size, dtype=bool)
        sel[lo : lo + 16] = True
    fs, ys = f[sel], y[sel]

    base0 = float(np.median(ys))
    p0 = np.array([f[top], w0, float(y[top]) - base0, base0])
    res = least_squares(
        lambda p: _peak_model(p, fs) - ys,
        p0,
        jac=lambda p: _peak_jac(p, fs),
        method="lm",
        xtol=1e-8,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=200,
    )
    center, fwhm, amp, base = (float(v) for v in res.x)
    fwhm = abs(fwhm)
    rms = float(np.sqrt(np.mean(res.fun**2)))
    converged = bool(
        res.success
        and np.all(np.isfinite(res.x))
        # a node sits at zero detuning, where the fitted centre can land just below the axis
        and f[0] - fwhm <= center <= f[-1] + fwhm
        and 0.5 * step < fwhm < span
        and amp > 5.0 * rms
        and amp > 0
    )
    return PeakFit(center, fwhm, amp, base, rms, converged)


def fit_dataset(dataset: SpectroscopyDataset) -> list[list[PeakFit]]:
    guess = dataset.profile.fwhm
    nx, ny = len(dataset.kx_values), len(dataset.ky_values)
    return [[fit_peak(dataset.trace(i, j), guess) for j in range(ny)] for i in range(nx)]


def reconstruct_gap_map(dataset: SpectroscopyDataset, fits: list[list[PeakFit]] | None = None, max_failed: float = 0.10) -> GapMap:
    """Gap map from fitted resonance centres; unconverged cells are NaN and masked.

    The splitting is read as ``|centre|`` so that a fit straddling zero
    detuning at a node does not report a negative gap.
    """
    fits = fits if fits is not None else fit_dataset(dataset)
    centers = np.array([[p.center for p in row] for row in fits])
    ok = np.array([[p.converged for p in row] for row in fits])
    failed = 1.0 - ok.mean()
    if failed > max_failed:
        raise UnusableDatasetError(f"{failed:.1%} of peak fits failed (limit {max_failed:.0%})")
    gap = np.where(ok, np.abs(centers), np.nan)
    return GapMap(
        dataset.kx_values.copy(),
        dataset.ky_values.copy(),
        gap,
        params_used=dict(dataset.params),
        omega=dataset.model.omega,
        mask=~ok,
    )


@dataclass
class ErrorReport:
    rms: float
    max_abs: float
    compared_cells: int
    node_position_errors: list[float]
    analytic_minima: list[tuple[int, int]]
    reconstructed_minima: list[tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "rms_mhz": self.rms,
            "max_abs_mhz": self.max_abs,
            "compared_cells": self.compared_cells,
            "node_position_errors_cells": list(self.node_position_errors),
            "analytic_minima": [list(c) for c in self.analytic_minima],
            "reconstructed_minima": [list(c) for c in self.reconstructed_minima],
        }


def deep_minima(gap_map: GapMap, fraction: float = 0.25) -> list[tuple[int, int]]:
    """Local minima lying below ``fraction`` of the map's median gap."""
    values = np.where(gap_map.valid(), gap_map.gap, np.inf)
    finite = values[np.isfinite(values)]
    return grid_local_minima(values, fraction * float(np.median(finite)))


def cell_distance(a, b, shape) -> float:
    """Chebyshev distance between grid cells on the periodic grid."""
    d = []
    for x, y, n in zip(a, b, shape):
        diff = abs(x - y) % n
        d.append(min(diff, n - diff))
    return float(max(d))


def momentum_cell_distance(k, cell, gap_map: GapMap) -> float:
    """Periodic distance from momentum ``k`` to grid cell ``cell``, in grid spacings (Chebyshev)."""
    i, j = cell
    dx, dy = periodic_delta(k, (gap_map.kx_values[i], gap_map.ky_values[j]))
    return float(max(abs(dx) * gap_map.nx, abs(dy) * gap_map.ny) / (2.0 * np.pi))


def compare_maps(analytic: GapMap, reconstructed: GapMap) -> ErrorReport:
    if analytic.shape != reconstructed.shape or not (
        np.allclose(analytic.kx_values, reconstructed.kx_values) and np.allclose(analytic.ky_values, reconstructed.ky_values)
    ):
        raise ValueError("gap maps are on different grids")
    valid = analytic.valid() & reconstructed.valid()
    diff = (reconstructed.gap - analytic.gap)[valid]
    rms = float(np.sqrt(np.mean(diff**2))) if diff.size else float("nan")
    max_abs = float(np.max(np.abs(diff))) if diff.size else float("nan")

    a_min = deep_minima(analytic)
    r_min = deep_minima(reconstructed)
    errors = []
    for cell in a_min:
        if r_min:
            errors.append(min(cell_distance(cell, other, analytic.shape) for other in r_min))
        else:
            errors.append(float("inf"))
    return ErrorReport(rms, max_abs, int(valid.sum()), errors, a_min, r_min)
