"""Magnetic-noise models and Ramsey coherence benchmarks.

Field noise is quasi-static within one shot: a Gaussian offset redrawn every
shot, plus optional power-line harmonics with random phase, plus a residual
dephasing rate that acts on every qubit regardless of its field sensitivity
(the stand-in for second-order shifts, drive phase noise and leakage).  For
quasi-static Gaussian noise the Ramsey envelope is Gaussian,
exp(-(t/T2)^2) with T2 = sqrt(2) / (2 pi s sigma_B), which is what the
calibration helpers invert.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .dynamics import FitFailureError
from .rng import substream

__all__ = [
    "NoiseModel",
    "RamseyScan",
    "T2Fit",
    "BenchmarkRow",
    "ramsey_scan",
    "fit_t2star",
    "calibrate_noise",
    "calibrate_residual_rate",
    "benchmark_suite",
]

S_DOUBLET_SENSITIVITY = 2.8  # kHz/mG
D_EDGE_PAIR_SENSITIVITY = 2.24  # kHz/mG, edge-to-middle quartet pair
SYNTH_QUBIT_SENSITIVITY = 0.0


@dataclass(frozen=True)
class NoiseModel:
    """Quasi-static Gaussian field noise plus harmonics plus residual dephasing.

    sigma_b_mg is sampled once per shot; each harmonic (frequency Hz,
    amplitude mG) gets an independent uniform phase per shot; the residual
    rate multiplies the contrast by exp(-rate * t) for every qubit.
    """

    sigma_b_mg: float = 0.0
    harmonics: tuple[tuple[float, float], ...] = ()
    residual_rate_per_s: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma_b_mg < 0 or self.residual_rate_per_s < 0:
            raise ValueError("noise amplitudes and rates must be nonnegative")
        if any(f <= 0 or a < 0 for f, a in self.harmonics):
            raise ValueError("harmonics need positive frequency and nonnegative amplitude")

    @classmethod
    def with_power_line(
        cls,
        sigma_b_mg: float,
        line_amp_mg: float,
        residual_rate_per_s: float = 0.0,
        fundamental_hz: float = 60.0,
        n_harmonics: int = 3,
    ) -> "NoiseModel":
        """Noise model with the power-line fundamental and falling harmonics."""
        harmonics = tuple(
            (fundamental_hz * (k + 1), line_amp_mg / (k + 1)) for k in range(n_harmonics)
        )
        return cls(sigma_b_mg, harmonics, residual_rate_per_s)


@dataclass
class RamseyScan:
    """Per-delay Ramsey outcome with shot-noise error bars."""

    delays_s: np.ndarray
    probabilities: np.ndarray  # excited-state probability estimate per delay
    contrast: np.ndarray  # 2 p - 1 for the contrast readout convention
    errors: np.ndarray  # standard error of the contrast
    shots: int
    sensitivity_khz_per_mg: float
    readout: str  # "contrast" or "fringe"
    fringe_detuning_hz: float = 0.0

    def __post_init__(self) -> None:
        if (np.diff(self.delays_s) <= 0).any():
            raise ValueError("delays must be strictly ascending")
        if ((self.probabilities < 0) | (self.probabilities > 1)).any():
            raise ValueError("probabilities must lie in [0, 1]")


def _shot_phases(
    sensitivity: float,
    noise: NoiseModel,
    delay: float,
    shots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Accumulated Ramsey phase per shot, radians."""
    rad_per_mg_s = 2 * math.pi * sensitivity * 1e3  # kHz/mG -> rad/(mG s)
    phases = np.zeros(shots)
    if sensitivity == 0.0:
        # first-order phase variance is exactly zero for the insensitive qubit
        return phases
    if noise.sigma_b_mg > 0:
        phases += rad_per_mg_s * delay * noise.sigma_b_mg * rng.standard_normal(shots)
    for freq, amp in noise.harmonics:
        if amp == 0:
            continue
        theta = rng.uniform(0.0, 2 * math.pi, shots)
        w = 2 * math.pi * freq
        integral = (np.cos(theta) - np.cos(w * delay + theta)) / w  # int sin(wt+theta) dt
        phases += rad_per_mg_s * amp * integral
    return phases


def ramsey_scan(
    sensitivity_khz_per_mg: float,
    noise: NoiseModel,
    delays_s: Sequence[float],
    shots: int,
    seed: int,
    readout: str = "contrast",
    fringe_detuning_hz: float = 0.0,
) -> RamseyScan:
    """Simulate a Ramsey delay scan of a qubit with the given sensitivity.

    Each shot accumulates phase from the frozen field offset plus the
    analytically integrated harmonic terms; residual dephasing enters as a
    multiplicative contrast loss.  The "contrast" readout estimates
    <cos phase> from outcomes at analysis phase zero; "fringe" records the
    excited-state probability with a deliberate detuning fringe.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if readout not in ("contrast", "fringe"):
        raise ValueError("readout must be 'contrast' or 'fringe'")
    delays = np.asarray(delays_s, dtype=float)
    probs = np.empty(delays.size)
    contrast = np.empty(delays.size)
    errors = np.empty(delays.size)
    for i, delay in enumerate(delays):
        rng = substream(seed, ("ramsey", i))
        phases = _shot_phases(sensitivity_khz_per_mg, noise, delay, shots, rng)
        if readout == "fringe":
            phases = phases + 2 * math.pi * fringe_detuning_hz * delay
        envelope = math.exp(-noise.residual_rate_per_s * delay)
        p_shot = 0.5 * (1.0 + envelope * np.cos(phases))
        hits = rng.random(shots) < p_shot
        k = int(hits.sum())
        p_hat = k / shots
        probs[i] = p_hat
        contrast[i] = 2.0 * p_hat - 1.0
        p_tilde = (k + 0.5) / (shots + 1.0)  # keeps error bars finite at p in {0,1}
        errors[i] = 2.0 * math.sqrt(p_tilde * (1.0 - p_tilde) / shots)
    return RamseyScan(
        delays_s=delays,
        probabilities=probs,
        contrast=contrast,
        errors=errors,
        shots=shots,
        sensitivity_khz_per_mg=sensitivity_khz_per_mg,
        readout=readout,
        fringe_detuning_hz=fringe_detuning_hz,
    )


@dataclass
class T2Fit:
    """Gaussian-envelope coherence-time fit."""

    t2_s: float
    t2_err: float
    amplitude: float
    floor: float
    at_upper_bound: bool
    at_lower_bound: bool
    covariance: np.ndarray  # 3x3 over (amplitude, t2, floor)


def fit_t2star(scan: RamseyScan) -> T2Fit:
    """Weighted least squares of A exp(-(t/T2)^2) + floor to the contrast.

    Quasi-static Gaussian field noise implies a Gaussian envelope, so that
    shape is fitted for every qubit.  T2 estimates pinned at the search
    bounds are flagged rather than trusted.
    """
    t = scan.delays_s
    if t.size < 6:
        raise ValueError("need at least 6 delays to fit a decay constant")
    c = scan.contrast
    w = 1.0 / np.maximum(scan.errors, 1e-6)

    lo, hi = 0.05 * t[0] if t[0] > 0 else 1e-9, 50.0 * t[-1]

    def model(p):
        a, t2, c0 = p
        return a * np.exp(-((t / t2) ** 2)) + c0

    def resid(p):
        return w * (model(p) - c)

    # seed T2 from the first crossing below 1/e of the initial contrast
    a0 = max(c[0], 0.1)
    below = np.nonzero(c < a0 / math.e)[0]
    t2_0 = t[below[0]] if below.size else t[-1]
    t2_0 = min(max(t2_0, lo * 2), hi / 2)

    best = None
    for t2_seed in (t2_0, 0.5 * t2_0, 2.0 * t2_0):
        sol = least_squares(
            resid,
            x0=[a0, t2_seed, 0.0],
            bounds=([0.0, lo, -0.5], [1.5, hi, 0.5]),
            xtol=1e-14,
            ftol=1e-14,
        )
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or not np.isfinite(best.cost):
        raise FitFailureError("coherence-time fit did not converge")
    a, t2, c0 = best.x
    dof = max(t.size - 3, 1)
    sigma2 = 2 * best.cost / dof
    try:
        cov = sigma2 * np.linalg.inv(best.jac.T @ best.jac)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.nan)
    at_hi = t2 >= hi * (1 - 1e-6)
    at_lo = t2 <= lo * (1 + 1e-6) or a < 0.1  # no measurable contrast decay shape
    return T2Fit(
        t2_s=float(t2),
        t2_err=float(math.sqrt(max(cov[1, 1], 0.0))),
        amplitude=float(a),
        floor=float(c0),
        at_upper_bound=bool(at_hi),
        at_lower_bound=bool(at_lo),
        covariance=cov,
    )


def calibrate_noise(target_t2_s: float, sensitivity_khz_per_mg: float) -> float:
    """Quasi-static field RMS (mG) that yields the target Gaussian T2*.

    Inverts T2 = sqrt(2) / (2 pi s sigma_B); an infinite target gives zero.
    """
    if sensitivity_khz_per_mg <= 0:
        raise ValueError("cannot calibrate via the first-order term at zero sensitivity")
    if not target_t2_s > 0:
        raise ValueError("target coherence time must be positive")
    if math.isinf(target_t2_s):
        return 0.0
    return math.sqrt(2.0) / (2 * math.pi * sensitivity_khz_per_mg * 1e3 * target_t2_s)


def _default_delays(expected_t2_s: float, n: int = 16) -> np.ndarray:
    return np.linspace(expected_t2_s / 20.0, 2.4 * expected_t2_s, n)


def calibrate_residual_rate(
    target_t2_s: float,
    shots: int = 10_000,
    seed: int = 0,
    delays_s: Optional[Sequence[float]] = None,
) -> float:
    """Residual dephasing rate making the fitted T2* of the insensitive qubit match.

    The insensitive qubit decays exponentially while the fit assumes a
    Gaussian envelope, so the rate is calibrated by a generate-and-fit secant
    loop rather than derived.
    """
    if not target_t2_s > 0:
        raise ValueError("target coherence time must be positive")
    delays = np.asarray(delays_s) if delays_s is not None else _default_delays(target_t2_s)

    def fitted(rate: float) -> float:
        noise = NoiseModel(sigma_b_mg=0.0, residual_rate_per_s=rate)
        scan = ramsey_scan(0.0, noise, delays, shots, seed)
        return fit_t2star(scan).t2_s

    # secant iteration on fitted(rate) - target; fitted is deterministic per seed
    r0 = 1.0 / target_t2_s
    f0 = fitted(r0) - target_t2_s
    if abs(f0) / target_t2_s < 0.005:
        return r0
    r1 = r0 * (f0 / target_t2_s + 1.0)
    f1 = fitted(r1) - target_t2_s
    for _ in range(8):
        if abs(f1) / target_t2_s < 0.005:
            break
        if f1 == f0:
            break
        r0, r1, f0 = r1, max(r1 - f1 * (r1 - r0) / (f1 - f0), 1e-3 / target_t2_s), f1
        f1 = fitted(r1) - target_t2_s
    return r1


@dataclass
class BenchmarkRow:
    label: str
    sensitivity_khz_per_mg: float
    t2_s: float
    t2_err: float
    unbounded: bool


def benchmark_suite(
    noise: Optional[NoiseModel] = None,
    seed: int = 0,
    shots: int = 10_000,
    s_target_t2_s: float = 96e-6,
    synth_target_t2_s: float = 350e-6,
    residual_rate_per_s: Optional[float] = None,
) -> list[BenchmarkRow]:
    """Fitted T2* of the three benchmark qubits under one noise environment.

    Rows: the ground-state doublet, the quartet edge-to-middle pair, and the
    synthetic insensitive qubit.  With no explicit noise model, the synthetic
    qubit's residual rate is calibrated to its target first, then the field
    RMS is calibrated closed-loop (the residual rate also dephases the
    sensitive qubits) so the doublet fits its target T2*.  A qubit whose fit
    pins at the upper search bound is flagged unbounded, which is what
    happens to the insensitive qubit when the residual rate is zero.
    """
    windows: dict[str, Optional[float]] = {
        "s-doublet": None,
        "d-edge-pair": None,
        "synthetic-d1d2": None,
    }
    if noise is None:
        if residual_rate_per_s is None:
            residual_rate_per_s = calibrate_residual_rate(
                synth_target_t2_s, shots=shots, seed=seed + 2
            )
        sigma = calibrate_noise(s_target_t2_s, S_DOUBLET_SENSITIVITY)
        delays = _default_delays(s_target_t2_s)
        for _ in range(4):
            trial_noise = NoiseModel(sigma_b_mg=sigma, residual_rate_per_s=residual_rate_per_s)
            got = fit_t2star(
                ramsey_scan(S_DOUBLET_SENSITIVITY, trial_noise, delays, shots, seed + 0)
            ).t2_s
            if abs(got - s_target_t2_s) / s_target_t2_s < 0.005:
                break
            sigma *= got / s_target_t2_s
        noise = NoiseModel(sigma_b_mg=sigma, residual_rate_per_s=residual_rate_per_s)
        # fit windows must match the calibration windows: a Gaussian-envelope
        # fit of a non-Gaussian decay depends on the scanned delay range
        windows["s-doublet"] = s_target_t2_s
        windows["synthetic-d1d2"] = synth_target_t2_s

    sigma = noise.sigma_b_mg
    rows = []
    qubits = (
        ("s-doublet", S_DOUBLET_SENSITIVITY),
        ("d-edge-pair", D_EDGE_PAIR_SENSITIVITY),
        ("synthetic-d1d2", SYNTH_QUBIT_SENSITIVITY),
    )
    for qi, (label, sens) in enumerate(qubits):
        expected = windows[label]
        if expected is None:
            scales = []
            if sens > 0 and sigma > 0:
                scales.append(math.sqrt(2.0) / (2 * math.pi * sens * 1e3 * sigma))
            if noise.residual_rate_per_s > 0:
                scales.append(1.0 / noise.residual_rate_per_s)
            expected = min(scales) if scales else 0.01  # no channel: scan 24 ms, flag
        scan = ramsey_scan(sens, noise, _default_delays(expected), shots, seed + qi)
        fit = fit_t2star(scan)
        rows.append(
            BenchmarkRow(
                label=label,
                sensitivity_khz_per_mg=sens,
                t2_s=fit.t2_s,
                t2_err=fit.t2_err,
                unbounded=fit.at_upper_bound,
            )
        )
    return rows
