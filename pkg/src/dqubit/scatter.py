"""Stochastic optical pumping in the eight-level ion with a photon counter.

The model keeps the six long-lived levels (two S, four D) explicitly and
adiabatically eliminates the fast P doublet: weak driving excites a small
P amplitude that immediately decays, so scattering becomes a sequence of
quantum jumps on the ground+metastable manifold.  Two simulation methods:

* ``jump``  - quantum-jump trajectories over the six-level state vector.
  Coherent dark superpositions, their Zeeman/detuning-induced brightening
  and post-decay coherences are all retained.  This is the default.
* ``chain`` - the classical embedded Markov chain over basis states
  (excitation branching by line strength, decay branching by the 3:1 rule).
  Exact for single-polarization settings, where no coherences form.

The observable is the number of blue photons (P -> S decays) emitted until
the ion is pumped dark.  The counter plays the role of an extra bookkeeping
state riding along with the trajectory.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from math import sqrt
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .atom import (
    BA138,
    AtomConstants,
    Manifold,
    Polarization,
    ZeemanState,
    cg_coefficient,
    zeeman_shift,
)
from .rng import uniform_table

__all__ = [
    "BeamColor",
    "BeamConfig",
    "PhotonCounter",
    "PumpModel",
    "PumpResult",
    "DetectionMatrix",
    "DarkState",
    "NonTerminatingError",
    "GROUND_STATES",
    "build_model",
    "standard_beam",
    "s_detection_beams",
    "d_detection_beams",
    "simulate_pumping",
    "chain_expected_counts",
    "detection_matrix_s",
    "detection_matrix_d",
    "find_dark_states",
]

# Ground+metastable levels in fixed order; the P doublet is eliminated.
GROUND_STATES = (
    ZeemanState(Manifold.S_HALF, -1),
    ZeemanState(Manifold.S_HALF, 1),
    ZeemanState(Manifold.D_THREE_HALF, -3),
    ZeemanState(Manifold.D_THREE_HALF, -1),
    ZeemanState(Manifold.D_THREE_HALF, 1),
    ZeemanState(Manifold.D_THREE_HALF, 3),
)
EXCITED_STATES = (ZeemanState(Manifold.P_HALF, -1), ZeemanState(Manifold.P_HALF, 1))
_GROUND_INDEX = {s: i for i, s in enumerate(GROUND_STATES)}

_POLS = (Polarization.SIGMA_PLUS, Polarization.SIGMA_MINUS, Polarization.PI)


class NonTerminatingError(RuntimeError):
    """Raised when too many trajectories fail to pump dark within the caps."""


class BeamColor(enum.Enum):
    BLUE_493 = "blue_493"
    RED_650 = "red_650"

    @property
    def lower_manifold(self) -> Manifold:
        return Manifold.S_HALF if self is BeamColor.BLUE_493 else Manifold.D_THREE_HALF


@dataclass(frozen=True)
class BeamConfig:
    """One applied color: per-polarization saturation intensities and detunings.

    ``intensity`` maps polarization -> saturation-relative intensity (>= 0,
    at least one positive).  ``detuning_hz`` maps polarization -> offset of
    that component's frequency from the zero-field line center.
    """

    color: BeamColor
    intensity: Mapping[Polarization, float]
    detuning_hz: Mapping[Polarization, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        vals = [self.intensity.get(p, 0.0) for p in _POLS]
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ValueError("beam intensities must be finite and nonnegative")
        if not any(v > 0 for v in vals):
            raise ValueError(f"{self.color.value} beam has no positive-intensity component")

    def components(self) -> list[tuple[Polarization, float, float]]:
        """Active (polarization, intensity, detuning_hz) triples."""
        return [
            (p, self.intensity[p], self.detuning_hz.get(p, 0.0))
            for p in _POLS
            if self.intensity.get(p, 0.0) > 0
        ]


DEFAULT_INTENSITY = 0.05  # saturation-relative, keeps scattering slow vs Zeeman beats


def standard_beam(
    color: BeamColor,
    pols: Iterable[Polarization],
    b_gauss: float,
    intensity: float = DEFAULT_INTENSITY,
    constants: AtomConstants = BA138,
) -> BeamConfig:
    """Beam with equal intensities and the package's default detunings.

    pi sits on the zero-field line center; sigma+- are offset by -+ one
    Zeeman splitting of the color's lower manifold.  The signs avoid the
    two-photon (Raman) resonance between adjacent m_J levels that would
    otherwise make a coherent dark superposition stationary.
    """
    from .atom import zeeman_splitting

    wz = zeeman_splitting(color.lower_manifold, b_gauss, constants)
    det = {
        Polarization.SIGMA_PLUS: -wz,
        Polarization.SIGMA_MINUS: +wz,
        Polarization.PI: 0.0,
    }
    pols = tuple(pols)
    return BeamConfig(
        color=color,
        intensity={p: intensity for p in pols},
        detuning_hz={p: det[p] for p in pols},
    )


def s_detection_beams(
    probe: Polarization,
    b_gauss: float,
    intensity: float = DEFAULT_INTENSITY,
    constants: AtomConstants = BA138,
) -> tuple[BeamConfig, BeamConfig]:
    """Probe polarization on the blue transition plus an all-polarization red repump."""
    if probe is Polarization.PI:
        raise ValueError("the S-manifold probe must be sigma+ or sigma-")
    blue = BeamConfig(BeamColor.BLUE_493, {probe: intensity}, {probe: 0.0})
    red = standard_beam(BeamColor.RED_650, _POLS, b_gauss, intensity, constants)
    return blue, red


def d_detection_beams(
    pols: Iterable[Polarization],
    b_gauss: float,
    intensity: float = DEFAULT_INTENSITY,
    constants: AtomConstants = BA138,
) -> tuple[BeamConfig, BeamConfig]:
    """Red beam with the given polarizations plus an all-polarization blue repump."""
    red = standard_beam(BeamColor.RED_650, pols, b_gauss, intensity, constants)
    blue = standard_beam(BeamColor.BLUE_493, _POLS, b_gauss, intensity, constants)
    return red, blue


class PhotonCounter:
    """Running mean/variance accumulator of per-trajectory photon counts.

    Merging is associative, so trajectory batches can be accumulated in any
    chunking without changing the result.
    """

    def __init__(self) -> None:
        self.n = 0
        self._sum = 0.0
        self._sumsq = 0.0

    def push(self, counts: np.ndarray) -> None:
        counts = np.asarray(counts, dtype=float)
        self.n += counts.size
        self._sum += counts.sum()
        self._sumsq += (counts**2).sum()

    def merge(self, other: "PhotonCounter") -> "PhotonCounter":
        out = PhotonCounter()
        out.n = self.n + other.n
        out._sum = self._sum + other._sum
        out._sumsq = self._sumsq + other._sumsq
        return out

    @property
    def mean(self) -> float:
        return self._sum / self.n if self.n else float("nan")

    @property
    def variance(self) -> float:
        if self.n < 2:
            return float("nan")
        return max(0.0, (self._sumsq - self._sum**2 / self.n) / (self.n - 1))

    @property
    def sem(self) -> float:
        return sqrt(self.variance / self.n) if self.n >= 2 else float("nan")


@dataclass(frozen=True)
class PumpModel:
    """Assembled excitation/decay model for one field and beam set.

    Immutable after build; all mutable bookkeeping lives in the per-run
    counter objects, which merge associatively.
    """

    constants: AtomConstants
    b_gauss: float
    beams: tuple[BeamConfig, ...]
    degenerate_zeeman: bool
    counter: PhotonCounter = field(default_factory=PhotonCounter, compare=False)
    # internals (units: us and rad/us)
    _gamma: float = field(repr=False, compare=False, default=0.0)
    _zg: np.ndarray = field(repr=False, compare=False, default=None)
    _ze: np.ndarray = field(repr=False, compare=False, default=None)
    _colors: tuple = field(repr=False, compare=False, default=())
    _chain_rates: np.ndarray = field(repr=False, compare=False, default=None)  # (6, 2)
    _decay_probs: np.ndarray = field(repr=False, compare=False, default=None)  # (2, 6)
    _engine_cache: dict = field(repr=False, compare=False, default_factory=dict)

    def excitation_rate_of(self, state: ZeemanState) -> float:
        """Total excitation rate out of a basis state, 1/us."""
        return float(self._chain_rates[_GROUND_INDEX[state]].sum())

    def describe(self) -> str:
        parts = [f"B={self.b_gauss}G"]
        for b in self.beams:
            comps = ",".join(
                f"{p.value}(I={i:g},det={d:g}Hz)" for p, i, d in b.components()
            )
            parts.append(f"{b.color.value}[{comps}]")
        return " ".join(parts)


# decay jump channels: (manifold, emitted polarization) pairs, S channels first
_CHANNEL_DEFS = [(m, q) for m in (Manifold.S_HALF, Manifold.D_THREE_HALF) for q in _POLS]


def _decay_channel_stack(constants: AtomConstants) -> np.ndarray:
    """(6 channels, 6 ground, 2 excited) decay amplitude operators.

    Channel amplitudes include the square-rooted manifold branching so the
    six channels resolve the P identity: sum_mu D_mu^T D_mu = I.
    """
    stack = np.zeros((6, 6, 2))
    for ci, (man, pol) in enumerate(_CHANNEL_DEFS):
        b = constants.branching_to_s if man is Manifold.S_HALF else constants.branching_to_d
        for gi, g in enumerate(GROUND_STATES):
            if g.manifold is not man:
                continue
            for ei, e in enumerate(EXCITED_STATES):
                if e.two_mj == g.two_mj + 2 * pol.delta_m:
                    stack[ci, gi, ei] = sqrt(b) * cg_coefficient(g, e, pol)
    return stack


_CHANNEL_IS_S = np.array([man is Manifold.S_HALF for man, _ in _CHANNEL_DEFS])


def build_model(
    b_gauss: float,
    beams: Sequence[BeamConfig],
    constants: AtomConstants = BA138,
) -> PumpModel:
    """Assemble excitation amplitudes and decay channels for a beam set.

    Excitation amplitudes scale as sqrt(intensity) times the signed line
    amplitude, with a complex Lorentzian denominator evaluated at each
    component's detuning from the Zeeman-shifted transition.  Decay uses the
    3:1 S:D branching and line strengths within each manifold.
    """
    if b_gauss < 0:
        raise ValueError("magnetic field must be nonnegative")
    beams = tuple(beams)
    if not beams:
        raise ValueError("at least one beam must be supplied")
    degenerate = b_gauss == 0.0
    if degenerate:
        warnings.warn(
            "zero magnetic field: dark superpositions exist for any polarization "
            "combination and optical pumping may trap coherent dark states",
            stacklevel=2,
        )

    gamma = 1.0 / (constants.p_lifetime_s * 1e6)  # 1/us
    ang = 2e-6 * np.pi  # Hz -> rad/us
    zg = np.array([zeeman_shift(s, b_gauss, constants) * ang for s in GROUND_STATES])
    ze = np.array([zeeman_shift(s, b_gauss, constants) * ang for s in EXCITED_STATES])

    per_color: dict[BeamColor, list] = {}
    for beam in beams:
        per_color.setdefault(beam.color, []).extend(beam.components())

    colors = []
    chain_rates = np.zeros((6, 2))
    for color, comps in sorted(per_color.items(), key=lambda kv: kv[0].value):
        man = color.lower_manifold
        Bks, Vks, deltas = [], [], []
        for pol, inten, det_hz in comps:
            omega = gamma * sqrt(inten / 2.0)  # Rabi from saturation intensity
            delta = det_hz * ang
            Bk = np.zeros((2, 6), complex)
            Vk = np.zeros((2, 6), complex)
            for gi, g in enumerate(GROUND_STATES):
                if g.manifold is not man:
                    continue
                for ei, e in enumerate(EXCITED_STATES):
                    c = cg_coefficient(g, e, pol)
                    if c == 0.0:
                        continue
                    mismatch = delta - (ze[ei] - zg[gi])
                    Vk[ei, gi] = 0.5 * omega * c
                    Bk[ei, gi] = Vk[ei, gi] / (mismatch + 0.5j * gamma)
                    chain_rates[gi, ei] += gamma * abs(Bk[ei, gi]) ** 2
            Bks.append(Bk)
            Vks.append(Vk)
            deltas.append(delta)
        colors.append((np.array(Bks), np.array(Vks), np.array(deltas)))

    decay_probs = np.zeros((2, 6))
    stack = _decay_channel_stack(constants)
    for ei in range(2):
        decay_probs[ei] = (stack[:, :, ei] ** 2).sum(axis=0)

    return PumpModel(
        constants=constants,
        b_gauss=b_gauss,
        beams=beams,
        degenerate_zeeman=degenerate,
        _gamma=gamma,
        _zg=zg,
        _ze=ze,
        _colors=tuple(colors),
        _chain_rates=chain_rates,
        _decay_probs=decay_probs,
    )


@dataclass
class PumpResult:
    """Mean and standard error of emitted blue photons until dark."""

    mean: float
    sem: float
    trials: int
    counter: PhotonCounter
    capped_fraction: float
    counts: Optional[np.ndarray] = None


def chain_expected_counts(model: PumpModel, initial: ZeemanState) -> float:
    """Exact expected blue-photon count of the classical pumping chain.

    Solves the absorbing-chain first-step equations; the answer depends only
    on excitation and decay branching ratios, not on the overall rate scale.
    """
    lam = model._chain_rates
    tot = lam.sum(axis=1)
    pdec = model._decay_probs
    phot = model._decay_probs[:, 0:2].sum(axis=1)  # P(decay lands in S) = blue photon
    A = np.eye(6)
    b = np.zeros(6)
    for gi in range(6):
        if tot[gi] <= 0:
            continue
        pe = lam[gi] / tot[gi]
        b[gi] = pe @ phot
        A[gi] -= pe @ pdec
    n = np.linalg.solve(A, b)
    return float(n[_GROUND_INDEX[initial]])


def _chain_sample_block(
    model: PumpModel, initial_idx: int, seed: int, first_trial: int, n: int, max_jumps: int
) -> tuple[np.ndarray, np.ndarray]:
    """Classical-chain sampling of n trajectories; returns (counts, capped)."""
    lam = model._chain_rates
    tot = lam.sum(axis=1)
    exc_cum = np.cumsum(np.where(tot[:, None] > 0, lam / np.maximum(tot, 1e-300)[:, None], 0.5), axis=1)
    dec_cum = np.cumsum(model._decay_probs, axis=1)
    u = uniform_table(seed, first_trial, n, 2 * max_jumps)
    state = np.full(n, initial_idx, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    capped = np.zeros(n, dtype=bool)
    alive = tot[state] > 0
    step = 0
    while alive.any():
        if step >= max_jumps:
            capped[alive] = True
            break
        idx = np.nonzero(alive)[0]
        e = (u[idx, 2 * step, None] > exc_cum[state[idx]]).sum(axis=1)
        g = (u[idx, 2 * step + 1, None] > dec_cum[e]).sum(axis=1)
        counts[idx] += (g < 2).astype(np.int64)
        state[idx] = g
        alive[idx] = tot[g] > 0
        step += 1
    return counts, capped


class _JumpEngine:
    """Precompiled matrices plus a shared propagator cache over the time grid."""

    PROP_CHUNK = 4096  # propagators are Taylor-expanded in vectorized batches

    def __init__(self, model: PumpModel, dt: Optional[float], eps: float):
        self.model = model
        self.gamma = model._gamma
        self.colors = model._colors
        self.stack = _decay_channel_stack(model.constants)
        self.eps = eps

        # termination: rate survives time-averaging iff any single-frequency
        # amplitude group is nonzero; group terms by (color, excited, delta+z_g)
        rows: dict[tuple, np.ndarray] = {}
        for ci, (Bks, _, deltas) in enumerate(self.colors):
            for k in range(len(deltas)):
                for gi in range(6):
                    for ei in range(2):
                        if Bks[k][ei, gi] == 0:
                            continue
                        nu = round(deltas[k] + model._zg[gi], 9)
                        key = (ci, ei, nu)
                        rows.setdefault(key, np.zeros(6, complex))[gi] += Bks[k][ei, gi]
        self.term_map = (
            np.array(list(rows.values())) if rows else np.zeros((1, 6), complex)
        )
        self.rate_ref = self.gamma * (np.abs(self.term_map) ** 2).sum(axis=0).max()

        # the no-jump generator is a finite Fourier sum of constant matrices:
        # G(t) = sum_m exp(-i w_m t) C_m over component detuning differences
        gterms: dict[float, np.ndarray] = {0.0: -1j * np.diag(model._zg).astype(complex)}
        for Bks, Vks, deltas in self.colors:
            for k in range(len(deltas)):
                for k2 in range(len(deltas)):
                    w = round(deltas[k2] - deltas[k], 12)
                    c = (
                        -0.5j * (Vks[k].conj().T @ Bks[k2] + Bks[k].conj().T @ Vks[k2])
                        - 0.5 * self.gamma * (Bks[k].conj().T @ Bks[k2])
                    )
                    gterms[w] = gterms.get(w, 0.0) + c
        self._gfreqs = np.array(sorted(gterms))
        self._gmats = np.array([gterms[w] for w in sorted(gterms)])

        if dt is None:
            freqs = [0.0]
            for _, _, deltas in self.colors:
                freqs.extend(deltas.tolist())
            freqs.extend(model._zg.tolist())
            span = max(freqs) - min(freqs)
            beat = max(abs(f) for f in freqs)
            wmax = max(span, 2 * beat, 1e-12)
            dt = min((2 * np.pi / wmax) / 28.0, 0.05)
        self.dt = dt
        self._props: list[np.ndarray] = []

    def _generator(self, t: float) -> np.ndarray:
        ph = np.exp(-1j * self._gfreqs * t)
        return np.tensordot(ph, self._gmats, axes=(0, 0))

    def _extend_props(self) -> None:
        lo = len(self._props)
        t_mid = (lo + 0.5 + np.arange(self.PROP_CHUNK)) * self.dt
        ph = np.exp(-1j * np.outer(t_mid, self._gfreqs))
        a = np.einsum("nm,mij->nij", ph, self._gmats) * self.dt
        # scaling-and-squaring Taylor exponential, batched over the chunk
        norm = np.abs(a).sum(axis=2).max()
        squarings = max(0, int(np.ceil(np.log2(max(norm, 1e-30) / 0.25))))
        a /= 2.0**squarings
        eye = np.broadcast_to(np.eye(6, dtype=complex), a.shape)
        m = eye + a
        term = a
        for p in range(2, 16):
            term = term @ a / p
            m = m + term
        for _ in range(squarings):
            m = m @ m
        self._props.extend(m)

    def propagator(self, step: int) -> np.ndarray:
        while len(self._props) <= step:
            self._extend_props()
        return self._props[step]

    def excitation_amplitudes(self, psi: np.ndarray, t: float) -> list[np.ndarray]:
        """Per-color excited amplitudes for a batch of states (n, 6) -> [(n, 2)]."""
        out = []
        for Bks, _, deltas in self.colors:
            ph = np.exp(-1j * deltas * t)
            Bt = np.tensordot(ph, Bks, axes=(0, 0))
            out.append(psi @ Bt.T)
        return out

    def secular_rates(self, psi_normed: np.ndarray) -> np.ndarray:
        """Time-averaged scattering rate of normalized states; zero iff permanently dark."""
        amp = psi_normed @ self.term_map.T
        return self.gamma * (np.abs(amp) ** 2).sum(axis=1)


def _jump_sample_block(
    eng: _JumpEngine,
    initial_idx: int,
    seed: int,
    first_trial: int,
    n: int,
    max_jumps: int,
    max_steps: int,
    check_every: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Quantum-jump sampling of n trajectories; returns (counts, capped)."""
    table = uniform_table(seed, first_trial, n, 2 * max_jumps + 1)
    u_thresh = table[:, : max_jumps + 1]
    u_chan = table[:, max_jumps + 1 :]

    psi = np.zeros((n, 6), complex)
    psi[:, initial_idx] = 1.0
    counts = np.zeros(n, np.int64)
    jumps = np.zeros(n, np.int64)
    thresh = u_thresh[:, 0].copy()
    capped = np.zeros(n, bool)
    done = np.zeros(n, bool)

    # initial dark check (dark initial states terminate immediately)
    rsec = eng.secular_rates(psi)
    done |= rsec < eng.eps * eng.rate_ref

    active = np.nonzero(~done)[0]
    dt = eng.dt
    step = 0
    while active.size and step < max_steps:
        psi_a = psi[active]
        n_sub = min(check_every, max_steps - step)
        for _ in range(n_sub):
            M = eng.propagator(step)
            psi_a = psi_a @ M.T
            step += 1
            t_now = step * dt
            norms = np.einsum("ij,ij->i", psi_a, psi_a.conj()).real
            hit = norms <= thresh[active]
            if hit.any():
                rows = np.nonzero(hit)[0]
                glob = active[rows]
                over = jumps[glob] >= max_jumps
                if over.any():
                    capped[glob[over]] = True
                    done[glob[over]] = True
                    rows = rows[~over]
                    glob = glob[~over]
                if rows.size:
                    amps = eng.excitation_amplitudes(psi_a[rows], t_now)
                    posts = []
                    for a in amps:
                        posts.append(np.einsum("cge,ne->ncg", eng.stack, a))
                    posts = np.concatenate(posts, axis=1)  # (m, colors*6, 6)
                    rates = (posts.real**2 + posts.imag**2).sum(axis=2)
                    cum = np.cumsum(rates, axis=1)
                    tot = cum[:, -1]
                    pick = (
                        u_chan[glob, jumps[glob], None] * tot[:, None] > cum
                    ).sum(axis=1)
                    pick = np.minimum(pick, rates.shape[1] - 1)
                    new_psi = posts[np.arange(rows.size), pick]
                    new_psi /= np.linalg.norm(new_psi, axis=1)[:, None]
                    psi_a[rows] = new_psi
                    counts[glob] += _CHANNEL_IS_S[pick % 6]
                    jumps[glob] += 1
                    thresh[glob] = u_thresh[glob, jumps[glob]]
                if done[active].any():
                    keep = ~done[active]
                    psi[active] = psi_a
                    active = active[keep]
                    psi_a = psi[active]
            if not active.size:
                break
        if not active.size:
            break
        psi[active] = psi_a
        # dark termination: time-averaged rate below epsilon of the reference
        nrm = np.sqrt(np.einsum("ij,ij->i", psi_a, psi_a.conj()).real)
        rsec = eng.secular_rates(psi_a / nrm[:, None])
        dark = rsec < eng.eps * eng.rate_ref
        if dark.any():
            done[active[dark]] = True
            active = active[~dark]
    if active.size:
        capped[active] = True
    return counts, capped


def simulate_pumping(
    model: PumpModel,
    initial: ZeemanState,
    trials: int,
    seed: int,
    method: str = "jump",
    dt_us: Optional[float] = None,
    eps: float = 1e-6,
    max_jumps: int = 400,
    max_steps: int = 400_000,
    block: int = 8192,
    check_every: int = 16,
    return_counts: bool = False,
) -> PumpResult:
    """Mean and standard error of emitted blue photons until the ion is dark.

    Deterministic for fixed (seed, trials) regardless of ``block``: trial t
    always draws from the substream keyed (seed, t).  A trajectory ends when
    its time-averaged excitation rate falls below ``eps`` times the largest
    basis-state rate (a state with zero time-averaged rate can never
    brighten), or when it exceeds the jump/step caps.

    Raises NonTerminatingError if more than 1% of trajectories hit a cap.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if initial not in _GROUND_INDEX:
        raise ValueError(f"initial state {initial} is not a ground/metastable level")
    if method not in ("jump", "chain"):
        raise ValueError(f"unknown method {method!r}")
    idx = _GROUND_INDEX[initial]

    counter = PhotonCounter()
    all_counts = [] if return_counts else None
    capped_total = 0
    eng = None
    if method == "jump":
        key = (dt_us, eps)
        eng = model._engine_cache.get(key)
        if eng is None:
            eng = _JumpEngine(model, dt_us, eps)
            model._engine_cache[key] = eng
    for lo in range(0, trials, block):
        n = min(block, trials - lo)
        if method == "chain":
            counts, capped = _chain_sample_block(model, idx, seed, lo, n, max_jumps)
        else:
            counts, capped = _jump_sample_block(
                eng, idx, seed, lo, n, max_jumps, max_steps, check_every
            )
        counter.push(counts)
        capped_total += int(capped.sum())
        if all_counts is not None:
            all_counts.append(counts)

    frac = capped_total / trials
    if frac > 0.01:
        raise NonTerminatingError(
            f"{capped_total}/{trials} trajectories failed to pump dark for "
            f"configuration: {model.describe()}"
        )
    sem = counter.sem if trials > 1 else 0.0
    return PumpResult(
        mean=counter.mean,
        sem=float(sem),
        trials=trials,
        counter=counter,
        capped_fraction=frac,
        counts=np.concatenate(all_counts) if all_counts else None,
    )


@dataclass(frozen=True)
class DetectionMatrix:
    """Expected mean blue-photon counts per (polarization setting x initial state)."""

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    means: np.ndarray
    sems: np.ndarray
    trials: int
    seed: int

    def __post_init__(self) -> None:
        if self.means.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError("matrix shape does not match labels")
        if (self.means < 0).any():
            raise ValueError("photon-count means must be nonnegative")


_S_STATES = (GROUND_STATES[0], GROUND_STATES[1])  # ascending m: s-1/2, s+1/2
_D_STATES = GROUND_STATES[2:6]

D_SETTINGS: tuple[tuple[str, tuple[Polarization, ...]], ...] = (
    ("sigma+", (Polarization.SIGMA_PLUS,)),
    ("sigma-", (Polarization.SIGMA_MINUS,)),
    ("pi", (Polarization.PI,)),
    ("sigma+pi", (Polarization.SIGMA_PLUS, Polarization.PI)),
    ("sigma-pi", (Polarization.SIGMA_MINUS, Polarization.PI)),
)


def detection_matrix_s(
    b_gauss: float = 2.2,
    trials: int = 2000,
    seed: int = 0,
    intensity: float = DEFAULT_INTENSITY,
    method: str = "jump",
    constants: AtomConstants = BA138,
) -> DetectionMatrix:
    """2x2 detection matrix of the S doublet under sigma+- probe settings.

    Columns are ordered by ascending m_J (s-1/2, s+1/2); with symmetric
    intensities the result is diagonal with entries near 2.8.
    """
    means = np.zeros((2, 2))
    sems = np.zeros((2, 2))
    rows = (("sigma+", Polarization.SIGMA_PLUS), ("sigma-", Polarization.SIGMA_MINUS))
    for ri, (label, probe) in enumerate(rows):
        model = build_model(b_gauss, s_detection_beams(probe, b_gauss, intensity, constants), constants)
        for ci, state in enumerate(_S_STATES):
            res = simulate_pumping(model, state, trials, seed + 1000 * ri + ci, method=method)
            means[ri, ci] = res.mean
            sems[ri, ci] = res.sem
    return DetectionMatrix(
        row_labels=tuple(r[0] for r in rows),
        col_labels=tuple(str(s) for s in _S_STATES),
        means=means,
        sems=sems,
        trials=trials,
        seed=seed,
    )


def detection_matrix_d(
    b_gauss: float = 2.2,
    trials: int = 1500,
    seed: int = 0,
    intensity: float = DEFAULT_INTENSITY,
    method: str = "jump",
    constants: AtomConstants = BA138,
    detuning_overrides: Optional[Mapping[str, Mapping[Polarization, float]]] = None,
) -> DetectionMatrix:
    """5x4 detection matrix of the D quartet over the five polarization settings.

    Rows: sigma+, sigma-, pi, sigma+&pi, sigma-&pi on the red transition with
    an all-polarization blue repump; columns: the four Zeeman states by
    ascending m_J.  Combination rows must give the pi and sigma components
    distinct detunings; equal detunings draw a warning because the second
    dark state is then tagged stationary and the row loses rank.
    """
    means = np.zeros((5, 4))
    sems = np.zeros((5, 4))
    for ri, (label, pols) in enumerate(D_SETTINGS):
        red, blue = d_detection_beams(pols, b_gauss, intensity, constants)
        if detuning_overrides and label in detuning_overrides:
            red = replace(red, detuning_hz=dict(detuning_overrides[label]))
        if len(pols) > 1:
            dets = [red.detuning_hz.get(p, 0.0) for p in pols]
            if max(dets) - min(dets) == 0.0:
                warnings.warn(
                    f"setting {label}: equal detunings make the second dark state "
                    "stationary and the row loses rank",
                    stacklevel=2,
                )
        model = build_model(b_gauss, (red, blue), constants)
        for ci, state in enumerate(_D_STATES):
            res = simulate_pumping(model, state, trials, seed + 1000 * ri + ci, method=method)
            means[ri, ci] = res.mean
            sems[ri, ci] = res.sem
    return DetectionMatrix(
        row_labels=tuple(s[0] for s in D_SETTINGS),
        col_labels=tuple(str(s) for s in _D_STATES),
        means=means,
        sems=sems,
        trials=trials,
        seed=seed,
    )


@dataclass(frozen=True)
class DarkState:
    """One zero-coupling D-manifold state with its stationarity tag."""

    amplitudes: np.ndarray  # over (d-3/2, d-1/2, d+1/2, d+3/2)
    stationary: bool

    @property
    def is_basis_state(self) -> bool:
        return np.count_nonzero(np.abs(self.amplitudes) > 1e-12) == 1


def find_dark_states(
    pols: Iterable[Polarization],
    b_gauss: float,
    detunings_hz: Optional[Mapping[Polarization, float]] = None,
    constants: AtomConstants = BA138,
) -> list[DarkState]:
    """Dark states of the red transition for one polarization set.

    The dark space is the null space of the 2x4 coupling map from the D
    quartet into the P doublet.  A dark state is tagged stationary when it is
    a Zeeman eigenstate, when the field is zero, or when all applied
    components share one detuning (so no relative beat can brighten it).
    """
    pols = tuple(dict.fromkeys(pols))
    if not pols:
        raise ValueError("polarization set must be nonempty")
    C = np.zeros((2, 4))
    for q in pols:
        for ci, d in enumerate(_D_STATES):
            for ei, e in enumerate(EXCITED_STATES):
                C[ei, ci] += cg_coefficient(d, e, q)

    # basis states entirely dark come first, then superposition dark states
    basis_dark = [i for i in range(4) if np.allclose(C[:, i], 0.0, atol=1e-14)]
    _, s, vh = np.linalg.svd(C)
    tol = max(C.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)
    rank = int((s > tol).sum())
    null = vh[rank:].conj()  # rows span the dark space

    if detunings_hz is None:
        common_detuning = True
    else:
        vals = [detunings_hz.get(q, 0.0) for q in pols]
        common_detuning = max(vals) - min(vals) == 0.0

    out = []
    for i in basis_dark:
        vec = np.zeros(4)
        vec[i] = 1.0
        out.append(DarkState(amplitudes=vec, stationary=True))
    # remaining dark directions orthogonal to the basis-dark ones
    if len(basis_dark) < null.shape[0]:
        P = np.eye(4)
        for i in basis_dark:
            P[i, i] = 0.0
        rest = null @ P
        q, r = np.linalg.qr(rest.T)
        keep = np.abs(np.diag(r)) > 1e-10
        for vec in q.T[keep]:
            lead = np.argmax(np.abs(vec))
            vec = vec * np.sign(vec[lead].real)  # deterministic sign
            stationary = b_gauss == 0.0 or common_detuning
            out.append(DarkState(amplitudes=vec, stationary=bool(stationary)))
    return out
