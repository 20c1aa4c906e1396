"""Compile coupling profiles into drive waveforms and dispersion relations.

A drive modulated at harmonics r*omega_B of the Bloch frequency couples sites
a distance r apart. The time-averaged coupling is the Fourier coefficient

    J(r) = (1/tau_B) * integral_0^tau_B exp(i r omega_B t) Jt(t) dt,

so synthesis writes Jt(t) = sum_r exp(-i r omega_B t) J(r).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import CouplingProfile, DomainError, LatticeConfig

DEFAULT_PULSE_WIDTH = 0.3  # in units of the pulse spacing tau_B / M
QUADRATURE_POINTS = 4096


class SynthesisError(ValueError):
    """The requested profile cannot be realised as a nonnegative intensity."""


@dataclass(frozen=True)
class DriveWaveform:
    """Time-domain drive Jt(t), periodic in the Bloch period.

    Continuous drives store the harmonic ``terms`` (r, |J(r)|, arg J(r)) and
    the DC offset J(0). Pulsed drives additionally store the ring couplings
    and the M pulse weights Jt_m, one per pulse at t_m = m tau_B / M.
    ``pulse_width_fraction`` is the pulse width in units of tau_B; zero means
    ideal delta kicks.
    """

    kind: str
    M: int
    omega_B: float
    terms: tuple = ()
    dc_offset: float = 0.0
    pulse_width_fraction: float = 0.0
    pulse_weights: np.ndarray | None = None
    ring_couplings: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("continuous", "pulsed"):
            raise DomainError(f"unknown waveform kind {self.kind!r}")
        if self.kind == "pulsed":
            if self.pulse_weights is None or len(self.pulse_weights) != self.M:
                raise DomainError("pulsed waveform needs M pulse weights")
            if not 0 <= self.pulse_width_fraction < 1.0 / self.M:
                raise DomainError("pulse width must be shorter than the pulse spacing")

    @property
    def tau_B(self) -> float:
        return 2.0 * math.pi / self.omega_B

    @property
    def pulses_per_period(self) -> int:
        return self.M if self.kind == "pulsed" else 0

    @property
    def is_ideal(self) -> bool:
        return self.kind == "pulsed" and self.pulse_width_fraction == 0.0

    def envelope(self, t) -> np.ndarray:
        """Continuous envelope sum_r exp(-i r omega_B t) J(r), real part."""
        t = np.asarray(t, dtype=float)
        if self.kind == "pulsed":
            rho = np.arange(self.M)
            ph = np.exp(-1j * np.multiply.outer(t * self.omega_B, rho))
            return (ph @ self.ring_couplings).real
        out = np.full(t.shape, float(self.dc_offset))
        for r, amp, phi in self.terms:
            out = out + 2.0 * amp * np.cos(r * self.omega_B * t - phi)
        return out

    def __call__(self, t) -> np.ndarray:
        """Instantaneous drive value at time(s) t in seconds."""
        if self.kind == "continuous":
            return self.envelope(t)
        t = np.asarray(t, dtype=float)
        if self.is_ideal:
            raise DomainError("ideal-delta drives have no pointwise value; use pulse_weights")
        spacing = self.tau_B / self.M
        width = self.pulse_width_fraction * self.tau_B
        pos = np.mod(t + 0.5 * spacing, self.tau_B)
        m = np.floor(pos / spacing).astype(int) % self.M
        offset = pos - (m + 0.5) * spacing
        height = self.pulse_weights[m] / (self.M * self.pulse_width_fraction)
        return np.where(np.abs(offset) <= 0.5 * width, height, 0.0)

    def pulse_intervals(self, t0: float, t1: float):
        """Pulses centred in [t0, t1) as (start, stop, weight_index).

        Pulses are never split: one centred near t0 may start slightly
        before it, one centred near t1 may end after it.
        """
        spacing = self.tau_B / self.M
        half = 0.5 * self.pulse_width_fraction * self.tau_B
        first = math.ceil(t0 / spacing - 1e-9)
        out = []
        j = first
        while j * spacing < t1 - 1e-9 * spacing:
            c = j * spacing
            out.append((c - half, c + half, j % self.M))
            j += 1
        return out

    def fourier_coefficient(self, r: int) -> complex:
        """(1/tau_B) integral exp(i r omega_B t) Jt(t) dt, exact.

        For pulsed drives this is the coefficient of the pulse comb (ideal
        kicks with the configured weights); finite pulse width multiplies it
        by the form factor returned by :func:`pulse_form_factor`.
        """
        if self.kind == "pulsed":
            m = np.arange(self.M)
            return complex(np.mean(self.pulse_weights * np.exp(2j * math.pi * r * m / self.M)))
        if r == 0:
            return complex(self.dc_offset)
        for rr, amp, phi in self.terms:
            if rr == abs(r):
                v = amp * np.exp(1j * phi)
                return complex(v if r > 0 else np.conj(v))
        return 0j


def pulse_form_factor(waveform: DriveWaveform, r: int) -> float:
    """Reduction of harmonic r from the finite width of rectangular pulses."""
    x = math.pi * r * waveform.pulse_width_fraction
    return 1.0 if x == 0 else math.sin(x) / x


@dataclass(frozen=True)
class Dispersion:
    """Momentum-space coupling chi_k = -2 n Jt(k / omega_B)."""

    k: np.ndarray
    chi: np.ndarray
    config: LatticeConfig = field(repr=False)
    periodic: bool = False

    @property
    def k_signed(self) -> np.ndarray:
        return np.angle(np.exp(1j * self.k))

    @property
    def chi_tau(self) -> np.ndarray:
        return self.chi.real * self.config.tau_B


def _real_terms(profile: CouplingProfile):
    terms = []
    for r, v in profile.entries.items():
        if r == 0:
            continue
        if abs(v.imag) > 1e-12 * max(1.0, abs(v)):
            raise SynthesisError(
                f"complex coupling at r={r} ({v}) cannot be synthesised by intensity modulation"
            )
        if v.real != 0.0:
            terms.append((r, abs(v.real), 0.0 if v.real > 0 else math.pi))
    return tuple(terms)


def synthesize_continuous(profile: CouplingProfile, config: LatticeConfig) -> DriveWaveform:
    """Intensity waveform Jt(t) = J(0) + sum_r 2|J(r)| cos(r omega_B t - phi_r).

    Without an explicit J(0), the smallest DC that keeps every term
    nonnegative is used, J(0) = 2 sum_r |J(r)|.
    """
    if profile.M != config.M:
        raise DomainError("profile and lattice disagree on M")
    terms = _real_terms(profile)
    if profile.has_onsite:
        dc = profile[0].real
    else:
        dc = 2.0 * sum(a for _, a, _ in terms)
    wf = DriveWaveform("continuous", config.M, config.omega_B, terms, dc, label=profile.label)
    grid = np.linspace(0.0, wf.tau_B, QUADRATURE_POINTS, endpoint=False)
    lowest = float(np.min(wf.envelope(grid)))
    scale = max(abs(dc), sum(a for _, a, _ in terms), 1e-300)
    if lowest < -1e-12 * scale:
        raise SynthesisError(
            f"waveform reaches {lowest:.4g} rad/s < 0; raise J(0) by at least {-lowest:.4g}"
        )
    return wf


def ring_couplings(profile: CouplingProfile) -> np.ndarray:
    """Couplings around the ring, J_ring(rho) for rho = 0..M-1.

    A missing entry at rho is filled from its mirror M - rho by hermiticity.
    """
    M = profile.M
    out = np.zeros(M, dtype=complex)
    for rho in range(1, M):
        if rho in profile.entries:
            out[rho] = profile.entries[rho]
        elif (M - rho) in profile.entries:
            out[rho] = np.conj(profile.entries[M - rho])
    for rho in range(1, M):
        if abs(out[rho] - np.conj(out[M - rho])) > 1e-12 * max(1.0, abs(out[rho])):
            raise SynthesisError(
                f"ring couplings at {rho} and {M - rho} are not conjugate: {out[rho]} vs {out[M - rho]}"
            )
    if profile.has_onsite:
        out[0] = profile[0].real
    else:
        out[0] = np.sum(np.abs(out[1:]))
    return out


def synthesize_pulsed(
    profile: CouplingProfile,
    config: LatticeConfig,
    pulse_width: float = DEFAULT_PULSE_WIDTH,
) -> DriveWaveform:
    """Pulse train with M pulses per Bloch period weighted by the ring DFT.

    Pulse m sits at t_m = m tau_B / M with weight Jt_m = sum_rho J_ring(rho)
    exp(-2 pi i m rho / M), the coupling seen by momentum k_m = 2 pi m / M.
    ``pulse_width`` is in units of the pulse spacing; 0 gives ideal kicks.
    Each pulse integrates to (tau_B / M) Jt_m.
    """
    if not config.periodic:
        raise DomainError("pulsed synthesis needs a periodic lattice config")
    if profile.M != config.M:
        raise DomainError("profile and lattice disagree on M")
    if not 0 <= pulse_width < 1:
        raise DomainError("pulse_width must lie in [0, 1) of the pulse spacing")
    M = config.M
    ring = ring_couplings(profile)
    m = np.arange(M)
    weights = np.exp(-2j * math.pi * np.outer(m, np.arange(M)) / M) @ ring
    if np.max(np.abs(weights.imag)) > 1e-9 * max(1.0, np.max(np.abs(weights))):
        raise SynthesisError("pulse weights are not real")
    weights = weights.real.copy()
    lowest = float(weights.min())
    if lowest < -1e-12 * max(1.0, float(np.abs(weights).max())):
        worst = int(weights.argmin())
        raise SynthesisError(
            f"pulse {worst} has negative weight {lowest:.4g}; raise J(0) by at least {-lowest:.4g}"
        )
    weights = np.maximum(weights, 0.0)
    terms = tuple(
        (r, float(abs(ring[r])), float(np.angle(ring[r]))) for r in range(1, M // 2 + 1) if abs(ring[r]) > 0
    )
    return DriveWaveform(
        "pulsed",
        M,
        config.omega_B,
        terms,
        float(ring[0].real),
        pulse_width / M,
        weights,
        ring,
        profile.label,
    )


def drive_at_momentum(waveform: DriveWaveform, k) -> np.ndarray:
    """Jt(k / omega_B) evaluated on arbitrary momenta (continuous envelope)."""
    return waveform.envelope(np.asarray(k, dtype=float) / waveform.omega_B)


def momentum_grid(config: LatticeConfig, dense_factor: int = 64) -> np.ndarray:
    if config.periodic:
        return 2.0 * math.pi * np.arange(config.M) / config.M
    N = dense_factor * config.M
    return -math.pi + 2.0 * math.pi * np.arange(N) / N


def dispersion(waveform: DriveWaveform, config: LatticeConfig, dense_factor: int = 64) -> Dispersion:
    """chi_k = -2 n Jt(k / omega_B).

    Periodic (pulsed) drives use the ring grid k = 2 pi m / M, where the values
    are exactly the pulse weights. Open chains use a dense grid of
    ``dense_factor * M`` points on [-pi, pi); there mode independence is only
    approximate.
    """
    if waveform.M != config.M:
        raise DomainError("waveform and lattice disagree on M")
    if waveform.kind == "pulsed":
        k = 2.0 * math.pi * np.arange(config.M) / config.M
        chi = -2.0 * config.n * waveform.pulse_weights.astype(complex)
        return Dispersion(k, chi, config, True)
    k = momentum_grid(LatticeConfig(config.M, config.n, config.omega_B, config.q, False), dense_factor)
    chi = -2.0 * config.n * drive_at_momentum(waveform, k).astype(complex)
    return Dispersion(k, chi, config, False)


def extract_couplings(
    waveform: DriveWaveform,
    config: LatticeConfig,
    method: str = "quadrature",
    points: int = QUADRATURE_POINTS,
    tol: float = 1e-12,
) -> CouplingProfile:
    """Recover J(r), 0 <= r < M, from the waveform's Fourier coefficients.

    Continuous drives use the trapezoidal rule on ``points`` samples per period
    (``method="analytic"`` reads the stored harmonics directly). Pulsed drives
    use the exact inverse DFT of the pulse weights, which yields entries at both
    rho and M - rho. Entries below ``tol`` times the largest are dropped.
    """
    M = config.M
    if waveform.kind == "pulsed":
        vals = np.array([waveform.fourier_coefficient(r) for r in range(M)])
    elif method == "analytic":
        vals = np.array([waveform.fourier_coefficient(r) for r in range(M)])
    elif method == "quadrature":
        t = np.arange(points) * waveform.tau_B / points
        f = waveform(t)
        vals = np.array([np.mean(np.exp(1j * r * waveform.omega_B * t) * f) for r in range(M)])
    else:
        raise DomainError(f"unknown method {method!r}")
    cut = tol * max(float(np.max(np.abs(vals))), 1e-300)
    entries = {r: (complex(v.real) if r == 0 else complex(v)) for r, v in enumerate(vals) if abs(v) > cut}
    return CouplingProfile(M, entries, waveform.label)


def peak_abs_chi_tau(waveform: DriveWaveform, config: LatticeConfig) -> float:
    """max_k |chi_k| tau_B, the per-period kick strength of the strongest mode."""
    d = dispersion(waveform, config)
    return float(np.max(np.abs(d.chi)) * config.tau_B)


def waveform_csv(waveform: DriveWaveform, samples_per_period: int = 1024) -> str:
    """CSV (t_over_tauB, J_tilde) over one Bloch period."""
    x = np.arange(samples_per_period) / samples_per_period
    if waveform.is_ideal:
        y = np.zeros_like(x)
        idx = (np.arange(waveform.M) * samples_per_period) // waveform.M
        y[idx] = waveform.pulse_weights * samples_per_period / waveform.M
    else:
        y = waveform(x * waveform.tau_B)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_over_tauB", "J_tilde"])
    for a, b in zip(x, y):
        w.writerow([repr(float(a)), repr(float(b))])
    return buf.getvalue()


def spectrum_csv(waveform: DriveWaveform, r_max: int | None = None) -> str:
    """CSV (r, re, im) of the Fourier coefficients for r = 0..r_max."""
    r_max = waveform.M - 1 if r_max is None else r_max
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "re", "im"])
    for r in range(r_max + 1):
        c = waveform.fourier_coefficient(r)
        w.writerow([r, repr(c.real), repr(c.imag)])
    return buf.getvalue()
