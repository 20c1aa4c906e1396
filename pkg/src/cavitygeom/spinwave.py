"""Early-time (linearised) spin-wave model of pulsed pair creation.

Each pulsed Bloch period acts on a mode pair (a_k, b^dagger_{-k}) with the
2x2 map Pi = Q X, where X is the kick from the drive and Q the free phase
winding from the quadratic Zeeman shift.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .lattice import DomainError
from .series import DistanceSeries
from .waveform import Dispersion

_KICK = np.array([[-1.0, -1.0], [1.0, 1.0]])


@dataclass(frozen=True)
class ModePropagator:
    k: float
    Pi: np.ndarray
    A: float
    lambda_plus: complex
    lambda_minus: complex

    @property
    def unstable(self) -> bool:
        return abs(self.A) > 1.0

    @property
    def growth(self) -> float:
        return max(abs(self.lambda_plus), abs(self.lambda_minus))


def bloch_propagator(chi_k: float, q: float, tau_B: float, k: float = float("nan")) -> ModePropagator:
    """One-period map Pi = Q X for a mode with dispersion chi_k.

    Eigenvalues are A +- sqrt(A^2 - 1) with A = cos(q tau) - chi tau sin(q tau),
    principal branch; in the stable band the root with positive imaginary part
    comes first.
    """
    ct = float(chi_k) * tau_B
    qt = q * tau_B
    Q = np.diag([np.exp(-1j * qt), np.exp(1j * qt)])
    X = np.eye(2) + 1j * ct * _KICK
    A = math.cos(qt) - ct * math.sin(qt)
    root = np.sqrt(complex(A * A - 1.0))
    lp, lm = A + root, A - root
    if abs(A) <= 1.0 and lp.imag < lm.imag:
        lp, lm = lm, lp
    if A == 1.0 or A == -1.0:
        lp = lm = complex(A)
    return ModePropagator(k, Q @ X, A, complex(lp), complex(lm))


def structure_factor_one_period(chi_k: float, q: float, tau_B: float, n: float, chi_minus_k: float | None = None) -> float:
    """|F_k|^2 after one pulsed period from the coherent initial state.

    Sum of the +k and -k contributions (n/2)[1 - 4 chi tau cos sin + (2 chi tau sin)^2];
    ``chi_minus_k`` defaults to ``chi_k``.
    """
    s, c = math.sin(q * tau_B), math.cos(q * tau_B)
    total = 0.0
    for chi in (chi_k, chi_k if chi_minus_k is None else chi_minus_k):
        ct = chi * tau_B
        total += 0.5 * n * (1.0 - 4.0 * ct * c * s + (2.0 * ct * s) ** 2)
    return total


def dephased_structure_factor(chi_k: float, q: float, tau_B: float, n: float, T: int, chi_minus_k: float | None = None) -> float:
    """|F_k|^2 after T pulsed periods when F^x is read at a uniformly random phase.

    Averaging the readout quadrature turns the pair amplitude into the
    Frobenius norm of the T-period map: (n/4) sum_{+-k} ||Pi^T||_F^2. This is
    the linear-regime oracle for ensembles measured with readout dephasing.
    """
    total = 0.0
    for chi in (chi_k, chi_k if chi_minus_k is None else chi_minus_k):
        P = np.linalg.matrix_power(bloch_propagator(chi, q, tau_B).Pi, int(T))
        total += 0.25 * n * float(np.sum(np.abs(P) ** 2))
    return total


@dataclass(frozen=True)
class StructureFactorPrediction:
    k: np.ndarray
    magnitude: np.ndarray
    T: int
    model: str

    @property
    def normalized(self) -> np.ndarray:
        peak = np.max(self.magnitude)
        return self.magnitude / peak if peak > 0 else np.ones_like(self.magnitude)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k_over_pi", "magnitude"])
        for a, b in zip(self.k, self.magnitude):
            w.writerow([repr(float(a) / math.pi), repr(float(b))])
        return buf.getvalue()


def _minus_k_index(d: Dispersion) -> np.ndarray:
    M = len(d.k)
    if d.periodic:
        return (-np.arange(M)) % M
    # dense open grid on [-pi, pi): -k_j lives at index N - j
    return (M - np.arange(M)) % M


def structure_factor_growth(dispersion: Dispersion, T: int, n: float | None = None, model: str = "power_law") -> StructureFactorPrediction:
    """Predicted |F_k| after T Bloch periods.

    ``power_law`` gives sqrt(n) (2 tau sin(q tau))^T |chi_k|^T, the strong
    growth limit whose shape is |Jt(k/omega_B)|^T. ``exact_one_period`` is the
    exact T = 1 linear result, ``dephased`` the exact linear result for any T
    with a randomised readout phase.
    """
    if int(T) != T or T < 1:
        raise DomainError("T must be an integer >= 1")
    cfg = dispersion.config
    n = cfg.n if n is None else n
    tau, q = cfg.tau_B, cfg.q
    chi = dispersion.chi.real
    if model == "power_law":
        mag = math.sqrt(n) * (2.0 * tau * abs(math.sin(q * tau))) ** T * np.abs(chi) ** T
    elif model in ("exact_one_period", "dephased"):
        if model == "exact_one_period" and T != 1:
            raise DomainError("exact_one_period is defined for T = 1 only")
        mk = chi[_minus_k_index(dispersion)]
        if model == "exact_one_period":
            sq = [structure_factor_one_period(a, q, tau, n, b) for a, b in zip(chi, mk)]
        else:
            sq = [dephased_structure_factor(a, q, tau, n, T, b) for a, b in zip(chi, mk)]
        mag = np.sqrt(np.asarray(sq))
    else:
        raise DomainError(f"unknown model {model!r}")
    return StructureFactorPrediction(dispersion.k.copy(), np.asarray(mag, dtype=float), int(T), model)


def predict_correlations(dispersion: Dispersion, T: int) -> DistanceSeries:
    """C(d) as the inverse Fourier transform of |chi_k|^(2T), with C(0) = 1.

    Independent momentum modes make the real-space covariance a convolution;
    for a nearest-neighbour drive this is binom(4T, d + 2T).
    """
    if int(T) != T or T < 1:
        raise DomainError("T must be an integer >= 1")
    M = dispersion.config.M
    power = np.abs(dispersion.chi) ** (2 * T)
    k = dispersion.k
    if dispersion.periodic:
        d = np.arange(M)
    else:
        d = np.arange(-(M - 1), M)
    C = (np.exp(1j * np.outer(d, k)) @ power).real / len(k)
    c0 = C[d == 0][0]
    if c0 <= 0:
        raise DomainError("dispersion vanishes identically")
    return DistanceSeries(d, C / c0, dispersion.periodic)


def fit_log_amplitude(data, model, min_fraction: float = 0.1):
    """Single amplitude A minimising sum (log data - log(A model))^2.

    Modes with ``model`` below ``min_fraction`` of its maximum are ignored.
    Returns (A, rms shape residual, mask). The residual is the rms over the
    used modes of (data - A model) divided by max(data).
    """
    data = np.asarray(data, dtype=float)
    model = np.asarray(model, dtype=float)
    mask = (model >= min_fraction * model.max()) & (data > 0) & (model > 0)
    if not mask.any():
        raise DomainError("no modes available for the amplitude fit")
    logA = float(np.mean(np.log(data[mask]) - np.log(model[mask])))
    A = math.exp(logA)
    resid = (data[mask] - A * model[mask]) / data.max()
    return A, float(np.sqrt(np.mean(resid**2))), mask


def exchange_coupling_from_cavity(n_ph: float, Omega: float, delta_c: float, omega_z: float, kappa: float):
    """Cavity-mediated flip-flop amplitudes.

    J_pm = n_ph Omega^2 / 4 * delta_pm / (delta_pm^2 + kappa^2) with
    delta_pm = delta_c -+ omega_z, and the net exchange Jt = -(J_+ + J_-).
    """
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    out = []
    for dlt in (delta_c - omega_z, delta_c + omega_z):
        out.append(n_ph * Omega**2 / 4.0 * dlt / (dlt**2 + kappa**2))
    Jp, Jm = out
    return Jp, Jm, -(Jp + Jm)
