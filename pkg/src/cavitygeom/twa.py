"""Truncated Wigner simulation of spin-1 pair creation in a driven array.

Each site i carries three mean-field amplitudes (zeta_+, zeta_0, zeta_-) with
|zeta|^2 counting atoms. The exchange drive Jt(t) couples every site to the
collective raising operator, and a field gradient detunes site l by
omega_B * l. Amplitudes are stored in the frame co-rotating with each site's
Larmor precession, where the gradient appears as phase factors on the
exchange term instead.

Equations of motion (rotating frame, P_l = exp(-i omega_B l t)):

    s_l   = sqrt2 (conj(z0_l) zp_l + conj(zm_l) z0_l)
    S     = sum_l P_l s_l
    dzp_l = i sqrt2 J S conj(P_l) z0_l
    dz0_l = i q z0_l + i sqrt2 J (conj(S) P_l zp_l + S conj(P_l) zm_l)
    dzm_l = i sqrt2 J conj(S) P_l z0_l

With J > 0 and q > 0 the m = 0 condensate is unstable to pair creation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .integrate import IntegrationError, dopri5, rk4
from .lattice import DomainError, LatticeConfig
from .waveform import DriveWaveform

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class TrajectoryState:
    """One Wigner realisation: 3M amplitudes ordered (+1, 0, -1) per site."""

    zeta: np.ndarray
    t: float = 0.0

    @property
    def M(self) -> int:
        return len(self.zeta) // 3

    @property
    def sites(self) -> np.ndarray:
        """Amplitudes reshaped to (M, 3)."""
        return self.zeta.reshape(-1, 3)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.zeta) ** 2))

    def magnetization(self) -> float:
        a = self.sites
        return float(np.sum(np.abs(a[:, 0]) ** 2 - np.abs(a[:, 2]) ** 2))


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement imperfections.

    ``larmor_jitter_sigma`` is the rms global Larmor offset (rad/s) per
    realisation and ``site_jitter_sigma`` an optional independent per-site
    offset; both turn into a phase offset on zeta_(+-1) accumulated over
    ``jitter_time`` (defaults to the elapsed evolution time).
    ``readout_dephasing`` draws a uniform random phase of zeta_0 relative to
    zeta_(+-1) before F^x is formed, i.e. the readout quadrature is random
    from shot to shot. ``crosstalk_epsilon`` leaks that fraction of each
    site's signal to each neighbour.
    """

    larmor_jitter_sigma: float = 0.0
    site_jitter_sigma: float = 0.0
    jitter_time: float | None = None
    crosstalk_epsilon: float = 0.0
    readout_dephasing: bool = False
    jitter_enabled: bool = True
    crosstalk_enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.crosstalk_epsilon < 0.5:
            raise DomainError("crosstalk_epsilon must lie in [0, 0.5)")
        if self.larmor_jitter_sigma < 0 or self.site_jitter_sigma < 0:
            raise DomainError("jitter widths must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "larmor_jitter_sigma": self.larmor_jitter_sigma,
            "site_jitter_sigma": self.site_jitter_sigma,
            "jitter_time": self.jitter_time,
            "crosstalk_epsilon": self.crosstalk_epsilon,
            "readout_dephasing": self.readout_dephasing,
            "jitter_enabled": self.jitter_enabled,
            "crosstalk_enabled": self.crosstalk_enabled,
        }


@dataclass(frozen=True)
class EnsembleRecord:
    realization: int
    seed: int
    n_plus: np.ndarray
    n_zero: np.ndarray
    n_minus: np.ndarray
    fx: np.ndarray
    T: float


@dataclass(frozen=True)
class EnsembleArrays:
    """Records stacked into (realisations, M) arrays."""

    n_plus: np.ndarray
    n_zero: np.ndarray
    n_minus: np.ndarray
    fx: np.ndarray
    seeds: np.ndarray = field(default=None)
    T: float = float("nan")

    @property
    def count(self) -> int:
        return self.fx.shape[0]

    @property
    def M(self) -> int:
        return self.fx.shape[1]


def stack_records(records) -> EnsembleArrays:
    if isinstance(records, EnsembleArrays):
        return records
    records = list(records)
    if not records:
        raise DomainError("no records")
    return EnsembleArrays(
        np.array([r.n_plus for r in records]),
        np.array([r.n_zero for r in records]),
        np.array([r.n_minus for r in records]),
        np.array([r.fx for r in records]),
        np.array([r.seed for r in records], dtype=np.uint64),
        records[0].T,
    )


def derive_seed(seed: int, j: int) -> int:
    """Per-trajectory seed, independent of batching and ordering."""
    return int(np.random.SeedSequence([int(seed), int(j)]).generate_state(1, dtype=np.uint64)[0])


def _initial_sites(M: int, n: int, rng: np.random.Generator) -> np.ndarray:
    X = rng.normal(0.0, 0.5, size=(M, 3, 2))
    z = X[..., 0] + 1j * X[..., 1]
    z[:, 1] += math.sqrt(n)
    return z


def sample_initial(config: LatticeConfig, seed: int) -> TrajectoryState:
    """Coherent m = 0 state plus Wigner vacuum noise of variance 1/2 per mode."""
    rng = np.random.default_rng(seed)
    return TrajectoryState(_initial_sites(config.M, config.n, rng).reshape(-1), 0.0)


# ---------------------------------------------------------------- dynamics


class _Model:
    def __init__(self, config: LatticeConfig, frame: str, frozen_pump: bool):
        if frame not in ("lab", "rotating"):
            raise DomainError(f"unknown frame {frame!r}")
        self.l = np.arange(config.M, dtype=float)
        self.wB = config.omega_B
        self.q = config.q
        self.frame = frame
        self.frozen = frozen_pump

    def exchange(self, t, z, J, include_q=True):
        """Right-hand side with drive value J (per row) at times t (per row)."""
        zp, z0, zm = z[..., 0], z[..., 1], z[..., 2]
        s = SQRT2 * (np.conj(z0) * zp + np.conj(zm) * z0)
        out = np.empty_like(z)
        if self.frame == "rotating":
            P = np.exp(-1j * self.wB * np.multiply.outer(t, self.l))
            Pc = np.conj(P)
            S = np.sum(P * s, axis=1)
            g = 1j * SQRT2 * J * S
            gc = 1j * SQRT2 * J * np.conj(S)
            out[..., 0] = g[:, None] * Pc * z0
            out[..., 2] = gc[:, None] * P * z0
            if self.frozen:
                out[..., 1] = 0.0
            else:
                out[..., 1] = gc[:, None] * P * zp + g[:, None] * Pc * zm
        else:
            S = np.sum(s, axis=1)
            g = 1j * SQRT2 * J * S
            gc = 1j * SQRT2 * J * np.conj(S)
            out[..., 0] = g[:, None] * z0 - 1j * self.wB * self.l * zp
            out[..., 2] = gc[:, None] * z0 + 1j * self.wB * self.l * zm
            if self.frozen:
                out[..., 1] = 0.0
            else:
                out[..., 1] = gc[:, None] * zp + g[:, None] * zm
        if include_q:
            out[..., 1] += 1j * self.q * z0
        return out

    def free(self, z, t0, t1):
        """Exact evolution with the drive off."""
        z = z.copy()
        dt = t1 - t0
        z[..., 1] *= np.exp(1j * self.q * dt)
        if self.frame == "lab":
            z[..., 0] *= np.exp(-1j * self.wB * self.l * dt)
            z[..., 2] *= np.exp(1j * self.wB * self.l * dt)
        return z

    def to_frame(self, z, t):
        if self.frame == "rotating":
            return z
        z = z.copy()
        ph = np.exp(-1j * self.wB * self.l * t)
        z[..., 0] *= ph
        z[..., 2] *= np.conj(ph)
        return z

    def from_frame(self, z, t):
        if self.frame == "rotating":
            return z
        z = z.copy()
        ph = np.exp(1j * self.wB * self.l * t)
        z[..., 0] *= ph
        z[..., 2] *= np.conj(ph)
        return z


@dataclass(frozen=True)
class IntegratorSettings:
    """``method`` is "adaptive" (Dormand-Prince) or "fixed" (classical RK4).

    ``steps_per_pulse`` is the minimum number of steps across a full
    rectangular pulse; continuous drives use ``steps_per_period`` in fixed
    mode. ``drift_tol`` bounds the relative norm drift before an
    :class:`IntegrationError` is raised.
    """

    method: str = "adaptive"
    rtol: float = 1e-9
    atol: float = 1e-12
    steps_per_pulse: int = 64
    steps_per_period: int = 4096
    drift_tol: float = 1e-6
    frozen_pump: bool = False


def evolve_batch(
    z: np.ndarray,
    t0: float,
    waveform: DriveWaveform,
    config: LatticeConfig,
    duration: float,
    frame: str = "rotating",
    settings: IntegratorSettings = IntegratorSettings(),
) -> np.ndarray:
    """Advance a (rows, M, 3) batch of rotating-frame amplitudes.

    ``duration`` is in Bloch periods. Returns the rotating-frame amplitudes at
    t0 + duration * tau_B.
    """
    if waveform.M != config.M or abs(waveform.omega_B - config.omega_B) > 1e-9 * config.omega_B:
        raise DomainError("waveform and lattice config disagree on M or omega_B")
    if duration < 0:
        raise DomainError("duration must be nonnegative")
    model = _Model(config, frame, settings.frozen_pump)
    z = np.asarray(z, dtype=complex)
    # absolute tolerance on the condensate scale, identical for every batch
    atol = settings.atol * math.sqrt(config.n)
    t1 = t0 + duration * config.tau_B
    norm0 = np.sum(np.abs(z) ** 2, axis=(1, 2))
    y = model.to_frame(z, t0)

    def solve(f, a, b, max_step, fixed_steps):
        if settings.method == "fixed":
            return rk4(f, a, b, y_cur[0], fixed_steps)
        out, _ = dopri5(f, a, b, y_cur[0], rtol=settings.rtol, atol=atol, max_step=max_step)
        return out

    y_cur = [y]
    if waveform.kind == "continuous":
        def f(t, yy):
            return model.exchange(t, yy, waveform.envelope(t))

        steps = max(1, int(math.ceil(settings.steps_per_period * duration)))
        y_cur[0] = solve(f, t0, t1, np.inf, steps)
    else:
        width = waveform.pulse_width_fraction * waveform.tau_B
        tcur = t0
        for a, b, m in waveform.pulse_intervals(t0, t1):
            y_cur[0] = model.free(y_cur[0], tcur, a)
            tcur = a
            weight = waveform.pulse_weights[m]
            if weight == 0.0:
                continue
            if waveform.is_ideal:
                eps = weight * waveform.tau_B / waveform.M
                tk = a

                def kick(s, yy, eps=eps, tk=tk):
                    return eps * model.exchange(np.full(len(s), tk), yy, 1.0, include_q=False)

                y_cur[0] = solve(kick, 0.0, 1.0, 1.0 / settings.steps_per_pulse, settings.steps_per_pulse)
            else:
                height = weight / (waveform.M * waveform.pulse_width_fraction)

                def f(t, yy, height=height):
                    return model.exchange(t, yy, height)

                n_fixed = max(1, int(math.ceil(settings.steps_per_pulse * (b - a) / width)))
                y_cur[0] = solve(f, a, b, width / settings.steps_per_pulse, n_fixed)
            tcur = b
        y_cur[0] = model.free(y_cur[0], tcur, t1)
    out = model.from_frame(y_cur[0], t1)
    norm1 = np.sum(np.abs(out) ** 2, axis=(1, 2))
    drift = np.abs(norm1 - norm0) / norm0
    if np.any(drift > settings.drift_tol):
        i = int(np.argmax(drift))
        raise IntegrationError(f"norm drift {drift[i]:.3g} exceeds tolerance", drift=float(drift[i]), index=i)
    return out


def evolve(
    state: TrajectoryState,
    waveform: DriveWaveform,
    config: LatticeConfig,
    duration: float,
    frame: str = "rotating",
    settings: IntegratorSettings = IntegratorSettings(),
) -> TrajectoryState:
    """Advance one realisation by ``duration`` Bloch periods."""
    z = state.sites[None]
    out = evolve_batch(z, state.t, waveform, config, duration, frame, settings)
    return TrajectoryState(out[0].reshape(-1), state.t + duration * config.tau_B)


# ------------------------------------------------------------ measurement


def apply_crosstalk(x: np.ndarray, eps: float) -> np.ndarray:
    """x'_i = (1 - 2 eps) x_i + eps (x_(i-1) + x_(i+1)); edges leak one-sided."""
    x = np.asarray(x, dtype=float)
    if eps == 0.0:
        return x.copy()
    out = (1.0 - 2.0 * eps) * x
    out[..., 1:] += eps * x[..., :-1]
    out[..., :-1] += eps * x[..., 1:]
    return out


def _noise_draws(noise: NoiseSpec, M: int, rng: np.random.Generator):
    glob = rng.normal() * noise.larmor_jitter_sigma
    site = rng.normal(size=M) * noise.site_jitter_sigma
    theta = rng.uniform(0.0, 2.0 * math.pi)
    return glob, site, theta


def _measure_sites(z, t, noise: NoiseSpec, draws):
    """z: (M, 3) rotating-frame amplitudes of one realisation."""
    pops = np.abs(z) ** 2
    zp, z0, zm = z[:, 0], z[:, 1], z[:, 2]
    glob, site, theta = draws
    if noise.jitter_enabled and (noise.larmor_jitter_sigma > 0 or noise.site_jitter_sigma > 0):
        tj = t if noise.jitter_time is None else noise.jitter_time
        phi = (glob + site) * tj
        zp = zp * np.exp(-1j * phi)
        zm = zm * np.exp(1j * phi)
    if noise.readout_dephasing:
        z0 = z0 * np.exp(1j * theta)
    fx = SQRT2 * np.real(np.conj(zp) * z0 + np.conj(z0) * zm)
    if noise.crosstalk_enabled and noise.crosstalk_epsilon > 0:
        pops = apply_crosstalk(pops.T, noise.crosstalk_epsilon).T
        fx = apply_crosstalk(fx, noise.crosstalk_epsilon)
    return pops, fx


def measure(state: TrajectoryState, noise: NoiseSpec, seed: int, tau_B: float | None = None, realization: int = 0) -> EnsembleRecord:
    """Read populations and F^x = sqrt2 Re[conj(z+) z0 + conj(z0) z-] per site.

    Crosstalk acts on every population channel and on F^x, which the
    experiment reads out as a population difference.
    """
    rng = np.random.default_rng(seed)
    pops, fx = _measure_sites(state.sites, state.t, noise, _noise_draws(noise, state.M, rng))
    T = state.t / tau_B if tau_B else float("nan")
    return EnsembleRecord(realization, int(seed), pops[:, 0], pops[:, 1], pops[:, 2], fx, T)


def measurement_seed(traj_seed: int) -> int:
    return int(np.random.SeedSequence([int(traj_seed), 1]).generate_state(1, dtype=np.uint64)[0])


def run_ensemble(
    config: LatticeConfig,
    waveform: DriveWaveform,
    noise: NoiseSpec,
    trajectories: int,
    T: float,
    seed: int,
    frame: str = "rotating",
    settings: IntegratorSettings = IntegratorSettings(),
    batch_size: int = 512,
    progress: Callable[[int, int], None] | None = None,
) -> list[EnsembleRecord]:
    """Simulate ``trajectories`` independent realisations for T Bloch periods.

    Trajectory j draws its initial noise from ``derive_seed(seed, j)`` and its
    measurement noise from ``measurement_seed`` of that, so records do not
    depend on batching or ordering.
    """
    if trajectories < 1:
        raise DomainError("need at least one trajectory")
    seeds = [derive_seed(seed, j) for j in range(trajectories)]
    records: list[EnsembleRecord] = []
    for start in range(0, trajectories, batch_size):
        idx = range(start, min(start + batch_size, trajectories))
        z0 = np.stack([sample_initial(config, seeds[j]).sites for j in idx])
        try:
            z1 = evolve_batch(z0, 0.0, waveform, config, T, frame, settings)
        except IntegrationError as exc:
            j = start + (exc.index or 0)
            raise IntegrationError(f"trajectory {j}: {exc}", drift=exc.drift, index=j) from exc
        t = T * config.tau_B
        for row, j in enumerate(idx):
            st = TrajectoryState(z1[row].reshape(-1), t)
            rec = measure(st, noise, measurement_seed(seeds[j]), config.tau_B, j)
            records.append(EnsembleRecord(j, seeds[j], rec.n_plus, rec.n_zero, rec.n_minus, rec.fx, float(T)))
        if progress is not None:
            progress(len(records), trajectories)
    return records


def converted_fraction(records) -> float:
    """Mean fraction of atoms transferred to m = +-1."""
    a = stack_records(records)
    tot = a.n_plus + a.n_zero + a.n_minus
    return float(np.mean(np.sum(a.n_plus + a.n_minus, axis=1) / np.sum(tot, axis=1)))


def ensemble_csv(records: Sequence[EnsembleRecord]) -> str:
    lines = ["realization,site,n_plus,n_zero,n_minus,fx"]
    for r in records:
        for i in range(len(r.fx)):
            lines.append(
                f"{r.realization},{i},{float(r.n_plus[i])!r},{float(r.n_zero[i])!r},{float(r.n_minus[i])!r},{float(r.fx[i])!r}"
            )
    return "\n".join(lines) + "\n"


def read_ensemble_csv(text: str, T: float = float("nan")) -> list[EnsembleRecord]:
    data = np.genfromtxt(text.splitlines(), delimiter=",", names=True)
    data = np.atleast_1d(data)
    out = []
    for j in np.unique(data["realization"]).astype(int):
        rows = data[data["realization"] == j]
        rows = rows[np.argsort(rows["site"])]
        out.append(EnsembleRecord(int(j), 0, rows["n_plus"], rows["n_zero"], rows["n_minus"], rows["fx"], T))
    return out
