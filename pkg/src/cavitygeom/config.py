"""Experiment configuration files and the preset catalogue.

Files store frequencies in Hz (``*_hz`` keys, couplings in Hz per atom pair);
the library works in rad/s. Coupling strengths can instead be fixed by
``peak_chi_tau``, the largest |chi_k| tau_B of the compiled drive, which
sets how strongly the fastest mode is kicked per Bloch period.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .lattice import CouplingProfile, DomainError, LatticeConfig, TreeCouplingSpec, tree_profile
from .twa import IntegratorSettings, NoiseSpec
from .waveform import (
    DEFAULT_PULSE_WIDTH,
    DriveWaveform,
    peak_abs_chi_tau,
    synthesize_continuous,
    synthesize_pulsed,
)

TWO_PI = 2.0 * math.pi
SCHEMA_VERSION = "1.0.0"


class ConfigError(ValueError):
    """Configuration failed schema validation; ``path`` locates the failure."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


_entry = {
    "type": "object",
    "required": ["r"],
    "properties": {"r": {"type": "integer", "minimum": 0}, "re": {"type": "number"}, "im": {"type": "number"}},
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "cavitygeom experiment",
    "type": "object",
    "required": ["lattice", "couplings", "drive", "T"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "version": {"type": "string"},
        "lattice": {
            "type": "object",
            "required": ["M", "n", "omega_B_hz", "q_hz"],
            "additionalProperties": False,
            "properties": {
                "M": {"type": "integer", "minimum": 2},
                "n": {"type": "integer", "minimum": 1},
                "omega_B_hz": {"type": "number", "exclusiveMinimum": 0},
                "q_hz": {"type": "number"},
                "periodic": {"type": "boolean"},
            },
        },
        "couplings": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "label": {"type": "string"},
                "entries_hz": {"type": "array", "items": _entry},
                "tree": {
                    "type": "object",
                    "required": ["s"],
                    "additionalProperties": False,
                    "properties": {"s": {"type": "number"}, "base_amplitude_hz": {"type": "number", "exclusiveMinimum": 0}},
                },
            },
            "oneOf": [{"required": ["entries_hz"]}, {"required": ["tree"]}],
        },
        "peak_chi_tau": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "drive": {"enum": ["continuous", "pulsed"]},
        "pulse_width": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "T": {"type": "number", "minimum": 0},
        "interaction_time_ms": {"type": ["number", "null"]},
        "trajectories": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "larmor_jitter_sigma_hz": {"type": "number", "minimum": 0},
                "site_jitter_sigma_hz": {"type": "number", "minimum": 0},
                "jitter_time_s": {"type": ["number", "null"], "minimum": 0},
                "crosstalk_epsilon": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
                "readout_dephasing": {"type": "boolean"},
                "jitter_enabled": {"type": "boolean"},
                "crosstalk_enabled": {"type": "boolean"},
            },
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["adaptive", "fixed"]},
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "steps_per_pulse": {"type": "integer", "minimum": 1},
                "steps_per_period": {"type": "integer", "minimum": 1},
                "frame": {"enum": ["rotating", "lab"]},
            },
        },
    },
}


def _hz(x: float) -> float:
    """rad/s -> Hz, rounded so that file round trips are exact."""
    return float(f"{x / TWO_PI:.12g}")


@dataclass(frozen=True)
class ExperimentConfig:
    """A complete, unit-normalised experiment description (rad/s inside)."""

    lattice: LatticeConfig
    couplings: CouplingProfile | TreeCouplingSpec
    drive: str = "pulsed"
    T: float = 2
    trajectories: int = 500
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    output: str = "out"
    name: str = "custom"
    peak_chi_tau: float | None = None
    pulse_width: float = DEFAULT_PULSE_WIDTH
    interaction_time_ms: float | None = None
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    frame: str = "rotating"

    def __post_init__(self):
        if self.drive not in ("continuous", "pulsed"):
            raise DomainError(f"unknown drive {self.drive!r}")
        if self.drive == "pulsed" and not self.lattice.periodic:
            raise DomainError("pulsed drives need a periodic lattice")
        if self.couplings.M != self.lattice.M:
            raise DomainError("couplings and lattice disagree on M")

    # ---------------------------------------------------------------- physics

    def base_profile(self) -> CouplingProfile:
        c = self.couplings
        return tree_profile(c) if isinstance(c, TreeCouplingSpec) else c

    def _synth(self, profile):
        if self.drive == "pulsed":
            return synthesize_pulsed(profile, self.lattice, self.pulse_width)
        return synthesize_continuous(profile, self.lattice)

    def profile(self) -> CouplingProfile:
        """Couplings in rad/s, rescaled to ``peak_chi_tau`` when that is set.

        When J(0) is generated automatically it scales with the rest, so the
        drive shape is preserved.
        """
        base = self.base_profile()
        if self.peak_chi_tau is None:
            return base
        peak = peak_abs_chi_tau(self._synth(base), self.lattice)
        if peak <= 0:
            raise DomainError("drive has vanishing dispersion; cannot set peak_chi_tau")
        return base.scaled(self.peak_chi_tau / peak)

    def waveform(self) -> DriveWaveform:
        return self._synth(self.profile())

    # ------------------------------------------------------------ serialisation

    def to_dict(self) -> dict:
        L = self.lattice
        c = self.couplings
        if isinstance(c, TreeCouplingSpec):
            couplings = {"tree": {"s": c.s, "base_amplitude_hz": _hz(c.base_amplitude)}}
        else:
            couplings = {
                "label": c.label,
                "entries_hz": [{"r": r, "re": _hz(v.real), "im": _hz(v.imag)} for r, v in c.entries.items()],
            }
        nz = self.noise
        integ = self.integrator
        return {
            "version": SCHEMA_VERSION,
            "name": self.name,
            "lattice": {
                "M": L.M,
                "n": L.n,
                "omega_B_hz": _hz(L.omega_B),
                "q_hz": _hz(L.q),
                "periodic": L.periodic,
            },
            "couplings": couplings,
            "peak_chi_tau": self.peak_chi_tau,
            "drive": self.drive,
            "pulse_width": self.pulse_width,
            "T": self.T,
            "interaction_time_ms": self.interaction_time_ms,
            "trajectories": self.trajectories,
            "seed": self.seed,
            "output": self.output,
            "noise": {
                "larmor_jitter_sigma_hz": _hz(nz.larmor_jitter_sigma),
                "site_jitter_sigma_hz": _hz(nz.site_jitter_sigma),
                "jitter_time_s": nz.jitter_time,
                "crosstalk_epsilon": nz.crosstalk_epsilon,
                "readout_dephasing": nz.readout_dephasing,
                "jitter_enabled": nz.jitter_enabled,
                "crosstalk_enabled": nz.crosstalk_enabled,
            },
            "integrator": {
                "method": integ.method,
                "rtol": integ.rtol,
                "steps_per_pulse": integ.steps_per_pulse,
                "steps_per_period": integ.steps_per_period,
                "frame": self.frame,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        validate_config(data)
        L = data["lattice"]
        periodic = bool(L.get("periodic", data["drive"] == "pulsed"))
        lattice = LatticeConfig(L["M"], L["n"], TWO_PI * L["omega_B_hz"], TWO_PI * L["q_hz"], periodic)
        c = data["couplings"]
        if "tree" in c:
            couplings = TreeCouplingSpec(c["tree"]["s"], L["M"], TWO_PI * c["tree"].get("base_amplitude_hz", 1.0 / TWO_PI))
        else:
            entries = {}
            for e in c["entries_hz"]:
                if e["r"] >= L["M"]:
                    raise ConfigError(f"distance {e['r']} must be below M = {L['M']}", "$.couplings.entries_hz")
                entries[e["r"]] = TWO_PI * complex(e.get("re", 0.0), e.get("im", 0.0))
            couplings = CouplingProfile(L["M"], entries, c.get("label", ""))
        nz = data.get("noise", {})
        noise = NoiseSpec(
            larmor_jitter_sigma=TWO_PI * nz.get("larmor_jitter_sigma_hz", 0.0),
            site_jitter_sigma=TWO_PI * nz.get("site_jitter_sigma_hz", 0.0),
            jitter_time=nz.get("jitter_time_s"),
            crosstalk_epsilon=nz.get("crosstalk_epsilon", 0.0),
            readout_dephasing=nz.get("readout_dephasing", False),
            jitter_enabled=nz.get("jitter_enabled", True),
            crosstalk_enabled=nz.get("crosstalk_enabled", True),
        )
        ig = data.get("integrator", {})
        integ = IntegratorSettings(
            method=ig.get("method", "adaptive"),
            rtol=ig.get("rtol", 1e-9),
            steps_per_pulse=ig.get("steps_per_pulse", 64),
            steps_per_period=ig.get("steps_per_period", 4096),
        )
        try:
            return cls(
                lattice=lattice,
                couplings=couplings,
                drive=data["drive"],
                T=data["T"],
                trajectories=data.get("trajectories", 500),
                noise=noise,
                seed=data.get("seed", 0),
                output=data.get("output", "out"),
                name=data.get("name", "custom"),
                peak_chi_tau=data.get("peak_chi_tau"),
                pulse_width=data.get("pulse_width", DEFAULT_PULSE_WIDTH),
                interaction_time_ms=data.get("interaction_time_ms"),
                integrator=integ,
                frame=ig.get("frame", "rotating"),
            )
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def validate_config(data) -> None:
    """Raise :class:`ConfigError` with a JSON path when ``data`` breaks the schema."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path)
        raise ConfigError(e.message, path)


# -------------------------------------------------------------- presets

# Parameter rows (omega_B/2pi in Hz per site, q/2pi in Hz, interaction time in ms).
TABLE_ROWS = {
    "all_to_all": (None, 580.0, 0.1),
    "distance": (12460.0, 1100.0, 0.2),
    "growth": (1530.0, 290.0, 1.97),
    "wrap": (1520.0, 70.0, 3.95),
    "geometry": (1520.0, 290.0, 1.32),
}

# Gradient used where the listed configuration had none (all-to-all): a
# single pulse per Bloch period realises uniform coupling on the ring.
FALLBACK_OMEGA_B_HZ = 12460.0

PRESET_NAMES = (
    "all_to_all",
    "localized",
    "distance_r",
    "ring",
    "chains_r3",
    "ladder_afm",
    "cylinder",
    "mobius",
    "tree_s",
)

DEFAULT_PEAK_CHI_TAU = 3.0


def bloch_periods(interaction_time_ms: float, omega_B_hz: float) -> int:
    """Whole Bloch periods closest to the interaction time.

    Partial periods give some momenta one kick more than others, so presets
    always run an integer number of periods.
    """
    return max(1, int(round(interaction_time_ms * 1e-3 * omega_B_hz)))


def _make(name, row, M, periodic, entries, drive, peak=DEFAULT_PEAK_CHI_TAU, label=None, couplings=None, n=10_000):
    fB, q_hz, t_ms = TABLE_ROWS[row]
    fB = FALLBACK_OMEGA_B_HZ if fB is None else fB
    lattice = LatticeConfig(M, n, TWO_PI * fB, TWO_PI * q_hz, periodic)
    if couplings is None:
        couplings = CouplingProfile(M, entries, label or name)
    return ExperimentConfig(
        lattice=lattice,
        couplings=couplings,
        drive=drive,
        T=bloch_periods(t_ms, fB),
        trajectories=500,
        noise=NoiseSpec(readout_dephasing=True),
        seed=0,
        output=f"out/{label or name}",
        name=label or name,
        peak_chi_tau=peak,
        interaction_time_ms=t_ms,
    )


def preset(name: str, **params) -> ExperimentConfig:
    """Configuration reproducing one of the catalogued experiments.

    ``distance_r`` takes ``r`` (default 10); ``tree_s`` takes ``s`` (default 1).
    Every preset accepts ``M`` to change the site count where meaningful.
    Couplings are given in relative units and scaled by ``peak_chi_tau``.
    """
    p = dict(params)
    if name == "all_to_all":
        M = p.pop("M", 18)
        cfg = _make(name, "all_to_all", M, True, {r: 1.0 for r in range(M)}, "pulsed")
    elif name == "localized":
        M = p.pop("M", 18)
        cfg = _make(name, "distance", M, False, {0: 1.0}, "continuous")
    elif name == "distance_r":
        M = p.pop("M", 18)
        r = int(p.pop("r", 10))
        if not 0 < r < M:
            raise DomainError(f"distance r={r} outside (0, {M})")
        cfg = _make(name, "distance", M, False, {r: 1.0}, "continuous", label=f"distance_r{r}")
    elif name == "ring":
        M = p.pop("M", 16)
        cfg = _make(name, "geometry", M, True, {1: 1.0}, "pulsed", peak=2.0)
    elif name == "chains_r3":
        M = p.pop("M", 16)
        cfg = _make(name, "growth", M, True, {3: 1.0}, "pulsed")
    elif name == "ladder_afm":
        M = p.pop("M", 18)
        cfg = _make(name, "geometry", M, False, {1: -1.0, 2: -1.0}, "continuous")
    elif name == "cylinder":
        M = p.pop("M", 18)
        cfg = _make(name, "geometry", M, True, {2: 1.0, M // 2: -1.0}, "pulsed")
    elif name == "mobius":
        M = p.pop("M", 18)
        cfg = _make(name, "geometry", M, True, {1: 1.0, M // 2: -1.0}, "pulsed")
    elif name == "tree_s":
        M = p.pop("M", 16)
        s = float(p.pop("s", 1.0))
        spec = TreeCouplingSpec(s, M, 1.0)
        cfg = _make(name, "geometry", M, True, None, "pulsed", label=f"tree_s{s:g}", couplings=spec)
    else:
        raise DomainError(f"unknown preset {name!r}; valid names: {', '.join(PRESET_NAMES)}")
    if "peak_chi_tau" in p:
        cfg = replace(cfg, peak_chi_tau=float(p.pop("peak_chi_tau")))
    if p:
        raise DomainError(f"unused preset parameters: {sorted(p)}")
    return cfg


def preset_catalog() -> list[dict]:
    """One summary line per preset, with the interaction-time arithmetic."""
    out = []
    for name in PRESET_NAMES:
        c = preset(name)
        fB = c.lattice.omega_B / TWO_PI
        out.append({
            "name": name,
            "label": c.name,
            "M": c.lattice.M,
            "periodic": c.lattice.periodic,
            "drive": c.drive,
            "omega_B_hz": fB,
            "q_hz": c.lattice.q / TWO_PI,
            "interaction_time_ms": c.interaction_time_ms,
            "T_exact": c.interaction_time_ms * 1e-3 * fB,
            "T": c.T,
            "peak_chi_tau": c.peak_chi_tau,
        })
    return out
