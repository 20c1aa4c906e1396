"""Core lattice types: site configuration, coupling profiles and 2-adic helpers."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class FloquetValidityWarning(UserWarning):
    """The time-averaged (Floquet) description is not well separated."""


@dataclass(frozen=True)
class LatticeConfig:
    """Array of M sites with n atoms each in a linear field gradient.

    Frequencies are angular (rad/s). ``omega_B`` is the Larmor frequency
    difference between neighbouring sites, ``q`` the quadratic Zeeman shift.
    """

    M: int
    n: int
    omega_B: float
    q: float
    periodic: bool = False

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise DomainError(f"M must be an integer >= 2, got {self.M}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if not (np.isfinite(self.omega_B) and self.omega_B > 0):
            raise DomainError(f"omega_B must be positive, got {self.omega_B}")
        if not np.isfinite(self.q):
            raise DomainError("q must be finite")

    @property
    def tau_B(self) -> float:
        return 2.0 * math.pi / self.omega_B

    def floquet_valid(self, max_abs_J: float = 0.0) -> bool:
        """True when n*max|J| < omega_B and q < omega_B."""
        return self.n * max_abs_J < self.omega_B and self.q < self.omega_B

    def check_floquet(self, max_abs_J: float = 0.0) -> bool:
        ok = self.floquet_valid(max_abs_J)
        if not ok:
            warnings.warn(
                "time-averaged description questionable: need n*max|J| < omega_B and q < omega_B",
                FloquetValidityWarning,
                stacklevel=2,
            )
        return ok


@dataclass(frozen=True)
class CouplingProfile:
    """Couplings J(r) for 0 <= r < M, in rad/s per atom pair.

    Negative distances are implied by hermiticity, J(-r) = conj(J(r)).
    ``J(0)`` may be absent, in which case synthesis fills it in.
    """

    M: int
    entries: Mapping[int, complex] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        clean = {}
        for r, v in dict(self.entries).items():
            r = int(r)
            if not 0 <= r < self.M:
                raise DomainError(f"distance {r} outside [0, {self.M})")
            v = complex(v)
            if not (np.isfinite(v.real) and np.isfinite(v.imag)):
                raise DomainError(f"coupling at r={r} is not finite")
            if r == 0 and abs(v.imag) > 1e-12 * max(1.0, abs(v)):
                raise DomainError("on-site coupling J(0) must be real")
            clean[r] = v
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    def __getitem__(self, r: int) -> complex:
        r = int(r)
        if r < 0:
            return self.entries.get(-r, 0j).conjugate()
        return self.entries.get(r, 0j)

    def get(self, r: int, default: complex = 0j) -> complex:
        if r < 0:
            return complex(self.entries.get(-r, default)).conjugate()
        return self.entries.get(r, default)

    @property
    def has_onsite(self) -> bool:
        return 0 in self.entries

    def is_real(self, tol: float = 1e-12) -> bool:
        return all(abs(v.imag) <= tol * max(1.0, abs(v)) for v in self.entries.values())

    def max_abs(self) -> float:
        return max((abs(v) for v in self.entries.values()), default=0.0)

    def scaled(self, factor: float, label: str | None = None) -> "CouplingProfile":
        return CouplingProfile(
            self.M, {r: factor * v for r, v in self.entries.items()}, self.label if label is None else label
        )

    def with_onsite(self, J0: float) -> "CouplingProfile":
        entries = dict(self.entries)
        entries[0] = complex(J0)
        return CouplingProfile(self.M, entries, self.label)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "entries": [{"r": r, "re": v.real, "im": v.imag} for r, v in self.entries.items()],
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CouplingProfile":
        entries = {int(e["r"]): complex(e.get("re", 0.0), e.get("im", 0.0)) for e in data["entries"]}
        return cls(int(data["M"]), entries, data.get("label", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CouplingProfile":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class TreeCouplingSpec:
    """Power-law couplings restricted to power-of-two distances."""

    s: float
    M: int = 16
    base_amplitude: float = 1.0

    def __post_init__(self):
        if not _is_power_of_two(self.M) or self.M < 4:
            raise DomainError(f"tree profiles need M a power of two >= 4, got {self.M}")
        if not self.base_amplitude > 0:
            raise DomainError("base_amplitude must be positive")


def _is_power_of_two(x: int) -> bool:
    return int(x) == x and x > 0 and (int(x) & (int(x) - 1)) == 0


def monna_map(i: int, bit_width: int) -> int:
    """Reverse the ``bit_width``-bit binary representation of ``i``."""
    if bit_width < 0 or not 0 <= i < (1 << bit_width):
        raise DomainError(f"site {i} not representable in {bit_width} bits")
    out = 0
    for _ in range(bit_width):
        out = (out << 1) | (i & 1)
        i >>= 1
    return out


def two_adic_valuation(r: int) -> int:
    if r == 0:
        raise DomainError("the 2-adic valuation of 0 is undefined here")
    r = abs(int(r))
    return (r & -r).bit_length() - 1


def two_adic_norm(r: int) -> Fraction:
    """|r|_2 = 2**-a where 2**a is the largest power of two dividing r."""
    return Fraction(1, 1 << two_adic_valuation(r))


def tree_profile(spec: TreeCouplingSpec) -> CouplingProfile:
    """Couplings J(r) = base * r**s at r = 1, 2, 4, ..., M/2, mirrored onto the ring.

    On a ring, distance r and M - r are the same class, so J(M - r) = J(r).
    r = M/2 is its own mirror and is stored once. J(0) is left for the
    waveform synthesis rule.
    """
    entries = {}
    r = 1
    while r <= spec.M // 2:
        entries[r] = spec.base_amplitude * float(r) ** spec.s
        r *= 2
    for r, v in list(entries.items()):
        mirror = spec.M - r
        if mirror != r:
            entries[mirror] = v
    return CouplingProfile(spec.M, entries, f"tree_s{spec.s:g}")


def tree_support(M: int) -> list[int]:
    """Distances r = 1, 2, 4, ..., M/2 carrying a tree coupling."""
    out, r = [], 1
    while r <= M // 2:
        out.append(r)
        r *= 2
    return out
