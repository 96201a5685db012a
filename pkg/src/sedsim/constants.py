"""Physical constants and the transition-duration calculator.

All SI values live in a JSON data file shipped with the package; nothing in
the logic hard-codes a constant. Dimensionless simulation modules never use
this layer, it exists for the attosecond-scale estimate and unit conversions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path


class ConstantsError(ValueError):
    """Raised for malformed constants files or unknown particle names."""


@dataclass(frozen=True)
class PhysicalConstants:
    """SI constants loaded from a data file.

    Attributes
    ----------
    alpha : float
        Fine-structure constant (dimensionless).
    hbar : float
        Reduced Planck constant in J s.
    c : float
        Speed of light in m/s.
    particle_masses : dict
        Rest masses in kg, keyed by particle name.
    source : str
        Provenance tag of the data file (e.g. the CODATA release).
    """

    alpha: float
    hbar: float
    c: float
    particle_masses: dict = field(default_factory=dict)
    source: str = ""

    def mass(self, particle: str) -> float:
        try:
            return self.particle_masses[particle]
        except KeyError:
            known = ", ".join(sorted(self.particle_masses))
            raise ConstantsError(
                f"unknown particle {particle!r}; available: {known}"
            ) from None

    def compton_frequency(self, particle: str) -> float:
        """Angular Compton frequency m c^2 / hbar in rad/s."""
        return self.mass(particle) * self.c**2 / self.hbar


def load_constants(path: str | Path | None = None) -> PhysicalConstants:
    """Load constants from JSON; defaults to the packaged CODATA file."""
    if path is None:
        text = resources.files("sedsim.data").joinpath("constants.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        raw = json.loads(text)
        consts = raw["constants"]
        return PhysicalConstants(
            alpha=float(consts["alpha"]),
            hbar=float(consts["hbar_J_s"]),
            c=float(consts["c_m_per_s"]),
            particle_masses={
                name: float(entry["mass_kg"])
                for name, entry in raw.get("particles", {}).items()
            },
            source=str(raw.get("source", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConstantsError(f"malformed constants file: {exc}") from exc


def transition_time_from(alpha: float, omega_compton: float) -> float:
    """Duration of a field-driven state transition, (alpha * omega_C)^-1."""
    if alpha <= 0 or omega_compton <= 0:
        raise ConstantsError("alpha and omega_compton must be positive")
    return 1.0 / (alpha * omega_compton)


def transition_time(
    particle: str = "electron", pc: PhysicalConstants | None = None
) -> float:
    """Transition duration in seconds for a named particle.

    The resonance that triggers a transition sits at the particle's Compton
    frequency; its inverse bandwidth (alpha * omega_C)^-1 sets the duration.
    For the electron this lands at ~1.8e-19 s, attosecond order.
    """
    if pc is None:
        pc = load_constants()
    return transition_time_from(pc.alpha, pc.compton_frequency(particle))
