"""Predicted duration of field-driven quantum jumps.

If transitions are resonant energy exchanges with field modes near the
particle's Compton frequency omega_C = m c^2 / hbar, the linewidth of that
resonance is alpha * omega_C and the transition takes roughly its inverse.
For the electron that is ~1.8e-19 s: not instantaneous, but attosecond-
scale, consistent with bounds from time-resolved ionization experiments.
"""

from sedsim import load_constants, transition_time

pc = load_constants()
print(f"constants: {pc.source}")
print(f"alpha = {pc.alpha}")
print()
print("particle   omega_C [rad/s]   (alpha omega_C)^-1 [s]")
for name in sorted(pc.particle_masses):
    wc = pc.compton_frequency(name)
    print(f"{name:<9}  {wc:.6e}     {transition_time(name, pc):.6e}")
