"""Grid reference solutions: spectrum, unitary evolution, quantum potential.

Four short checks of the wave-equation layer used as the comparison target
for the trajectory ensembles:

- harmonic eigenvalues against (n + 1/2) hbar omega0,
- a displaced ground state swinging with the classical period, variance
  pinned at the ground-state value,
- the two algebraic forms of the quantum potential converging to each other
  at second order in the grid spacing,
- the hydrodynamic balance residual: small and grid-limited for the ground
  state, exactly structureless for a constant-density ring state.
"""

import math

import numpy as np

from sedsim import (GridSpec, evolve, gaussian_packet, navier_stokes_residual,
                    plane_wave, quantum_potential, residual_norms,
                    solve_stationary)

MASS = 1.0
DIFFUSION = 0.5  # hbar / (2 m) with hbar = 1
V = lambda x: 0.5 * x**2


def main():
    grid = GridSpec(-12.0, 12.0, 1000)
    energies, states = solve_stationary(grid, V, MASS, DIFFUSION, 6)
    print("n   E_n        E_n - (n + 1/2)")
    for n, e in enumerate(energies):
        print(f"{n}   {e:.6f}  {e - (n + 0.5):+.2e}")

    # coherent-state oscillation: <x>(t) = x0 cos(t), var(x) frozen at 1/2
    psi = gaussian_packet(grid, 1.5, math.sqrt(0.5), 0.0, MASS, DIFFUSION)
    print("\n   t     <x>       var(x)    norm-1")
    state = psi
    for _ in range(4):
        state = evolve(state, V, 1e-3, int(round(math.pi / 4 / 1e-3)))
        print(f"{state.time:5.3f}  {state.position_mean():+.4f}   "
              f"{state.position_var():.4f}   {state.norm() - 1.0:+.1e}")

    # the sqrt-density and velocity-field forms agree to O(dx^2)
    print("\nquantum potential, max gap between the two forms:")
    for n in (500, 1000, 2000):
        g = GridSpec(-12.0, 12.0, n)
        _, st = solve_stationary(g, V, MASS, DIFFUSION, 1)
        vq_a, mask_a = quantum_potential(st[0], form="sqrt-density")
        vq_b, mask_b = quantum_potential(st[0], form="velocity")
        # the velocity form goes non-finite one stencil width into the mask
        both = mask_a & mask_b & np.isfinite(vq_a) & np.isfinite(vq_b)
        gap = np.max(np.abs(vq_a[both] - vq_b[both]))
        print(f"  {n:5d} points: {gap:.3e}")

    resid, scale, mask = navier_stokes_residual(states[0], V, 1e-3)
    weighted, worst = residual_norms(states[0], resid, scale, mask)
    print(f"\nground-state balance residual: density-weighted {weighted:.2e}, "
          f"pointwise max {worst:.2e}")

    ring = plane_wave(GridSpec(0.0, 2 * math.pi, 256, boundary="periodic"),
                      3, MASS, DIFFUSION)
    ring_resid, _, _ = navier_stokes_residual(ring, 0.0, 1e-3)
    print(f"ring-state residual (flat density, uniform flow): "
          f"max |r| = {np.nanmax(np.abs(ring_resid)):.1e}")


if __name__ == "__main__":
    main()
