"""Statistics of the synthesized driving field.

Draws an ensemble of band-limited field realizations and checks three
things against the closed-form autocovariance of the mode comb:

1. the single-time variance (lag 0), which for a low-frequency cutoff at
   omega_c approaches hbar omega_c^4 / (6 pi c^3),
2. the decay of the autocorrelation over a few lags,
3. stationarity: the same variance measured at t = 0 and at a far time.

Every realization draws one phase per mode, so the estimate error shrinks
like 1/sqrt(n_realizations).
"""

import math

import numpy as np

from sedsim import (FieldSpec, autocorrelation_check, autocovariance,
                    eval_field, make_field)


def main():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=256, components=3)
    print(f"band [{spec.omega_min}, {spec.omega_cutoff}] rad/s, "
          f"{spec.n_modes} modes, {spec.components} components")

    n = 4000
    fields = [make_field(spec, (11, i)) for i in range(n)]

    # lag-0 variance against the comb sum and the continuum integral
    target = autocovariance(spec, 0.0)
    cont = spec.hbar * spec.omega_cutoff**4 / (6.0 * math.pi * spec.c**3)
    samples = np.array([eval_field(f, 0.0)[0] for f in fields])
    var = np.mean(samples**2)
    se = np.std(samples**2, ddof=1) / math.sqrt(n)
    print(f"\nlag-0 variance: measured {var:.6f} +/- {se:.6f}")
    print(f"  comb closed form      {target:.6f}")
    print(f"  continuum w_c^4/6pic^3 {cont:.6f}  (z = {(var-target)/se:+.2f})")

    # autocorrelation decay; the series sum cross-checks the quadrature
    lags = [0.0, math.pi / (2 * spec.omega_cutoff), 2 * math.pi / spec.omega_cutoff]
    check = autocorrelation_check(fields, lags)
    print("\nlag        measured      quadrature    comb series    z")
    for lag, emp, ana, z in zip(check["lag"], check["empirical"],
                                check["analytic"], check["z_score"]):
        series = autocovariance(spec, lag)
        print(f"{lag:8.4f}  {emp:+.6f}  {ana:+.6f}  {series:+.6f}  {z:+.2f}")

    # stationarity: variance far from the time origin
    far = np.array([eval_field(f, 512.0)[0] for f in fields])
    var_far = np.mean(far**2)
    se_far = np.std(far**2, ddof=1) / math.sqrt(n)
    z = (var - var_far) / math.hypot(se, se_far)
    print(f"\nvariance at t=512: {var_far:.6f} +/- {se_far:.6f}  "
          f"(z vs t=0: {z:+.2f})")


if __name__ == "__main__":
    main()
