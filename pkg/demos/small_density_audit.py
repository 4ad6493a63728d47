"""The pointwise small-density comparison with log rho has no uniform constant.

f_eps(0) = log eps is finite, so |f_eps(rho) - log rho| grows like |log rho|
as rho -> 0 while the bound eps/(eps+rho) + eps stays below 1 + eps.  The
integrated version, which is what the entropy estimates use, stays bounded.

Run: python3 demos/small_density_audit.py
"""

import numpy as np

from slogs.regularization import RegFamily, SampleSpec, entropy_gap_bound_ratio, validate_assumptions


def main():
    for eps in (1e-2, 1e-3, 1e-4):
        reg = RegFamily(eps)
        sups = [validate_assumptions(reg, SampleSpec(rho_min=r))["A4_small"].observed_sup for r in (1e-6, 1e-12, 1e-24)]
        integrated = np.max(entropy_gap_bound_ratio(reg, np.geomspace(1e-300, 1.0, 2000)))
        print(f"eps={eps:g}  pointwise sup for rho_min 1e-6, 1e-12, 1e-24: "
              + ", ".join(f"{s:6.2f}" for s in sups) + f"   integrated ratio sup: {integrated:.3f}")


if __name__ == "__main__":
    main()
