"""Regenerate the data tables shipped in ``src/eaem/data``.

amplitudes_kirkland_300keV.csv
    g_el(theta) = f_el(theta) / a0 for H, C, N, O, S at 300 keV from the
    Kirkland (2010) electron form-factor parametrization
    f(q) = sum_i a_i / (q^2 + b_i) + sum_i c_i exp(-d_i q^2), q = 2 sin(theta/2) / lambda
    in 1/Angstrom and f in Angstrom, scaled by gamma for the relativistic mass.

inner_shell_default.csv
    K/L ionization cross sections proportional to (electrons in shell) / (edge
    energy), scaled so the 30 nm builtin composition gives 8.6e-4.

Run from the repository root: ``python scripts/make_data_tables.py``.
"""

from pathlib import Path

import numpy as np

from eaem.constants import BOHR_RADIUS_NM
from eaem.kinematics import electron_parameters
from eaem.specimen import builtin_composition

# rows a, b, c, d; Kirkland, Advanced Computing in Electron Microscopy, 2nd ed., App. C
KIRKLAND = {
    "H": [[4.20298320e-03, 6.27762505e-02, 3.00907347e-02],
          [2.25350888e-01, 2.25366950e-01, 2.25331756e-01],
          [6.77756695e-02, 3.56609240e-03, 2.76135815e-02],
          [4.38854001e+00, 4.03884823e-01, 1.44490166e+00]],
    "C": [[2.12080767e-01, 1.99811865e-01, 1.68254385e-01],
          [2.08605417e-01, 2.08610186e-01, 5.57870773e+00],
          [1.42048360e-01, 3.63830672e-01, 8.35012044e-04],
          [1.33311887e+00, 3.80800263e+00, 4.03982620e-02]],
    "N": [[5.33015554e-01, 5.29008883e-02, 9.24159648e-02],
          [2.90952515e-01, 1.03547896e+01, 1.03540028e+01],
          [2.61799101e-01, 8.80262108e-04, 1.10166555e-01],
          [2.76252723e+00, 3.47681236e-02, 9.93421736e-01]],
    "O": [[3.39969204e-01, 3.07570172e-01, 1.30369072e-01],
          [3.81570280e-01, 3.81571436e-01, 1.91919745e+01],
          [8.83326058e-02, 1.96586700e-01, 9.96220028e-04],
          [7.60635525e-01, 2.07401094e+00, 3.03266869e-02]],
    "S": [[1.01646916e+00, 4.41766748e-01, 1.21503863e-01],
          [1.69181965e+00, 1.74180288e-01, 1.67011091e+02],
          [8.27966670e-01, 2.33022533e-02, 1.18302846e+00],
          [2.30342810e+00, 1.56954150e-01, 5.85782891e+00]],
}

# (electrons in shell, edge energy eV) for the K shell and, for S, the L2,3 shell
SHELLS = {
    "H": [],
    "C": [(2, 284.0)],
    "N": [(2, 401.0)],
    "O": [(2, 532.0)],
    "S": [(6, 165.0), (2, 2472.0)],
}
INNER_SHELL_TARGET = 8.6e-4

DATA = Path(__file__).resolve().parents[1] / "src" / "eaem" / "data"


def kirkland_f_nm(element, theta, beam):
    a, b, c, d = np.asarray(KIRKLAND[element])
    q = 2.0 * np.sin(theta / 2.0) / (beam.wavelength * 10.0)
    q2 = (q * q)[:, None]
    f_angstrom = (a / (q2 + b)).sum(axis=1) + (c * np.exp(-d * q2)).sum(axis=1)
    return beam.gamma * f_angstrom * 0.1


def main():
    beam = electron_parameters(300.0)
    theta = np.concatenate([[0.0], np.geomspace(1e-6, np.pi, 1800)])
    cols = [theta] + [kirkland_f_nm(el, theta, beam) / BOHR_RADIUS_NM for el in KIRKLAND]
    table = np.column_stack(cols)
    np.savetxt(DATA / "amplitudes_kirkland_300keV.csv", table, delimiter=",",
               fmt="%.10e", header="theta_rad,g_H,g_C,g_N,g_O,g_S", comments="")

    weight = {el: sum(n / e for n, e in shells) for el, shells in SHELLS.items()}
    areal = builtin_composition(30.0).areal_density
    scale = INNER_SHELL_TARGET / sum(areal[el] * weight[el] for el in weight)
    with open(DATA / "inner_shell_default.csv", "w") as fh:
        fh.write("element,sigma_nm2\n")
        for el in SHELLS:
            fh.write(f"{el},{scale * weight[el]:.17e}\n")


if __name__ == "__main__":
    main()
