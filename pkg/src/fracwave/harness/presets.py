"""
Named problem setups with desk-scale defaults.

Each preset is a plain dict of RunConfig field values; anything set
explicitly on a RunConfig overrides it. Full-scale grids are reachable by
passing the corresponding J (or h) explicitly.
"""

from __future__ import annotations

S1 = "1+0.3*sin(pi*x/8)"
S2D = "1-0.4*cos(pi*x/4)*cos(pi*y/4)"

PRESETS: dict[str, dict] = {
    # u_tt = -(-d_xx)^s u + u^3 from a Gaussian at rest
    "example1": dict(
        bounds=((-32.0, 32.0),), J=(1024,), order="1", kappa=1.0, nonlinearity="cubic",
        phi="exp(-x^2)", psi="0", method="TSFP2", tau=2.0**-8, T=1.0,
    ),
    # two counter-propagating sech pulses, linear equation
    "soliton": dict(
        bounds=((-128.0, 128.0),), J=(4096,), order="1", kappa=1.0, nonlinearity="none",
        phi="sech(3*(x+10)) + sech(3*(x-10))",
        psi="3*sinh(3*(x+10))/cosh(3*(x+10))^2 - 3*sinh(3*(x-10))/cosh(3*(x-10))^2",
        method="TSFP2", tau=1e-3, T=20.0,
    ),
    # linear 2D dipole pulse
    "dispersion2d": dict(
        bounds=((-12.0, 12.0), (-12.0, 12.0)), J=(256, 256), order=S2D, kappa=0.2, nonlinearity="none",
        phi="5*(exp(-20*(x^2+(y+0.1)^2)) - exp(-20*(x^2+(y-0.1)^2)))", psi="0",
        method="TSFP2", tau=1e-3, T=1.0,
    ),
    # viscoacoustic two-layer medium with a Ricker-type source
    "seismic-two-layer": dict(
        bounds=((0.0, 2.0), (0.0, 2.0)), J=(200, 200), method="LFFP", tau=1e-4, T=0.4,
        seismic=dict(a1=0.0065, a2=0.0035, nu0=25.0, xc=(1.0, 0.85), c0_upper=11 / 18, c0_lower=1.0,
                     omega0=None),
    ),
}


def preset_defaults(name: str) -> dict:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
