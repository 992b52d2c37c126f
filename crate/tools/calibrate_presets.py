"""One-off calibration of the nanjing-ode preset parameters.

Fits a subset of rates so that the hospitalized compartment D follows a
constructed target curve peaking at day 15 and decaying towards zero by
day 60. The printed values were pinned into crates/core/presets/ and are
regression fixtures from then on; rerunning this script is never part of
the build.
"""

import json

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

FIXED = {"b": 0.5, "delta": 0.02, "epsilon": 0.25, "frac_sympt": 0.7, "beta_rec": 0.1,
         "j_rec": 0.1, "l_death": 0.002, "m_death": 0.002}
FREE = ["theta", "c", "g", "h1", "mu"]
START = [0.8, 0.05, 0.1, 0.3, 0.1]
INITIAL = np.array([1.0, 0.0, 1e-3, 0, 0, 0, 0, 0, 0])
DAYS = np.arange(0, 61, 1.0)


def rhs(_t, x, p):
    s, q, e, a, i, d, r, _, _ = x
    inc = p["theta"] * s * (i + p["b"] * a)
    e_out = p["epsilon"] * e
    e_i = p["epsilon"] * p["frac_sympt"] * e
    return [
        -inc - p["c"] * s + p["delta"] * q,
        p["c"] * s - p["delta"] * q,
        inc - e_out,
        (e_out - e_i) - (p["g"] + p["beta_rec"]) * a,
        e_i - (p["j_rec"] + p["l_death"] + p["h1"]) * i,
        p["g"] * a + p["h1"] * i - (p["m_death"] + p["mu"]) * d,
        p["beta_rec"] * a + p["j_rec"] * i + p["mu"] * d,
        p["l_death"] * i,
        p["m_death"] * d,
    ]


def d_curve(free):
    p = dict(FIXED, **dict(zip(FREE, free)))
    sol = solve_ivp(rhs, (0, 60), INITIAL, t_eval=DAYS, args=(p,), rtol=1e-10, atol=1e-14)
    return sol.y[5]


target_shape = DAYS**3 * np.exp(-DAYS / 5.0)
target_shape /= target_shape.max()


def residual(free):
    d = d_curve(free)
    amp = d.max() if d.max() > 0 else 1.0
    return d / amp - target_shape


fit = least_squares(residual, START, bounds=([0.0] * len(FREE), [1.0] * len(FREE)))
rounded = [round(v, 4) for v in fit.x]
d = d_curve(rounded)
peak = int(np.argmax(d))
print(json.dumps(dict(FIXED, **dict(zip(FREE, rounded))), indent=2))
print(f"peak day {peak}, D(60)/D(peak) = {d[-1] / d[peak]:.4f}")
