"""Independent oracles used to freeze expected values.

Everything here is computed without touching the quadrature or solver code
under test: Gaussian moments from the double-factorial recursion, and the
one-dimensional lubrication profile from direct quadrature of its closed
form.
"""

import numpy as np
from scipy.integrate import quad


def gauss_moment_1d(k: int) -> float:
    """E[X^k] for X ~ N(0,1): zero for odd k, (k-1)!! for even k."""
    if k < 0:
        raise ValueError
    if k % 2 == 1:
        return 0.0
    val = 1.0
    while k > 1:
        val *= k - 1
        k -= 2
    return val


def gauss_moment_3d(a: int, b: int, c: int) -> float:
    """<v_x^a v_y^b v_z^c> for the normalized Maxwellian."""
    return gauss_moment_1d(a) * gauss_moment_1d(b) * gauss_moment_1d(c)


def classical_reynolds_1d(H, U, p_left, p_right, x):
    """Closed-form pressure of (H^3 p')' = 6 U H' on [0, 1].

    Integrating once: H^3 p' = 6 U H + c1, so
    p(x) = p_left + 6 U I2(x) + c1 I3(x) with I2 = int dx/H^2,
    I3 = int dx/H^3 and c1 fixed by p(1) = p_right.
    """
    def i2(t):
        return quad(lambda s: 1.0 / H(s) ** 2, 0.0, t, epsabs=1e-13,
                    epsrel=1e-13)[0]

    def i3(t):
        return quad(lambda s: 1.0 / H(s) ** 3, 0.0, t, epsabs=1e-13,
                    epsrel=1e-13)[0]

    c1 = (p_right - p_left - 6.0 * U * i2(1.0)) / i3(1.0)
    return np.array([p_left + 6.0 * U * i2(t) + c1 * i3(t) for t in x])
