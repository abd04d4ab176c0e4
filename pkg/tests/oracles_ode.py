"""Independent reference values for 1D power problems u'' = |u|^q, u(+-1) = 0.

Two routes: shooting with an ODE integrator, and the first integral
(u')^2/2 = (h^a - |u|^a)/a, a = q + 1, which gives the half-width and the
moments of the even solution in closed form through Beta functions.
"""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import beta


def hit_time(h, q):
    """Time for w'' = |w|^q, w(0) = -h, w'(0) = 0 to reach w = 0."""
    event = lambda t, y: y[0]
    event.terminal = True
    event.direction = 1
    sol = solve_ivp(lambda t, y: [y[1], max(-y[0], 1e-300) ** q], (0, 1e4), [-h, 0.0], events=event, rtol=1e-12, atol=1e-14)
    return sol.t_events[0][0]


def shooting_depth(q):
    """Depth h = |w(0)| of the even solution on (-1, 1) found by shooting."""
    return brentq(lambda h: hit_time(h, q) - 1.0, 0.05, 50.0, xtol=1e-15)


def first_integral_depth(q):
    a = q + 1.0
    k = np.sqrt(a / 2) * beta(1 / a, 0.5) / a
    return k ** (-1.0 / (1.0 - a / 2))


def first_integral_moment(q):
    """int_{-1}^{1} |w|^{q+1} dx for the even solution."""
    a = q + 1.0
    h = first_integral_depth(q)
    return 2 * h ** (1 + a / 2) * np.sqrt(a / 2) * beta((a + 1) / a, 0.5) / a


def normalized_eigen(q):
    """(lam0, depth) for mu_u = lam0 |u|^q dx with int |u|^{q+1} dx = 1."""
    c = first_integral_moment(q) ** (-1.0 / (q + 1))
    return c ** (1 - q), c * first_integral_depth(q)
