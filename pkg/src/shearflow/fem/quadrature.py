"""Symmetric quadrature rules on the reference triangle (0,0), (1,0), (0,1).

Weights are normalised to sum to one; multiply by the element area.
"""
import numpy as np


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _rule(parts):
    bary, wts = [], []
    for pts, w in parts:
        bary.extend(pts)
        wts.extend(w)
    bary = np.array(bary)
    return bary[:, 1:], np.array(wts)


def triangle_rule(degree=6):
    """Return ``(points, weights)`` with points as reference (xi, eta)."""
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3]]), np.array([1.0])
    if degree == 2:
        return _rule([_orbit3(1 / 6, 1 / 3)])
    if degree <= 4:
        # Dunavant 6-point, degree 4
        return _rule([_orbit3(0.445948490915965, 0.223381589678011),
                      _orbit3(0.091576213509771, 0.109951743655322)])
    if degree <= 6:
        # Dunavant 12-point, degree 6
        return _rule([_orbit3(0.249286745170910, 0.116786275726379),
                      _orbit3(0.063089014491502, 0.050844906370207),
                      _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374)])
    raise ValueError(f"no triangle rule of degree {degree}")


def gauss_legendre(n, a=0.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w
