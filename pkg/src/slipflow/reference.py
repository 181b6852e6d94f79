"""Reference-element shape functions and Gauss rules on [-1, 1]^d."""

import numpy as np

# local Q2 node k = a + 3*b sits at (XI_NODES[a], XI_NODES[b])
XI_NODES = np.array([-1.0, 0.0, 1.0])

# local Q2 nodes along each edge, ordered by increasing edge parameter t
EDGE_NODES = np.array([[0, 1, 2], [2, 5, 8], [6, 7, 8], [0, 3, 6]])

# Q1 local vertex k = a + 2*b corresponds to Q2 local node 2*a + 3*(2*b)
Q1_IN_Q2 = np.array([0, 2, 6, 8])


def gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


def p2(t):
    t = np.asarray(t, dtype=float)
    return np.stack([0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)], axis=-1)


def dp2(t):
    t = np.asarray(t, dtype=float)
    return np.stack([t - 0.5, -2.0 * t, t + 0.5], axis=-1)


def d2p2(t):
    t = np.asarray(t, dtype=float)
    one = np.ones_like(t)
    return np.stack([one, -2.0 * one, one], axis=-1)


def p1(t):
    t = np.asarray(t, dtype=float)
    return np.stack([0.5 * (1.0 - t), 0.5 * (1.0 + t)], axis=-1)


def dp1(t):
    t = np.asarray(t, dtype=float)
    half = 0.5 * np.ones_like(t)
    return np.stack([-half, half], axis=-1)


def q2_basis(xi, eta):
    """Biquadratic basis at reference points.

    Returns values (m, 9), gradients (m, 9, 2) and second derivatives
    (m, 9, 3) ordered as (xi-xi, xi-eta, eta-eta).
    """
    lx, ly = p2(xi), p2(eta)
    dx, dy = dp2(xi), dp2(eta)
    ddx, ddy = d2p2(xi), d2p2(eta)
    m = lx.shape[0]
    N = (lx[:, None, :] * ly[:, :, None]).reshape(m, 9)
    dN = np.stack([(dx[:, None, :] * ly[:, :, None]).reshape(m, 9),
                   (lx[:, None, :] * dy[:, :, None]).reshape(m, 9)], axis=-1)
    d2N = np.stack([(ddx[:, None, :] * ly[:, :, None]).reshape(m, 9),
                    (dx[:, None, :] * dy[:, :, None]).reshape(m, 9),
                    (lx[:, None, :] * ddy[:, :, None]).reshape(m, 9)], axis=-1)
    return N, dN, d2N


def q1_basis(xi, eta):
    lx, ly = p1(xi), p1(eta)
    dx, dy = dp1(xi), dp1(eta)
    m = lx.shape[0]
    N = (lx[:, None, :] * ly[:, :, None]).reshape(m, 4)
    dN = np.stack([(dx[:, None, :] * ly[:, :, None]).reshape(m, 4),
                   (lx[:, None, :] * dy[:, :, None]).reshape(m, 4)], axis=-1)
    return N, dN


def tensor_rule(n=3):
    """Tensor Gauss rule with ``n`` points per direction (degree 2n-1)."""
    t, w = gauss_legendre(n)
    xi = np.tile(t, n)
    eta = np.repeat(t, n)
    return np.stack([xi, eta], axis=-1), np.tile(w, n) * np.repeat(w, n)


def edge_reference_points(edge, t):
    """Map an edge parameter t in [-1, 1] to reference (xi, eta)."""
    t = np.asarray(t, dtype=float)
    one = np.ones_like(t)
    if edge == 0:
        return np.stack([t, -one], axis=-1)
    if edge == 1:
        return np.stack([one, t], axis=-1)
    if edge == 2:
        return np.stack([t, one], axis=-1)
    if edge == 3:
        return np.stack([-one, t], axis=-1)
    raise ValueError(f"edge index must be 0..3, got {edge}")


def local_node_reference(k):
    return XI_NODES[k % 3], XI_NODES[k // 3]
