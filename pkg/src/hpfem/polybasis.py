"""1D Legendre / integrated-Legendre shape functions, tensor products on the
reference cube [-1,1]^d, Gauss rules and the Lagrange basis at Gauss nodes."""

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels

MAX_DEGREE = 20

_NODE_TOL = 1e-13


def legendre(j, t, derivative=False):
    """L_j(t) with L_j(1) = 1, L_j(-1) = (-1)^j; optionally (value, derivative)."""
    scalar = np.ndim(t) == 0
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    val, der = _kernels.legendre_table(t_arr.ravel(), j)
    v = val[:, j].reshape(t_arr.shape)
    if scalar:
        v = float(v[0])
    if not derivative:
        return v
    d = der[:, j].reshape(t_arr.shape)
    if scalar:
        d = float(d[0])
    return v, d


def integrated_legendre(j, t):
    """Shape function psi_j: vertex functions for j<2, else int_{-1}^t L_{j-1}."""
    scalar = np.ndim(t) == 0
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    val, _ = _kernels.shape_table(t_arr.ravel(), max(j, 1))
    v = val[:, j].reshape(t_arr.shape)
    if scalar:
        return float(v[0])
    return v


def shape1d(t, jmax):
    """Values and derivatives of psi_0..psi_jmax at the points t: two (m, jmax+1) arrays."""
    t = np.ascontiguousarray(np.asarray(t, dtype=float).ravel())
    return _kernels.shape_table(t, max(jmax, 1))


def shape1d_second(t, jmax):
    """Second derivatives of psi_0..psi_jmax: psi_j'' = L_{j-1}' for j >= 2."""
    t = np.ascontiguousarray(np.asarray(t, dtype=float).ravel())
    jmax = max(jmax, 1)
    out = np.zeros((t.shape[0], jmax + 1))
    if jmax >= 2:
        _, ld = _kernels.legendre_table(t, jmax - 1)
        out[:, 2:] = ld[:, 1:jmax]
    return out


@dataclass(frozen=True)
class GaussRule:
    """1D Gauss-Legendre rule on [-1,1]."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return len(self.points)


@lru_cache(maxsize=64)
def gauss_rule(n):
    if n < 1:
        raise ValueError("Gauss rule needs n >= 1")
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return GaussRule(points=x, weights=w)


def tensor_indices(degree, dim):
    """All multi-indices (j_1..j_d) with 0 <= j_k <= degree, last component fastest."""
    idx = np.array(list(itertools.product(range(degree + 1), repeat=dim)), dtype=np.intp)
    return idx.reshape(-1, dim)


def tensor_gauss(n, dim):
    """Tensor-product Gauss rule: points (n^d, d), weights (n^d,); last axis fastest."""
    rule = gauss_rule(n)
    pts = np.array(list(itertools.product(rule.points, repeat=dim)))
    wts = np.array([np.prod(c) for c in itertools.product(rule.weights, repeat=dim)])
    return pts.reshape(-1, dim), wts


def tensor_shape_eval(points, indices, jmax=None):
    """Evaluate tensor shapes psi-hat_j at reference points.

    points: (m, d); indices: (nb, d) multi-index rows.
    Returns vals (m, nb) and grads (m, nb, d).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    indices = np.atleast_2d(np.asarray(indices, dtype=np.intp))
    m, d = points.shape
    nb = indices.shape[0]
    if jmax is None:
        jmax = int(indices.max()) if indices.size else 1
    axis_vals = []
    axis_ders = []
    for a in range(d):
        v, dv = _kernels.shape_table(np.ascontiguousarray(points[:, a]), max(jmax, 1))
        axis_vals.append(v)
        axis_ders.append(dv)
    vals = np.ones((m, nb))
    for a in range(d):
        vals *= axis_vals[a][:, indices[:, a]]
    grads = np.empty((m, nb, d))
    for a in range(d):
        g = axis_ders[a][:, indices[:, a]].copy()
        for b in range(d):
            if b != a:
                g *= axis_vals[b][:, indices[:, b]]
        grads[:, :, a] = g
    return vals, grads


def tensor_shape_hessian(points, indices, jmax=None):
    """Reference second derivatives of tensor shapes: array (m, nb, d, d)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    indices = np.atleast_2d(np.asarray(indices, dtype=np.intp))
    m, d = points.shape
    nb = indices.shape[0]
    if jmax is None:
        jmax = int(indices.max()) if indices.size else 1
    jmax = max(jmax, 1)
    V, D, S = [], [], []
    for a in range(d):
        v, dv = _kernels.shape_table(np.ascontiguousarray(points[:, a]), jmax)
        V.append(v)
        D.append(dv)
        S.append(shape1d_second(points[:, a], jmax))
    H = np.empty((m, nb, d, d))
    for a in range(d):
        for b in range(a, d):
            if a == b:
                g = S[a][:, indices[:, a]].copy()
            else:
                g = D[a][:, indices[:, a]] * D[b][:, indices[:, b]]
            for c in range(d):
                if c != a and c != b:
                    g = g * V[c][:, indices[:, c]]
            H[:, :, a, b] = g
            H[:, :, b, a] = g
    return H


# ---------------------------------------------------------------------------
# Lagrange basis at Gauss nodes (barycentric evaluation)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _bary_weights(p):
    x = gauss_rule(p).points
    w = np.ones(p)
    for i in range(p):
        w[i] = 1.0 / np.prod(x[i] - np.delete(x, i))
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_lagrange_1d(p, t):
    """Values of the p Lagrange polynomials on the Gauss nodes, at points t: (m, p)."""
    x, w = _bary_weights(p)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    diff = t[:, None] - x[None, :]
    out = np.empty((len(t), p))
    hit = np.abs(diff) < _NODE_TOL
    reg = ~hit.any(axis=1)
    if reg.any():
        r = w[None, :] / diff[reg]
        out[reg] = r / r.sum(axis=1, keepdims=True)
    for row in np.nonzero(~reg)[0]:
        out[row] = hit[row].astype(float)
    return out


def gauss_lagrange_1d_deriv(p, t):
    """Derivatives of the Gauss-node Lagrange polynomials at points t: (m, p)."""
    x, w = _bary_weights(p)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    diff = t[:, None] - x[None, :]
    out = np.empty((len(t), p))
    hit = np.abs(diff) < _NODE_TOL
    reg = ~hit.any(axis=1)
    if reg.any():
        r = w[None, :] / diff[reg]
        s = r.sum(axis=1, keepdims=True)
        s2 = (r / diff[reg]).sum(axis=1, keepdims=True)
        out[reg] = (r / s) * (s2 / s - 1.0 / diff[reg])
    for row in np.nonzero(~reg)[0]:
        k = int(np.nonzero(hit[row])[0][0])
        drow = np.empty(p)
        for i in range(p):
            if i != k:
                drow[i] = (w[i] / w[k]) / (x[k] - x[i])
        drow[k] = 0.0
        drow[k] = -drow.sum()
        out[row] = drow
    return out


def gauss_lagrange_tensor(p, points):
    """Tensor Lagrange basis of degree p-1 per axis at the p^d Gauss nodes.

    points: (m, d). Returns vals (m, p^d) and grads (m, p^d, d); node ordering
    matches tensor_gauss(p, d).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = points.shape
    axis_vals = [gauss_lagrange_1d(p, points[:, a]) for a in range(d)]
    axis_ders = [gauss_lagrange_1d_deriv(p, points[:, a]) for a in range(d)]
    idx = tensor_indices(p - 1, d)
    nb = idx.shape[0]
    vals = np.ones((m, nb))
    for a in range(d):
        vals *= axis_vals[a][:, idx[:, a]]
    grads = np.empty((m, nb, d))
    for a in range(d):
        g = axis_ders[a][:, idx[:, a]].copy()
        for b in range(d):
            if b != a:
                g *= axis_vals[b][:, idx[:, b]]
        grads[:, :, a] = g
    return vals, grads


def gauss_lagrange_eval(p, k, x):
    """Value of the k-th (0-based) tensor Gauss-Lagrange basis function at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals, _ = gauss_lagrange_tensor(p, x[None, :])
    return float(vals[0, k])
