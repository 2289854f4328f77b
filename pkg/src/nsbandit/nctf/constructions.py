"""Explicit weight constructions that realize the window scheduler with the
layers of ``layers.py``.

Token layout (one token per round of a block of length N = 2^n): for every
order i = 0..n a copy of width d+5

    [x (d) ; 2^i ; window reward sum ; rand ; prefix aux sum ; r_tilde^(i)]

followed by a tail [2^n ; t ; sum r ; sum r_tilde ; U_{t-1}].  The first
coordinate of x carries the block noise used by the Bernoulli masks.  The
constant 1 is read as tail[2^n] / 2^n.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ContractError
from .layers import AttentionLayer, Head, MLPLayer, TransformerLayer, relu

SLOT_NAMES = ("order", "window", "rand", "prefix", "aux")


@dataclass(frozen=True)
class Layout:
    d: int
    n: int

    @property
    def width(self):
        return self.d + 5

    @property
    def D(self):
        return self.width * (self.n + 1) + 5

    def x(self, i, j=0):
        return i * self.width + j

    def slot(self, i, name):
        return i * self.width + self.d + SLOT_NAMES.index(name)

    def copy_slice(self, i):
        return slice(i * self.width, (i + 1) * self.width)

    @property
    def top(self):
        return self.width * (self.n + 1)

    @property
    def time(self):
        return self.top + 1

    @property
    def sum_r(self):
        return self.top + 2

    @property
    def sum_rt(self):
        return self.top + 3

    @property
    def u(self):
        return self.top + 4

    def unit(self, idx, scale=1.0):
        v = np.zeros(self.D)
        v[idx] = scale
        return v

    def const(self, value=1.0):
        """Row vector r with <r, h> = value for every well-formed token."""
        return self.unit(self.top, value / 2 ** self.n)


def relu_indicator(x, k):
    """ReLU(kx) - ReLU(kx - 1): 0 for x <= 0, 1 for x >= 1/k, linear in between."""
    x = np.asarray(x, dtype=float)
    return relu(k * x) - relu(k * x - 1.0)


# ---------------------------------------------------------------- CDF attention

def cdf_heads(lay: Layout, i: int, k: float) -> list[Head]:
    """Two heads writing (1/N) sum_j relu_indicator(z_t - z_j, k) into rand_i,
    where z is the noise coordinate of copy i."""
    D = lay.D
    Q1, Q2, K = np.zeros((3, D)), np.zeros((3, D)), np.zeros((3, D))
    Q1[0], Q1[1] = lay.unit(lay.x(i), k), -lay.const()
    Q2[0], Q2[1], Q2[2] = Q1[0], Q1[1], -lay.const()
    K[0], K[1], K[2] = lay.const(), lay.unit(lay.x(i), k), lay.const()
    V1 = np.zeros((D, D))
    V1[lay.slot(i, "rand")] = lay.const()
    return [Head(Q1, K, V1), Head(Q2, K, -V1)]


def cdf_layer(lay: Layout, k: float) -> AttentionLayer:
    heads = []
    for i in range(lay.n + 1):
        heads += cdf_heads(lay, i, k)
    return AttentionLayer(heads, causal=False)


def cdf_attention(x, k: float) -> np.ndarray:
    """Empirical CDF (fraction of strictly smaller entries) computed by attention."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise ContractError("cdf_attention expects a non-empty 1-D array")
    lay = Layout(1, 0)
    H = np.zeros((len(x), lay.D))
    H[:, lay.x(0)] = x
    H[:, lay.slot(0, "order")] = 1.0
    H[:, lay.top] = 1.0
    H[:, lay.time] = np.arange(1, len(x) + 1)
    return cdf_layer(lay, k)(H)[:, lay.slot(0, "rand")]


def cdf_rank_oracle(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([(x < v).sum() for v in x]) / len(x)


# --------------------------------------------------------- Bernoulli mask MLP

def _square_knots(lo: float, hi: float, eps: float):
    """Knots and ReLU coefficients of the piecewise-linear interpolant of u^2 on
    [lo, hi].  Spacing sqrt(2 eps) keeps the interpolation error below eps/2."""
    h = np.sqrt(2.0 * eps)
    m = max(1, int(np.ceil((hi - lo) / h)))
    knots = lo + (hi - lo) * np.arange(m + 1) / m
    slopes = knots[1:] + knots[:-1]
    coef = np.diff(np.concatenate([[0.0], slopes]))
    return knots[:-1], coef, lo * lo


def product_mlp(D: int, jobs: list, const: np.ndarray, eps: float) -> MLPLayer:
    """MLP that writes s = c - x*y into ``out`` (replacing its content) for each job
    (x_row, y_row, c_row, out_index) with x, y in [0, 1].  Uses
    xy = (g(x+y) - g(x-y)) / 4 with g a piecewise-linear fit of u^2."""
    rows, cols = [], []
    for x_row, y_row, c_row, out in jobs:
        col = np.zeros(D)
        col[out] = 1.0
        for sign, base in ((-0.25, x_row + y_row), (0.25, x_row - y_row)):
            lo, hi = (0.0, 2.0) if sign < 0 else (-1.0, 1.0)
            knots, coef, g_lo = _square_knots(lo, hi, eps)
            for u_j, c_j in zip(knots, coef):
                rows.append(base - u_j * const)
                cols.append(sign * c_j * col)
            rows.append(const)
            cols.append(sign * g_lo * col)
        rows.append(c_row)  # c >= 0
        cols.append(col)
        cur = np.zeros(D)
        cur[out] = 1.0
        rows += [cur, -cur]
        cols += [-col, col]
    return MLPLayer(np.array(rows), np.array(cols).T)


def ramp_mlp(D: int, outs: list, const: np.ndarray, k2: float) -> MLPLayer:
    """Replace each ``out`` value s by relu_indicator(s, k2)."""
    rows, cols = [], []
    for out in outs:
        s = np.zeros(D)
        s[out] = 1.0
        rows += [k2 * s, k2 * s - const, s, -s]
        cols += [s, -s, -s, s]
    return MLPLayer(np.array(rows), np.array(cols).T)


def bernoulli_mask_mlp(rand: float, rho_i: float, rho_n: float, k2: float = 1e6, eps: float = 1e-6) -> float:
    """Two ReLU MLP layers computing relu_indicator(rho_n - rand * rho_i, k2),
    i.e. approximately 1[rand <= rho_n / rho_i]."""
    vals = np.array([rand, rho_i, rho_n], dtype=float)
    if np.any(vals < 0) or np.any(vals > 1) or not np.all(np.isfinite(vals)):
        raise ContractError("bernoulli_mask_mlp inputs must lie in [0, 1]")
    D = 5  # [rand, rho_i, rho_n, 1, out]
    e = np.eye(D)
    h = np.array([rand, rho_i, rho_n, 1.0, 0.0])
    h = product_mlp(D, [(e[0], e[1], e[2], 4)], e[3], eps)(h[None])[0]
    h = ramp_mlp(D, [4], e[3], k2)(h[None])[0]
    return float(h[4])


def bernoulli_layers(lay: Layout, rho, k2: float, eps: float) -> list[MLPLayer]:
    """Per copy i: rand_i <- 1[rand_i + 1/(2B) <= rho(2^n)/rho(2^i)], B = 2^(n-i).
    rho values are divided by rho(1) so every product input lies in [0, 1]."""
    r1 = float(rho(1))
    rn = float(rho(2 ** lay.n)) / r1
    jobs, outs = [], []
    c = lay.const()
    for i in range(lay.n):  # the top order is always scheduled
        out = lay.slot(i, "rand")
        B = 2 ** (lay.n - i)
        x_row = lay.unit(out) + c / (2 * B)
        jobs.append((x_row, c * (float(rho(2 ** i)) / r1), c * rn, out))
        outs.append(out)
    top = lay.slot(lay.n, "rand")
    set_one = MLPLayer(np.array([lay.unit(top), -lay.unit(top), c]),
                       np.array([-lay.unit(top), lay.unit(top), lay.unit(top)]).T)
    prod = product_mlp(lay.D, jobs, c, eps) if jobs else None
    ramp = ramp_mlp(lay.D, outs, c, k2) if outs else None
    first = _stack_mlp(prod, set_one, lay.D)
    return [first, ramp]


def _stack_mlp(a: MLPLayer | None, b: MLPLayer | None, D: int) -> MLPLayer:
    """Two MLPs acting on disjoint output slots merged into one layer."""
    parts = [m for m in (a, b) if m is not None]
    return MLPLayer(np.vstack([m.W1 for m in parts]), np.hstack([m.W2 for m in parts]))


# ------------------------------------------------------- positional gating heads

def _gate_heads(lay: Layout, m: int, x_row: np.ndarray, C: float) -> list[Head]:
    """Heads that subtract ramp(<x_row, h_t>) * copy_m from token t.

    The key carries the time slot so the 1/t normalization cancels at j = t,
    and the penalty C (t_j - t_t) switches off every earlier token."""
    D, sc = lay.D, np.sqrt(C)
    c = lay.const()
    tm = lay.unit(lay.time)
    Q = np.zeros((3, D))
    Q[0], Q[1], Q[2] = sc * c, -sc * tm, x_row
    K = np.zeros((3, D))
    K[0], K[1], K[2] = sc * tm, sc * c, tm
    Qb = Q.copy()
    Qb[2] = x_row - c
    V = np.zeros((D, D))
    idx = np.arange(D)[lay.copy_slice(m)]
    V[idx, idx] = 1.0
    return [Head(Q, K, -V), Head(Qb, K, V)]


def block_mask_layer(lay: Layout, kappa: float = 2.0) -> AttentionLayer:
    """Zero copy i of every token whose Bernoulli gate (rand_i) is 0."""
    N = 2 ** lay.n
    C = N * (kappa / 2 + 1.0)
    heads = []
    for m in range(lay.n):
        x_row = kappa * (0.5 * lay.const() - lay.unit(lay.slot(m, "rand")))
        heads += _gate_heads(lay, m, x_row, C)
    return AttentionLayer(heads, causal=True)


def sigma2_layer(lay: Layout, c0: float = 1.0, eps0: float = 0.5) -> AttentionLayer:
    """Zero copy m whenever a lower copy p < m is still present (its order
    marker 2^p / 2^p = 1 is nonzero), keeping only the lowest scheduled copy."""
    if not (eps0 > 0 and c0 > eps0):
        raise ConfigError(f"need c0 > eps0 > 0 to separate markers, got c0={c0}, eps0={eps0}")
    N = 2 ** lay.n
    kappa = 1.0 / (c0 - eps0)
    C = N * (kappa * (c0 * lay.n + eps0) + 1.0)
    heads = []
    for m in range(1, lay.n + 1):
        S = sum(lay.unit(lay.slot(p, "order"), 1.0 / 2 ** p) for p in range(m))
        x_row = kappa * (c0 * S - eps0 * lay.const())
        heads += _gate_heads(lay, m, x_row, C)
    return AttentionLayer(heads, causal=True)


def scheduler_stack(lay: Layout, rho, k: float = 1e6, k2: float = 1e6, eps: float = 1e-6,
                    c0: float = 1.0, eps0: float = 0.5) -> list[TransformerLayer]:
    """CDF attention -> Bernoulli MLP -> block-mask attention -> sigma2 attention."""
    mlp1, mlp2 = bernoulli_layers(lay, rho, k2, eps)
    return [TransformerLayer(cdf_layer(lay, k), mlp1),
            TransformerLayer(None, mlp2),
            TransformerLayer(block_mask_layer(lay), None),
            TransformerLayer(sigma2_layer(lay, c0, eps0), None)]


# ------------------------------------------------------------------ test matrix

def test_matrix_diag(lay: Layout, test: float) -> np.ndarray:
    """diag([1 x (d+1), TEST x 4] x (n+1), [1, 1, TEST, TEST, TEST])."""
    per = np.concatenate([np.ones(lay.d + 1), np.full(4, float(test))])
    return np.concatenate([np.tile(per, lay.n + 1), [1.0, 1.0, test, test, test]])


def apply_test_matrix(tokens: np.ndarray, test: float, lay: Layout) -> np.ndarray:
    """TEST = 1 leaves tokens unchanged; TEST = 0 clears every history slot and
    keeps the inputs, order markers, block length and time."""
    if test not in (0, 1):
        raise ContractError("TEST must be 0 or 1")
    return np.asarray(tokens) * test_matrix_diag(lay, test)


test_matrix_diag.__test__ = False
