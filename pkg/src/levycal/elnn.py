"""Constrained two-network model of the jump spectrum h(w) and its trainer.

h(w), the Fourier transform of e^x dnu/dx, is approximated by two groups of
sigmoid-product nodes: an even real part and an odd imaginary part,

    ann_r(w) = sum_j wr0_j sig(wr1_j w) sig(-wr1_j w),
    ann_i(w) = sum_j wi0_j sig(wi1_j w) sig(-wi1_j w) w.

The derived constants
    c0 = sum_j wr0_j / 4                      (= ann_r(0), total e^x jump mass)
    c1 = sum_j [wr0_j/4 - wr0_j/(2(1+cos wr1_j)) + wi0_j/(2(1+cos wi1_j))]
follow from evaluating the node product at the imaginary unit, where
sig(ai) sig(-ai) = 1 / (2(1 + cos a)).  Their difference c0 - c1 is the jump
intensity.  The shifted characteristic function of the model is

    Phi(w - i) = exp(R) (cos Arg + i sin Arg),
    R   = T(-sigma^2 w^2 / 2 + ann_r(w) - c0),
    Arg = T( sigma^2 w / 2   + ann_i(w) - c1 w).

Training minimizes the trapezoid L2 distance to a target Phi*(w - i) curve
plus beta times the spectral regularizer Lambda, using full-batch ADAM with
an analytic gradient (including the chain rule through c0 and c1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .errors import DivergedLoss, LengthMismatch
from .spectral import SpectralGrid, _inverse_nodes

_GUARD = 1e-6  # lower bound kept on 1 + cos(weight) near the c1 pole


def _bump(a):
    """sig(a) * sig(-a); accepts real or complex arrays."""
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return 1.0 / ((1.0 + np.exp(-a)) * (1.0 + np.exp(a)))
    return expit(a) * expit(-a)


@dataclass
class ElnnParams:
    """Trainable state: volatility through sigma = |s|, plus four weight groups."""

    s: float
    wr0: np.ndarray
    wr1: np.ndarray
    wi0: np.ndarray
    wi1: np.ndarray

    @property
    def sigma(self):
        return abs(self.s)

    @property
    def n_nodes(self):
        return len(self.wr0)

    @property
    def c0(self):
        return 0.25 * float(np.sum(self.wr0))

    @property
    def c1(self):
        return self.c0 - float(
            np.sum(self.wr0 / (2.0 * (1.0 + np.cos(self.wr1))))
            - np.sum(self.wi0 / (2.0 * (1.0 + np.cos(self.wi1))))
        )

    @classmethod
    def init_random(cls, n_nodes=20, seed=0, rng=None):
        """Small near-diffusion start: outer weights ~ U(-0.05, 0.05), scales
        ~ U(0.02, 0.5) which keeps 1 + cos(.) far from the pole."""
        rng = rng if rng is not None else np.random.default_rng(seed)
        return cls(
            s=0.15,
            wr0=rng.uniform(-0.05, 0.05, n_nodes),
            wr1=rng.uniform(0.02, 0.5, n_nodes),
            wi0=rng.uniform(-0.05, 0.05, n_nodes),
            wi1=rng.uniform(0.02, 0.5, n_nodes),
        )

    def as_dict(self):
        return {
            "s": np.array([self.s]),
            "wr0": self.wr0.copy(),
            "wr1": self.wr1.copy(),
            "wi0": self.wi0.copy(),
            "wi1": self.wi1.copy(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["s"][0]), d["wr0"].copy(), d["wr1"].copy(),
                   d["wi0"].copy(), d["wi1"].copy())


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    m_cutoff: float
    epochs: int = 30_000
    alpha_reg: float = 4.0
    beta_reg: float = 1e-3
    seed: int = 0
    n_nodes: int = 20
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.m_cutoff <= 0:
            raise ValueError("m_cutoff must be positive")
        if self.alpha_reg <= 1:
            raise ValueError("alpha_reg must exceed 1")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")


def ann_r(w, params):
    """Even real-part network; scalar or array w, real or complex."""
    w = np.asarray(w)
    a = np.multiply.outer(w, params.wr1)
    return _bump(a) @ params.wr0


def ann_i(w, params):
    """Odd imaginary-part network (trailing factor w)."""
    w = np.asarray(w)
    a = np.multiply.outer(w, params.wi1)
    return (_bump(a) @ params.wi0) * w


def phi_model(w, params, T):
    """Model Phi(w - i) for real frequencies w."""
    w = np.asarray(w, dtype=float)
    sig2 = params.sigma**2
    R = T * (-0.5 * sig2 * w**2 + ann_r(w, params) - params.c0)
    arg = T * (0.5 * sig2 * w + ann_i(w, params) - params.c1 * w)
    return np.exp(R) * (np.cos(arg) + 1j * np.sin(arg))


def regularizer(params, grid, m_cutoff, alpha_reg=4.0):
    """Trapezoid value of integral |w/M|^alpha (ann_r^2 + ann_i^2) dw."""
    w, wts = _nodes_and_weights(grid)
    rho = np.abs(w / m_cutoff) ** alpha_reg
    return float(np.sum(wts * rho * (ann_r(w, params) ** 2 + ann_i(w, params) ** 2)))


def _nodes_and_weights(grid):
    """Uniform w nodes and trapezoid quadrature weights from a grid or node array."""
    w = grid.w if isinstance(grid, SpectralGrid) else np.asarray(grid, dtype=float)
    if len(w) < 2:
        raise ValueError("need at least two frequency nodes")
    dw = w[1] - w[0]
    wts = np.full(len(w), dw)
    wts[0] *= 0.5
    wts[-1] *= 0.5
    return w, wts


def _target_arrays(market_slice):
    curve = market_slice.spectral
    if curve is None:
        raise ValueError("market slice has no spectral data; transform it first")
    w, wts = _nodes_and_weights(curve.w)
    return w, wts, curve.values.real.copy(), curve.values.imag.copy()


def objective(params, market_slice, config):
    """Trapezoid L2 spectral error plus beta times the regularizer."""
    w, wts, tr, ti = _target_arrays(market_slice)
    loss, _ = _loss_and_grad(params, w, wts, tr, ti, market_slice.T, config, want_grad=False)
    return loss


def gradient(params, market_slice, config):
    """Exact gradient of the objective w.r.t. {s, wr0, wr1, wi0, wi1}."""
    w, wts, tr, ti = _target_arrays(market_slice)
    _, grads = _loss_and_grad(params, w, wts, tr, ti, market_slice.T, config, want_grad=True)
    return grads


def _loss_and_grad(params, w, wts, target_re, target_im, T, config, want_grad=True):
    """Fused forward/backward pass over the given quadrature nodes.

    params may be an ElnnParams or the dict layout used by the optimizer.
    """
    if isinstance(params, dict):
        s = float(params["s"][0])
        wr0, wr1, wi0, wi1 = params["wr0"], params["wr1"], params["wi0"], params["wi1"]
    else:
        s, wr0, wr1, wi0, wi1 = params.s, params.wr0, params.wr1, params.wi0, params.wi1
    sigma = abs(s)

    # One sigmoid per group covers both the bump e(1-e) and, for the gradient,
    # the factor sig(-a) - sig(a) = 1 - 2e.
    er = expit(np.multiply.outer(w, wr1))
    ei = expit(np.multiply.outer(w, wi1))
    P = er * (1.0 - er)
    Q = ei * (1.0 - ei)
    annr = P @ wr0
    anni = (Q @ wi0) * w

    ur = 1.0 / (2.0 * (1.0 + np.cos(wr1)))
    ui = 1.0 / (2.0 * (1.0 + np.cos(wi1)))
    c0 = 0.25 * float(np.sum(wr0))
    c1 = c0 - float(np.sum(wr0 * ur) - np.sum(wi0 * ui))

    sig2 = sigma * sigma
    R = T * (-0.5 * sig2 * w**2 + annr - c0)
    arg = T * (0.5 * sig2 * w + anni - c1 * w)
    expR = np.exp(R)
    pr = expR * np.cos(arg)
    pi = expR * np.sin(arg)
    dr = pr - target_re
    di = pi - target_im

    rho = np.abs(w / config.m_cutoff) ** config.alpha_reg
    reg = float(np.sum(wts * rho * (annr**2 + anni**2)))
    loss = float(np.sum(wts * (dr**2 + di**2))) + config.beta_reg * reg
    if not want_grad:
        return loss, None

    beta = config.beta_reg
    GR = 2.0 * wts * (dr * pr + di * pi)      # coefficient of dR/dtheta
    GA = 2.0 * wts * (-dr * pi + di * pr)     # coefficient of dArg/dtheta
    GAw = GA * w
    sum_GA_w = float(np.sum(GAw))
    sum_GR = float(np.sum(GR))

    # d(1/(2(1+cos a)))/da, the pole-side derivative of the c1 closed form
    vr = np.sin(wr1) / (2.0 * (1.0 + np.cos(wr1)) ** 2)
    vi = np.sin(wi1) / (2.0 * (1.0 + np.cos(wi1)) ** 2)

    # regularizer residuals
    LR = (2.0 * beta) * wts * rho * annr
    LI = (2.0 * beta) * wts * rho * anni

    g_s = np.sign(s) * T * sigma * (-float(np.sum(GR * w**2)) + sum_GA_w)

    left_r = np.vstack((GR, LR))              # shared GEMM pair for the r-group
    left_i = np.vstack((GAw, LI * w))
    dot_P = left_r @ P
    dot_Q = left_i @ Q
    g_wr0 = T * (dot_P[0] - 0.25 * sum_GR - (0.25 - ur) * sum_GA_w) + dot_P[1]
    g_wi0 = T * (dot_Q[0] - ui * sum_GA_w) + dot_Q[1]

    PW = P * (1.0 - 2.0 * er) * w[:, None]    # d bump / d wr1 per node
    QW = Q * (1.0 - 2.0 * ei) * w[:, None]
    dot_PW = left_r @ PW
    dot_QW = left_i @ QW
    g_wr1 = wr0 * (T * (dot_PW[0] + vr * sum_GA_w) + dot_PW[1])
    g_wi1 = wi0 * (T * (dot_QW[0] - vi * sum_GA_w) + dot_QW[1])

    grads = {"s": np.array([g_s]), "wr0": g_wr0, "wr1": g_wr1, "wi0": g_wi0, "wi1": g_wi1}
    return loss, grads


class Adam:
    """Plain ADAM over a dict of parameter arrays."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(params[key])
                self.v[key] = np.zeros_like(params[key])
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * (g * g)
            step = self.lr * (self.m[key] / bc1) / (np.sqrt(self.v[key] / bc2) + self.eps)
            params[key] = params[key] - step


def _guard_pole(angles):
    """Nudge any scale weight whose 1 + cos(.) sits inside the guard band."""
    bad = 1.0 + np.cos(angles) <= _GUARD
    while np.any(bad):
        angles[bad] += 1e-3
        bad = 1.0 + np.cos(angles) <= _GUARD
    return angles


def train(market_slice, config, init_params=None):
    """Full-batch ADAM on one spectral target; deterministic for a fixed seed.

    Returns the trained parameters and the per-epoch loss trace.  Raises
    DivergedLoss as soon as the loss stops being finite.
    """
    if init_params is None:
        init_params = ElnnParams.init_random(config.n_nodes, seed=config.seed)
    w, wts, tr, ti = _target_arrays(market_slice)

    # The loss integrand is even in w whenever the grid is +-symmetric and the
    # target is conjugate-symmetric; folding onto w > 0 with the averaged
    # target halves the work while leaving the gradient exactly unchanged
    # (the fold only drops a parameter-independent constant from the loss).
    half = len(w) // 2
    scale = 1e-6 * (1.0 + float(np.max(np.abs(tr))))
    folded = (
        len(w) % 2 == 0
        and np.allclose(w[:half], -w[::-1][:half], rtol=0, atol=1e-12 * (abs(w[0]) + 1))
        and np.allclose(tr[:half], tr[::-1][:half], rtol=0, atol=scale)
        and np.allclose(ti[:half], -ti[::-1][:half], rtol=0, atol=scale)
    )
    if folded:
        w_fold = w[half:]
        wts_fold = wts[half:] + wts[::-1][half:]
        tr_fold = 0.5 * (tr[half:] + tr[::-1][half:])
        ti_fold = 0.5 * (ti[half:] - ti[::-1][half:])
        w, wts, tr, ti = w_fold, wts_fold, tr_fold, ti_fold

    params = init_params.as_dict()
    _guard_pole(params["wr1"])
    _guard_pole(params["wi1"])
    adam = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    losses = np.empty(config.epochs)
    for epoch in range(config.epochs):
        loss, grads = _loss_and_grad(params, w, wts, tr, ti, market_slice.T, config)
        if not math.isfinite(loss):
            raise DivergedLoss(f"loss became non-finite at epoch {epoch}")
        losses[epoch] = loss
        adam.step(params, grads)
        _guard_pole(params["wr1"])
        _guard_pole(params["wi1"])
    return ElnnParams.from_dict(params), losses


def implied_levy_density(params, grid=None):
    """Recover (x, dnu/dx) by inverse transform of h(w) = ann_r + i ann_i.

    Values far out in |x| sit below the transform's rounding floor once the
    e^{-x} factor is applied; restrict attention to the region of interest.
    """
    from .errors import ResidueTooLarge

    grid = grid or SpectralGrid()
    h = ann_r(grid.w, params) + 1j * ann_i(grid.w, params)
    g = _inverse_nodes(grid, h)
    residue = float(np.max(np.abs(g.imag)))
    if residue > 1e-6:
        raise ResidueTooLarge(f"imaginary residue {residue:.3e} in density recovery")
    x = grid.k
    return x.copy(), np.exp(-x) * g.real


def implied_lambda(params):
    """Jump intensity implied by the trained constants: c0 - c1."""
    return params.c0 - params.c1
