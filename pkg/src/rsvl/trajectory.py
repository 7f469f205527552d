"""Recurrent trajectory decoder: forward pass, losses, gradients, fitting.

A compressed trajectory embedding ``h_tra`` (length ``d_e``) expands into a
sequence of 6-component states ``S_t``, each component in (0, 1):

    h_0 = W_latent h_tra + b_latent
    f_t = W_state h_{t-1} + b_state      for t = 1..T
    h_t = GRU(f_t, h_{t-1})
    S_t = sigmoid(W_out h_t + b_out)

with the gated update

    z = sigmoid(W_z f + U_z h + b_z)
    r = sigmoid(W_r f + U_r h + b_r)
    c = tanh(W_c f + U_c (r * h) + b_c)
    h' = (1 - z) * h + z * c

Decoding appends S_t step by step and stops early once two consecutive states
come closer than the threshold ``p`` in L2 norm (first checked at t = 2), or
at the step cap T.

``backward`` differentiates the trajectory regression loss through the
unrolled recurrence with the realized number of steps held fixed: the stop
decision itself is not differentiated.  ``grad_fd`` provides the central
finite-difference oracle used to cross-check it, and ``fit`` runs plain
gradient descent from a seeded uniform [-0.1, 0.1] initialization.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DivergenceDetected,
    EmptyGroundTruth,
    InvariantViolation,
)

__all__ = [
    "STATE_DIM",
    "PARAM_FIELDS",
    "DecoderConfig",
    "DecoderWeights",
    "LossWeights",
    "Termination",
    "TrajState",
    "Trajectory",
    "latent_projection",
    "gru_step",
    "decode",
    "mse_loss",
    "combined_loss",
    "grad_fd",
    "backward",
    "init_weights",
    "zero_weights",
    "fit",
]

STATE_DIM = 6

PARAM_FIELDS = (
    "W_latent", "b_latent",
    "W_state", "b_state",
    "W_z", "U_z", "b_z",
    "W_r", "U_r", "b_r",
    "W_c", "U_c", "b_c",
    "W_out", "b_out",
)


class Termination(str, Enum):
    THRESHOLD = "threshold"
    MAX_STEPS = "max_steps"


@dataclass(frozen=True)
class DecoderConfig:
    """Decoder dimensions and stopping rule.

    ``max_steps`` is the unroll cap T; ``termination_threshold`` is the
    distance p below which decoding stops.
    """

    d_e: int
    d_h: int
    max_steps: int
    termination_threshold: float = 1e-3

    def __post_init__(self):
        if self.d_e < 1 or self.d_h < 1:
            raise InvariantViolation("d_e and d_h must be at least 1")
        if self.max_steps < 1:
            raise InvariantViolation("max_steps must be at least 1")
        if not self.termination_threshold > 0:
            raise InvariantViolation("termination_threshold must be positive")


@dataclass
class DecoderWeights:
    """All decoder parameters as float64 arrays.

    Shapes for config (d_e, d_h): W_latent (d_h, d_e); W_state and the six
    GRU matrices (d_h, d_h); W_out (6, d_h); every bias matches its matrix
    rows.  The same structure doubles as the gradient container returned by
    ``backward`` and ``grad_fd``.
    """

    W_latent: np.ndarray
    b_latent: np.ndarray
    W_state: np.ndarray
    b_state: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_c: np.ndarray
    U_c: np.ndarray
    b_c: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        for name in PARAM_FIELDS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    def check(self, cfg: DecoderConfig) -> None:
        """Raise DimensionMismatch naming every field whose shape is off."""
        bad = []
        for name, expected in _expected_shapes(cfg).items():
            actual = getattr(self, name).shape
            if actual != expected:
                bad.append(f"{name}: expected {expected}, got {actual}")
        if bad:
            raise DimensionMismatch("; ".join(bad))

    def copy(self) -> "DecoderWeights":
        return _map_params(np.copy, self)


def _expected_shapes(cfg: DecoderConfig) -> dict[str, tuple[int, ...]]:
    d_e, d_h = cfg.d_e, cfg.d_h
    shapes: dict[str, tuple[int, ...]] = {"W_latent": (d_h, d_e), "b_latent": (d_h,)}
    for gate in ("state", "z", "r", "c"):
        if gate != "state":
            shapes[f"U_{gate}"] = (d_h, d_h)
        shapes[f"W_{gate}"] = (d_h, d_h)
        shapes[f"b_{gate}"] = (d_h,)
    shapes["W_out"] = (STATE_DIM, d_h)
    shapes["b_out"] = (STATE_DIM,)
    return shapes


def _map_params(fn, *weights: DecoderWeights) -> DecoderWeights:
    return DecoderWeights(
        **{name: fn(*(getattr(w, name) for w in weights)) for name in PARAM_FIELDS}
    )


@dataclass(frozen=True)
class LossWeights:
    lambda_txt: float
    lambda_mse: float

    def __post_init__(self):
        if self.lambda_txt < 0 or self.lambda_mse < 0:
            raise InvariantViolation("loss weights must be non-negative")
        if self.lambda_txt == 0 and self.lambda_mse == 0:
            raise InvariantViolation("at least one loss weight must be positive")


@dataclass(frozen=True)
class TrajState:
    """One decoded step: six components, each strictly inside (0, 1)."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != STATE_DIM:
            raise InvariantViolation(f"state needs {STATE_DIM} components, got {len(self.values)}")
        if any(not 0.0 < v < 1.0 for v in self.values):
            raise InvariantViolation("state components must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class Trajectory:
    states: tuple[TrajState, ...]
    terminated_by: Termination

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if not self.states:
            raise InvariantViolation("trajectory must hold at least one state")
        if self.terminated_by is Termination.THRESHOLD and len(self.states) < 2:
            raise InvariantViolation("threshold stop needs at least two states")

    def as_array(self) -> np.ndarray:
        return np.array([s.values for s in self.states], dtype=np.float64)


# --- Forward pass ------------------------------------------------------------

_S_LO = float(np.nextafter(0.0, 1.0))
_S_HI = float(np.nextafter(1.0, 0.0))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def latent_projection(h_tra: np.ndarray, weights: DecoderWeights) -> np.ndarray:
    """Affine map from the trajectory embedding to the initial hidden state."""
    return weights.W_latent @ np.asarray(h_tra, dtype=np.float64) + weights.b_latent


def gru_step(f_t: np.ndarray, h_prev: np.ndarray, weights: DecoderWeights) -> np.ndarray:
    """One gated update; every output component lies between h_prev and the candidate."""
    f_t = np.asarray(f_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    z = _sigmoid(weights.W_z @ f_t + weights.U_z @ h_prev + weights.b_z)
    r = _sigmoid(weights.W_r @ f_t + weights.U_r @ h_prev + weights.b_r)
    c = np.tanh(weights.W_c @ f_t + weights.U_c @ (r * h_prev) + weights.b_c)
    return (1.0 - z) * h_prev + z * c


def _forward(h_tra: np.ndarray, weights: DecoderWeights, cfg: DecoderConfig) -> dict:
    """Unrolled forward pass keeping every intermediate for the backward pass."""
    x = np.asarray(h_tra, dtype=np.float64)
    if x.shape != (cfg.d_e,):
        raise DimensionMismatch(f"h_tra: expected ({cfg.d_e},), got {x.shape}")
    weights.check(cfg)

    h = weights.W_latent @ x + weights.b_latent
    trace = {"x": x, "h": [h], "f": [], "z": [], "r": [], "c": [], "S": []}
    terminated = Termination.MAX_STEPS
    for _ in range(cfg.max_steps):
        f = weights.W_state @ h + weights.b_state
        z = _sigmoid(weights.W_z @ f + weights.U_z @ h + weights.b_z)
        r = _sigmoid(weights.W_r @ f + weights.U_r @ h + weights.b_r)
        c = np.tanh(weights.W_c @ f + weights.U_c @ (r * h) + weights.b_c)
        h = (1.0 - z) * h + z * c
        s = np.clip(_sigmoid(weights.W_out @ h + weights.b_out), _S_LO, _S_HI)
        for key, value in (("f", f), ("z", z), ("r", r), ("c", c), ("S", s), ("h", h)):
            trace[key].append(value)
        if len(trace["S"]) >= 2 and float(np.linalg.norm(s - trace["S"][-2])) < cfg.termination_threshold:
            terminated = Termination.THRESHOLD
            break
    trace["terminated_by"] = terminated
    return trace


def decode(h_tra: np.ndarray, weights: DecoderWeights, cfg: DecoderConfig) -> Trajectory:
    """Expand an embedding into a state sequence of length 1..max_steps."""
    trace = _forward(h_tra, weights, cfg)
    states = tuple(TrajState(tuple(s)) for s in trace["S"])
    return Trajectory(states=states, terminated_by=trace["terminated_by"])


# --- Losses -------------------------------------------------------------------


def _gt_array(gt: Sequence[Sequence[float]]) -> np.ndarray:
    arr = np.asarray(gt, dtype=np.float64)
    if arr.size == 0:
        raise EmptyGroundTruth("ground-truth trajectory is empty")
    if arr.ndim != 2 or arr.shape[1] != STATE_DIM:
        raise DimensionMismatch(f"ground truth must be (steps, {STATE_DIM}), got {arr.shape}")
    return arr


def mse_loss(pred: Trajectory, gt: Sequence[Sequence[float]]) -> float:
    """Per-component squared error over aligned steps plus a tail penalty.

    The first min(len(pred), len(gt)) steps are compared directly and the
    squared error is averaged over all 6 * steps components.  Every ground
    truth step the prediction never reached adds the mean squared error of a
    flat 0.5 state against it; surplus predicted steps carry no penalty.
    """
    arr = _gt_array(gt)
    pred_arr = pred.as_array()
    k = min(len(pred_arr), len(arr))
    loss = float(np.sum((pred_arr[:k] - arr[:k]) ** 2)) / (STATE_DIM * k)
    for t in range(k, len(arr)):
        loss += float(np.mean((0.5 - arr[t]) ** 2))
    return loss


def combined_loss(l_txt: float, l_mse: float, weights: LossWeights) -> float:
    """Weighted sum of the token loss and the trajectory regression loss."""
    return weights.lambda_txt * l_txt + weights.lambda_mse * l_mse


# --- Gradients ----------------------------------------------------------------


def grad_fd(
    loss_fn: Callable[[DecoderWeights], float],
    weights: DecoderWeights,
    eps: float = 1e-5,
) -> DecoderWeights:
    """Central finite differences of ``loss_fn`` over every weight entry."""
    work = weights.copy()
    grads = _map_params(np.zeros_like, weights)
    for name in PARAM_FIELDS:
        arr = getattr(work, name)
        g = getattr(grads, name)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            hi = loss_fn(work)
            flat[i] = saved - eps
            lo = loss_fn(work)
            flat[i] = saved
            gflat[i] = (hi - lo) / (2.0 * eps)
    return grads


def _loss_and_grads(
    h_tra: np.ndarray,
    weights: DecoderWeights,
    cfg: DecoderConfig,
    gt: np.ndarray,
) -> tuple[float, DecoderWeights]:
    trace = _forward(h_tra, weights, cfg)
    S = trace["S"]
    n = len(S)
    k = min(n, len(gt))

    loss = sum(float(np.sum((S[t] - gt[t]) ** 2)) for t in range(k)) / (STATE_DIM * k)
    for t in range(k, len(gt)):
        loss += float(np.mean((0.5 - gt[t]) ** 2))

    g = _map_params(np.zeros_like, weights)
    dh_next = np.zeros(cfg.d_h)
    for t in range(n, 0, -1):
        s_t = S[t - 1]
        if t <= k:
            ds = 2.0 * (s_t - gt[t - 1]) / (STATE_DIM * k)
        else:
            ds = np.zeros(STATE_DIM)
        da_out = ds * s_t * (1.0 - s_t)
        h_t = trace["h"][t]
        h_prev = trace["h"][t - 1]
        g.W_out += np.outer(da_out, h_t)
        g.b_out += da_out
        dh = dh_next + weights.W_out.T @ da_out

        z = trace["z"][t - 1]
        r = trace["r"][t - 1]
        c = trace["c"][t - 1]
        f = trace["f"][t - 1]

        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)

        da_c = dc * (1.0 - c * c)
        g.W_c += np.outer(da_c, f)
        g.U_c += np.outer(da_c, r * h_prev)
        g.b_c += da_c
        df = weights.W_c.T @ da_c
        d_rh = weights.U_c.T @ da_c
        dr = d_rh * h_prev
        dh_prev += d_rh * r

        da_r = dr * r * (1.0 - r)
        g.W_r += np.outer(da_r, f)
        g.U_r += np.outer(da_r, h_prev)
        g.b_r += da_r
        df += weights.W_r.T @ da_r
        dh_prev += weights.U_r.T @ da_r

        da_z = dz * z * (1.0 - z)
        g.W_z += np.outer(da_z, f)
        g.U_z += np.outer(da_z, h_prev)
        g.b_z += da_z
        df += weights.W_z.T @ da_z
        dh_prev += weights.U_z.T @ da_z

        g.W_state += np.outer(df, h_prev)
        g.b_state += df
        dh_prev += weights.W_state.T @ df
        dh_next = dh_prev

    g.W_latent += np.outer(dh_next, trace["x"])
    g.b_latent += dh_next
    return loss, g


def backward(
    h_tra: np.ndarray,
    weights: DecoderWeights,
    cfg: DecoderConfig,
    gt: Sequence[Sequence[float]],
) -> DecoderWeights:
    """Analytic gradient of ``mse_loss(decode(h_tra, w, cfg), gt)`` in ``w``.

    The number of decoded steps is taken from the forward pass and treated as
    constant, matching what finite differences see away from the stopping
    boundary.
    """
    _, grads = _loss_and_grads(h_tra, weights, cfg, _gt_array(gt))
    return grads


# --- Fitting ------------------------------------------------------------------


def init_weights(cfg: DecoderConfig, seed: int) -> DecoderWeights:
    """Uniform [-0.1, 0.1] initialization, drawn field by field in PARAM_FIELDS order."""
    rng = np.random.default_rng(seed)
    shapes = _expected_shapes(cfg)
    return DecoderWeights(**{
        name: rng.uniform(-0.1, 0.1, size=shapes[name]) for name in PARAM_FIELDS
    })


def zero_weights(cfg: DecoderConfig) -> DecoderWeights:
    shapes = _expected_shapes(cfg)
    return DecoderWeights(**{name: np.zeros(shapes[name]) for name in PARAM_FIELDS})


def fit(
    h_tra: np.ndarray,
    gt: Sequence[Sequence[float]],
    cfg: DecoderConfig,
    lr: float,
    iters: int,
    seed: int,
) -> tuple[DecoderWeights, list[float]]:
    """Plain gradient descent on ``mse_loss(decode(...), gt)``.

    Returns the final weights and the loss curve with ``iters + 1`` points
    (the loss before each update, then the final loss).  With ``iters=0`` the
    weights are exactly the seeded initialization.  A non-finite loss raises
    DivergenceDetected.
    """
    if lr <= 0:
        raise InvariantViolation("learning rate must be positive")
    if iters < 0:
        raise InvariantViolation("iteration count must be non-negative")
    target = _gt_array(gt)
    weights = init_weights(cfg, seed)
    curve: list[float] = []
    for _ in range(iters):
        loss, grads = _loss_and_grads(h_tra, weights, cfg, target)
        if not np.isfinite(loss):
            raise DivergenceDetected(f"loss became {loss!r} after {len(curve)} updates")
        curve.append(loss)
        weights = _map_params(lambda w, g: w - lr * g, weights, grads)
    final_loss, _ = _loss_and_grads(h_tra, weights, cfg, target)
    if not np.isfinite(final_loss):
        raise DivergenceDetected(f"loss became {final_loss!r} after {iters} updates")
    curve.append(final_loss)
    return weights, curve
