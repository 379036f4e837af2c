"""Dense numeric core: LSTM and dense layers with hand-derived gradients,
inverted dropout, MSE loss, Adam, and a finite-difference gradient checker.

Everything runs on float64 numpy arrays (row-major).  Layers expose
forward/backward pairs that pass explicit caches, so the computation graph
is the fixed network topology rather than a general autodiff tape.  All
exposed results are finite; NaN/Inf raises instead of propagating.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, NumericError, StructuralError, UsageError

GATE_ORDER = ("input", "forget", "cell", "output")


def _sigmoid(z, out=None):
    # overflow-free via the identity sigmoid(z) = (tanh(z/2) + 1) / 2
    out = np.multiply(z, 0.5, out=out)
    np.tanh(out, out=out)
    out += 1.0
    out *= 0.5
    return out


def _check_finite(name: str, *arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite values detected", where=name)


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform init in +-1/sqrt(fan_in)."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


class LstmLayer:
    """One LSTM layer over a batch of sequences.

    Weights follow the packed layout W (4h x input), U (4h x hidden),
    b (4h,), gate rows ordered input / forget / cell / output.  The forget
    bias starts at +1 for stable early training.  Sequences are passed
    time-major, (steps, batch, features), so every per-step slice is
    contiguous.  An optional dropout mask of shape (batch, hidden)
    multiplies the *emitted* outputs at every time step — the same mask for
    the whole sequence — while the recurrent state itself is never dropped.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator, name: str = "lstm"):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.name = name
        h = hidden_size
        self.W = init_uniform(rng, (4 * h, input_size), input_size)
        self.U = init_uniform(rng, (4 * h, h), h)
        self.b = np.zeros(4 * h)
        self.b[h : 2 * h] = 1.0

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.W": self.W, f"{self.name}.U": self.U, f"{self.name}.b": self.b}

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None):
        """Run the recurrence over x (steps, batch, input).

        Returns (outputs, cache) with outputs (steps, batch, hidden).
        """
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise StructuralError(
                f"{self.name}: expected input (steps, batch, {self.input_size}), got {x.shape}"
            )
        if mask is not None and mask.shape != (x.shape[1], self.hidden_size):
            raise StructuralError(
                f"{self.name}: mask shape {mask.shape} does not match (batch, hidden)=({x.shape[1]}, {self.hidden_size})"
            )
        _check_finite(self.name + ".input", x)
        steps, batch, _ = x.shape
        h = self.hidden_size
        gates = x @ self.W.T + self.b  # (steps, batch, 4h); activated in place below
        cells = np.empty((steps, batch, h))
        cell_tanh = np.empty((steps, batch, h))
        hidden = np.empty((steps, batch, h))
        h_prev = np.zeros((batch, h))
        c_prev = np.zeros((batch, h))
        u_t = self.U.T
        for t in range(steps):
            g = gates[t]
            g += h_prev @ u_t
            _sigmoid(g[:, : 2 * h], out=g[:, : 2 * h])  # input and forget gates
            np.tanh(g[:, 2 * h : 3 * h], out=g[:, 2 * h : 3 * h])  # cell candidate
            _sigmoid(g[:, 3 * h :], out=g[:, 3 * h :])  # output gate
            c = cells[t]
            np.multiply(g[:, h : 2 * h], c_prev, out=c)
            c += g[:, :h] * g[:, 2 * h : 3 * h]
            ct = np.tanh(c, out=cell_tanh[t])
            h_prev = np.multiply(g[:, 3 * h :], ct, out=hidden[t])
            c_prev = c
        outputs = hidden if mask is None else hidden * mask[None, :, :]
        _check_finite(self.name, outputs)
        cache = (x, gates, cells, cell_tanh, hidden, mask)
        return outputs, cache

    def backward(self, d_out: np.ndarray, cache):
        """Backpropagate through time; returns (d_x, grads dict)."""
        if cache is None:
            raise UsageError(f"{self.name}: backward called without a cached forward pass")
        x, gates, cells, cell_tanh, hidden, mask = cache
        if d_out.shape != hidden.shape:
            raise StructuralError(f"{self.name}: gradient shape {d_out.shape} vs outputs {hidden.shape}")
        steps, batch, _ = x.shape
        h = self.hidden_size
        if mask is not None:
            d_out = d_out * mask[None, :, :]
        # the time loop only carries the recurrent terms; weight gradients
        # are accumulated afterwards with whole-sequence matrix products
        d_pre_seq = np.empty((steps, batch, 4 * h))
        dh_next = np.zeros((batch, h))
        dc = np.zeros((batch, h))
        zeros_h = np.zeros((batch, h))
        for t in range(steps - 1, -1, -1):
            g = gates[t]
            gi = g[:, :h]
            gf = g[:, h : 2 * h]
            gg = g[:, 2 * h : 3 * h]
            go = g[:, 3 * h :]
            ct = cell_tanh[t]
            c_prev = cells[t - 1] if t > 0 else zeros_h
            dh = d_out[t] + dh_next
            dc = dc + dh * go * (1.0 - ct * ct)
            dp = d_pre_seq[t]
            dp[:, :h] = dc * gg * gi * (1.0 - gi)
            dp[:, h : 2 * h] = dc * c_prev * gf * (1.0 - gf)
            dp[:, 2 * h : 3 * h] = dc * gi * (1.0 - gg * gg)
            dp[:, 3 * h :] = dh * ct * go * (1.0 - go)
            dc = dc * gf
            dh_next = dp @ self.U
        d_x = d_pre_seq @ self.W
        flat = d_pre_seq.reshape(steps * batch, 4 * h)
        d_W = flat.T @ x.reshape(steps * batch, self.input_size)
        d_b = flat.sum(axis=0)
        if steps > 1:
            d_U = (
                d_pre_seq[1:].reshape((steps - 1) * batch, 4 * h).T
                @ hidden[:-1].reshape((steps - 1) * batch, h)
            )
        else:
            d_U = np.zeros_like(self.U)
        _check_finite(self.name + ".grad", d_x, d_W, d_U, d_b)
        grads = {f"{self.name}.W": d_W, f"{self.name}.U": d_U, f"{self.name}.b": d_b}
        return d_x, grads

    def param_count(self) -> int:
        # 4h(i + h + 1)
        return 4 * self.hidden_size * (self.input_size + self.hidden_size + 1)


class DenseLayer:
    """Affine map z = a W^T + b with W (out x in)."""

    def __init__(self, input_size: int, output_size: int, rng: np.random.Generator, name: str = "fc"):
        self.input_size = input_size
        self.output_size = output_size
        self.name = name
        self.W = init_uniform(rng, (output_size, input_size), input_size)
        self.b = np.zeros(output_size)

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.W": self.W, f"{self.name}.b": self.b}

    def forward(self, a: np.ndarray):
        if a.ndim != 2 or a.shape[1] != self.input_size:
            raise StructuralError(f"{self.name}: expected (batch, {self.input_size}), got {a.shape}")
        z = a @ self.W.T + self.b
        _check_finite(self.name, z)
        return z, a

    def backward(self, d_z: np.ndarray, cache):
        if cache is None:
            raise UsageError(f"{self.name}: backward called without a cached forward pass")
        a = cache
        if d_z.shape != (a.shape[0], self.output_size):
            raise StructuralError(f"{self.name}: gradient shape {d_z.shape} vs (batch, {self.output_size})")
        d_a = d_z @ self.W
        grads = {f"{self.name}.W": d_z.T @ a, f"{self.name}.b": d_z.sum(axis=0)}
        return d_a, grads

    def param_count(self) -> int:
        return self.output_size * (self.input_size + 1)


def tanh_forward(z: np.ndarray):
    a = np.tanh(z)
    return a, a


def tanh_backward(d_a: np.ndarray, cache) -> np.ndarray:
    a = cache
    return d_a * (1.0 - a * a)


def dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], p: float) -> np.ndarray:
    """Inverted-dropout multiplier array with entries in {0, 1/(1-p)}."""
    if not (0.0 <= p < 1.0):
        raise DomainError(f"dropout probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


def dropout_apply(x: np.ndarray, p: float, rng: np.random.Generator):
    """Zero each unit with probability p, scale survivors by 1/(1-p).

    Returns (output, mask); E[output] equals x. Reuse the mask to replay
    the same thinned network in a backward pass.
    """
    mask = dropout_mask(rng, x.shape, p)
    return x * mask, mask


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over every element; returns (loss, d_pred)."""
    if pred.shape != target.shape:
        raise StructuralError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    if not math.isfinite(loss):
        raise NumericError("loss is not finite", where="mse")
    return loss, 2.0 * diff / diff.size


class Adam:
    """Adam with bias correction, one moment pair per parameter block."""

    def __init__(self, params: dict[str, np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        """Update ``params`` in place."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient", where=name)
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def lr_schedule(
    epoch: int,
    initial: float = 0.01,
    decay: float = 0.1,
    plateau_epochs: int = 10,
    decay_every: int = 50,
) -> float:
    """Step decay: hold ``initial`` for the first ``plateau_epochs`` epochs,
    then multiply by ``decay`` at every ``decay_every``-epoch milestone
    (epochs 10, 60, 110, ... under the defaults)."""
    if epoch < 0:
        raise DomainError(f"epoch must be >= 0, got {epoch}")
    if epoch < plateau_epochs:
        return initial
    n_decays = 1 + (epoch - plateau_epochs) // decay_every
    return initial * decay**n_decays


def finite_difference_check(loss_and_grads, params: dict[str, np.ndarray], step: float = 1e-5):
    """Compare analytic gradients with central finite differences.

    ``loss_and_grads()`` must evaluate the loss and its gradients at the
    current parameter values (dropout masks and data held fixed).  Every
    scalar parameter is perturbed.  Returns (max relative error, per-block
    max errors).

    The denominator is floored at 1e-6: below that the difference quotient
    is dominated by float64 cancellation (~1e-11 at this step size), so the
    comparison degrades gracefully into an absolute bound instead of
    amplifying roundoff.
    """
    _, grads = loss_and_grads()
    worst = 0.0
    per_block: dict[str, float] = {}
    for name, p in params.items():
        g = grads[name]
        block_worst = 0.0
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            lo_hi, _ = loss_and_grads()
            flat[idx] = orig - step
            lo_lo, _ = loss_and_grads()
            flat[idx] = orig
            fd = (lo_hi - lo_lo) / (2.0 * step)
            denom = max(abs(gflat[idx]), abs(fd), 1e-6)
            rel = abs(gflat[idx] - fd) / denom
            block_worst = max(block_worst, rel)
        per_block[name] = block_worst
        worst = max(worst, block_worst)
    return worst, per_block
