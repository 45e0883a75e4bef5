"""From-scratch feed-forward network: forward pass with inverted dropout,
MSE and cross-entropy losses, backpropagation, and Adadelta updates.

Hidden layers use one activation kind (ReLU by default, sigmoid selectable);
the output layer is always sigmoid.  Cross-entropy is computed over the
sigmoid outputs after clamping to [eps, 1] and renormalizing, so every
output unit receives gradient.  All math is float64.
"""

from dataclasses import dataclass

import numpy as np

from .encoding import decode_one_hot

CCE_EPS = 1e-7
LOSS_MODES = ("mse", "cce")
HIDDEN_ACTIVATIONS = ("relu", "sigmoid")


def sigmoid(x):
    # clip keeps exp() finite; sigmoid is saturated to machine precision
    # well inside +-700 so the result is unaffected
    z = np.asarray(x, dtype=float).clip(-700.0, 700.0)
    return 1.0 / (1.0 + np.exp(-z))


def sigmoid_deriv(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def relu(x):
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def relu_deriv(x):
    return (np.asarray(x, dtype=float) > 0).astype(float)


def activate(kind, x):
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation: {kind}")


def activate_deriv(kind, x):
    if kind == "relu":
        return relu_deriv(x)
    if kind == "sigmoid":
        return sigmoid_deriv(x)
    raise ValueError(f"unknown activation: {kind}")


def loss(outputs, target, mode="cce"):
    """MSE: 0.5 * sum((q - t)^2).  CCE: -sum(t * ln q~) with q~ = clamped, renormalized q."""
    q = np.asarray(outputs, dtype=float)
    t = np.asarray(target, dtype=float)
    if q.shape != t.shape:
        raise ValueError(f"output/target shape mismatch: {q.shape} vs {t.shape}")
    if mode == "mse":
        d = q - t
        return 0.5 * float(d @ d)
    if mode == "cce":
        c = q.clip(CCE_EPS, 1.0)
        qn = c / c.sum()
        return -float(t @ np.log(qn))
    raise ValueError(f"unknown loss mode: {mode}")


@dataclass
class ForwardTrace:
    """Per-layer intermediates of one forward pass.

    pre[i] is the pre-activation of layer i+1, acts[0] the input and acts[-1]
    the network outputs; masks[i] is the (scaled) dropout mask applied after
    hidden layer i+1, all-ones in eval mode.
    """

    pre: list
    acts: list
    masks: list

    @property
    def outputs(self):
        return self.acts[-1]


@dataclass
class Gradients:
    """Per-layer gradients mirroring Network shapes.

    When produced by backprop, d_w/d_b are views into one flat buffer
    (flat), which the Adadelta step uses for fused updates.
    """

    d_w: list
    d_b: list
    flat: np.ndarray = None


def _layout(dims):
    """(total size, [(w_offset, b_offset, fan_in, fan_out), ...]) for a flat buffer."""
    spans = []
    off = 0
    for fan_in, fan_out in zip(dims, dims[1:]):
        spans.append((off, off + fan_in * fan_out, fan_in, fan_out))
        off += fan_in * fan_out + fan_out
    return off, spans


def _views(flat, spans):
    ws, bs = [], []
    for w_off, b_off, fan_in, fan_out in spans:
        ws.append(flat[w_off:b_off].reshape(fan_in, fan_out))
        bs.append(flat[b_off:b_off + fan_out])
    return ws, bs


class Network:
    """Fully-connected classifier state: weights, biases, Adadelta accumulators.

    Weight matrix l has shape (dims[l], dims[l+1]); activations are row
    vectors, so a layer computes act(a @ W + b).  Glorot-uniform init, zero
    biases.  weights/biases (and the accumulators) are views into flat
    per-network buffers, so mutate them in place rather than rebinding.
    Training mutates the instance and is single-writer.
    """

    SAVE_FORMAT = 1

    def __init__(self, dims, seed=0, hidden_activation="relu", dropout=0.2,
                 loss_mode="cce"):
        dims = [int(d) for d in dims]
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"need >= 2 layer sizes, all >= 1: {dims}")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation: {hidden_activation}")
        if loss_mode not in LOSS_MODES:
            raise ValueError(f"unknown loss mode: {loss_mode}")
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1): {dropout}")
        self.dims = dims
        self.hidden_activation = hidden_activation
        self.dropout = float(dropout)
        self.loss_mode = loss_mode
        size, self._spans = _layout(dims)
        self._params = np.zeros(size)
        self._eg = np.zeros(size)
        self._ex = np.zeros(size)
        self.weights, self.biases = _views(self._params, self._spans)
        self.eg_w, self.eg_b = _views(self._eg, self._spans)
        self.ex_w, self.ex_b = _views(self._ex, self._spans)
        # scratch reused across backprop/adadelta calls to avoid allocation
        self._grad_flat = np.zeros(size)
        self._grad_views = _views(self._grad_flat, self._spans)
        self._scratch_a = np.empty(size)
        self._scratch_b = np.empty(size)
        rng = np.random.default_rng(seed)
        for w in self.weights:
            fan_in, fan_out = w.shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w[...] = rng.uniform(-limit, limit, size=w.shape)

    @property
    def n_layers(self):
        return len(self.weights)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        if (self.dims, self.hidden_activation, self.dropout, self.loss_mode) != (
                other.dims, other.hidden_activation, other.dropout, other.loss_mode):
            return False
        return (np.array_equal(self._params, other._params)
                and np.array_equal(self._eg, other._eg)
                and np.array_equal(self._ex, other._ex))

    def forward(self, x, rng=None):
        """One forward pass.  Passing a numpy Generator enables train mode:
        each hidden activation is multiplied by a Bernoulli(1-p) mask scaled
        by 1/(1-p).  Without it (eval) no masking happens and masks are ones.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dims[0],):
            raise ValueError(f"input shape {x.shape} != ({self.dims[0]},)")
        last = self.n_layers - 1
        relu_hidden = self.hidden_activation == "relu"
        train = rng is not None and self.dropout > 0.0
        keep = 1.0 - self.dropout
        pre, acts, masks = [], [x], []
        a = x
        for i in range(self.n_layers):
            z = a @ self.weights[i]
            z += self.biases[i]
            pre.append(z)
            if i == last:
                a = sigmoid(z)
            else:
                a = np.maximum(z, 0.0) if relu_hidden else sigmoid(z)
                if train:
                    mask = (rng.random(z.shape[0]) < keep) / keep
                else:
                    mask = np.ones(z.shape[0])
                a *= mask
                masks.append(mask)
            acts.append(a)
        return ForwardTrace(pre, acts, masks)

    def loss_value(self, outputs, target):
        return loss(outputs, target, self.loss_mode)

    def backprop(self, trace, target):
        """Gradients of the configured loss for one (trace, target) pair.

        MSE output delta is (q - t) * q * (1 - q); hidden deltas chain the
        layer activation derivative and the dropout mask.  CCE differentiates
        through the clamp-and-renormalize, gating components the clamp froze.

        The result reuses one per-network buffer: it stays valid until the
        next backprop call on this network, so copy it to keep it longer.
        """
        target = np.asarray(target, dtype=float)
        acts = trace.acts
        if len(acts) != self.n_layers + 1 or any(
                a.shape != (d,) for a, d in zip(acts, self.dims)):
            raise ValueError("trace does not match network shape")
        if target.shape != (self.dims[-1],):
            raise ValueError(f"target shape {target.shape} != ({self.dims[-1]},)")
        q = acts[-1]
        if self.loss_mode == "mse":
            delta = (q - target) * q * (1.0 - q)
        else:
            c = q.clip(CCE_EPS, 1.0)
            d_loss = np.where(q > CCE_EPS, target.sum() / c.sum() - target / c, 0.0)
            delta = d_loss * q * (1.0 - q)
        relu_hidden = self.hidden_activation == "relu"
        flat = self._grad_flat
        d_w, d_b = self._grad_views
        for i in range(self.n_layers - 1, -1, -1):
            np.multiply(trace.acts[i][:, None], delta, out=d_w[i])
            d_b[i][...] = delta
            if i > 0:
                upstream = self.weights[i] @ delta
                upstream *= trace.masks[i - 1]
                if relu_hidden:
                    delta = upstream * (trace.pre[i - 1] > 0)
                else:
                    delta = upstream * sigmoid_deriv(trace.pre[i - 1])
        return Gradients(d_w, d_b, flat)

    def adadelta_step(self, grads, rho=0.95, eps=1e-6):
        """E[g2] <- rho E[g2] + (1-rho) g2; step = sqrt((E[dx2]+eps)/(E[g2]+eps)) g;
        p -= step; E[dx2] <- rho E[dx2] + (1-rho) step2."""
        g = grads.flat
        if g is None or g.shape != self._params.shape \
                or grads.d_w[0].shape != self.weights[0].shape:
            # externally assembled gradients: validate and pack into one buffer
            if (len(grads.d_w) != self.n_layers
                    or any(a.shape != w.shape for a, w in zip(grads.d_w, self.weights))
                    or any(a.shape != b.shape for a, b in zip(grads.d_b, self.biases))):
                raise ValueError("gradient shapes do not match network parameters")
            g = np.empty_like(self._params)
            d_w, d_b = _views(g, self._spans)
            for src, dst in zip(grads.d_w + grads.d_b, d_w + d_b):
                dst[...] = src
        eg, ex, s1, s2 = self._eg, self._ex, self._scratch_a, self._scratch_b
        np.multiply(g, g, out=s1)
        eg *= rho
        s1 *= 1.0 - rho
        eg += s1
        np.add(ex, eps, out=s1)
        np.add(eg, eps, out=s2)
        np.divide(s1, s2, out=s1)
        np.sqrt(s1, out=s1)
        s1 *= g  # s1 is now the (negated) parameter step
        self._params -= s1
        ex *= rho
        np.multiply(s1, s1, out=s2)
        s2 *= 1.0 - rho
        ex += s2

    def train_epoch(self, samples, rng=None):
        """One shuffled pass of per-sample forward/backprop/Adadelta updates.

        samples: sequence of (input vector, target vector).  Returns the mean
        loss measured before each update.  rng seeds both the shuffle and the
        dropout masks; pass an int or Generator for reproducibility.
        """
        if len(samples) == 0:
            raise ValueError("empty training set")
        rng = np.random.default_rng(rng)
        total = 0.0
        for i in rng.permutation(len(samples)):
            x, t = samples[i]
            trace = self.forward(x, rng=rng)
            total += self.loss_value(trace.outputs, t)
            self.adadelta_step(self.backprop(trace, t))
        return total / len(samples)

    def predict(self, x):
        """Eval-mode class label (1-based argmax of the outputs)."""
        return decode_one_hot(self.forward(x).outputs)

    def forward_batch(self, X):
        """Eval-mode outputs for an (n, dims[0]) matrix, one row per sample."""
        a = np.asarray(X, dtype=float)
        if a.ndim != 2 or a.shape[1] != self.dims[0]:
            raise ValueError(f"batch shape {a.shape} incompatible with input dim {self.dims[0]}")
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = sigmoid(z) if i == last else activate(self.hidden_activation, z)
        return a

    def predict_batch(self, X):
        return np.argmax(self.forward_batch(X), axis=1) + 1

    def save(self, path):
        """Versioned dump of dims, weights, biases, and accumulators (.npz)."""
        arrays = {
            "format": np.int64(self.SAVE_FORMAT),
            "dims": np.asarray(self.dims, dtype=np.int64),
            "hidden_activation": np.str_(self.hidden_activation),
            "dropout": np.float64(self.dropout),
            "loss_mode": np.str_(self.loss_mode),
            "params": self._params,
            "eg": self._eg,
            "ex": self._ex,
        }
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as data:
            fmt = int(data["format"])
            if fmt != cls.SAVE_FORMAT:
                raise ValueError(f"unsupported model format {fmt}")
            net = cls([int(d) for d in data["dims"]],
                      hidden_activation=str(data["hidden_activation"]),
                      dropout=float(data["dropout"]),
                      loss_mode=str(data["loss_mode"]))
            net._params[...] = data["params"]
            net._eg[...] = data["eg"]
            net._ex[...] = data["ex"]
        return net


def numeric_gradients(net, x, target, h=1e-5):
    """Central-difference loss gradients; the independent check on backprop."""
    x = np.asarray(x, dtype=float)

    def f():
        return net.loss_value(net.forward(x).outputs, target)

    d_w = [np.zeros_like(w) for w in net.weights]
    d_b = [np.zeros_like(b) for b in net.biases]
    for tensor, out in zip(net.weights + net.biases, d_w + d_b):
        flat = tensor.reshape(-1)
        grad = out.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = f()
            flat[j] = orig - h
            down = f()
            flat[j] = orig
            grad[j] = (up - down) / (2.0 * h)
    return Gradients(d_w, d_b)


def gradient_check(n_cases=100, seed=0, h=1e-5):
    """Max relative error between analytic and numeric gradients over random
    small nets, inputs, and one-hot targets in both loss modes (dropout off).

    Relative error uses max(|a|, |n|, 1e-6) in the denominator so near-zero
    gradients are judged on absolute agreement.  ReLU cases are redrawn when
    a pre-activation sits within the finite-difference step of the kink.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < n_cases:
        mode = LOSS_MODES[done % 2]
        hidden = HIDDEN_ACTIVATIONS[(done // 2) % 2]
        n_layers = int(rng.integers(2, 5))
        dims = [int(rng.integers(2, 8)) for _ in range(n_layers + 1)]
        net = Network(dims, seed=int(rng.integers(1 << 31)),
                      hidden_activation=hidden, dropout=0.0, loss_mode=mode)
        x = rng.uniform(-1.0, 1.0, dims[0])
        t = np.zeros(dims[-1])
        t[rng.integers(dims[-1])] = 1.0
        trace = net.forward(x)
        if hidden == "relu" and any(np.any(np.abs(z) < 50 * h) for z in trace.pre[:-1]):
            continue  # finite differences are invalid across the ReLU kink
        analytic = net.backprop(trace, t)
        numeric = numeric_gradients(net, x, t, h=h)
        for a, n in zip(analytic.d_w + analytic.d_b, numeric.d_w + numeric.d_b):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
        done += 1
    return worst
