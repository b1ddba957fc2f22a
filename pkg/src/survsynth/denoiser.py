"""Noise-prediction MLP with a survival risk head and hand-written backward pass.

Layout of one forward call (n rows)::

    h = [c_in(u) * zu_cont, flatten(zu_disc), temb(u)]
    a = silu(... silu(h W0 + b0) ...)            trunk
    eps_hat  = a Wc + bc                          continuous head
    logits_j = a Wd_j + bd_j                      one head per discrete channel
    z0_hat   = zu_cont - sigma(u) * eps_hat
    x        = [z0_hat[:, :d_cont], softmax(logits_j) for covariate channels]
    risk     = silu(x Ws0 + bs0) Ws1 + bs1        survival head

``c_in(u) = 1 / sqrt(sigma(u)^2 + 1)`` keeps the trunk input at unit scale
across the whole noise range. The survival head only sees denoised
covariates; the time column and the event channel are left out so the risk
cannot read the outcome it is scored against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import FeatureSchema
from .diffusion import NoiseSchedule, sigma_cont


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    return x * _sigmoid(x)


def silu_grad(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


def time_embedding(u: float, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angle = 1000.0 * u * freqs
    return np.concatenate([np.cos(angle), np.sin(angle)])


@dataclass
class DenoiserParams:
    tensors: dict[str, np.ndarray]
    d_cont: int
    cardinalities: list[int]
    widths: tuple[int, ...]
    surv_width: int
    time_dim: int
    schedule: NoiseSchedule

    @property
    def n_channels(self) -> int:
        return len(self.cardinalities)

    @property
    def input_dim(self) -> int:
        return self.d_cont + 1 + sum(c + 1 for c in self.cardinalities) + self.time_dim

    @property
    def surv_input_dim(self) -> int:
        return self.d_cont + sum(c + 1 for c in self.cardinalities[:-1])

    def n_params(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(
            {k: v.copy() for k, v in self.tensors.items()},
            self.d_cont,
            list(self.cardinalities),
            tuple(self.widths),
            self.surv_width,
            self.time_dim,
            self.schedule,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors.values()])

    def with_flat(self, vec: np.ndarray) -> "DenoiserParams":
        out = self.copy()
        pos = 0
        for k, v in out.tensors.items():
            out.tensors[k] = vec[pos : pos + v.size].reshape(v.shape).copy()
            pos += v.size
        return out


def param_shapes(d_cont, cardinalities, widths, surv_width, time_dim) -> dict[str, tuple[int, ...]]:
    in_dim = d_cont + 1 + sum(c + 1 for c in cardinalities) + time_dim
    shapes = {}
    prev = in_dim
    for i, w in enumerate(widths):
        shapes[f"trunk.W{i}"] = (prev, w)
        shapes[f"trunk.b{i}"] = (w,)
        prev = w
    shapes["cont.W"] = (prev, d_cont + 1)
    shapes["cont.b"] = (d_cont + 1,)
    for j, c in enumerate(cardinalities):
        shapes[f"disc{j}.W"] = (prev, c + 1)
        shapes[f"disc{j}.b"] = (c + 1,)
    s_in = d_cont + sum(c + 1 for c in cardinalities[:-1])
    shapes["surv.W0"] = (s_in, surv_width)
    shapes["surv.b0"] = (surv_width,)
    shapes["surv.W1"] = (surv_width, 1)
    shapes["surv.b1"] = (1,)
    return shapes


def init_params(
    schema: FeatureSchema,
    widths=(256, 256),
    seed: int = 0,
    surv_width: int = 64,
    time_dim: int = 32,
    schedule: NoiseSchedule | None = None,
) -> DenoiserParams:
    """Fan-in scaled uniform weights, zero biases."""
    d_cont, cardinalities = schema.d_cont, schema.cardinalities
    widths = tuple(int(w) for w in widths)
    if not widths or min(widths) < 1 or surv_width < 1:
        raise ValueError("layer widths must be >= 1")
    if time_dim < 2 or time_dim % 2:
        raise ValueError("time_dim must be a positive even number")
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(d_cont, cardinalities, widths, surv_width, time_dim).items():
        if len(shape) == 2:
            bound = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return DenoiserParams(
        tensors, d_cont, list(cardinalities), widths, surv_width, time_dim, schedule or NoiseSchedule()
    )


@dataclass
class DenoiserOutput:
    eps_hat: np.ndarray
    logits: list[np.ndarray]
    x0_probs: list[np.ndarray]
    risk: np.ndarray
    z0_hat: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)


def forward(params: DenoiserParams, zu_cont: np.ndarray, zu_disc: list[np.ndarray], u: float) -> DenoiserOutput:
    p = params.tensors
    n = len(zu_cont)
    if zu_cont.shape != (n, params.d_cont + 1) or len(zu_disc) != params.n_channels:
        raise ValueError("noisy batch does not match the network layout")
    for z, c in zip(zu_disc, params.cardinalities):
        if z.shape != (n, c + 1):
            raise ValueError("discrete channel shape does not match the network layout")
    if np.isnan(zu_cont).any() or any(np.isnan(z).any() for z in zu_disc):
        raise ValueError("NaN in denoiser input")

    sigma = sigma_cont(u, params.schedule)
    c_in = 1.0 / np.sqrt(sigma**2 + 1.0)
    temb = np.broadcast_to(time_embedding(u, params.time_dim), (n, params.time_dim))
    h = np.concatenate([c_in * zu_cont, *zu_disc, temb], axis=1)
    acts, pres = [h], []
    for i in range(len(params.widths)):
        pre = acts[-1] @ p[f"trunk.W{i}"] + p[f"trunk.b{i}"]
        pres.append(pre)
        acts.append(silu(pre))
    a = acts[-1]
    eps_hat = a @ p["cont.W"] + p["cont.b"]
    logits = [a @ p[f"disc{j}.W"] + p[f"disc{j}.b"] for j in range(params.n_channels)]
    probs = [softmax(lg) for lg in logits]
    z0_hat = zu_cont - sigma * eps_hat
    x = np.concatenate([z0_hat[:, : params.d_cont], *probs[:-1]], axis=1)
    s_pre = x @ p["surv.W0"] + p["surv.b0"]
    s_act = silu(s_pre)
    risk = (s_act @ p["surv.W1"] + p["surv.b1"])[:, 0]
    cache = {
        "params_id": id(params),
        "n": n,
        "sigma": sigma,
        "acts": acts,
        "pres": pres,
        "x": x,
        "s_pre": s_pre,
        "s_act": s_act,
    }
    return DenoiserOutput(eps_hat, logits, probs, risk, z0_hat, cache)


def backward(
    params: DenoiserParams,
    out: DenoiserOutput,
    grad_eps_hat: np.ndarray | None = None,
    grad_logits: list[np.ndarray] | None = None,
    grad_risk: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given its gradients w.r.t. the network outputs.

    ``out`` must come from :func:`forward` with these same ``params``.
    """
    cache = out.cache
    if not cache or cache.get("params_id") != id(params):
        raise ValueError("backward called with an output that was not produced by these params")
    p = params.tensors
    n = cache["n"]
    g_eps = np.zeros((n, params.d_cont + 1)) if grad_eps_hat is None else np.array(grad_eps_hat, dtype=float)
    g_log = (
        [np.zeros((n, c + 1)) for c in params.cardinalities]
        if grad_logits is None
        else [np.array(g, dtype=float) for g in grad_logits]
    )
    grads = {k: np.zeros_like(v) for k, v in p.items()}

    if grad_risk is not None:
        g_r = np.asarray(grad_risk, dtype=float).reshape(n, 1)
        grads["surv.W1"] = cache["s_act"].T @ g_r
        grads["surv.b1"] = g_r.sum(axis=0)
        g_spre = (g_r @ p["surv.W1"].T) * silu_grad(cache["s_pre"])
        grads["surv.W0"] = cache["x"].T @ g_spre
        grads["surv.b0"] = g_spre.sum(axis=0)
        g_x = g_spre @ p["surv.W0"].T
        # z0_hat = zu - sigma * eps_hat on the covariate columns
        g_eps[:, : params.d_cont] -= cache["sigma"] * g_x[:, : params.d_cont]
        pos = params.d_cont
        for j, c in enumerate(params.cardinalities[:-1]):
            g_p = g_x[:, pos : pos + c + 1]
            pr = out.x0_probs[j]
            g_log[j] = g_log[j] + pr * (g_p - np.sum(g_p * pr, axis=1, keepdims=True))
            pos += c + 1

    a = cache["acts"][-1]
    grads["cont.W"] = a.T @ g_eps
    grads["cont.b"] = g_eps.sum(axis=0)
    g_a = g_eps @ p["cont.W"].T
    for j in range(params.n_channels):
        grads[f"disc{j}.W"] = a.T @ g_log[j]
        grads[f"disc{j}.b"] = g_log[j].sum(axis=0)
        g_a = g_a + g_log[j] @ p[f"disc{j}.W"].T
    for i in reversed(range(len(params.widths))):
        g_pre = g_a * silu_grad(cache["pres"][i])
        grads[f"trunk.W{i}"] = cache["acts"][i].T @ g_pre
        grads[f"trunk.b{i}"] = g_pre.sum(axis=0)
        if i:
            g_a = g_pre @ p[f"trunk.W{i}"].T
    return grads
