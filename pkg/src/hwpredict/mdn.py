"""Mixture density networks for motion-profile prediction.

Each network maps a fixed-size feature vector to a Gaussian mixture over the
cumulative distances travelled at 1..5 s. The implementation is plain numpy:
two relu layers (64, 32) and a head emitting component logits, means and
log-variances. Training uses Adam on the mixture negative log likelihood.

Also hosts the physics baselines (constant velocity, decaying acceleration)
and the expert-collection selector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .features import (FEATURE_SCHEMAS, FeatureVector, change_schema_id,
                       follow_schema_id)

N_OUT = 5  # distance predictions at 1..5 s
HIDDEN = (64, 32)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class MdnModel:
    """Weights of one expert. Arrays are row-major: W maps in -> out."""

    schema_id: str
    n_components: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]


@dataclass(frozen=True)
class MixtureOutput:
    """Gaussian mixture over cumulative distances (metres) at 1..5 s."""

    weights: np.ndarray  # (M,)
    means: np.ndarray  # (M, N_OUT)
    variances: np.ndarray  # (M, N_OUT)


@dataclass(frozen=True)
class MotionProfile:
    """Speeds at 1 Hz over the horizon plus per-step distance stds."""

    speeds: np.ndarray  # (N_OUT,) m/s
    distance_stds: np.ndarray  # (N_OUT,) m


@dataclass(frozen=True)
class TrainParams:
    lr: float = 1e-3
    batch: int = 1024
    epochs: int = 10
    seed: int = 0


def init_model(schema_id: str, n_components: int = 1, seed: int = 0) -> MdnModel:
    """He-initialised model for a feature schema."""
    input_dim = FEATURE_SCHEMAS[schema_id]
    rng = np.random.default_rng(seed)
    out_dim = n_components * (1 + 2 * N_OUT)
    dims = [input_dim, *HIDDEN, out_dim]
    ws = [rng.normal(0.0, math.sqrt(2.0 / dims[i]), size=(dims[i + 1], dims[i]))
          for i in range(3)]
    return MdnModel(
        schema_id=schema_id,
        n_components=n_components,
        W1=ws[0], b1=np.zeros(dims[1]),
        W2=ws[1], b2=np.zeros(dims[2]),
        W3=ws[2], b3=np.zeros(dims[3]),
    )


def _split_head(model: MdnModel, o: np.ndarray):
    m, n = model.n_components, N_OUT
    logits = o[..., :m]
    means = o[..., m:m + m * n].reshape(*o.shape[:-1], m, n)
    logvars = o[..., m + m * n:].reshape(*o.shape[:-1], m, n)
    return logits, means, logvars


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def forward(model: MdnModel, z) -> MixtureOutput:
    """Deterministic mixture parameters for one feature vector."""
    if isinstance(z, FeatureVector):
        if z.schema_id != model.schema_id:
            raise ValueError(f"feature schema {z.schema_id!r} does not match "
                             f"model schema {model.schema_id!r}")
        z = z.values
    z = np.asarray(z, dtype=float)
    h1 = np.maximum(model.W1 @ z + model.b1, 0.0)
    h2 = np.maximum(model.W2 @ h1 + model.b2, 0.0)
    o = model.W3 @ h2 + model.b3
    logits, means, logvars = _split_head(model, o)
    return MixtureOutput(weights=_softmax(logits), means=means,
                         variances=np.exp(logvars))


def nll_loss(out: MixtureOutput, target) -> float:
    """Mixture negative log likelihood, stabilised via log-sum-exp."""
    target = np.asarray(target, dtype=float)
    eps = target - out.means  # (M, N)
    if np.any(out.variances <= 0.0):
        raise ValueError("non-positive variance in mixture output")
    log_comp = (
        np.log(np.maximum(out.weights, 1e-300))
        - 0.5 * np.sum(eps * eps / out.variances, axis=-1)
        - 0.5 * np.sum(np.log(out.variances), axis=-1)
        - 0.5 * N_OUT * LOG_2PI
    )
    mx = np.max(log_comp, axis=-1)
    return float(-(mx + np.log(np.sum(np.exp(log_comp - mx), axis=-1))))


def _forward_batch(model: MdnModel, Z: np.ndarray):
    h1 = np.maximum(Z @ model.W1.T + model.b1, 0.0)
    h2 = np.maximum(h1 @ model.W2.T + model.b2, 0.0)
    o = h2 @ model.W3.T + model.b3
    return h1, h2, o


def _batch_nll_and_grads(model: MdnModel, Z: np.ndarray, Y: np.ndarray):
    """Mean NLL over a batch and its gradients w.r.t. all parameters."""
    B = Z.shape[0]
    m, n = model.n_components, N_OUT
    h1, h2, o = _forward_batch(model, Z)
    logits, means, logvars = _split_head(model, o)
    variances = np.exp(logvars)
    eps = Y[:, None, :] - means  # (B, M, N)

    quad = np.sum(eps * eps / variances, axis=-1)  # (B, M)
    logdet = np.sum(logvars, axis=-1)
    log_joint = logits - np.max(logits, axis=-1, keepdims=True)
    log_pi = log_joint - np.log(np.sum(np.exp(log_joint), axis=-1, keepdims=True))
    log_comp = log_pi - 0.5 * quad - 0.5 * logdet - 0.5 * n * LOG_2PI
    mx = np.max(log_comp, axis=-1, keepdims=True)
    lse = mx[:, 0] + np.log(np.sum(np.exp(log_comp - mx), axis=-1))
    nll = float(np.mean(-lse))

    resp = np.exp(log_comp - lse[:, None])  # responsibilities, (B, M)
    pi = np.exp(log_pi)
    d_logits = (pi - resp) / B
    d_means = (-resp[:, :, None] * eps / variances) / B
    d_logvars = (-resp[:, :, None] * (0.5 * eps * eps / variances - 0.5)) / B
    d_o = np.concatenate(
        [d_logits, d_means.reshape(B, m * n), d_logvars.reshape(B, m * n)], axis=1)

    gW3 = d_o.T @ h2
    gb3 = d_o.sum(axis=0)
    d_h2 = (d_o @ model.W3) * (h2 > 0.0)
    gW2 = d_h2.T @ h1
    gb2 = d_h2.sum(axis=0)
    d_h1 = (d_h2 @ model.W2) * (h1 > 0.0)
    gW1 = d_h1.T @ Z
    gb1 = d_h1.sum(axis=0)
    return nll, [gW1, gb1, gW2, gb2, gW3, gb3]


def gradients(model: MdnModel, z, target) -> list[np.ndarray]:
    """Analytic gradients of nll_loss w.r.t. [W1, b1, W2, b2, W3, b3]."""
    if isinstance(z, FeatureVector):
        z = z.values
    Z = np.asarray(z, dtype=float)[None, :]
    Y = np.asarray(target, dtype=float)[None, :]
    _, grads = _batch_nll_and_grads(model, Z, Y)
    return grads


def mean_nll(model: MdnModel, Z: np.ndarray, Y: np.ndarray) -> float:
    nll, _ = _batch_nll_and_grads(model, np.asarray(Z, float), np.asarray(Y, float))
    return nll


def train(model: MdnModel, Z: np.ndarray, Y: np.ndarray,
          hyper: TrainParams = TrainParams()) -> MdnModel:
    """Adam minibatch training on mean NLL; deterministic under the seed.

    Returns a new model; the input model is not modified.
    """
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if len(Z) == 0:
        raise ValueError("empty training dataset")
    rng = np.random.default_rng(hyper.seed)
    params = [p.copy() for p in model.params()]
    model = MdnModel(model.schema_id, model.n_components, *params)
    ms = [np.zeros_like(p) for p in params]
    vs = [np.zeros_like(p) for p in params]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0
    for _ in range(hyper.epochs):
        order = rng.permutation(len(Z))
        for lo in range(0, len(Z), hyper.batch):
            idx = order[lo:lo + hyper.batch]
            _, grads = _batch_nll_and_grads(model, Z[idx], Y[idx])
            step += 1
            for p, g, mom, vel in zip(params, grads, ms, vs):
                mom += (1.0 - beta1) * (g - mom)
                vel += (1.0 - beta2) * (g * g - vel)
                mhat = mom / (1.0 - beta1 ** step)
                vhat = vel / (1.0 - beta2 ** step)
                p -= hyper.lr * mhat / (np.sqrt(vhat) + adam_eps)
    return model


def to_motion_profile(out: MixtureOutput, current_speed: float) -> MotionProfile:
    """Motion profile from the highest-weight component.

    Speeds are successive differences of the cumulative distance means at
    1 Hz, floored at 0 (highway vehicles do not reverse).
    """
    top = int(np.argmax(out.weights))
    mu = out.means[top]
    speeds = np.maximum(np.diff(mu, prepend=0.0), 0.0)
    return MotionProfile(speeds=speeds, distance_stds=np.sqrt(out.variances[top]))


DA_DECAY_TIME = 2.0  # s; exponential decay constant of the DA baseline

DEFAULT_BASELINE_STDS = np.array([0.5, 1.0, 1.5, 2.0, 2.5])


def cv_baseline(state, stds: np.ndarray | None = None) -> MotionProfile:
    """Constant-velocity baseline: hold the current speed."""
    stds = DEFAULT_BASELINE_STDS if stds is None else np.asarray(stds, float)
    return MotionProfile(speeds=np.full(N_OUT, max(0.0, state.speed)),
                         distance_stds=stds.copy())


def da_baseline(state, decay_time: float = DA_DECAY_TIME,
                stds: np.ndarray | None = None) -> MotionProfile:
    """Decaying-acceleration baseline.

    a(t) = a0 * exp(-t / T), so v(t) = v0 + a0*T*(1 - exp(-t / T)), floored
    at 0. The per-step stds are fitted offline on residuals, like CV.
    """
    stds = DEFAULT_BASELINE_STDS if stds is None else np.asarray(stds, float)
    t = np.arange(1, N_OUT + 1, dtype=float)
    v = state.speed + state.acceleration * decay_time * (1.0 - np.exp(-t / decay_time))
    return MotionProfile(speeds=np.maximum(v, 0.0), distance_stds=stds.copy())


@dataclass
class ExpertCollection:
    """4 follow-lane + 16 change-lane specialists keyed by schema id."""

    models: dict[str, MdnModel] = field(default_factory=dict)

    def add(self, model: MdnModel) -> None:
        self.models[model.schema_id] = model

    def select(self, behaviour: str, n_front: int, n_side: int = 0) -> MdnModel:
        """Expert for a behaviour and context size; counts clamped to 3."""
        n_front = min(max(n_front, 0), 3)
        n_side = min(max(n_side, 0), 3)
        if behaviour == "follow":
            return self.models[follow_schema_id(n_front)]
        if behaviour == "change":
            return self.models[change_schema_id(n_front, n_side)]
        raise ValueError(f"unknown behaviour {behaviour!r}")


def select_expert(collection: ExpertCollection, behaviour: str,
                  n_front: int, n_side: int = 0) -> MdnModel:
    return collection.select(behaviour, n_front, n_side)


def init_collection(n_components: int = 1, seed: int = 0) -> ExpertCollection:
    """Freshly initialised full expert collection (all 20 schemas)."""
    coll = ExpertCollection()
    for i, schema in enumerate(sorted(FEATURE_SCHEMAS)):
        coll.add(init_model(schema, n_components=n_components, seed=seed + i))
    return coll


def save_collection(coll: ExpertCollection, path) -> None:
    doc = {
        "format": "hwpredict-mdn-weights-v1",
        "models": {
            sid: {
                "n_components": m.n_components,
                "params": {name: p.tolist()
                           for name, p in zip(("W1", "b1", "W2", "b2", "W3", "b3"),
                                              m.params())},
            }
            for sid, m in coll.models.items()
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_collection(path) -> ExpertCollection:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != "hwpredict-mdn-weights-v1":
        raise ValueError(f"unsupported weight file format: {doc.get('format')!r}")
    coll = ExpertCollection()
    for sid, entry in doc["models"].items():
        p = {k: np.asarray(v, dtype=float) for k, v in entry["params"].items()}
        coll.add(MdnModel(sid, entry["n_components"], p["W1"], p["b1"],
                          p["W2"], p["b2"], p["W3"], p["b3"]))
    return coll
