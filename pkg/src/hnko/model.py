"""The Koopman autoencoder model and its loss terms.

An :class:`HnkoModel` bundles

- an encoder MLP (tanh hidden layers, identity output) mapping states x in
  R^n to latent points y in R^p,
- a decoder MLP mapping back,
- an exactly orthogonal latent advance K (see :mod:`hnko.orthogonal`),
- a learnable sphere radius r, stored as log_radius so r = exp(log_radius)
  stays positive without clipping,
- a hyperplane matrix V of shape (p, q) whose columns the latent cloud is
  pushed away from.

Loss terms over a window of snapshots x_0 .. x_m (sums, not means):

- reconstruction   L_dict   = sum_i ||x_i - dec(enc(x_i))||^2
- latent advance   L_koop   = sum_i ||K y_i - y_{i+1}||^2
- sphere           L_sphere = sum_i (||y_i||^2 - r^2)^2
- degeneracy       L_deg    = sum_k sum_i <v_k/||v_k||, y_i>^2
- independence     L_ind    = sum_{k != j} <v_k, v_j>^2   (ordered pairs)

q is constrained to p - floor(p/2) - 1 <= q <= p - 2: enough hyperplanes to
pin the latent cloud to a low-dimensional great circle, few enough to leave
room for the dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import orthogonal
from .systems import Trajectory

__all__ = [
    "MlpParams",
    "HnkoModel",
    "LossBreakdown",
    "default_width",
    "init_mlp",
    "init_model",
    "mlp_forward",
    "encode",
    "decode",
    "loss_dict",
    "loss_koop",
    "loss_sphere",
    "loss_deg",
    "loss_ind",
    "total_loss",
    "loss_graph",
    "predict",
    "q_range",
    "params_of",
    "with_params",
]

_MIN_COLUMN_NORM_SQ = 1e-24


@dataclass
class MlpParams:
    """Weights/biases of a fully connected net; layer l maps weights[l] @ x + biases[l],
    tanh after every layer except the last."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight layer (and at least one layer)")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1, 1) for b in self.biases]
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2:
                raise ValueError(f"weight {idx} must be 2-D, got shape {w.shape}")
            if b.shape[0] != w.shape[0]:
                raise ValueError(
                    f"bias {idx} has {b.shape[0]} rows, weight {idx} produces {w.shape[0]}"
                )
            if idx > 0 and w.shape[1] != self.weights[idx - 1].shape[0]:
                raise ValueError(
                    f"layer {idx} expects {w.shape[1]} inputs, "
                    f"layer {idx - 1} outputs {self.weights[idx - 1].shape[0]}"
                )

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]


def q_range(p: int) -> tuple[int, int]:
    """Admissible hyperplane counts for latent dimension p (inclusive bounds)."""
    return p - p // 2 - 1, p - 2


@dataclass
class HnkoModel:
    encoder: MlpParams
    decoder: MlpParams
    koopman: orthogonal.OrthogonalKoopman
    log_radius: float
    hyperplanes: np.ndarray

    def __post_init__(self):
        self.hyperplanes = np.asarray(self.hyperplanes, dtype=np.float64)
        if self.hyperplanes.ndim != 2:
            raise ValueError("hyperplanes must be a (p, q) matrix")
        p = self.encoder.out_dim
        if self.koopman.dim != p:
            raise ValueError(
                f"latent map size {self.koopman.dim} != encoder output {p}"
            )
        if self.decoder.in_dim != p:
            raise ValueError(f"decoder input {self.decoder.in_dim} != latent size {p}")
        if self.decoder.out_dim != self.encoder.in_dim:
            raise ValueError(
                f"decoder output {self.decoder.out_dim} != encoder input {self.encoder.in_dim}"
            )
        if self.hyperplanes.shape[0] != p:
            raise ValueError(
                f"hyperplanes have {self.hyperplanes.shape[0]} rows, latent size is {p}"
            )
        lo, hi = q_range(p)
        q = self.hyperplanes.shape[1]
        if not lo <= q <= hi:
            raise ValueError(
                f"hyperplane count q={q} outside [{lo}, {hi}] for latent dimension p={p}"
            )
        self.log_radius = float(self.log_radius)

    @property
    def n(self) -> int:
        return self.encoder.in_dim

    @property
    def p(self) -> int:
        return self.encoder.out_dim

    @property
    def q(self) -> int:
        return self.hyperplanes.shape[1]

    @property
    def radius(self) -> float:
        return math.exp(self.log_radius)


@dataclass
class LossBreakdown:
    dict: float
    koop: float
    sphere: float
    deg: float
    ind: float
    total: float
    weights: tuple[float, float, float, float, float]

    def as_dict(self) -> dict[str, float]:
        return {
            "dict": self.dict,
            "koop": self.koop,
            "sphere": self.sphere,
            "deg": self.deg,
            "ind": self.ind,
            "total": self.total,
        }


# --- initialization ----------------------------------------------------------


def default_width(p: int) -> int:
    return max(64, 4 * p)


def _xavier(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_mlp(sizes: list[int], rng: np.random.Generator) -> MlpParams:
    """Xavier-uniform weights, zero biases, for the layer sizes given."""
    weights = [_xavier(rng, sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
    biases = [np.zeros((s, 1)) for s in sizes[1:]]
    return MlpParams(weights, biases)


_WARM_SCALE = 0.2


def _warm_mlp(
    sizes: list[int],
    rng: np.random.Generator,
    target: np.ndarray,
    offset: np.ndarray | None = None,
    inputs: np.ndarray | None = None,
    center: np.ndarray | None = None,
) -> MlpParams:
    """MLP whose small-signal composition approximates ``target @ x + offset``.

    The linearization happens around ``center`` (the first layer's bias
    cancels it), and when ``inputs`` samples are given the first layer's gain
    is calibrated so their pre-activations stay within ``_WARM_SCALE`` --
    tanh's curvature error would otherwise be amplified by the rescaling
    last layer when the data sits far from the origin or spans a large
    range.  One random orthonormal carrier basis is drawn per hidden layer,
    so the linear composition equals the target map exactly and stays
    perfectly conditioned; tanh curvature at the working scale is the only
    deviation.
    """
    s = _WARM_SCALE
    mid = np.zeros(sizes[0]) if center is None else np.asarray(center, dtype=np.float64)
    hidden = sizes[1:-1]
    a = np.asarray(target, dtype=np.float64)
    if not hidden:
        # a single affine layer realizes the map exactly; no linearization
        last = np.zeros(sizes[-1]) if offset is None else np.asarray(offset, dtype=np.float64)
        return MlpParams([a.copy()], [last.reshape(-1, 1).copy()])
    # Factor the map through orthonormal carrier subspaces, one per hidden
    # layer: W_last (U sigma) ... E_{i+1} E_i^T ... E_1 V^T = U sigma V^T = A
    # holds exactly, every factor is perfectly conditioned, and the hidden
    # signal is scaled into tanh's near-linear range and back out.
    u, sv, vt = np.linalg.svd(a, full_matrices=False)
    rank = min(sv.shape[0], min(hidden))
    u, sv, vt = u[:, :rank], sv[:rank], vt[:rank]
    swing = 1.0
    if inputs is not None and np.asarray(inputs).shape[0] > 0:
        proj = (np.asarray(inputs, dtype=np.float64) - mid) @ vt.T
        swing = max(float(np.linalg.norm(proj, axis=1).max()), 1e-3)
    carriers = []
    for width in hidden:
        basis, _ = np.linalg.qr(rng.standard_normal((width, rank)))
        carriers.append(basis)
    weights = [(s / swing) * (carriers[0] @ vt)]
    biases = [-(weights[0] @ mid).reshape(-1, 1)]
    for prev, cur in zip(carriers, carriers[1:]):
        weights.append(cur @ prev.T)
        biases.append(np.zeros((cur.shape[0], 1)))
    weights.append((swing / s) * (u * sv) @ carriers[-1].T)
    last = a @ mid
    if offset is not None:
        last = last + np.asarray(offset, dtype=np.float64)
    biases.append(last.reshape(-1, 1).copy())
    return MlpParams(weights, biases)


def _warm_targets(
    n: int, p: int, radius: float, train_states: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Affine maps the autoencoder warm-starts at: (enc A, enc b, dec A, dec b).

    Without data the encoder embeds the state into the first n latent
    coordinates and the decoder projects back.  With data the embedding is the
    (centered) principal-component map scaled so latent norms start at the
    sphere radius: for a sampled periodic orbit the two leading components
    carry the fundamental oscillation pair, so the latent cloud opens as a
    circle at the data's own angular spread no matter how the raw coordinates
    mix it -- a raw-coordinate embedding does the same for a planar orbit but
    collapses phase information for field data whose loop lives across many
    coordinates.
    """
    if train_states is None or train_states.shape[0] < 2:
        embed = np.eye(p, n)
        return embed, np.zeros(p), embed.T, np.zeros(n)
    states = np.asarray(train_states, dtype=np.float64)
    mu = states.mean(axis=0)
    centered = states - mu
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    k = min(p, vt.shape[0])
    basis = np.zeros((p, n))
    basis[:k] = vt[:k]
    coords = centered @ basis.T
    rms = math.sqrt(float(np.mean(np.sum(coords * coords, axis=1))))
    scale = radius / rms if rms > 0 else 1.0
    enc_map = scale * basis
    return enc_map, -enc_map @ mu, basis.T / scale, mu.copy()


def init_model(
    n: int,
    p: int,
    q: int,
    *,
    variant: str = "full",
    hidden: list[int] | None = None,
    seed: int = 0,
    train_states: np.ndarray | None = None,
) -> HnkoModel:
    """Fresh model with the standard initialization.

    The autoencoder warm-starts at an invertible affine pair (see
    :func:`_warm_targets`): with training data, the principal-component
    embedding scaled to the sphere radius; without, an identity-like
    coordinate embedding.  Either way the latent cloud opens at the data's
    own angular spread; a cold random start tends to bunch the cloud into a
    small cap of the sphere, whose decoder then amplifies latent noise by
    orders of magnitude on long rollouts.

    Draw order from one PCG64(seed) stream: latent-map factors, hyperplanes,
    encoder layers, decoder layers.  The sphere radius starts at
    1.1 * max_i ||x_i|| over ``train_states`` (rows = snapshots), which keeps
    the initial radius constraint r^2 >= max ||x_i||^2 satisfied; without
    data the radius starts at 1.
    """
    if hidden is None:
        w = default_width(p)
        hidden = [w, w]
    rng = np.random.Generator(np.random.PCG64(seed))
    if train_states is not None:
        states = np.asarray(train_states, dtype=np.float64)
        radius = 1.1 * float(np.max(np.linalg.norm(states, axis=1)))
        if radius <= 0:
            radius = 1.0
    else:
        radius = 1.0
    koopman = orthogonal.init_koopman(p, variant, rng)
    gaussian = rng.standard_normal((p, q)) if q > 0 else np.zeros((p, 0))
    hyperplanes, _ = np.linalg.qr(gaussian) if q > 0 else (np.zeros((p, 0)), None)
    enc_map, enc_off, dec_map, dec_off = _warm_targets(n, p, radius, train_states)
    if train_states is not None and 0 < q:
        # Rotate the warm-start latent so the leading principal pair spans the
        # kernel of the hyperplane matrix and the trailing components line up
        # with its columns: the degeneracy loss then starts out removing the
        # harmonic content instead of a random slice of the orbit's phase.
        full_q, _ = np.linalg.qr(hyperplanes, mode="complete")
        rot = np.concatenate([full_q[:, q:], hyperplanes], axis=1)
        enc_map = rot @ enc_map
        enc_off = rot @ enc_off
        dec_map = dec_map @ rot.T
    if train_states is not None:
        latent_targets = states @ enc_map.T + enc_off
        encoder = _warm_mlp([n, *hidden, p], rng, enc_map, enc_off,
                            inputs=states, center=dec_off)
        decoder = _warm_mlp([p, *hidden[::-1], n], rng, dec_map, dec_off,
                            inputs=latent_targets)
    else:
        encoder = _warm_mlp([n, *hidden, p], rng, enc_map, enc_off)
        decoder = _warm_mlp([p, *hidden[::-1], n], rng, dec_map, dec_off)
    return HnkoModel(encoder, decoder, koopman, math.log(radius), hyperplanes)


# --- flat parameter view -------------------------------------------------------


def params_of(model: HnkoModel) -> dict[str, np.ndarray]:
    """Copy of every learnable array, keyed exactly like the leaves of
    :func:`loss_graph` (log_radius appears as a 0-d array)."""
    out: dict[str, np.ndarray] = {}
    for prefix, mlp in (("encoder", model.encoder), ("decoder", model.decoder)):
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            out[f"{prefix}_w{i}"] = w.copy()
            out[f"{prefix}_b{i}"] = b.copy()
    for j, factor in enumerate(model.koopman.factors):
        out[f"koopman_{j}"] = factor.values.copy()
    out["log_radius"] = np.asarray(model.log_radius)
    out["hyperplanes"] = model.hyperplanes.copy()
    return out


def with_params(template: HnkoModel, params: dict[str, np.ndarray]) -> HnkoModel:
    """A new model with the template's shapes and the given parameter values."""
    def mlp_from(prefix: str, mlp: MlpParams) -> MlpParams:
        weights = [params[f"{prefix}_w{i}"].copy() for i in range(len(mlp.weights))]
        biases = [params[f"{prefix}_b{i}"].copy() for i in range(len(mlp.biases))]
        return MlpParams(weights, biases)

    factors = [
        orthogonal.SkewParams(f.dim, params[f"koopman_{j}"].copy())
        for j, f in enumerate(template.koopman.factors)
    ]
    return HnkoModel(
        encoder=mlp_from("encoder", template.encoder),
        decoder=mlp_from("decoder", template.decoder),
        koopman=orthogonal.OrthogonalKoopman(template.koopman.variant, factors),
        log_radius=float(params["log_radius"]),
        hyperplanes=params["hyperplanes"].copy(),
    )


# --- forward maps ------------------------------------------------------------


def mlp_forward(mlp: MlpParams, x: np.ndarray) -> np.ndarray:
    """Apply the net to one state (1-D) or to rows of snapshots (2-D)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x.reshape(1, -1).T if single else x.T
    if a.shape[0] != mlp.in_dim:
        raise ValueError(f"input dimension {a.shape[0]}, net expects {mlp.in_dim}")
    last = len(mlp.weights) - 1
    for idx, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        a = w @ a + b
        if idx != last:
            a = np.tanh(a)
    return a[:, 0] if single else a.T


def encode(model: HnkoModel, x: np.ndarray) -> np.ndarray:
    return mlp_forward(model.encoder, x)


def decode(model: HnkoModel, y: np.ndarray) -> np.ndarray:
    return mlp_forward(model.decoder, y)


def project_manifold(model: HnkoModel, y: np.ndarray) -> np.ndarray:
    """Nearest point to ``y`` on the model's learned constraint set.

    Training drives every latent snapshot onto the intersection of the
    radius-r sphere with the kernel of the hyperplane matrix; this projects an
    arbitrary latent point onto that set (drop the hyperplane components,
    rescale to radius r).  A vanishing projection has no nearest point, so the
    input is returned unchanged in that degenerate case.
    """
    v = model.hyperplanes
    z = y - v @ (v.T @ y) if v.shape[1] else np.asarray(y, dtype=np.float64)
    nrm = float(np.linalg.norm(z))
    if nrm <= 1e-12:
        return np.asarray(y, dtype=np.float64)
    return z * (model.radius / nrm)


def predict(
    model: HnkoModel,
    x0: np.ndarray,
    steps: int,
    dt: float = 1.0,
    t0: float = 0.0,
    project: bool = False,
) -> Trajectory:
    """Encode once, advance the latent point step by step, decode every point.

    With ``project=False`` the rollout is the bare composition
    decode(K^k encode(x0)).  With ``project=True`` the encoded start and every
    subsequent latent point are projected onto the learned constraint set
    (see :func:`project_manifold`): the rollout then lives exactly on the
    manifold the structural losses carved out, which strips the components a
    noisy start state deposits off it.
    """
    y0 = encode(model, np.asarray(x0, dtype=np.float64).reshape(-1))
    if not project:
        latents = orthogonal.rollout(model.koopman, y0, steps)
        return Trajectory(decode(model, latents.T), dt, t0)
    k = orthogonal.materialize(model.koopman)
    latents = np.empty((steps + 1, model.p))
    latents[0] = project_manifold(model, y0)
    for i in range(steps):
        latents[i + 1] = project_manifold(model, k @ latents[i])
    return Trajectory(decode(model, latents), dt, t0)


# --- losses (plain numpy) -----------------------------------------------------


def _states_matrix(model: HnkoModel, states) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != model.n:
        raise ValueError(
            f"states must be (num_snapshots, {model.n}), got shape {states.shape}"
        )
    if states.shape[0] < 2:
        raise ValueError("need at least two snapshots")
    return states


def _checked_column_norms_sq(v: np.ndarray) -> np.ndarray:
    norms_sq = np.sum(v * v, axis=0)
    if norms_sq.size and np.min(norms_sq) < _MIN_COLUMN_NORM_SQ:
        k = int(np.argmin(norms_sq))
        raise ValueError(
            f"hyperplane column {k} has near-zero norm ({math.sqrt(norms_sq[k]):.3e}); "
            "the degeneracy loss is undefined"
        )
    return norms_sq


def loss_dict(model: HnkoModel, states) -> float:
    states = _states_matrix(model, states)
    recon = decode(model, encode(model, states))
    return float(np.sum((states - recon) ** 2))


def loss_koop(model: HnkoModel, states) -> float:
    states = _states_matrix(model, states)
    y = encode(model, states).T  # (p, M)
    k = orthogonal.materialize(model.koopman)
    return float(np.sum((k @ y[:, :-1] - y[:, 1:]) ** 2))


def loss_sphere(model: HnkoModel, states) -> float:
    states = _states_matrix(model, states)
    y = encode(model, states)
    norms_sq = np.sum(y * y, axis=1)
    return float(np.sum((norms_sq - model.radius**2) ** 2))


def loss_deg(model: HnkoModel, states) -> float:
    states = _states_matrix(model, states)
    y = encode(model, states).T  # (p, M)
    v = model.hyperplanes
    if v.shape[1] == 0:
        return 0.0
    norms_sq = _checked_column_norms_sq(v)
    proj = v.T @ y  # (q, M), row k = <v_k, y_i>
    return float(np.sum(np.sum(proj * proj, axis=1) / norms_sq))


def loss_ind(model: HnkoModel) -> float:
    v = model.hyperplanes
    gram = v.T @ v
    return float(np.sum(gram * gram) - np.sum(np.diag(gram) ** 2))


def total_loss(
    model: HnkoModel,
    states,
    weights: tuple[float, float, float, float, float] = (1.0, 1.0, 1.0, 1.0, 1.0),
) -> LossBreakdown:
    weights = tuple(float(w) for w in weights)
    if len(weights) != 5:
        raise ValueError(f"need 5 loss weights, got {len(weights)}")
    terms = (
        loss_dict(model, states),
        loss_koop(model, states),
        loss_sphere(model, states),
        loss_deg(model, states),
        loss_ind(model),
    )
    total = sum(w * t for w, t in zip(weights, terms))
    return LossBreakdown(*terms, total=total, weights=weights)


# --- losses (tape form, for training) ------------------------------------------


def _mlp_graph(weight_leaves, bias_leaves, x_node):
    last = len(weight_leaves) - 1
    a = x_node
    for idx, (w, b) in enumerate(zip(weight_leaves, bias_leaves)):
        a = ad.add_bias(ad.matmul(w, a), b)
        if idx != last:
            a = ad.tanh(a)
    return a


def loss_graph(
    model: HnkoModel,
    states,
    weights: tuple[float, float, float, float, float] = (1.0, 1.0, 1.0, 1.0, 1.0),
):
    """Differentiable total loss.

    Returns ``(total, terms, leaves)``: the scalar root node, the five
    un-weighted term nodes keyed ``dict/koop/sphere/deg/ind``, and the
    parameter leaves keyed ``encoder_w{i} / encoder_b{i} / decoder_w{i} /
    decoder_b{i} / koopman_{j} / log_radius / hyperplanes``.
    """
    states = _states_matrix(model, states)
    weights = tuple(float(w) for w in weights)
    if len(weights) != 5:
        raise ValueError(f"need 5 loss weights, got {len(weights)}")
    _checked_column_norms_sq(model.hyperplanes)

    leaves: dict[str, ad.Node] = {}
    for prefix, mlp in (("encoder", model.encoder), ("decoder", model.decoder)):
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            leaves[f"{prefix}_w{i}"] = ad.leaf(w)
            leaves[f"{prefix}_b{i}"] = ad.leaf(b)
    for j, factor in enumerate(model.koopman.factors):
        leaves[f"koopman_{j}"] = ad.leaf(factor.values)
    leaves["log_radius"] = ad.leaf(np.asarray(model.log_radius))
    leaves["hyperplanes"] = ad.leaf(model.hyperplanes)

    x = ad.constant(states.T)  # (n, M)
    m = states.shape[0]
    enc_w = [leaves[f"encoder_w{i}"] for i in range(len(model.encoder.weights))]
    enc_b = [leaves[f"encoder_b{i}"] for i in range(len(model.encoder.biases))]
    dec_w = [leaves[f"decoder_w{i}"] for i in range(len(model.decoder.weights))]
    dec_b = [leaves[f"decoder_b{i}"] for i in range(len(model.decoder.biases))]

    y = _mlp_graph(enc_w, enc_b, x)  # (p, M)
    recon = _mlp_graph(dec_w, dec_b, y)
    term_dict = ad.sum_squares(ad.sub(recon, x))

    k_node = orthogonal.koopman_node(
        [leaves[f"koopman_{j}"] for j in range(len(model.koopman.factors))],
        [f.dim for f in model.koopman.factors],
    )
    term_koop = ad.sum_squares(
        ad.sub(ad.matmul(k_node, ad.slice_cols(y, 0, m - 1)), ad.slice_cols(y, 1, m))
    )

    r_sq = ad.exp(ad.scale(leaves["log_radius"], 2.0))
    term_sphere = ad.sum_squares(ad.sub_scalar(ad.colsumsq(y), r_sq))

    v = leaves["hyperplanes"]
    if model.q > 0:
        vt = ad.transpose(v)
        proj = ad.matmul(vt, y)  # (q, M)
        inv_norms = ad.reciprocal(ad.transpose(ad.colsumsq(v)))  # (q, 1)
        term_deg = ad.inner_product(ad.rowsumsq(proj), inv_norms)
        gram = ad.matmul(vt, v)
        term_ind = ad.sub(ad.sum_squares(gram), ad.sum_squares(ad.colsumsq(v)))
    else:
        term_deg = ad.constant(np.asarray(0.0))
        term_ind = ad.constant(np.asarray(0.0))

    terms = {
        "dict": term_dict,
        "koop": term_koop,
        "sphere": term_sphere,
        "deg": term_deg,
        "ind": term_ind,
    }
    total = ad.scale(terms["dict"], weights[0])
    for w, key in zip(weights[1:], ("koop", "sphere", "deg", "ind")):
        total = ad.add(total, ad.scale(terms[key], w))
    return total, terms, leaves
