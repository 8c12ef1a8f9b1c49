"""The trainable score network.

Architecture: per-slot affine embedding into tokens, a stack of multi-head
attention blocks whose query/key/value projections are single-hidden-layer
ReLU networks, and a two-layer ReLU head that maps the flattened tokens to a
nonnegative scalar score.  Gradients are derived by hand for this fixed
architecture; there is no autodiff.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .features import N_FEATURES, SLOT_TRANSFORMS, FeatureStats, ScoreSample

__all__ = [
    "NumericError",
    "Hyperparams",
    "HeadParams",
    "ScorerParams",
    "TrainedScorer",
    "init_params",
    "zero_params",
    "embed_features",
    "attention_block_forward",
    "score_head",
    "forward_score",
    "loss_and_gradients",
    "gradient_check",
]

_HEAD_ARRAY_NAMES = ("q_w1", "q_b1", "q_w2", "q_b2", "k_w1", "k_b1", "k_w2", "k_b2", "v_w1", "v_b1", "v_w2", "v_b2")


class NumericError(ArithmeticError):
    """A non-finite value appeared during a forward or backward pass."""


@dataclass(frozen=True)
class Hyperparams:
    heads: int = 8
    blocks: int = 1
    head_dim: int = 8
    batch_size: int = 64
    learning_rate: float = 0.025
    epochs: int = 100
    seed: int = 0
    head_hidden: int = 64

    def __post_init__(self):
        if self.heads < 1 or self.blocks < 1 or self.head_dim < 1 or self.head_hidden < 1:
            raise ValueError("heads, blocks, head_dim and head_hidden must all be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @property
    def width(self) -> int:
        """Model width D; always exactly heads * head_dim."""
        return self.heads * self.head_dim


@dataclass
class HeadParams:
    """One attention head: three single-hidden-layer projection networks.

    Each projects a D-wide token through a ReLU hidden layer of width D down
    to the per-head dimension d.
    """

    q_w1: np.ndarray
    q_b1: np.ndarray
    q_w2: np.ndarray
    q_b2: np.ndarray
    k_w1: np.ndarray
    k_b1: np.ndarray
    k_w2: np.ndarray
    k_b2: np.ndarray
    v_w1: np.ndarray
    v_b1: np.ndarray
    v_w2: np.ndarray
    v_b2: np.ndarray


@dataclass
class ScorerParams:
    """All learnable weights: embedding, attention blocks, and score head."""

    embed_w: np.ndarray              # (N_f, D)
    embed_b: np.ndarray              # (N_f, D)
    blocks: list[list[HeadParams]]   # [L][K]
    head_w1: np.ndarray              # (N_f * D, h)
    head_b1: np.ndarray              # (h,)
    head_w2: np.ndarray              # (h, 1)
    head_b2: np.ndarray              # (1,)

    @property
    def n_features(self) -> int:
        return self.embed_w.shape[0]

    @property
    def width(self) -> int:
        return self.embed_w.shape[1]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_heads(self) -> int:
        return len(self.blocks[0])

    @property
    def head_dim(self) -> int:
        return self.blocks[0][0].q_w2.shape[1]

    @property
    def head_hidden(self) -> int:
        return self.head_b1.shape[0]

    def arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """All parameter arrays with stable names, in a fixed order."""
        yield "embed_w", self.embed_w
        yield "embed_b", self.embed_b
        for l, heads in enumerate(self.blocks):
            for k, head in enumerate(heads):
                for name in _HEAD_ARRAY_NAMES:
                    yield f"blocks.{l}.{k}.{name}", getattr(head, name)
        yield "head_w1", self.head_w1
        yield "head_b1", self.head_b1
        yield "head_w2", self.head_w2
        yield "head_b2", self.head_b2

    def copy(self) -> "ScorerParams":
        return ScorerParams(
            embed_w=self.embed_w.copy(),
            embed_b=self.embed_b.copy(),
            blocks=[
                [HeadParams(**{n: getattr(h, n).copy() for n in _HEAD_ARRAY_NAMES}) for h in heads]
                for heads in self.blocks
            ],
            head_w1=self.head_w1.copy(),
            head_b1=self.head_b1.copy(),
            head_w2=self.head_w2.copy(),
            head_b2=self.head_b2.copy(),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.arrays()])


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(hyper: Hyperparams, n_features: int = N_FEATURES, seed: int | None = None) -> ScorerParams:
    """Seeded symmetric-uniform weight init; biases start at zero."""
    rng = np.random.default_rng(hyper.seed if seed is None else seed)
    d, dim, h = hyper.head_dim, hyper.width, hyper.head_hidden
    embed_w = _glorot(rng, (n_features, dim), 1, dim)
    blocks = []
    for _ in range(hyper.blocks):
        heads = []
        for _ in range(hyper.heads):
            arrays = {}
            for prefix in ("q", "k", "v"):
                arrays[f"{prefix}_w1"] = _glorot(rng, (dim, dim), dim, dim)
                arrays[f"{prefix}_b1"] = np.zeros(dim)
                arrays[f"{prefix}_w2"] = _glorot(rng, (dim, d), dim, d)
                arrays[f"{prefix}_b2"] = np.zeros(d)
            heads.append(HeadParams(**arrays))
        blocks.append(heads)
    head_w1 = _glorot(rng, (n_features * dim, h), n_features * dim, h)
    head_w2 = _glorot(rng, (h, 1), h, 1)
    return ScorerParams(
        embed_w=embed_w,
        embed_b=np.zeros((n_features, dim)),
        blocks=blocks,
        head_w1=head_w1,
        head_b1=np.zeros(h),
        head_w2=head_w2,
        # Starting the output bias at the label midpoint keeps the outer ReLU
        # active at init; a zero start can clamp every score to 0 and kill
        # all gradient flow.
        head_b2=np.full(1, 0.5),
    )


def zero_params(hyper: Hyperparams, n_features: int = N_FEATURES) -> ScorerParams:
    params = init_params(hyper, n_features=n_features, seed=0)
    for _, a in params.arrays():
        a[:] = 0.0
    return params


# --- forward -------------------------------------------------------------------

def _linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise affine map of (B, N, Din) tokens through (Din, Dout)."""
    lead = x.shape[:-1]
    out = x.reshape(-1, x.shape[-1]) @ w + b
    return out.reshape(*lead, w.shape[1])


@dataclass
class _HeadCache:
    pre: dict[str, np.ndarray]
    act: dict[str, np.ndarray]
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    alpha: np.ndarray


@dataclass
class _BlockCache:
    h_in: np.ndarray
    heads: list[_HeadCache]


@dataclass
class _ForwardCache:
    x: np.ndarray
    blocks: list[_BlockCache]
    z: np.ndarray
    a1: np.ndarray
    r1: np.ndarray
    a2: np.ndarray


def _project(h: np.ndarray, head: HeadParams, prefix: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pre = _linear(h, getattr(head, f"{prefix}_w1"), getattr(head, f"{prefix}_b1"))
    act = np.maximum(pre, 0.0)
    out = _linear(act, getattr(head, f"{prefix}_w2"), getattr(head, f"{prefix}_b2"))
    return pre, act, out


def _block_forward(h: np.ndarray, heads: Sequence[HeadParams], block_index: int) -> tuple[np.ndarray, _BlockCache]:
    batch, n, _ = h.shape
    caches = []
    outputs = []
    for k_idx, head in enumerate(heads):
        d = head.q_w2.shape[1]
        q_pre, q_act, q = _project(h, head, "q")
        k_pre, k_act, key = _project(h, head, "k")
        v_pre, v_act, v = _project(h, head, "v")
        scores = np.einsum("bnd,bmd->bnm", q, key) / math.sqrt(d)
        if not np.all(np.isfinite(scores)):
            raise NumericError(f"non-finite attention scores in block {block_index}, head {k_idx}")
        shifted = scores - scores.max(axis=-1, keepdims=True)
        weights = np.exp(shifted)
        alpha = weights / weights.sum(axis=-1, keepdims=True)
        if not np.all(np.isfinite(alpha)):
            raise NumericError(f"non-finite attention weights in block {block_index}, head {k_idx}")
        outputs.append(np.einsum("bnm,bmd->bnd", alpha, v))
        caches.append(
            _HeadCache(
                pre={"q": q_pre, "k": k_pre, "v": v_pre},
                act={"q": q_act, "k": k_act, "v": v_act},
                q=q,
                k=key,
                v=v,
                alpha=alpha,
            )
        )
    return np.concatenate(outputs, axis=-1), _BlockCache(h_in=h, heads=caches)


def _forward_batch(x: np.ndarray, params: ScorerParams) -> tuple[np.ndarray, _ForwardCache]:
    """Scores for a batch of normalized feature vectors, with backward cache.

    Runs at the input's precision (float64 normally; gradient checking feeds
    extended precision through unchanged).
    """
    x = np.asarray(x)
    if x.dtype != np.longdouble:
        x = x.astype(np.float64)
    batch, n = x.shape
    h = x[:, :, None] * params.embed_w[None, :, :] + params.embed_b[None, :, :]
    block_caches = []
    for l_idx, heads in enumerate(params.blocks):
        h, cache = _block_forward(h, heads, l_idx)
        block_caches.append(cache)
    z = h.reshape(batch, -1)
    a1 = z @ params.head_w1 + params.head_b1
    r1 = np.maximum(a1, 0.0)
    a2 = (r1 @ params.head_w2).ravel() + params.head_b2[0]
    scores = np.maximum(a2, 0.0)
    return scores, _ForwardCache(x=x, blocks=block_caches, z=z, a1=a1, r1=r1, a2=a2)


def _backward_batch(dscores: np.ndarray, cache: _ForwardCache, params: ScorerParams) -> ScorerParams:
    """Gradients of a scalar loss given d(loss)/d(score) per batch row."""
    batch, n = cache.x.shape
    dim = params.width
    grads = params.copy()
    for _, a in grads.arrays():
        a[:] = 0.0

    da2 = dscores * (cache.a2 > 0.0)
    grads.head_b2[0] = da2.sum()
    grads.head_w2[:] = cache.r1.T @ da2[:, None]
    dr1 = da2[:, None] * params.head_w2[None, :, 0]
    da1 = dr1 * (cache.a1 > 0.0)
    grads.head_b1[:] = da1.sum(axis=0)
    grads.head_w1[:] = cache.z.T @ da1
    dh = (da1 @ params.head_w1.T).reshape(batch, n, dim)

    for l_idx in reversed(range(params.n_blocks)):
        block_cache = cache.blocks[l_idx]
        h_in = block_cache.h_in
        flat_in = h_in.reshape(-1, dim)
        dh_in = np.zeros_like(h_in)
        for k_idx, (head, hc, ghead) in enumerate(
            zip(params.blocks[l_idx], block_cache.heads, grads.blocks[l_idx])
        ):
            d = head.q_w2.shape[1]
            d_out = dh[:, :, k_idx * d : (k_idx + 1) * d]
            dalpha = np.einsum("bnd,bmd->bnm", d_out, hc.v)
            dv = np.einsum("bnm,bnd->bmd", hc.alpha, d_out)
            dscore_mat = hc.alpha * (dalpha - np.sum(dalpha * hc.alpha, axis=-1, keepdims=True))
            dscore_mat = dscore_mat / math.sqrt(d)
            dq = np.einsum("bnm,bmd->bnd", dscore_mat, hc.k)
            dk = np.einsum("bnm,bnd->bmd", dscore_mat, hc.q)
            for prefix, d_proj in (("q", dq), ("k", dk), ("v", dv)):
                w2 = getattr(head, f"{prefix}_w2")
                act, pre = hc.act[prefix], hc.pre[prefix]
                flat_dout = d_proj.reshape(-1, d)
                flat_act = act.reshape(-1, dim)
                getattr(ghead, f"{prefix}_w2")[:] += flat_act.T @ flat_dout
                getattr(ghead, f"{prefix}_b2")[:] += flat_dout.sum(axis=0)
                dpre = (flat_dout @ w2.T) * (pre.reshape(-1, dim) > 0.0)
                getattr(ghead, f"{prefix}_w1")[:] += flat_in.T @ dpre
                getattr(ghead, f"{prefix}_b1")[:] += dpre.sum(axis=0)
                dh_in += (dpre @ getattr(head, f"{prefix}_w1").T).reshape(h_in.shape)
        dh = dh_in

    grads.embed_w[:] = np.einsum("bn,bnD->nD", cache.x, dh)
    grads.embed_b[:] = dh.sum(axis=0)
    return grads


# --- public single-sample operations --------------------------------------------

def embed_features(normalized_vector: np.ndarray, params: ScorerParams) -> np.ndarray:
    """Lift each scalar slot to a D-wide token: token_i = x_i * w_i + b_i."""
    x = np.asarray(normalized_vector, dtype=np.float64)
    if x.shape != (params.n_features,):
        raise ValueError(f"expected {params.n_features} normalized slots, got shape {x.shape}")
    return x[:, None] * params.embed_w + params.embed_b


def attention_block_forward(
    h: np.ndarray, block_params: Sequence[HeadParams], hyper: Hyperparams | None = None
) -> np.ndarray:
    """One multi-head attention block over a token matrix (N, D) -> (N, D)."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2:
        raise ValueError(f"expected a 2-d token matrix, got shape {h.shape}")
    dim = h.shape[1]
    if hyper is not None:
        if hyper.width != dim or len(block_params) != hyper.heads:
            raise ValueError(
                f"shape mismatch: tokens are {dim}-wide with {len(block_params)} heads, "
                f"hyperparameters say D={hyper.width}, K={hyper.heads}"
            )
    if sum(head.q_w2.shape[1] for head in block_params) != dim:
        raise ValueError("per-head output dims must concatenate to the token width")
    out, _ = _block_forward(h[None, :, :], block_params, block_index=0)
    return out[0]


def score_head(h_last: np.ndarray, params: ScorerParams) -> float:
    """Two-layer ReLU head on the row-major-flattened token matrix."""
    h_last = np.asarray(h_last, dtype=np.float64)
    z = h_last.reshape(-1)
    if z.shape[0] != params.head_w1.shape[0]:
        raise ValueError(f"flattened tokens have length {z.shape[0]}, head expects {params.head_w1.shape[0]}")
    a1 = z @ params.head_w1 + params.head_b1
    r1 = np.maximum(a1, 0.0)
    a2 = float(r1 @ params.head_w2[:, 0] + params.head_b2[0])
    return max(a2, 0.0)


def forward_score(normalized_vector: np.ndarray, params: ScorerParams) -> float:
    """Full pipeline for one normalized feature vector: embed, blocks, head."""
    x = np.asarray(normalized_vector, dtype=np.float64)
    if x.shape != (params.n_features,):
        raise ValueError(f"expected {params.n_features} normalized slots, got shape {x.shape}")
    scores, _ = _forward_batch(x[None, :], params)
    return float(scores[0])


def loss_and_gradients(
    x: np.ndarray, y: np.ndarray, params: ScorerParams
) -> tuple[float, ScorerParams]:
    """Mean squared error over a batch and its gradients w.r.t. all parameters."""
    y = np.asarray(y, dtype=np.float64)
    scores, cache = _forward_batch(x, params)
    residual = scores - y
    loss = float(np.mean(residual**2))
    dscores = 2.0 * residual / residual.shape[0]
    return loss, _backward_batch(dscores, cache, params)


def gradient_check(params: ScorerParams, sample: ScoreSample, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    The sample's feature vector is fed to the network as-is (i.e. it is
    treated as already normalized) and the loss is the squared error against
    the sample's label.  The finite-difference side is evaluated in extended
    precision where the platform provides it, so that directions with a
    mathematically zero derivative are not swamped by float64 rounding.
    """
    x = np.asarray(sample.features, dtype=np.float64)[None, :]
    y = np.array([sample.label])

    _, analytic = loss_and_gradients(x, y, params)

    work = params.copy()
    # Promoting the input promotes every downstream intermediate.
    x_hi = x.astype(np.longdouble)
    y_hi = y.astype(np.longdouble)

    def loss_at(p: ScorerParams) -> np.floating:
        scores, _ = _forward_batch(x_hi, p)
        return np.mean((scores - y_hi) ** 2)

    worst = 0.0
    for (_, g_arr), (_, w_arr) in zip(analytic.arrays(), work.arrays()):
        g_flat, w_flat = g_arr.reshape(-1), w_arr.reshape(-1)
        for i in range(w_flat.size):
            orig = w_flat[i]
            w_flat[i] = orig + epsilon
            up = loss_at(work)
            high = w_flat[i]
            w_flat[i] = orig - epsilon
            down = loss_at(work)
            step = high - w_flat[i]
            w_flat[i] = orig
            numeric = float((up - down) / step)
            denom = max(abs(g_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(g_flat[i] - numeric) / denom)
    return worst


# --- trained-scorer serialization ------------------------------------------------

_PARAMS_FORMAT = "smap-scorer"
_PARAMS_VERSION = 1


@dataclass
class TrainedScorer:
    """Trained parameters bundled with the feature stats they were fitted with."""

    params: ScorerParams
    stats: FeatureStats
    hyper: Hyperparams

    def save(self, path: str | os.PathLike) -> None:
        """Versioned file: a JSON shape header line, then little-endian float64 arrays."""
        arrays = list(self.params.arrays())
        header = {
            "format": _PARAMS_FORMAT,
            "version": _PARAMS_VERSION,
            "shape": {
                "n_features": self.params.n_features,
                "heads": self.params.n_heads,
                "blocks": self.params.n_blocks,
                "head_dim": self.params.head_dim,
                "head_hidden": self.params.head_hidden,
            },
            "hyper": asdict(self.hyper),
            "stats": {
                "means": [float(v) for v in self.stats.means],
                "stds": [float(v) for v in self.stats.stds],
                "transforms": list(self.stats.transforms),
            },
            "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, ensure_ascii=False).encode("utf-8") + b"\n")
            for _, a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "TrainedScorer":
        with open(path, "rb") as fh:
            blob = fh.read()
        newline = blob.find(b"\n")
        if newline < 0:
            raise ValueError(f"{os.fspath(path)!r} is not a scorer params file (missing header)")
        header = json.loads(blob[:newline].decode("utf-8"))
        if header.get("format") != _PARAMS_FORMAT:
            raise ValueError(f"{os.fspath(path)!r}: unknown format {header.get('format')!r}")
        if header.get("version") != _PARAMS_VERSION:
            raise ValueError(f"{os.fspath(path)!r}: unsupported version {header.get('version')!r}")
        hyper = Hyperparams(**header["hyper"])
        shape = header["shape"]
        params = zero_params(hyper, n_features=int(shape["n_features"]))
        offset = newline + 1
        for spec, (name, arr) in zip(header["arrays"], params.arrays()):
            if spec["name"] != name or list(arr.shape) != list(spec["shape"]):
                raise ValueError(f"{os.fspath(path)!r}: array layout mismatch at {spec['name']!r}")
            count = arr.size
            values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            arr[:] = values.reshape(arr.shape)
            offset += count * 8
        if offset != len(blob):
            raise ValueError(f"{os.fspath(path)!r}: trailing bytes after parameter arrays")
        stats = FeatureStats(
            means=np.array(header["stats"]["means"]),
            stds=np.array(header["stats"]["stds"]),
            transforms=tuple(header["stats"]["transforms"]),
        )
        return cls(params=params, stats=stats, hyper=hyper)
