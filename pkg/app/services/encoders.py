"""
Segment encoders and the bidirectional GRU contextualizer.

All encoders work on padded batches with masks. The single-segment helpers
run the same code with B = M = 1, so both forms give identical values.

Shapes: B reviews, M segments, N tokens, k embedding size, F feature maps
per kernel width, l = len(widths) * F, H GRU hidden size per direction.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from app.core.errors import DegenerateDataError
from app.diffcore import ops
from app.diffcore.tensor import ModelParams, Tensor
from app.models.spec import ModelSpec, Nonlinearity
from app.providers.vocabulary import Vocabulary
from app.services.batching import Batch, collate

EMBEDDING = "embedding"
GATES = ("z", "r", "h")


def uniform_init(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int
) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


# Parameter initialization


def init_cnn(params: ModelParams, spec: ModelSpec, rng: np.random.Generator, prefix: str) -> None:
    k, f = spec.embedding_dim, spec.feature_maps
    for width in spec.kernel_widths:
        params.add(f"{prefix}.kernel{width}", uniform_init(rng, (width, k, f), width * k, f))
        params.add(f"{prefix}.bias{width}", np.zeros(f))


def init_bigru(
    params: ModelParams, prefix: str, input_dim: int, hidden: int, rng: np.random.Generator
) -> None:
    for direction in ("fwd", "bwd"):
        name = f"{prefix}.{direction}"
        for gate in GATES:
            weight = uniform_init(rng, (input_dim, hidden), input_dim, hidden)
            params.add(f"{name}.W_{gate}", weight)
            params.add(f"{name}.U_{gate}", uniform_init(rng, (hidden, hidden), hidden, hidden))
            params.add(f"{name}.b_{gate}", np.zeros(hidden))


# Embedding and encoders


def embed(
    params: ModelParams,
    batch: Batch,
    dropout: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Token embeddings (B, M, N, k); padding positions are exactly zero."""
    looked_up = ops.embedding(params[EMBEDDING], batch.ids)
    masked = ops.mul(looked_up, batch.token_mask[..., None].astype(np.float64))
    return ops.dropout(masked, dropout, rng, training)


def encode_avg_batch(x: Tensor, token_mask: np.ndarray) -> Tensor:
    """Mean of the real token embeddings: (..., N, k) -> (..., k)."""
    return ops.masked_mean(x, token_mask, axis=-2)


def encode_cnn_batch(
    x: Tensor, batch: Batch, params: ModelParams, spec: ModelSpec, prefix: str
) -> Tensor:
    """Convolve, apply the nonlinearity, max-pool over valid windows: -> (B, M, l)."""
    activate = ops.relu if spec.nonlinearity is Nonlinearity.RELU else ops.tanh
    pooled = []
    for width in spec.kernel_widths:
        feature = ops.conv1d(x, params[f"{prefix}.kernel{width}"], params[f"{prefix}.bias{width}"])
        pooled.append(ops.max_over_time(activate(feature), batch.window_masks[width]))
    return ops.concat(pooled, axis=-1)


def _gru_direction(
    inputs: Tensor,
    mask: np.ndarray,
    params: ModelParams,
    name: str,
    reverse: bool,
    dropout: float,
    training: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    batch_size, steps = mask.shape
    hidden = params[f"{name}.U_z"].shape[0]
    projected = {gate: ops.matmul(inputs, params[f"{name}.W_{gate}"]) for gate in GATES}
    state = Tensor(np.zeros((batch_size, hidden)))
    emitted: list[Tensor | None] = [None] * steps

    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        step_mask = mask[:, t, None].astype(np.float64)
        z = ops.sigmoid(
            ops.select(projected["z"], t, axis=1)
            + ops.matmul(state, params[f"{name}.U_z"])
            + params[f"{name}.b_z"]
        )
        r = ops.sigmoid(
            ops.select(projected["r"], t, axis=1)
            + ops.matmul(state, params[f"{name}.U_r"])
            + params[f"{name}.b_r"]
        )
        candidate = ops.tanh(
            ops.select(projected["h"], t, axis=1)
            + ops.matmul(r * state, params[f"{name}.U_h"])
            + params[f"{name}.b_h"]
        )
        updated = state + z * (candidate - state)
        # Padded steps carry the previous state through unchanged.
        state = state + ops.mul(updated - state, step_mask)
        emitted[t] = ops.dropout(state, dropout, rng, training)

    return ops.stack([out for out in emitted if out is not None], axis=1)


def contextualize_bigru_batch(
    h: Tensor,
    mask: np.ndarray,
    params: ModelParams,
    prefix: str,
    dropout: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """
    Run a GRU forward and another backward over (B, M, d) inputs and
    concatenate their states per position: -> (B, M, 2H).
    """
    forward = _gru_direction(h, mask, params, f"{prefix}.fwd", False, dropout, training, rng)
    backward = _gru_direction(h, mask, params, f"{prefix}.bwd", True, dropout, training, rng)
    return ops.concat([forward, backward], axis=-1)


# Single-segment forms


def encode_avg(tokens: Sequence[str], vocab: Vocabulary, table: Tensor) -> Tensor:
    """
    Average embedding of one segment; unknown tokens use the unknown row.

    Raises:
        DegenerateDataError: the segment has no token.
    """
    if not tokens:
        raise DegenerateDataError("cannot average the embeddings of an empty segment")
    ids = vocab.encode(tokens)
    return ops.masked_mean(ops.embedding(table, ids), np.ones(len(ids), dtype=bool), axis=0)


def encode_cnn(
    tokens: Sequence[str],
    vocab: Vocabulary,
    params: ModelParams,
    spec: ModelSpec,
    prefix: str = "cnn",
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """CNN encoding h_i (l,) of one segment."""
    batch = collate([[tokens]], vocab, spec.kernel_widths)
    x = embed(params, batch, spec.dropout, training, rng)
    encoded = encode_cnn_batch(x, batch, params, spec, prefix)
    return ops.reshape(encoded, (spec.segment_dim,))


def contextualize_bigru(
    h: Tensor,
    params: ModelParams,
    prefix: str = "gru",
    dropout: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Contextualize one review's (M, d) segment vectors: -> (M, 2H)."""
    steps, dim = h.shape
    batched = ops.reshape(h, (1, steps, dim))
    mask = np.ones((1, steps), dtype=bool)
    out = contextualize_bigru_batch(batched, mask, params, prefix, dropout, training, rng)
    return ops.reshape(out, (steps, out.shape[-1]))
