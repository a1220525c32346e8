"""Invariant message-passing potential over pair distances.

Geometry enters only through neighbor distances: each interaction layer
turns distances into continuous filters (an MLP over the radial basis,
weighted by the cutoff envelope), multiplies them into premixed sender
features, aggregates per receiver, and applies a gated residual update.
A two-layer head maps final atom features to per-atom energies, which
are standardized and summed per sample.

Gradients are hand-derived. The energy depends on positions only through
edge distances, so forces come from the per-edge distance adjoint pushed
through the neighbor-engine pullback; parameter gradients reuse the same
reverse sweep.

Static-shape mode appends one ghost atom and re-points sentinel edges to
it at exactly the cutoff distance, where the envelope vanishes, so
padded slots contribute nothing to real outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._ops import segment_sum, silu, silu_grad
from .errors import ValidationError
from .neighbors import NeighborList, distance_pullback
from .radial import (
    cosine_cutoff,
    cosine_cutoff_grad,
    expnorm_initial_params,
    rbf_expnorm,
    rbf_expnorm_with_grads,
)
from .system import EnergyForces, System, _freeze_owned

__all__ = [
    "GNConfig",
    "GNParams",
    "LayerParams",
    "EdgeFeatures",
    "GraphPotential",
    "init_params",
    "forward",
    "backward_forces",
    "backward_params",
    "pad_static",
    "cosine_cutoff",
    "rbf_expnorm",
]


@dataclass(frozen=True)
class GNConfig:
    """Hyperparameters of the graph potential."""

    embedding_dimension: int = 128
    num_layers: int = 2
    num_rbf: int = 32
    cutoff_lower: float = 0.0
    cutoff_upper: float = 5.0
    max_z: int = 100
    activation: str = "silu"
    trainable_rbf: bool = False
    static_shapes: bool = False
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.embedding_dimension < 1 or self.num_rbf < 1:
            raise ValidationError("embedding_dimension and num_rbf must be >= 1")
        if self.num_layers < 0:
            raise ValidationError("num_layers must be >= 0")
        if not 0.0 <= self.cutoff_lower < self.cutoff_upper:
            raise ValidationError("cutoffs must satisfy 0 <= lower < upper")
        if self.max_z < 1:
            raise ValidationError("max_z must be >= 1")
        if self.activation != "silu":
            raise ValidationError(f"unsupported activation {self.activation!r}")
        if self.std <= 0:
            raise ValidationError("std must be positive")


@dataclass
class LayerParams:
    filter_w1: np.ndarray
    filter_b1: np.ndarray
    filter_w2: np.ndarray
    filter_b2: np.ndarray
    premix: np.ndarray
    post_w1: np.ndarray
    post_b1: np.ndarray
    post_w2: np.ndarray
    post_b2: np.ndarray


@dataclass
class GNParams:
    """All trainable arrays; shapes follow the owning GNConfig."""

    embed: np.ndarray
    layers: list
    head_w1: np.ndarray
    head_b1: np.ndarray
    head_w2: np.ndarray
    head_b2: np.ndarray
    rbf_means: np.ndarray
    rbf_betas: np.ndarray

    def named_arrays(self, trainable_rbf: bool = True):
        """(name, array) pairs; rbf arrays only when they are trainable."""
        yield "embed", self.embed
        for i, layer in enumerate(self.layers):
            for attr in (
                "filter_w1",
                "filter_b1",
                "filter_w2",
                "filter_b2",
                "premix",
                "post_w1",
                "post_b1",
                "post_w2",
                "post_b2",
            ):
                yield f"layers.{i}.{attr}", getattr(layer, attr)
        yield "head_w1", self.head_w1
        yield "head_b1", self.head_b1
        yield "head_w2", self.head_w2
        yield "head_b2", self.head_b2
        if trainable_rbf:
            yield "rbf_means", self.rbf_means
            yield "rbf_betas", self.rbf_betas

    def copy(self) -> "GNParams":
        return GNParams(
            embed=self.embed.copy(),
            layers=[
                LayerParams(
                    **{
                        k: getattr(layer, k).copy()
                        for k in LayerParams.__dataclass_fields__
                    }
                )
                for layer in self.layers
            ],
            head_w1=self.head_w1.copy(),
            head_b1=self.head_b1.copy(),
            head_w2=self.head_w2.copy(),
            head_b2=self.head_b2.copy(),
            rbf_means=self.rbf_means.copy(),
            rbf_betas=self.rbf_betas.copy(),
        )

    def zeros_like(self) -> "GNParams":
        out = self.copy()
        for _, arr in out.named_arrays():
            arr[...] = 0.0
        return out


@dataclass(frozen=True)
class EdgeFeatures:
    """Radial basis and envelope per edge slot; sentinel rows are zero."""

    rbf: np.ndarray
    envelope: np.ndarray


def head_width(embedding_dimension: int) -> int:
    return max(embedding_dimension // 2, 1)


def init_params(config: GNConfig, seed: int = 0) -> GNParams:
    """Random initialization; linear layers use the usual fan-in bound."""
    rng = np.random.default_rng(seed)
    f = config.embedding_dimension
    k = config.num_rbf
    h = head_width(f)

    def linear(fan_out, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return (
            rng.uniform(-bound, bound, (fan_out, fan_in)),
            rng.uniform(-bound, bound, fan_out),
        )

    layers = []
    for _ in range(config.num_layers):
        filter_w1, filter_b1 = linear(f, k)
        filter_w2, filter_b2 = linear(f, f)
        premix, _ = linear(f, f)
        post_w1, post_b1 = linear(f, f)
        post_w2, post_b2 = linear(f, f)
        layers.append(
            LayerParams(
                filter_w1=filter_w1,
                filter_b1=filter_b1,
                filter_w2=filter_w2,
                filter_b2=filter_b2,
                premix=premix,
                post_w1=post_w1,
                post_b1=post_b1,
                post_w2=post_w2,
                post_b2=post_b2,
            )
        )
    head_w1, head_b1 = linear(h, f)
    head_w2 = rng.uniform(-1.0 / np.sqrt(h), 1.0 / np.sqrt(h), h)
    head_b2 = np.array(rng.uniform(-1.0 / np.sqrt(h), 1.0 / np.sqrt(h)))
    means, betas = expnorm_initial_params(k, config.cutoff_lower, config.cutoff_upper)
    return GNParams(
        embed=rng.standard_normal((config.max_z, f)),
        layers=layers,
        head_w1=head_w1,
        head_b1=head_b1,
        head_w2=head_w2,
        head_b2=head_b2,
        rbf_means=means,
        rbf_betas=betas,
    )


def pad_static(
    system: System, neighbors: NeighborList, config: Optional[GNConfig] = None
) -> tuple[System, NeighborList]:
    """Append a ghost atom and re-point sentinel edges to it at the cutoff.

    The ghost sits at the cutoff distance on every padded edge, where the
    envelope is exactly zero, so consumers see identical results for real
    atoms at any capacity. Padded edges are ghost self-pairs, which the
    distance pullback ignores.
    """
    if config is not None and config.cutoff_upper != neighbors.spec.cutoff_upper:
        raise ValidationError(
            "neighbor list cutoff does not match the model cutoff"
        )
    n = system.n_atoms
    cutoff = neighbors.spec.cutoff_upper
    ghost_system = System(
        positions=_freeze_owned(np.vstack([system.positions, np.zeros(3)])),
        species=_freeze_owned(np.append(system.species, 0)),
        batch=_freeze_owned(np.append(system.batch, system.batch[-1])),
        box=system.box,
        charges=None
        if system.charges is None
        else _freeze_owned(np.append(system.charges, 0.0)),
    )
    capacity = neighbors.capacity
    count = neighbors.count
    pairs = neighbors.pairs.copy()
    deltas = neighbors.deltas.copy()
    dists = neighbors.distances.copy()
    pairs[count:] = n
    deltas[count:] = (cutoff, 0.0, 0.0)
    dists[count:] = cutoff
    padded = NeighborList(
        pairs=_freeze_owned(pairs),
        deltas=_freeze_owned(deltas),
        distances=_freeze_owned(dists),
        count=capacity,
        n_atoms=n + 1,
        spec=neighbors.spec,
        notes=neighbors.notes + ("static padding applied",),
    )
    return ghost_system, padded


class ForwardCache:
    """Activations kept from forward for the reverse sweeps."""

    __slots__ = (
        "params",
        "config",
        "system",
        "neighbors",
        "eval_system",
        "eval_neighbors",
        "n_real",
        "n_nodes",
        "receivers",
        "senders",
        "d",
        "edge_features",
        "ghost_edge_mask",
        "layer_acts",
        "x_states",
        "head_pre",
        "head_hidden",
        "per_atom",
    )


def _check_compatibility(config: GNConfig, system: System, neighbors: NeighborList):
    if not neighbors.spec.full_list:
        raise ValidationError(
            "graph forward needs a full neighbor list (messages flow both ways); "
            "build with full_list=True"
        )
    if (
        neighbors.spec.cutoff_upper != config.cutoff_upper
        or neighbors.spec.cutoff_lower != config.cutoff_lower
    ):
        raise ValidationError(
            f"cutoff mismatch: neighbor list has ({neighbors.spec.cutoff_lower}, "
            f"{neighbors.spec.cutoff_upper}), model expects ({config.cutoff_lower}, "
            f"{config.cutoff_upper})"
        )
    if int(system.species.max()) >= config.max_z:
        raise ValidationError(
            f"species code {int(system.species.max())} is out of range for "
            f"max_z={config.max_z}"
        )


def forward(
    params: GNParams,
    config: GNConfig,
    system: System,
    neighbors: NeighborList,
) -> tuple[EnergyForces, ForwardCache]:
    """Per-sample energies plus cached activations; no forces yet.

    With ``static_shapes`` the ghost padding is applied internally, so
    callers always pass the plain system and list.
    """
    _check_compatibility(config, system, neighbors)
    n_real = system.n_atoms
    if config.static_shapes:
        eval_system, eval_neighbors = pad_static(system, neighbors, config)
        n_edges = eval_neighbors.capacity
    else:
        eval_system, eval_neighbors = system, neighbors
        n_edges = neighbors.count
    n_nodes = eval_system.n_atoms

    cache = ForwardCache()
    cache.params = params
    cache.config = config
    cache.system = system
    cache.neighbors = neighbors
    cache.eval_system = eval_system
    cache.eval_neighbors = eval_neighbors
    cache.n_real = n_real
    cache.n_nodes = n_nodes

    f = config.embedding_dimension
    x = np.zeros((n_nodes, f))
    x[:n_real] = params.embed[system.species]

    if config.num_layers > 0:
        pairs = eval_neighbors.pairs[:n_edges]
        receivers = pairs[:, 0]
        senders = pairs[:, 1]
        d = eval_neighbors.distances[:n_edges]
        rbf = rbf_expnorm(d, params.rbf_means, params.rbf_betas, config.cutoff_lower)
        envelope = cosine_cutoff(d, config.cutoff_lower, config.cutoff_upper)
        ghost_edges = np.zeros(n_edges, dtype=bool)
        ghost_edges[neighbors.count :] = True
        rbf[ghost_edges] = 0.0
        cache.receivers = receivers
        cache.senders = senders
        cache.d = d
        cache.edge_features = EdgeFeatures(rbf=rbf, envelope=envelope)
        cache.ghost_edge_mask = ghost_edges
    else:
        cache.receivers = cache.senders = None
        cache.d = None
        cache.edge_features = None
        cache.ghost_edge_mask = None

    cache.layer_acts = []
    cache.x_states = [x]
    for layer in params.layers[: config.num_layers]:
        rbf = cache.edge_features.rbf
        envelope = cache.edge_features.envelope
        pre_filter = rbf @ layer.filter_w1.T + layer.filter_b1
        hidden_filter = silu(pre_filter)
        base_filter = hidden_filter @ layer.filter_w2.T + layer.filter_b2
        edge_weight = base_filter * envelope[:, None]
        sender_feat = x[cache.senders] @ layer.premix.T
        message = sender_feat * edge_weight
        aggregated = segment_sum(message, cache.receivers, n_nodes)
        pre_update = aggregated @ layer.post_w1.T + layer.post_b1
        gated = silu(pre_update)
        update = gated @ layer.post_w2.T + layer.post_b2
        x = x + update
        cache.layer_acts.append(
            dict(
                pre_filter=pre_filter,
                hidden_filter=hidden_filter,
                base_filter=base_filter,
                edge_weight=edge_weight,
                sender_feat=sender_feat,
                aggregated=aggregated,
                pre_update=pre_update,
                gated=gated,
            )
        )
        cache.x_states.append(x)

    head_pre = x[:n_real] @ params.head_w1.T + params.head_b1
    head_hidden = silu(head_pre)
    raw = head_hidden @ params.head_w2 + params.head_b2
    per_atom = raw * config.std + config.mean
    cache.head_pre = head_pre
    cache.head_hidden = head_hidden
    cache.per_atom = per_atom

    energy = segment_sum(per_atom, system.batch, system.n_samples)
    return EnergyForces(energy=energy, per_atom_energy=per_atom), cache


def _check_cache(cache: ForwardCache, params, config, system, neighbors):
    if (
        cache.params is not params
        or cache.config is not config
        or cache.system is not system
        or cache.neighbors is not neighbors
    ):
        raise ValidationError(
            "stale cache: forward was run with different params or inputs"
        )


def _reverse(
    cache: ForwardCache, dy: np.ndarray, want_params: bool
) -> tuple[Optional[np.ndarray], Optional[GNParams]]:
    """Shared reverse sweep.

    ``dy`` is the objective gradient with respect to each real atom's
    standardized energy output. Returns the per-edge distance adjoint
    (None for zero layers) and, optionally, parameter gradients.
    """
    params = cache.params
    config = cache.config
    n_real = cache.n_real
    n_nodes = cache.n_nodes
    grads = params.zeros_like() if want_params else None

    draw = dy * config.std
    dhidden = draw[:, None] * params.head_w2[None, :]
    dpre_head = dhidden * silu_grad(cache.head_pre)
    dx = np.zeros((n_nodes, config.embedding_dimension))
    dx[:n_real] = dpre_head @ params.head_w1
    if want_params:
        grads.head_b2[...] = draw.sum()
        grads.head_w2[...] = cache.head_hidden.T @ draw
        grads.head_b1[...] = dpre_head.sum(axis=0)
        grads.head_w1[...] = dpre_head.T @ cache.x_states[config.num_layers][:n_real]

    if config.num_layers == 0:
        if want_params:
            grads.embed[...] = segment_sum(
                dx[:n_real], cache.system.species, config.max_z
            )
        return None, grads

    rbf = cache.edge_features.rbf
    envelope = cache.edge_features.envelope
    d_rbf_total = np.zeros_like(rbf)
    d_envelope_total = np.zeros(envelope.shape[0])

    for idx in range(config.num_layers - 1, -1, -1):
        layer = params.layers[idx]
        acts = cache.layer_acts[idx]
        x_in = cache.x_states[idx]
        dupdate = dx
        dgated = dupdate @ layer.post_w2
        dpre_update = dgated * silu_grad(acts["pre_update"])
        daggregated = dpre_update @ layer.post_w1
        dmessage = daggregated[cache.receivers]
        dsender = dmessage * acts["edge_weight"]
        dweight = dmessage * acts["sender_feat"]
        d_envelope_total += (dweight * acts["base_filter"]).sum(axis=1)
        dbase = dweight * envelope[:, None]
        dhidden_f = dbase @ layer.filter_w2
        dpre_f = dhidden_f * silu_grad(acts["pre_filter"])
        d_rbf_total += dpre_f @ layer.filter_w1
        if want_params:
            g = grads.layers[idx]
            g.post_w2[...] = dupdate.T @ acts["gated"]
            g.post_b2[...] = dupdate.sum(axis=0)
            g.post_w1[...] = dpre_update.T @ acts["aggregated"]
            g.post_b1[...] = dpre_update.sum(axis=0)
            g.premix[...] = dsender.T @ x_in[cache.senders]
            g.filter_w2[...] = dbase.T @ acts["hidden_filter"]
            g.filter_b2[...] = dbase.sum(axis=0)
            g.filter_w1[...] = dpre_f.T @ rbf
            g.filter_b1[...] = dpre_f.sum(axis=0)
        dx = dupdate + segment_sum(dsender @ layer.premix, cache.senders, n_nodes)

    if want_params:
        grads.embed[...] = segment_sum(dx[:n_real], cache.system.species, config.max_z)

    _, df_dd, df_dmeans, df_dbetas = rbf_expnorm_with_grads(
        cache.d, params.rbf_means, params.rbf_betas, config.cutoff_lower
    )
    if cache.ghost_edge_mask is not None:
        df_dd = np.where(cache.ghost_edge_mask[:, None], 0.0, df_dd)
    d_adjoint = (d_rbf_total * df_dd).sum(axis=1)
    d_adjoint += d_envelope_total * cosine_cutoff_grad(
        cache.d, config.cutoff_lower, config.cutoff_upper
    )
    if want_params and config.trainable_rbf:
        if cache.ghost_edge_mask is not None:
            mask = ~cache.ghost_edge_mask[:, None]
            df_dmeans = df_dmeans * mask
            df_dbetas = df_dbetas * mask
        grads.rbf_means[...] = (d_rbf_total * df_dmeans).sum(axis=0)
        grads.rbf_betas[...] = (d_rbf_total * df_dbetas).sum(axis=0)
    return d_adjoint, grads


def backward_forces(
    params: GNParams,
    config: GNConfig,
    system: System,
    neighbors: NeighborList,
    cache: ForwardCache,
) -> np.ndarray:
    """Forces as the negative position gradient of the summed energy.

    All geometry flows through edge distances, so the reverse sweep
    produces one adjoint per edge and the neighbor pullback turns it
    into per-atom gradients.
    """
    _check_cache(cache, params, config, system, neighbors)
    if config.num_layers == 0:
        return np.zeros((system.n_atoms, 3))
    dy = np.ones(cache.n_real)
    d_adjoint, _ = _reverse(cache, dy, want_params=False)
    d_grad = np.zeros(cache.eval_neighbors.capacity)
    d_grad[: d_adjoint.shape[0]] = d_adjoint
    grad = distance_pullback(cache.eval_neighbors, d_grad)
    return -grad[: system.n_atoms]


def backward_params(
    params: GNParams,
    config: GNConfig,
    system: System,
    neighbors: NeighborList,
    cache: ForwardCache,
    upstream: np.ndarray,
) -> GNParams:
    """Exact gradients of sum_s upstream_s * E_s for every parameter."""
    _check_cache(cache, params, config, system, neighbors)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (system.n_samples,):
        raise ValidationError(
            f"upstream must have one entry per sample ({system.n_samples})"
        )
    dy = upstream[system.batch]
    _, grads = _reverse(cache, dy, want_params=True)
    return grads


@dataclass
class GraphPotential:
    """Bound (config, params) pair with a one-call evaluation interface."""

    config: GNConfig
    params: GNParams

    def evaluate(
        self, system: System, neighbors: NeighborList, forces: bool = True
    ) -> EnergyForces:
        result, cache = forward(self.params, self.config, system, neighbors)
        if not forces:
            return result
        force_array = backward_forces(
            self.params, self.config, system, neighbors, cache
        )
        return EnergyForces(
            energy=result.energy,
            forces=force_array,
            per_atom_energy=result.per_atom_energy,
        )

    def with_static_shapes(self, enabled: bool = True) -> "GraphPotential":
        return GraphPotential(
            config=replace(self.config, static_shapes=enabled), params=self.params
        )
