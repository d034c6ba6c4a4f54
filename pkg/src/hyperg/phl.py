"""Prompt-attentive propagation over the semantics hypergraph.

Each layer runs two phases.  Node-to-edge: per-head attention logits are
computed from node content alone against a learnable query bank, softmaxed
within each hyperedge, and the weighted node values are merged through a
transformer-style block; the result is concatenated with the edge's
original semantic embedding (2d state).  Edge-to-node: queries derive from
the inquiry embedding, keys/values from the 2d edge states, softmaxed over
the three edges of each node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .hypergraph import SemanticHypergraph
from .rng import stream_rng


@dataclass(frozen=True)
class PHLConfig:
    heads: int = 12
    layers: int = 2
    dim: int = 64
    leaky_slope: float = 0.01
    ff_hidden: int | None = None  # defaults to 4 * dim
    dropout_rate: float = 0.1
    init_scheme: str = "random"  # "random" (Glorot) or "overlap"

    def __post_init__(self) -> None:
        assert self.heads >= 1 and self.layers >= 1
        assert self.init_scheme in ("random", "overlap")

    @property
    def ff_dim(self) -> int:
        return self.ff_hidden if self.ff_hidden is not None else 4 * self.dim


@dataclass(frozen=True)
class GraphIndex:
    """Flattened (node, edge) incidence pairs for segment reductions."""

    node_count: int
    edge_count: int
    member_node: np.ndarray  # grouped by edge, ascending node id
    member_edge: np.ndarray
    pair_node: np.ndarray  # grouped by node, ascending edge id
    pair_edge: np.ndarray
    table_edge_id: int


def graph_index(g: SemanticHypergraph) -> GraphIndex:
    member_node, member_edge = [], []
    for j, edge in enumerate(g.edges):
        for v in edge.members:
            member_node.append(v)
            member_edge.append(j)
    pair_node, pair_edge = [], []
    for v in range(g.node_count):
        for j in g.node_edges(v):
            pair_node.append(v)
            pair_edge.append(j)
    return GraphIndex(
        node_count=g.node_count,
        edge_count=g.edge_count,
        member_node=np.array(member_node, dtype=np.intp),
        member_edge=np.array(member_edge, dtype=np.intp),
        pair_node=np.array(pair_node, dtype=np.intp),
        pair_edge=np.array(pair_edge, dtype=np.intp),
        table_edge_id=g.table_edge_id,
    )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def _block_params(rng: np.random.Generator, d: int, ff: int, heads: int) -> dict[str, np.ndarray]:
    return {
        "ln1_g": np.ones(d),
        "ln1_b": np.zeros(d),
        "ln2_g": np.ones(d),
        "ln2_b": np.zeros(d),
        "ff_w1": _glorot(rng, d, ff),
        "ff_b1": np.zeros(ff),
        "ff_w2": _glorot(rng, ff, d),
        "ff_b2": np.zeros(d),
        "merge_w": _glorot(rng, heads * d, d),
        "merge_b": np.zeros(d),
    }


def init_phl_params(cfg: PHLConfig, seed: int = 0) -> dict[str, np.ndarray]:
    d, ff, k = cfg.dim, cfg.ff_dim, cfg.heads
    params: dict[str, np.ndarray] = {}
    for layer in range(cfg.layers):
        rng = stream_rng(seed, f"phl/layer{layer}")
        n2e = f"phl/l{layer}/n2e"
        params[f"{n2e}/W"] = rng.uniform(-1.0 / math.sqrt(d), 1.0 / math.sqrt(d), size=(k, d))
        for h in range(k):
            params[f"{n2e}/h{h}/k_w"] = _glorot(rng, d, d)
            params[f"{n2e}/h{h}/k_b"] = np.zeros(d)
            params[f"{n2e}/h{h}/v_w"] = _glorot(rng, d, d)
            params[f"{n2e}/h{h}/v_b"] = np.zeros(d)
        for name, arr in _block_params(rng, d, ff, k).items():
            params[f"{n2e}/{name}"] = arr
        e2n = f"phl/l{layer}/e2n"
        params[f"{e2n}/q_w"] = _glorot(rng, d, k * d)
        params[f"{e2n}/q_b"] = np.zeros(k * d)
        for h in range(k):
            params[f"{e2n}/h{h}/k_w"] = _glorot(rng, 2 * d, d)
            params[f"{e2n}/h{h}/k_b"] = np.zeros(d)
            params[f"{e2n}/h{h}/v_w"] = _glorot(rng, 2 * d, d)
            params[f"{e2n}/h{h}/v_b"] = np.zeros(d)
        for name, arr in _block_params(rng, d, ff, k).items():
            params[f"{e2n}/{name}"] = arr
    params["phl/no_inquiry_vec"] = stream_rng(seed, "phl/no_inquiry").normal(0.0, 0.1, size=d)
    if cfg.init_scheme == "overlap":
        _overlap_align(params, cfg)
    return params


def _overlap_align(params: dict[str, np.ndarray], cfg: PHLConfig) -> None:
    """Start attention as an inquiry/edge token-overlap detector.

    Key/value maps begin as identities (edge-to-node maps pick the semantic
    half of the 2d edge state), the inquiry query map replicates the inquiry
    across heads, head merging averages, and the feed-forward output map
    starts at zero.  Attention logits therefore begin as dot products between
    the inquiry embedding and edge/node semantic embeddings, which is the
    signal that separates content-matching inquiries from mismatched ones;
    training refines the maps from there instead of having to discover the
    pairing inside a random bilinear form.
    """
    d, k = cfg.dim, cfg.heads
    eye = np.eye(d)
    base_half = np.vstack([np.zeros((d, d)), eye])  # 2d -> d, semantic half
    for layer in range(cfg.layers):
        n2e = f"phl/l{layer}/n2e"
        e2n = f"phl/l{layer}/e2n"
        for h in range(k):
            params[f"{n2e}/h{h}/k_w"] = eye.copy()
            params[f"{n2e}/h{h}/v_w"] = eye.copy()
            params[f"{e2n}/h{h}/k_w"] = base_half.copy()
            params[f"{e2n}/h{h}/v_w"] = base_half.copy()
        params[f"{e2n}/q_w"] = np.tile(eye, (1, k))
        params[f"{e2n}/q_b"] = np.zeros(k * d)
        for pre in (n2e, e2n):
            params[f"{pre}/ff_w2"] = np.zeros_like(params[f"{pre}/ff_w2"])
            params[f"{pre}/merge_w"] = np.tile(eye / k, (k, 1))
            params[f"{pre}/merge_b"] = np.zeros(d)


def _transformer_block(cfg: PHLConfig, p: dict[str, ad.Tensor], prefix: str,
                       heads_3d: ad.Tensor, residual_kd: ad.Tensor,
                       train: bool, rng: np.random.Generator | None) -> ad.Tensor:
    """LN -> FF -> (+ head-concat residual) -> LN, then merge K*d -> d."""
    n, k, d = heads_3d.shape
    x = ad.add(heads_3d, residual_kd)
    y = ad.layer_norm(x, p[f"{prefix}/ln1_g"], p[f"{prefix}/ln1_b"])
    flat = ad.reshape(y, (n * k, d))
    hidden = ad.relu(ad.linear(flat, p[f"{prefix}/ff_w1"], p[f"{prefix}/ff_b1"]))
    hidden = ad.dropout(hidden, cfg.dropout_rate, train, rng)
    ff_out = ad.reshape(ad.linear(hidden, p[f"{prefix}/ff_w2"], p[f"{prefix}/ff_b2"]), (n, k, d))
    z = ad.layer_norm(ad.add(ff_out, heads_3d), p[f"{prefix}/ln2_g"], p[f"{prefix}/ln2_b"])
    merged = ad.linear(ad.reshape(z, (n, k * d)), p[f"{prefix}/merge_w"], p[f"{prefix}/merge_b"])
    return merged


def node_to_edge(cfg: PHLConfig, p: dict[str, ad.Tensor], layer: int,
                 node_h: ad.Tensor, edge_base: ad.Tensor, gi: GraphIndex,
                 train: bool = False, rng: np.random.Generator | None = None
                 ) -> tuple[ad.Tensor, list[np.ndarray]]:
    """One node-to-edge phase; returns (edge states |E| x 2d, per-head alpha)."""
    pre = f"phl/l{layer}/n2e"
    d, k = cfg.dim, cfg.heads
    n_edges = gi.edge_count
    msgs: list[ad.Tensor] = []
    alphas: list[np.ndarray] = []
    for h in range(k):
        keys = ad.linear(node_h, p[f"{pre}/h{h}/k_w"], p[f"{pre}/h{h}/k_b"])
        query = ad.reshape(ad.gather_rows(p[f"{pre}/W"], [h]), (d,))
        logits = ad.leaky_relu(ad.matmul(keys, query), cfg.leaky_slope)
        member_logits = ad.gather_rows(logits, gi.member_node)
        weights = ad.segment_softmax(member_logits, gi.member_edge)
        values = ad.linear(node_h, p[f"{pre}/h{h}/v_w"], p[f"{pre}/h{h}/v_b"])
        contrib = ad.mul(ad.gather_rows(values, gi.member_node),
                         ad.reshape(weights, (-1, 1)))
        msgs.append(ad.segment_sum(contrib, gi.member_edge, n_edges))
        alphas.append(weights.value.copy())
    heads_3d = ad.reshape(ad.concat(msgs, axis=1), (n_edges, k, d))
    query_bank = ad.reshape(p[f"{pre}/W"], (1, k, d))
    edge_hat = _transformer_block(cfg, p, pre, heads_3d, query_bank, train, rng)
    edge_aug = ad.concat([edge_hat, edge_base], axis=1)
    return edge_aug, alphas


def edge_to_node(cfg: PHLConfig, p: dict[str, ad.Tensor], layer: int,
                 edge_aug: ad.Tensor, h_omega: ad.Tensor, gi: GraphIndex,
                 train: bool = False, rng: np.random.Generator | None = None
                 ) -> tuple[ad.Tensor, list[np.ndarray]]:
    """One edge-to-node phase; returns (node states |V| x d, per-head beta)."""
    pre = f"phl/l{layer}/e2n"
    d, k = cfg.dim, cfg.heads
    n_nodes = gi.node_count
    query_all = ad.linear(h_omega, p[f"{pre}/q_w"], p[f"{pre}/q_b"])  # (K*d,)
    msgs: list[ad.Tensor] = []
    betas: list[np.ndarray] = []
    for h in range(k):
        q_h = ad.gather_rows(query_all, np.arange(h * d, (h + 1) * d))
        keys = ad.linear(edge_aug, p[f"{pre}/h{h}/k_w"], p[f"{pre}/h{h}/k_b"])
        logits = ad.leaky_relu(ad.matmul(keys, q_h), cfg.leaky_slope)
        pair_logits = ad.gather_rows(logits, gi.pair_edge)
        weights = ad.segment_softmax(pair_logits, gi.pair_node)
        values = ad.linear(edge_aug, p[f"{pre}/h{h}/v_w"], p[f"{pre}/h{h}/v_b"])
        contrib = ad.mul(ad.gather_rows(values, gi.pair_edge),
                         ad.reshape(weights, (-1, 1)))
        msgs.append(ad.segment_sum(contrib, gi.pair_node, n_nodes))
        betas.append(weights.value.copy())
    heads_3d = ad.reshape(ad.concat(msgs, axis=1), (n_nodes, k, d))
    query_res = ad.reshape(query_all, (1, k, d))
    node_h = _transformer_block(cfg, p, pre, heads_3d, query_res, train, rng)
    return node_h, betas


@dataclass
class AttentionLog:
    """Per-layer attention records; weights align with the GraphIndex pairs."""

    gi: GraphIndex
    layers: list[dict[str, list[np.ndarray]]] = field(default_factory=list)


@dataclass
class PHLOutput:
    node_h: ad.Tensor  # |V| x d
    edge_aug: ad.Tensor  # |E| x 2d
    table_embed: ad.Tensor  # 2d
    attention: AttentionLog | None


def phl_forward(cfg: PHLConfig, p: dict[str, ad.Tensor], gi: GraphIndex,
                h_v: ad.Tensor, h_e: ad.Tensor, h_omega: ad.Tensor,
                train: bool = False, rng: np.random.Generator | None = None,
                log_attention: bool = False, no_phl: bool = False,
                no_inquiry: bool = False) -> PHLOutput:
    """Run all layers; the table readout is the final 2d table-edge state."""
    d = cfg.dim
    if no_phl:
        zeros = ad.Tensor(np.zeros((gi.edge_count, d)), tape=h_e.tape)
        edge_aug = ad.concat([zeros, h_e], axis=1)
        table_embed = ad.reshape(ad.gather_rows(edge_aug, [gi.table_edge_id]), (2 * d,))
        return PHLOutput(node_h=h_v, edge_aug=edge_aug, table_embed=table_embed, attention=None)
    if no_inquiry:
        h_omega = p["phl/no_inquiry_vec"]
    log = AttentionLog(gi) if log_attention else None
    node_h = h_v
    edge_aug = None
    for layer in range(cfg.layers):
        edge_aug, alphas = node_to_edge(cfg, p, layer, node_h, h_e, gi, train, rng)
        node_h, betas = edge_to_node(cfg, p, layer, edge_aug, h_omega, gi, train, rng)
        if log is not None:
            log.layers.append({"alpha": alphas, "beta": betas})
    table_embed = ad.reshape(ad.gather_rows(edge_aug, [gi.table_edge_id]), (2 * d,))
    return PHLOutput(node_h=node_h, edge_aug=edge_aug, table_embed=table_embed, attention=log)


def head_averaged_beta(log: AttentionLog, layer: int = -1) -> np.ndarray:
    """Per-node beta weights averaged over heads: shape |V| x 3 (row, col, table)."""
    betas = log.layers[layer]["beta"]
    avg = np.mean(np.stack(betas, axis=0), axis=0)
    return avg.reshape(log.gi.node_count, 3)


def head_averaged_alpha(log: AttentionLog, layer: int = -1) -> np.ndarray:
    """Head-averaged alpha weights aligned with the member pair arrays."""
    alphas = log.layers[layer]["alpha"]
    return np.mean(np.stack(alphas, axis=0), axis=0)
