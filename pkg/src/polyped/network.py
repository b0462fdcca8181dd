"""Multi-head joint-attention policy network.

Each head softmax-scores encoded joint descriptions and uses the weights to
fuse encoded joint observations; the per-head pooled latents, concatenated
with a projection of the general observations, feed a core network whose
output latent decodes into one action per joint.  The joint axis is treated
symmetrically throughout, so one parameter set drives any number of joints.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from .autodiff import Tensor, concat, parameter, zero_grads, grads_of
from .embodiment import ObservationBundle

__all__ = [
    "ArchitectureConfig",
    "PolicyParams",
    "LatentState",
    "ShapeMismatch",
    "NonFiniteLoss",
    "init_params",
    "forward",
    "forward_batch",
    "bc_loss",
    "backward",
    "parameter_count",
]


class ShapeMismatch(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class ArchitectureConfig:
    """Network shape; the defaults are the reference architecture."""

    heads: int = 3
    attention_dim: int = 32
    encoder_hidden: tuple[int, ...] = (256, 256)
    general_proj_dim: int = 256
    core_hidden: tuple[int, ...] = (768, 768)
    action_latent_dim: int = 256
    decoder_hidden: tuple[int, ...] = (512, 512)
    desc_dim: int = 18
    joint_obs_dim: int = 3
    general_dim: int = 20
    # Softmax normalization axis: over the joint set (default) or, literally,
    # over the attention channels of each joint.
    softmax_over_joints: bool = True
    dtype: str = "float64"

    def small(self) -> "ArchitectureConfig":
        return ArchitectureConfig(
            heads=self.heads,
            attention_dim=4,
            encoder_hidden=(8,),
            general_proj_dim=8,
            core_hidden=(16,),
            action_latent_dim=8,
            decoder_hidden=(16,),
            desc_dim=self.desc_dim,
            joint_obs_dim=self.joint_obs_dim,
            general_dim=self.general_dim,
            softmax_over_joints=self.softmax_over_joints,
            dtype=self.dtype,
        )


@dataclass
class PolicyParams:
    config: ArchitectureConfig
    tensors: dict[str, Tensor]

    def numpy(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def load_numpy(self, arrays: dict[str, np.ndarray]) -> None:
        for k, t in self.tensors.items():
            if arrays[k].shape != t.data.shape:
                raise ShapeMismatch(f"{k}: {arrays[k].shape} != {t.data.shape}")
            t.data = arrays[k].astype(t.data.dtype)

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            self.config, {k: parameter(t.data.copy()) for k, t in self.tensors.items()}
        )


@dataclass
class LatentState:
    """Latents of one forward pass; per-head lists of joint latents and pools."""

    joint_latents: list[np.ndarray]  # heads x (B, J, L)
    pooled: list[np.ndarray]  # heads x (B, L)
    action_latent: np.ndarray  # (B, A)
    attention_weights: list[np.ndarray]  # heads x (J, L)


def _mlp_dims(in_dim: int, hidden: tuple[int, ...], out_dim: int) -> list[tuple[int, int]]:
    dims = [in_dim, *hidden, out_dim]
    return list(zip(dims[:-1], dims[1:]))


def _init_mlp(store, rng, prefix: str, in_dim: int, hidden, out_dim: int, dtype) -> None:
    for i, (n_in, n_out) in enumerate(_mlp_dims(in_dim, hidden, out_dim)):
        bound = 1.0 / np.sqrt(n_in)
        store[f"{prefix}_w{i}"] = parameter(
            rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype)
        )
        store[f"{prefix}_b{i}"] = parameter(
            rng.uniform(-bound, bound, size=(n_out,)).astype(dtype)
        )


def _mlp_forward(params: dict[str, Tensor], prefix: str, x: Tensor, n_layers: int) -> Tensor:
    for i in range(n_layers):
        x = x @ params[f"{prefix}_w{i}"] + params[f"{prefix}_b{i}"]
        if i < n_layers - 1:
            x = x.elu()
    return x


def init_params(arch: ArchitectureConfig, seed: int) -> PolicyParams:
    """Deterministic fan-in-scaled uniform initialization; temperatures at 1."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(arch.dtype)
    store: dict[str, Tensor] = {}
    for h in range(arch.heads):
        _init_mlp(store, rng, f"desc_enc{h}", arch.desc_dim, arch.encoder_hidden,
                  arch.attention_dim, dtype)
        _init_mlp(store, rng, f"obs_enc{h}", arch.joint_obs_dim, arch.encoder_hidden,
                  arch.attention_dim, dtype)
        store[f"tau{h}"] = parameter(np.asarray(1.0, dtype=dtype))
    _init_mlp(store, rng, "general", arch.general_dim, (), arch.general_proj_dim, dtype)
    core_in = arch.heads * arch.attention_dim + arch.general_proj_dim
    _init_mlp(store, rng, "core", core_in, arch.core_hidden, arch.action_latent_dim, dtype)
    _init_mlp(store, rng, "action_desc", arch.desc_dim, arch.encoder_hidden,
              arch.attention_dim, dtype)
    dec_in = arch.attention_dim + arch.action_latent_dim + arch.heads * arch.attention_dim
    _init_mlp(store, rng, "decoder", dec_in, arch.decoder_hidden, 1, dtype)
    return PolicyParams(arch, store)


def parameter_count(params: PolicyParams) -> int:
    return int(sum(t.data.size for t in params.tensors.values()))


def _encoder_layers(arch: ArchitectureConfig) -> int:
    return len(arch.encoder_hidden) + 1


def forward_batch(
    params: PolicyParams,
    general: np.ndarray,
    per_joint: np.ndarray,
    desc: np.ndarray,
) -> tuple[Tensor, LatentState]:
    """Batched forward pass.

    general: (B, 20); per_joint: (B, J, 3); desc: (J, 18) shared across the
    batch (single-embodiment batches).  Returns actions (B, J) as a Tensor so
    losses can extend the graph, plus the detached latents.
    """
    arch = params.config
    p = params.tensors
    if general.ndim != 2 or general.shape[1] != arch.general_dim:
        raise ShapeMismatch(f"general observations {general.shape}")
    if per_joint.ndim != 3 or per_joint.shape[2] != arch.joint_obs_dim:
        raise ShapeMismatch(f"per-joint observations {per_joint.shape}")
    if desc.ndim != 2 or desc.shape[1] != arch.desc_dim:
        raise ShapeMismatch(f"descriptors {desc.shape}")
    b, j = per_joint.shape[:2]
    if desc.shape[0] != j or general.shape[0] != b:
        raise ShapeMismatch("batch/joint dimensions disagree")
    if j < 1:
        raise ShapeMismatch("need at least one joint")

    dtype = np.dtype(arch.dtype)
    x_g = Tensor(np.ascontiguousarray(general, dtype=dtype))
    x_j = Tensor(np.ascontiguousarray(per_joint, dtype=dtype))
    x_d = Tensor(np.ascontiguousarray(desc, dtype=dtype))
    n_enc = _encoder_layers(arch)

    pooled: list[Tensor] = []
    joint_latents: list[Tensor] = []
    weights_log: list[np.ndarray] = []
    for h in range(arch.heads):
        scores = _mlp_forward(p, f"desc_enc{h}", x_d, n_enc) / p[f"tau{h}"]  # (J, L)
        weights = scores.softmax(axis=0 if arch.softmax_over_joints else 1)
        encoded = _mlp_forward(p, f"obs_enc{h}", x_j, n_enc)  # (B, J, L)
        z = weights.reshape(1, j, arch.attention_dim).broadcast_to(encoded.shape) * encoded
        joint_latents.append(z)
        pooled.append(z.sum(axis=1))  # (B, L)
        weights_log.append(weights.data.copy())

    g_lat = (_mlp_forward(p, "general", x_g, 1)).elu()  # (B, G)
    core_in = concat(pooled + [g_lat], axis=1)
    z_action = _mlp_forward(p, "core", core_in, len(arch.core_hidden) + 1)  # (B, A)

    desc_lat = _mlp_forward(p, "action_desc", x_d, n_enc)  # (J, E)
    dec_parts = [
        desc_lat.reshape(1, j, arch.attention_dim).broadcast_to((b, j, arch.attention_dim)),
        z_action.reshape(b, 1, arch.action_latent_dim).broadcast_to(
            (b, j, arch.action_latent_dim)
        ),
        concat(joint_latents, axis=2),
    ]
    dec_in = concat(dec_parts, axis=2)
    actions = _mlp_forward(p, "decoder", dec_in, len(arch.decoder_hidden) + 1)
    actions = actions.reshape(b, j)

    latents = LatentState(
        joint_latents=[z.data.copy() for z in joint_latents],
        pooled=[z.data.copy() for z in pooled],
        action_latent=z_action.data.copy(),
        attention_weights=weights_log,
    )
    return actions, latents


def forward(
    params: PolicyParams, obs: ObservationBundle, desc: np.ndarray
) -> tuple[np.ndarray, LatentState]:
    """Single-sample forward pass; returns the action vector (J,)."""
    obs.check(desc.shape[0])
    actions, latents = forward_batch(
        params, obs.general[None, :], obs.per_joint[None, :, :], desc
    )
    return actions.data[0].copy(), latents


def bc_loss(
    params: PolicyParams,
    general: np.ndarray,
    per_joint: np.ndarray,
    desc: np.ndarray,
    target_actions: np.ndarray,
) -> Tensor:
    """Mean squared action error over every joint and sample in the batch."""
    actions, _ = forward_batch(params, general, per_joint, desc)
    if target_actions.shape != actions.data.shape:
        raise ShapeMismatch(f"targets {target_actions.shape} vs actions {actions.data.shape}")
    residual = actions - Tensor(np.asarray(target_actions, dtype=actions.data.dtype))
    return (residual * residual).mean()


def backward(
    params: PolicyParams,
    general: np.ndarray,
    per_joint: np.ndarray,
    desc: np.ndarray,
    target_actions: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss value and exact gradients for every parameter (temperatures too)."""
    zero_grads(params.tensors)
    loss = bc_loss(params, general, per_joint, desc, target_actions)
    value = float(loss.data)
    if not np.isfinite(value):
        raise NonFiniteLoss(f"behavior-cloning loss is {value}")
    loss.backward()
    return value, grads_of(params.tensors)


def config_to_dict(arch: ArchitectureConfig) -> dict:
    d = asdict(arch)
    d["encoder_hidden"] = list(arch.encoder_hidden)
    d["core_hidden"] = list(arch.core_hidden)
    d["decoder_hidden"] = list(arch.decoder_hidden)
    return d


def config_from_dict(d: dict) -> ArchitectureConfig:
    d = dict(d)
    for key in ("encoder_hidden", "core_hidden", "decoder_hidden"):
        d[key] = tuple(d[key])
    return ArchitectureConfig(**d)
