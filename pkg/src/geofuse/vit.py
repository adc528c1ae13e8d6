"""Vision transformer branch: patch embedding, pre-norm encoder blocks, pooling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

POOLING_MODES = ("mean_tokens", "cls_token")


@dataclass(frozen=True)
class VitConfig:
    image_size: int = 224
    patch_size: int = 16
    embed_dim: int = 192
    depth: int = 6
    heads: int = 3
    mlp_ratio: float = 4.0
    pooling: str = "mean_tokens"

    def __post_init__(self) -> None:
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} must be divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} must be divisible by heads {self.heads}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_size**2


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, return_attn: bool = False):
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]  # each (b, heads, n, head_dim)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        attn = scores.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, d)
        out = self.proj(out)
        return (out, attn) if return_attn else (out, None)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x: torch.Tensor, return_attn: bool = False):
        attended, attn = self.attn(self.norm1(x), return_attn=return_attn)
        x = x + attended
        x = x + self.mlp(self.norm2(x))
        return x, attn


class VitBranch(nn.Module):
    """Standard ViT encoder over image patches.

    forward returns (patch_tokens, pooled): the post-norm patch tokens
    (B, n_patches, D) and the pooled feature h_vit (B, D) per the configured
    pooling mode.
    """

    def __init__(self, config: VitConfig, in_channels: int = 3):
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.patch_embed = nn.Conv2d(
            in_channels, d, kernel_size=config.patch_size, stride=config.patch_size
        )
        self.cls_token = nn.Parameter(torch.zeros(1, 1, d))
        self.pos_embed = nn.Parameter(torch.zeros(1, config.n_patches + 1, d))
        self.blocks = nn.ModuleList(
            [TransformerBlock(d, config.heads, config.mlp_ratio) for _ in range(config.depth)]
        )
        self.norm = nn.LayerNorm(d)

    def init_parameters(self, generator: torch.Generator) -> None:
        """Truncated-normal (sigma 0.02) embeddings and linear weights, zero biases."""
        nn.init.trunc_normal_(self.cls_token, std=0.02, generator=generator)
        nn.init.trunc_normal_(self.pos_embed, std=0.02, generator=generator)
        nn.init.trunc_normal_(self.patch_embed.weight, std=0.02, generator=generator)
        nn.init.zeros_(self.patch_embed.bias)
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.trunc_normal_(module.weight, std=0.02, generator=generator)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    def forward(self, images: torch.Tensor, return_attn: bool = False):
        b, c, h, w = images.shape
        if (h, w) != (self.config.image_size, self.config.image_size):
            raise ValueError(
                f"expected {self.config.image_size}x{self.config.image_size} input, got {h}x{w}"
            )
        x = self.patch_embed(images).flatten(2).transpose(1, 2)  # (b, n_patches, d)
        cls = self.cls_token.expand(b, -1, -1)
        x = torch.cat([cls, x], dim=1) + self.pos_embed
        attn_maps = []
        for block in self.blocks:
            x, attn = block(x, return_attn=return_attn)
            if return_attn:
                attn_maps.append(attn)
        x = self.norm(x)
        tokens = x[:, 1:]
        if self.config.pooling == "mean_tokens":
            pooled = tokens.mean(dim=1)
        else:
            pooled = x[:, 0]
        if return_attn:
            return tokens, pooled, attn_maps
        return tokens, pooled
