"""
ReachDiff Denoiser

Trajectory layout per modality and a small temporal-convolution
denoiser with a sinusoidal noise-level embedding.
"""

import math

import numpy as np
import torch
from torch import nn

from src.core.exceptions import RejectedInputError
from src.models.diffusion import Modality
from src.models.environment import EnvSpec
from src.models.trajectory import NormalizationStats, Trajectory
from src.services.dynamics import env_from_spec, rollout


class TrajectoryLayout:
    """
    Maps raw trajectories to normalized (length, channels) arrays.

    - S: H+1 tokens of state channels
    - SA: H+1 tokens of state plus action channels; the last token's action
      slot is zero padding
    - A: H tokens of action channels, conditioned on the initial state
    """

    def __init__(self, env: EnvSpec, modality: Modality, stats: NormalizationStats):
        self.env = env
        self.modality = modality
        self.stats = stats
        n, m = env.n_states, env.n_actions
        self.length = env.horizon if modality == Modality.A else env.horizon + 1
        self.channels = {Modality.S: n, Modality.SA: n + m, Modality.A: m}[modality]
        self.context_dim = n if modality == Modality.A else 0

    @property
    def needs_actions(self) -> bool:
        return self.modality != Modality.S

    def encode(self, trajectory: Trajectory) -> np.ndarray:
        """Normalized (length, channels) array of a raw trajectory."""
        H = self.env.horizon
        if self.modality == Modality.A:
            assert trajectory.actions is not None
            return self.stats.normalize_actions(trajectory.actions)
        states = self.stats.normalize_states(trajectory.states)
        if self.modality == Modality.S:
            return states
        assert trajectory.actions is not None
        actions = np.zeros((H + 1, self.env.n_actions))
        actions[:H] = self.stats.normalize_actions(trajectory.actions)
        return np.concatenate([states, actions], axis=1)

    def decode(self, array: np.ndarray, s0: np.ndarray) -> Trajectory:
        """Raw trajectory with states[0] pinned to s0 exactly."""
        n, H = self.env.n_states, self.env.horizon
        s0 = np.asarray(s0, dtype=np.float64).reshape(-1)
        if self.modality == Modality.A:
            actions = self.stats.denormalize_actions(array)
            return rollout(env_from_spec(self.env), s0, actions)
        states = self.stats.denormalize_states(array[:, :n])
        states[0] = s0
        actions = None
        if self.modality == Modality.SA:
            actions = self.stats.denormalize_actions(array[:H, n:])
        return Trajectory(states=states, actions=actions)

    def pin(self, array: np.ndarray, s0: np.ndarray) -> np.ndarray:
        """Overwrite the initial-state token of a normalized batch (in place)."""
        if self.modality != Modality.A:
            array[..., 0, : self.env.n_states] = self.stats.normalize_states(np.asarray(s0))
        return array

    def context(self, s0: np.ndarray) -> np.ndarray:
        if self.context_dim == 0:
            return np.zeros(0)
        return self.stats.normalize_states(np.asarray(s0, dtype=np.float64).reshape(-1))


def sigma_embedding(sigma: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal features of log σ / 4."""
    half = dim // 2
    freqs = torch.exp(-math.log(10_000.0) * torch.arange(half, dtype=torch.float64) / half)
    angles = (torch.log(sigma) / 4.0)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


class Denoiser(nn.Module):
    """
    D_θ(τ; σ, c): stacked 1-D convolutions over time.

    The noisy input is scaled by 1/sqrt(σ² + 1) before the network; the
    output is the clean-trajectory estimate in normalized units.
    """

    def __init__(self, channels: int, context_dim: int = 0, width: int = 64, kernel: int = 5, embed_dim: int = 32):
        super().__init__()
        self.channels = channels
        self.context_dim = context_dim
        self.embed_dim = embed_dim
        pad = kernel // 2
        self.embed = nn.Sequential(nn.Linear(embed_dim, width), nn.SiLU(), nn.Linear(width, width))
        self.inp = nn.Conv1d(channels + context_dim, width, kernel, padding=pad)
        self.hidden = nn.ModuleList(nn.Conv1d(width, width, kernel, padding=pad) for _ in range(2))
        self.out = nn.Conv1d(width, channels, 1)
        self.act = nn.SiLU()
        self.double()

    def forward(self, x: torch.Tensor, sigma: torch.Tensor, context: torch.Tensor | None = None) -> torch.Tensor:
        """
        Args:
            x: (batch, length, channels) noisy trajectories
            sigma: (batch,) noise levels
            context: (batch, context_dim) conditioning vectors

        Returns:
            (batch, length, channels) denoised estimate
        """
        scaled = x / torch.sqrt(sigma**2 + 1.0)[:, None, None]
        if self.context_dim:
            if context is None:
                raise RejectedInputError("denoiser requires a context vector")
            tiled = context[:, None, :].expand(-1, x.shape[1], -1)
            scaled = torch.cat([scaled, tiled], dim=2)
        h = self.inp(scaled.transpose(1, 2))
        emb = self.embed(sigma_embedding(sigma, self.embed_dim))[:, :, None]
        h = self.act(h + emb)
        for conv in self.hidden:
            h = h + self.act(conv(h) + emb)
        return self.out(h).transpose(1, 2)
