"""Convolutional-recurrent encoder, deconvolutional decoder and critic."""
from __future__ import annotations

from typing import Sequence

import torch
from torch import nn


def attention_combine(states: torch.Tensor, mask: torch.Tensor | None = None,
                      rescale: float = 5.0) -> tuple[torch.Tensor, torch.Tensor]:
    """Softmax-weighted combination of per-slot hidden states.

    ``states`` is ``(B, N, ...)`` with the current step last. Each slot is
    weighted by ``softmax(<H_t, H_i> / rescale)``; slots with mask bit 0 get
    weight exactly zero and the survivors are renormalised. Returns the
    combined state ``(B, ...)`` and the weights ``(B, N)``.
    """
    B, N = states.shape[:2]
    flat = states.reshape(B, N, -1)
    logits = torch.einsum("bd,bnd->bn", flat[:, -1], flat) / rescale
    if mask is not None:
        mask = mask.to(torch.bool)
        if not mask.any(dim=1).all():
            raise ValueError("every slot is masked")
        logits = logits.masked_fill(~mask, float("-inf"))
    alpha = torch.softmax(logits, dim=1)
    combined = torch.einsum("bn,bnd->bd", alpha, flat).reshape(states.shape[:1] + states.shape[2:])
    return combined, alpha


class ConvLSTMCell(nn.Module):
    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        self.channels = channels
        self.gates = nn.Conv2d(2 * channels, 4 * channels, kernel_size, padding=kernel_size // 2)

    def forward(self, x, state):
        h, c = state
        i, f, g, o = self.gates(torch.cat([x, h], dim=1)).chunk(4, dim=1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, c


class ConvLSTM(nn.Module):
    """Runs a cell over the slot axis.

    A slot with mask bit 0 leaves the recurrent state untouched, so its
    content cannot reach later slots.
    """

    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        self.cell = ConvLSTMCell(channels, kernel_size)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        B, N, ch, H, W = x.shape
        h = x.new_zeros(B, ch, H, W)
        c = x.new_zeros(B, ch, H, W)
        out = []
        for t in range(N):
            h_new, c_new = self.cell(x[:, t], (h, c))
            if mask is not None:
                keep = mask[:, t].to(torch.bool).view(B, 1, 1, 1)
                h_new = torch.where(keep, h_new, h)
                c_new = torch.where(keep, c_new, c)
            h, c = h_new, c_new
            out.append(h)
        return torch.stack(out, dim=1)


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


class Encoder(nn.Module):
    """Four conv layers, each tapped by a ConvLSTM with slot attention.

    Input ``(B, N, C, n, n)``; returns the attended state of every layer
    (shallowest first) and the attention weights per layer.
    """

    def __init__(self, in_channels: int, channels: Sequence[int], kernels: Sequence[int],
                 strides: Sequence[int], rescale: float = 5.0):
        super().__init__()
        self.rescale = rescale
        convs, cells = [], []
        prev = in_channels
        for ch, k, s in zip(channels, kernels, strides):
            convs.append(nn.Conv2d(prev, ch, k, stride=s, padding=k // 2))
            cells.append(ConvLSTM(ch))
            prev = ch
        self.convs = nn.ModuleList(convs)
        self.recurrent = nn.ModuleList(cells)
        self.act = nn.SELU()

    def forward(self, slots: torch.Tensor, mask: torch.Tensor | None = None):
        B, N = slots.shape[:2]
        x = slots.reshape(B * N, *slots.shape[2:])
        attended, weights = [], []
        for conv, lstm in zip(self.convs, self.recurrent):
            x = self.act(conv(x))
            hidden = lstm(x.reshape(B, N, *x.shape[1:]), mask)
            combined, alpha = attention_combine(hidden, mask, self.rescale)
            attended.append(combined)
            weights.append(alpha)
        return attended, weights


class Decoder(nn.Module):
    """Deconvolutions in reverse order, concatenating the encoder's attended states."""

    def __init__(self, out_channels: int, channels: Sequence[int], kernels: Sequence[int],
                 strides: Sequence[int]):
        super().__init__()
        L = len(channels)
        layers = []
        for l in reversed(range(L)):
            in_ch = channels[l] if l == L - 1 else 2 * channels[l]
            out_ch = channels[l - 1] if l > 0 else out_channels
            k = kernels[l]
            layers.append(nn.ConvTranspose2d(in_ch, out_ch, k, stride=strides[l], padding=k // 2))
        self.deconvs = nn.ModuleList(layers)
        self.act = nn.SELU()

    def forward(self, attended: list[torch.Tensor], out_size: int) -> torch.Tensor:
        sizes = [out_size] + [a.shape[-1] for a in attended[:-1]]
        x = attended[-1]
        L = len(attended)
        for i, deconv in enumerate(self.deconvs):
            l = L - 1 - i
            x = deconv(x, output_size=(sizes[l], sizes[l]))
            if l > 0:
                x = torch.cat([self.act(x), attended[l - 1]], dim=1)
        return x


class Critic(nn.Module):
    """Three conv layers and a linear head producing one scalar per MCM."""

    def __init__(self, in_channels: int, n: int, channels: Sequence[int] = (32, 64, 128)):
        super().__init__()
        layers = []
        prev, size = in_channels, n
        for i, ch in enumerate(channels):
            stride = 1 if i == 0 else 2
            layers += [nn.Conv2d(prev, ch, 3, stride=stride, padding=1), nn.LeakyReLU(0.2)]
            prev, size = ch, _conv_out(size, 3, stride, 1)
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(prev * size * size, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(x).flatten(1)).squeeze(1)
