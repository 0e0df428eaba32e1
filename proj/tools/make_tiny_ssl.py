#!/usr/bin/env python3
"""Exports a tiny frozen TorchScript "SSL model" for provider tests.

forward((B, N) float waveform) -> (layers, B, frames, dim), 50 frames/s at
16 kHz (400-sample window, 320-sample hop)."""
import sys

import torch


class TinySSL(torch.nn.Module):
    def __init__(self, layers: int = 4, dim: int = 16):
        super().__init__()
        self.frontend = torch.nn.Conv1d(1, dim, 400, stride=320)
        self.blocks = torch.nn.ModuleList([torch.nn.Linear(dim, dim) for _ in range(layers)])

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        h = self.frontend(wave.unsqueeze(1)).transpose(1, 2)
        outs = []
        for block in self.blocks:
            h = torch.tanh(block(h)) + h
            outs.append(h)
        return torch.stack(outs)


def main(path):
    torch.manual_seed(0)
    model = TinySSL().eval()
    torch.jit.script(model).save(path)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/tiny_ssl.pt")
