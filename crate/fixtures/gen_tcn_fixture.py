"""Regenerates the TCN parity fixture.

Writes tcn_fixture_weights.json (weight interchange format) and
tcn_fixture_io.json (inputs and reference outputs) next to this script.
The forward pass is an independent torch implementation of the engine's
architecture: causal dilated convolutions, two per residual block, ReLU after
each, 1x1 skip when the channel count changes, linear head on the last step.

    python fixtures/gen_tcn_fixture.py
"""

import json
from pathlib import Path

import torch
import torch.nn.functional as F

SEED = 42
META = {"channels": 6, "window": 50, "kernel": 3, "dilations": [8, 16], "hidden_channels": 8}
CASES = 8
HERE = Path(__file__).resolve().parent


def make_tensors(gen):
    c, h, k = META["channels"], META["hidden_channels"], META["kernel"]
    tensors = {}

    def rand(*shape, scale):
        return torch.randn(*shape, generator=gen, dtype=torch.float64) * scale

    for i, _ in enumerate(META["dilations"]):
        cin = c if i == 0 else h
        tensors[f"block{i}.conv1.weight"] = rand(h, cin, k, scale=(cin * k) ** -0.5)
        tensors[f"block{i}.conv1.bias"] = rand(h, scale=0.1)
        tensors[f"block{i}.conv2.weight"] = rand(h, h, k, scale=(h * k) ** -0.5)
        tensors[f"block{i}.conv2.bias"] = rand(h, scale=0.1)
        if cin != h:
            tensors[f"block{i}.skip.weight"] = rand(h, cin, 1, scale=cin**-0.5)
    tensors["head.weight"] = rand(3, h, scale=h**-0.5)
    tensors["head.bias"] = rand(3, scale=0.1)
    return tensors


def causal_conv(x, weight, bias, dilation):
    pad = (weight.shape[-1] - 1) * dilation
    return F.conv1d(F.pad(x, (pad, 0)), weight, bias, dilation=dilation)


def forward(tensors, mean, std, x):
    """x: (channels, window) -> (3,)"""
    h = ((x - mean[:, None]) / std[:, None]).unsqueeze(0)
    for i, d in enumerate(META["dilations"]):
        y = F.relu(causal_conv(h, tensors[f"block{i}.conv1.weight"], tensors[f"block{i}.conv1.bias"], d))
        y = F.relu(causal_conv(y, tensors[f"block{i}.conv2.weight"], tensors[f"block{i}.conv2.bias"], d))
        skip = tensors.get(f"block{i}.skip.weight")
        h = y + (F.conv1d(h, skip) if skip is not None else h)
    return tensors["head.weight"] @ h[0, :, -1] + tensors["head.bias"]


def main():
    gen = torch.Generator().manual_seed(SEED)
    tensors = make_tensors(gen)
    mean = torch.randn(META["channels"], generator=gen, dtype=torch.float64)
    std = torch.rand(META["channels"], generator=gen, dtype=torch.float64) + 0.5
    inputs = [
        torch.randn(META["channels"], META["window"], generator=gen, dtype=torch.float64) * 2.0 + mean[:, None]
        for _ in range(CASES)
    ]
    with torch.no_grad():
        outputs = [forward(tensors, mean, std, x) for x in inputs]

    weights = {
        "format_version": 1,
        "meta": META,
        "norm": {"mean": mean.tolist(), "std": std.tolist()},
        "tensors": {
            name: {"shape": list(t.shape), "data": t.reshape(-1).tolist()} for name, t in sorted(tensors.items())
        },
    }
    io = {"inputs": [x.tolist() for x in inputs], "outputs": [y.tolist() for y in outputs]}
    (HERE / "tcn_fixture_weights.json").write_text(json.dumps(weights, indent=1) + "\n")
    (HERE / "tcn_fixture_io.json").write_text(json.dumps(io, indent=1) + "\n")


if __name__ == "__main__":
    main()
