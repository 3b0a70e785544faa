#!/usr/bin/env python3
"""Check convert_timm.py end to end against an independent PyTorch forward pass.

Builds a small random ViT in the timm parameter layout, converts it, runs
`vitforge predict --json` on a random image and compares the logits:

    cargo build --release -p vitforge-cli
    python scripts/check_convert.py target/release/vitforge
"""

import json
import os
import subprocess
import sys
import tempfile

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from safetensors.torch import save_file

HERE = os.path.dirname(os.path.abspath(__file__))
MEAN = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
STD = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)


def random_state(dim=24, depth=2, patch=8, grid=4, mlp=4, classes=2):
    g = torch.Generator().manual_seed(0)
    r = lambda *s, scale=0.2: torch.randn(*s, generator=g) * scale
    s = {
        "patch_embed.proj.weight": r(dim, 3, patch, patch, scale=0.05),
        "patch_embed.proj.bias": r(dim),
        "cls_token": r(1, 1, dim),
        "pos_embed": r(1, grid * grid + 1, dim),
        "norm.weight": 1 + r(dim),
        "norm.bias": r(dim),
        "head.weight": r(classes, dim),
        "head.bias": r(classes),
    }
    for i in range(depth):
        b = f"blocks.{i}."
        s.update({
            b + "norm1.weight": 1 + r(dim), b + "norm1.bias": r(dim),
            b + "attn.qkv.weight": r(3 * dim, dim), b + "attn.qkv.bias": r(3 * dim),
            b + "attn.proj.weight": r(dim, dim), b + "attn.proj.bias": r(dim),
            b + "norm2.weight": 1 + r(dim), b + "norm2.bias": r(dim),
            b + "mlp.fc1.weight": r(mlp * dim, dim), b + "mlp.fc1.bias": r(mlp * dim),
            b + "mlp.fc2.weight": r(dim, mlp * dim), b + "mlp.fc2.bias": r(dim),
        })
    return s


def forward(s, x, heads, depth):
    """Reference timm VisionTransformer forward for one image [3, H, W]."""
    dim = s["cls_token"].shape[-1]
    patch = s["patch_embed.proj.weight"].shape[-1]
    t = F.conv2d(x[None], s["patch_embed.proj.weight"], s["patch_embed.proj.bias"], stride=patch)
    t = t.flatten(2).transpose(1, 2)
    t = torch.cat([s["cls_token"], t], dim=1) + s["pos_embed"]
    ln = lambda v, p: F.layer_norm(v, (dim,), s[p + ".weight"], s[p + ".bias"], eps=1e-6)
    for i in range(depth):
        b = f"blocks.{i}."
        h = ln(t, b + "norm1")
        qkv = F.linear(h, s[b + "attn.qkv.weight"], s[b + "attn.qkv.bias"])
        n = qkv.shape[1]
        q, k, v = qkv.reshape(1, n, 3, heads, dim // heads).permute(2, 0, 3, 1, 4)
        att = (q @ k.transpose(-2, -1) * (dim // heads) ** -0.5).softmax(-1)
        o = (att @ v).transpose(1, 2).reshape(1, n, dim)
        t = t + F.linear(o, s[b + "attn.proj.weight"], s[b + "attn.proj.bias"])
        h = ln(t, b + "norm2")
        h = F.gelu(F.linear(h, s[b + "mlp.fc1.weight"], s[b + "mlp.fc1.bias"]))
        t = t + F.linear(h, s[b + "mlp.fc2.weight"], s[b + "mlp.fc2.bias"])
    return F.linear(ln(t, "norm")[:, 0], s["head.weight"], s["head.bias"])[0]


def main():
    binary = sys.argv[1] if len(sys.argv) > 1 else "target/release/vitforge"
    heads, depth, size = 3, 2, 32
    state = random_state(depth=depth)
    pixels = np.random.default_rng(1).integers(0, 256, (size, size, 3), dtype=np.uint8)
    with tempfile.TemporaryDirectory() as tmp:
        src, ckpt, img = (os.path.join(tmp, n) for n in ("m.safetensors", "m.vitf", "x.png"))
        save_file({k: v.contiguous() for k, v in state.items()}, src)
        subprocess.run([sys.executable, os.path.join(HERE, "convert_timm.py"), src, ckpt,
                        "--num-heads", str(heads), "--keep-head"], check=True)
        Image.fromarray(pixels).save(img)
        out = subprocess.run([binary, "--json", "predict", "--checkpoint", ckpt, img],
                             check=True, capture_output=True, text=True).stdout
    got = np.array(json.loads(out)[0]["logits"])
    x = (torch.from_numpy(pixels).permute(2, 0, 1).float() / 255 - MEAN) / STD
    want = forward(state, x, heads, depth).double().numpy()
    err = np.abs(got - want).max()
    print(f"vitforge {got}, reference {want}, max abs diff {err:.2e}")
    sys.exit(0 if err < 1e-4 else 1)


if __name__ == "__main__":
    main()
