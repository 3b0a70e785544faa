#!/usr/bin/env python3
"""Convert a timm-style ViT state dict into a vitforge checkpoint.

The input may be a .safetensors, .pth, .pt or .bin file holding the usual
timm parameter names (patch_embed.proj.weight, blocks.N.attn.qkv.weight, ...).
The classification head is replaced by a freshly initialized one sized for
the requested class names, so the output is ready for fine-tuning:

    python scripts/convert_timm.py vit_base_patch16_224.safetensors vit_base.vitf
"""

import argparse
import json
import struct
import sys

import numpy as np

MAGIC = b"VITF"
VERSION = 1
ALIGN = 64


def load_state_dict(path):
    if path.endswith(".safetensors"):
        from safetensors.numpy import load_file

        state = load_file(path)
    else:
        import torch

        state = torch.load(path, map_location="cpu", weights_only=True)
        for key in ("state_dict", "model"):
            if isinstance(state, dict) and key in state and isinstance(state[key], dict):
                state = state[key]
        state = {k: v.float().numpy() for k, v in state.items()}
    return {k.removeprefix("module."): np.asarray(v, dtype=np.float32) for k, v in state.items()}


def truncated_normal(rng, shape, std=0.02):
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=bad.sum())
        bad = np.abs(out) > 2 * std
    return out.astype(np.float32)


def convert(state, num_heads, class_names, seed, keep_head=False):
    conv = state["patch_embed.proj.weight"]
    embed_dim, in_channels, patch, _ = conv.shape
    depth = 1 + max(int(k.split(".")[1]) for k in state if k.startswith("blocks."))
    seq_len = state["pos_embed"].reshape(-1, embed_dim).shape[0]
    grid = round((seq_len - 1) ** 0.5)
    if grid * grid != seq_len - 1:
        sys.exit(f"pos_embed has {seq_len} positions, expected 1 + a square grid")
    if embed_dim % num_heads:
        sys.exit(f"embed_dim {embed_dim} is not divisible by {num_heads} heads")
    mlp_hidden = state["blocks.0.mlp.fc1.weight"].shape[0]

    config = {
        "image_size": grid * patch,
        "patch_size": patch,
        "in_channels": in_channels,
        "embed_dim": embed_dim,
        "depth": depth,
        "num_heads": num_heads,
        "mlp_ratio": mlp_hidden // embed_dim,
        "num_classes": len(class_names),
        "layer_norm_eps": 1e-6,
        "dropout": 0.0,
    }

    if keep_head:
        head_w, head_b = state["head.weight"], state["head.bias"]
        if head_w.shape[0] != len(class_names):
            sys.exit(f"head has {head_w.shape[0]} outputs for {len(class_names)} classes")
    else:
        rng = np.random.default_rng(seed)
        head_w = truncated_normal(rng, (len(class_names), embed_dim))
        head_b = np.zeros(len(class_names), dtype=np.float32)
    tensors = [
        ("patch_embed.proj.weight", conv.reshape(embed_dim, -1)),
        ("patch_embed.proj.bias", state["patch_embed.proj.bias"]),
        ("cls_token", state["cls_token"].reshape(embed_dim)),
        ("pos_embed", state["pos_embed"].reshape(seq_len, embed_dim)),
    ]
    for i in range(depth):
        for part in (
            "norm1.weight", "norm1.bias",
            "attn.qkv.weight", "attn.qkv.bias",
            "attn.proj.weight", "attn.proj.bias",
            "norm2.weight", "norm2.bias",
            "mlp.fc1.weight", "mlp.fc1.bias",
            "mlp.fc2.weight", "mlp.fc2.bias",
        ):
            name = f"blocks.{i}.{part}"
            tensors.append((name, state[name]))
    tensors += [
        ("norm.weight", state["norm.weight"]),
        ("norm.bias", state["norm.bias"]),
        ("head.weight", head_w),
        ("head.bias", head_b),
    ]
    return config, tensors


def write_checkpoint(path, config, class_names, tensors):
    entries, offset = [], 0
    for name, t in tensors:
        t = np.ascontiguousarray(t, dtype="<f4")
        entries.append({
            "name": name,
            "shape": list(t.shape),
            "dtype": "f32",
            "byte_offset": offset,
            "byte_len": t.nbytes,
        })
        offset = -(-(offset + t.nbytes) // ALIGN) * ALIGN
    manifest = {
        "config": config,
        "train_config": {},
        "epoch": 0,
        "rng_state": {"seed": 0, "next_epoch": 0},
        "class_names": class_names,
        "adam_step": None,
        "tensors": entries,
    }
    header = json.dumps(manifest, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<IQ", VERSION, len(header)) + header)
        start = f.tell()
        for (_, t), e in zip(tensors, entries):
            f.write(b"\0" * (start + e["byte_offset"] - f.tell()))
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("input")
    ap.add_argument("output")
    ap.add_argument("--num-heads", type=int, default=12)
    ap.add_argument("--classes", default="fire,nofire", help="comma-separated class names")
    ap.add_argument("--seed", type=int, default=0, help="seed for the new head")
    ap.add_argument("--keep-head", action="store_true",
                    help="keep the existing head (it must match the class count)")
    args = ap.parse_args()

    class_names = args.classes.split(",")
    config, tensors = convert(
        load_state_dict(args.input), args.num_heads, class_names, args.seed, args.keep_head
    )
    write_checkpoint(args.output, config, class_names, tensors)
    print(f"Wrote {args.output}: depth {config['depth']}, dim {config['embed_dim']}, "
          f"image {config['image_size']}, patch {config['patch_size']}")


if __name__ == "__main__":
    main()
