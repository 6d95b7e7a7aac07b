#!/usr/bin/env python3
"""Export torchvision's pretrained VGG-16 feature stack for the perceptual loss.

Writes the 13 convolution layers (conv1_1 .. conv5_3) as float64 blobs into the
binary container the C++ side reads, named `<name>.w` / `<name>.b`.

Usage:
    python3 scripts/export_vgg16.py --out "$MASKOFF_BACKBONE_DIR/vgg16.ckpt"
    python3 scripts/export_vgg16.py --state-dict vgg16.pth --out vgg16.ckpt

Requires torch + torchvision (only to read the weights; the file itself has no
framework dependency).
"""

import argparse
import os
import struct
import sys
from array import array

MAGIC = b"MKCK"
FORMAT_VERSION = 1

# torchvision vgg16().features index -> layer name, output channels
VGG16_LAYERS = [
    (0, "conv1_1", 64), (2, "conv1_2", 64),
    (5, "conv2_1", 128), (7, "conv2_2", 128),
    (10, "conv3_1", 256), (12, "conv3_2", 256), (14, "conv3_3", 256),
    (17, "conv4_1", 512), (19, "conv4_2", 512), (21, "conv4_3", 512),
    (24, "conv5_1", 512), (26, "conv5_2", 512), (28, "conv5_3", 512),
]


def write_string(f, s):
    data = s.encode("utf-8")
    f.write(struct.pack("<Q", len(data)))
    f.write(data)


def write_blob(f, name, shape, values):
    write_string(f, name)
    f.write(struct.pack("<Q", len(shape)))
    for d in shape:
        f.write(struct.pack("<q", d))
    data = array("d", values)
    if sys.byteorder == "big":
        data.byteswap()
    f.write(data.tobytes())


def load_state_dict(path):
    import torch

    if path:
        return torch.load(path, map_location="cpu", weights_only=True)
    from torchvision.models import VGG16_Weights, vgg16

    return vgg16(weights=VGG16_Weights.IMAGENET1K_V1).state_dict()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=None,
                        help="output path (default: $MASKOFF_BACKBONE_DIR/vgg16.ckpt)")
    parser.add_argument("--state-dict", default=None,
                        help="optional local .pth state dict instead of downloading")
    args = parser.parse_args()

    out = args.out
    if out is None:
        base = os.environ.get("MASKOFF_BACKBONE_DIR")
        if not base:
            sys.exit("either pass --out or set MASKOFF_BACKBONE_DIR")
        out = os.path.join(base, "vgg16.ckpt")

    try:
        state = load_state_dict(args.state_dict)
    except ImportError as e:
        sys.exit(f"torch/torchvision are required to read the weights: {e}")

    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        write_string(f, "model = vgg16_features\nsource = torchvision/IMAGENET1K_V1\n")
        f.write(struct.pack("<q", 0))  # epoch
        f.write(struct.pack("<q", 0))  # step
        write_string(f, "")  # rng state
        f.write(struct.pack("<Q", 2 * len(VGG16_LAYERS)))

        cin = 3
        for idx, name, cout in VGG16_LAYERS:
            w = state[f"features.{idx}.weight"].double()
            b = state[f"features.{idx}.bias"].double()
            if tuple(w.shape) != (cout, cin, 3, 3):
                sys.exit(f"{name}: unexpected weight shape {tuple(w.shape)}")
            write_blob(f, f"{name}.w", list(w.shape), w.flatten().tolist())
            write_blob(f, f"{name}.b", list(b.shape), b.flatten().tolist())
            cin = cout

    total = os.path.getsize(out)
    print(f"wrote {out} ({total / 1e6:.1f} MB, {len(VGG16_LAYERS)} layers)")


if __name__ == "__main__":
    main()
