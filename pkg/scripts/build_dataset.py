"""Export the bundled scikit-image photographs as 8-bit grayscale PNGs.

Produces the desk-scale corpus the shipped models were trained on:
data/desk/train (10 images) and data/desk/val (5 images). Color images are
converted with Pillow's L mode (ITU-R 601-2 luma). Requires the optional
[data] extra (scikit-image).

Usage: python3 scripts/build_dataset.py [--root data/desk]
"""

import argparse
import os

import numpy as np
from PIL import Image
from skimage import data as skdata

TRAIN = [
    "astronaut",
    "brick",
    "cell",
    "chelsea",
    "clock",
    "coffee",
    "gravel",
    "hubble_deep_field",
    "immunohistochemistry",
    "motorcycle_left",
]
VAL = ["camera", "coins", "grass", "moon", "rocket"]


def fetch(name: str) -> np.ndarray:
    if name == "motorcycle_left":
        arr = skdata.stereo_motorcycle()[0]
    else:
        arr = getattr(skdata, name)()
    return np.asarray(arr)


def to_gray_png(arr: np.ndarray, path: str) -> None:
    if arr.dtype != np.uint8:
        arr = np.clip(arr, 0, 255).astype(np.uint8)
    img = Image.fromarray(arr)
    if img.mode != "L":
        img = img.convert("L")
    img.save(path)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--root", default="data/desk")
    args = parser.parse_args()
    for split, names in (("train", TRAIN), ("val", VAL)):
        out_dir = os.path.join(args.root, split)
        os.makedirs(out_dir, exist_ok=True)
        for name in names:
            path = os.path.join(out_dir, f"{name}.png")
            to_gray_png(fetch(name), path)
            with Image.open(path) as check:
                print(f"{path}: {check.size[1]}x{check.size[0]} {check.mode}")


if __name__ == "__main__":
    main()
