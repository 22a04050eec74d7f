#!/usr/bin/env python3
"""Regenerates the bundled 16-image desk corpus under data/corpus/.

Photographic images come from scikit-image's offline sample set; two are
procedurally generated. Every image is resized to 192x192 RGB and written as
binary PPM (P6), together with manifest.csv (split,path).
"""
import pathlib

import numpy as np
import skimage.data as sk
from skimage.color import gray2rgb
from skimage.transform import resize

SIZE = 192
OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "corpus"


def square(img):
    if img.ndim == 2:
        img = gray2rgb(img)
    img = img[..., :3]
    h, w = img.shape[:2]
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    crop = img[top:top + s, left:left + s]
    out = resize(crop, (SIZE, SIZE), anti_aliasing=True, preserve_range=True)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def synthetic(seed):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE] / SIZE
    img = np.zeros((SIZE, SIZE, 3))
    for c in range(3):
        a, b = rng.uniform(-1, 1, 2)
        img[..., c] = 0.5 + 0.25 * (a * xx + b * yy)
    for _ in range(12):
        cx, cy, r = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.04, 0.2)
        colour = rng.uniform(0, 1, 3)
        if rng.uniform() < 0.5:
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r ** 2
        else:
            mask = (abs(xx - cx) < r) & (abs(yy - cy) < r * 0.6)
        img[mask] = colour
    return np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)


def write_ppm(path, img):
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        f.write(img.tobytes())


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    train = {
        "chelsea": sk.chelsea(), "rocket": sk.rocket(), "hubble": sk.hubble_deep_field(),
        "ihc": sk.immunohistochemistry(), "retina": sk.retina(), "gravel": sk.gravel(),
        "coins": sk.coins(), "moon": sk.moon(), "clock": sk.clock(), "grass": sk.grass(),
    }
    val = {"astronaut": sk.astronaut(), "coffee": sk.coffee(), "camera": sk.camera(),
           "brick": sk.brick()}
    rows = []
    for name, img in train.items():
        write_ppm(OUT / f"{name}.ppm", square(img))
        rows.append(("train", f"{name}.ppm"))
    for i in range(2):
        write_ppm(OUT / f"synthetic{i}.ppm", synthetic(100 + i))
        rows.append(("train", f"synthetic{i}.ppm"))
    for name, img in val.items():
        write_ppm(OUT / f"{name}.ppm", square(img))
        rows.append(("val", f"{name}.ppm"))
    with open(OUT / "manifest.csv", "w") as f:
        f.write("split,path\n")
        for split, path in rows:
            f.write(f"{split},{path}\n")


if __name__ == "__main__":
    main()
