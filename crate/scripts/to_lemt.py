#!/usr/bin/env python3
"""Convert .npy / .npz weight arrays into lemt tensor files.

    python3 scripts/to_lemt.py weights.npz out_dir/

Each array becomes `<out_dir>/<name>.lemt`. Rank-4 arrays (filters, channels,
height, width) also get a `.conv.json` sidecar; pass --patches to set the
number of input patches the layer is applied to.
"""

import argparse
import json
import pathlib
import struct

import numpy as np

MAGIC = b"LEMT"
VERSION = 1


def write_tensor(path, name, array):
    dtype = "f64" if array.dtype == np.float64 else "f32"
    data = np.ascontiguousarray(array, dtype="<f8" if dtype == "f64" else "<f4")
    header = json.dumps(
        {"dtype": dtype, "shape": list(data.shape), "layout": "row-major", "name": name},
        separators=(",", ":"),
    ).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(header)))
        f.write(header)
        f.write(data.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("input")
    ap.add_argument("out_dir")
    ap.add_argument("--patches", type=int, default=1)
    args = ap.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    loaded = np.load(args.input)
    arrays = dict(loaded) if isinstance(loaded, np.lib.npyio.NpzFile) else {pathlib.Path(args.input).stem: loaded}

    for name, a in arrays.items():
        if a.ndim not in (2, 4):
            print(f"skip {name}: rank {a.ndim}")
            continue
        safe = name.replace("/", "_")
        path = out / f"{safe}.lemt"
        write_tensor(path, name, a)
        if a.ndim == 4:
            f, c, h, w = a.shape
            meta = {"filters": f, "channels": c, "height": h, "width": w, "patches": args.patches}
            path.with_name(path.name + ".conv.json").write_text(json.dumps(meta))
        print(f"{name}: {a.shape} -> {path}")


if __name__ == "__main__":
    main()
