#!/usr/bin/env python3
"""Convert a MATLAB one-class dataset (prtools layout) to the suite's CSV.

The one-class benchmark .mat files store a struct with the data matrix and a
target/outlier labeling; field names vary slightly between exports, so this
walks the struct looking for an (n x d) float matrix and an n-vector of
labels. Output schema: header x0..x{d-1},y with y = +1 target / -1 outlier.

Usage: convert_pump_mat.py <input.mat> <output.csv>
"""

import csv
import sys

import numpy as np
import scipy.io


def flatten(obj, found):
    """Collect every ndarray reachable from nested struct/object arrays."""
    if isinstance(obj, np.ndarray):
        if obj.dtype == object:
            for item in obj.flat:
                flatten(item, found)
        elif obj.dtype.names:
            for name in obj.dtype.names:
                for item in np.atleast_1d(obj[name]).flat:
                    flatten(item, found)
        else:
            found.append(obj)
    elif hasattr(obj, "_fieldnames"):  # mat_struct
        for name in obj._fieldnames:
            flatten(getattr(obj, name), found)


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    src, dst = sys.argv[1], sys.argv[2]
    mat = scipy.io.loadmat(src, squeeze_me=True, struct_as_record=False)

    arrays = []
    for key, value in mat.items():
        if key.startswith("__"):
            continue
        flatten(np.atleast_1d(np.asarray(value, dtype=object)), arrays)

    # The data matrix: the largest 2-D float array.
    candidates = [a for a in arrays if a.ndim == 2 and np.issubdtype(a.dtype, np.floating)]
    if not candidates:
        sys.exit("no float matrix found in the .mat file")
    data = max(candidates, key=lambda a: a.size)
    n, d = data.shape
    if d > n:
        data = data.T
        n, d = data.shape

    # The labels: an n-vector with exactly two distinct values.
    label_vec = None
    for a in arrays:
        v = np.asarray(a).ravel()
        if v.size == n and not np.issubdtype(v.dtype, np.floating):
            vals = np.unique(v.astype(str))
            if len(vals) == 2:
                label_vec = v.astype(str)
                break
        if v.size == n and np.issubdtype(v.dtype, np.number):
            vals = np.unique(v)
            if len(vals) == 2:
                label_vec = v
                break
    if label_vec is None:
        sys.exit("no two-class label vector found in the .mat file")

    labels = np.asarray(label_vec)
    as_str = labels.astype(str)
    # 'target' marks the one-class in this collection; otherwise the majority
    # class is taken as the target.
    is_target = np.char.startswith(np.char.lower(as_str), "target")
    if not is_target.any():
        vals, counts = np.unique(as_str, return_counts=True)
        is_target = as_str == vals[np.argmax(counts)]
        print(f"no 'target' label text; treating majority class {vals[np.argmax(counts)]!r} as +1")

    with open(dst, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(d)] + ["y"])
        for i in range(n):
            w.writerow([repr(float(v)) for v in data[i]] + ["+1" if is_target[i] else "-1"])
    print(f"wrote {dst} ({n} rows, {d} features, {int(is_target.sum())} targets)")


if __name__ == "__main__":
    main()
