#!/usr/bin/env python3
"""Convert dense Mulan-style ARFF files to the native .mll format.

The last --labels attributes are taken as binary labels. Several inputs
(e.g. scene-train.arff scene-test.arff) are concatenated in order.

    tools/arff_to_mll.py --labels 6 -o data/scene.mll scene-train.arff scene-test.arff
"""
import argparse
import sys


def read_arff(path):
    names, rows, in_data = [], [], False
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            low = line.lower()
            if not in_data:
                if low.startswith("@attribute"):
                    parts = line.split(None, 2)
                    names.append(parts[1].strip("'\""))
                elif low.startswith("@data"):
                    in_data = True
                continue
            if line.startswith("{"):
                sys.exit(f"{path}:{lineno}: sparse ARFF rows are not supported")
            values = [v.strip() for v in line.split(",")]
            if len(values) != len(names):
                sys.exit(f"{path}:{lineno}: expected {len(names)} values, got {len(values)}")
            rows.append(values)
    return names, rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--labels", type=int, required=True, help="number of trailing label attributes")
    ap.add_argument("-o", "--output", required=True)
    ap.add_argument("inputs", nargs="+")
    args = ap.parse_args()

    names, rows = None, []
    for path in args.inputs:
        n, r = read_arff(path)
        if names is not None and n != names:
            sys.exit(f"{path}: attribute list differs from {args.inputs[0]}")
        names = n
        rows.extend(r)

    q = args.labels
    d = len(names) - q
    if q < 1 or d < 1:
        sys.exit("label count leaves no features")
    with open(args.output, "w", encoding="utf-8") as out:
        out.write(f"#MLL n={len(rows)} d={d} q={q}\n")
        out.write("#labels " + ",".join(names[d:]) + "\n")
        for values in rows:
            labels = values[d:]
            if any(v not in ("0", "1") for v in labels):
                sys.exit(f"non-binary label value in row {values}")
            out.write(",".join(values[:d]) + "|" + ",".join(labels) + "\n")
    print(f"wrote {len(rows)} x {d} x {q} to {args.output}")


if __name__ == "__main__":
    main()
