"""Shared helpers for the experiment runners."""

import argparse
import json
from pathlib import Path


def parser(description, reps):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--reps", type=int, default=reps)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="results")
    return p


def save(out, stem, report):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / f"{stem}.csv")
    report.to_json(out / f"{stem}.json")
    return out / f"{stem}.csv"


def save_table(out, stem, header, rows):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}.csv"
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in r) + "\n")
    return path


def dump(obj):
    print(json.dumps(obj, indent=2))
