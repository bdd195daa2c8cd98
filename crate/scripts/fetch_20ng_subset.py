#!/usr/bin/env python3
"""Writes a 3-group 20 Newsgroups subset as keyetm corpus JSONL.

    python scripts/fetch_20ng_subset.py [out.jsonl] [--docs 2000] [--seed 0]

Needs scikit-learn and network access on first use. Headers, footers and
quoted replies are stripped. Labels are the coarse groups religion,
politics and science.
"""

import argparse
import json
import random

from sklearn.datasets import fetch_20newsgroups

GROUPS = {
    "religion": ["soc.religion.christian", "alt.atheism", "talk.religion.misc"],
    "politics": ["talk.politics.guns", "talk.politics.mideast", "talk.politics.misc"],
    "science": ["sci.space", "sci.med"],
}


def main():
    p = argparse.ArgumentParser()
    p.add_argument("out", nargs="?", default="crates/validation/tests/20ng_subset.jsonl")
    p.add_argument("--docs", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    coarse = {g: c for c, gs in GROUPS.items() for g in gs}
    data = fetch_20newsgroups(
        subset="all",
        categories=sorted(coarse),
        remove=("headers", "footers", "quotes"),
    )
    rows = [
        (i, coarse[data.target_names[t]], text)
        for i, (t, text) in enumerate(zip(data.target, data.data))
        if len(text.split()) >= 20
    ]
    random.Random(args.seed).shuffle(rows)
    with open(args.out, "w", encoding="utf-8") as f:
        for i, label, text in sorted(rows[: args.docs]):
            f.write(json.dumps({"id": f"ng{i}", "text": text, "label": label}) + "\n")
    print(f"wrote {min(len(rows), args.docs)} documents to {args.out}")


if __name__ == "__main__":
    main()
