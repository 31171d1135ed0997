#!/usr/bin/env python3
"""Generates the bundled 4-class corpus.

Each text has six characters: three from its class's theme set, at most one
from another theme, the rest neutral. The class is therefore the theme with
the most characters in the text.
"""
import argparse
import random

THEMES = {
    "植物": "木林树叶茶花草莲",
    "水文": "河江海湖洋波流清",
    "言谈": "语说话读请认谈记",
    "天象": "日月明星晴早时阳",
}
NEUTRAL = "中大小天好人的了是在有"


def make(rng, label):
    chars = rng.sample(THEMES[label], 3)
    if rng.random() < 0.5:
        other = rng.choice([k for k in THEMES if k != label])
        chars.append(rng.choice(THEMES[other]))
    while len(chars) < 6:
        chars.append(rng.choice(NEUTRAL))
    rng.shuffle(chars)
    return "".join(chars)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--per-class", type=int, default=50)
    ap.add_argument("--seed", type=int, default=20201)
    ap.add_argument("out")
    args = ap.parse_args()
    rng = random.Random(args.seed)
    rows = [(label, make(rng, label)) for label in THEMES for _ in range(args.per_class)]
    rng.shuffle(rows)
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        for label, text in rows:
            f.write(f"{label}\t{text}\n")


if __name__ == "__main__":
    main()
