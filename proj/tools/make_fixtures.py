#!/usr/bin/env python3
"""Regenerates the files under tests/fixtures/.

Usage: python3 tools/make_fixtures.py [--out tests/fixtures]
"""
import argparse
import json
import random
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

NAMES = ["Mia", "Omar", "Lena", "Ravi", "Tess", "Jonah", "Aiko", "Bruno", "Cleo", "Dev"]
ITEMS = ["apples", "stickers", "marbles", "pencils", "cookies", "stamps", "shells", "books"]


def word_problem(rng):
    name = rng.choice(NAMES)
    item = rng.choice(ITEMS)
    a, b, c = rng.randint(5, 60), rng.randint(2, 30), rng.randint(2, 6)
    shape = rng.randrange(3)
    if shape == 0:
        q = (f"{name} has {a} {item}. A friend gives {name} {b} more {item}. "
             f"How many {item} does {name} have now?")
        ans, work = a + b, f"{a} + {b} = {a + b}"
    elif shape == 1:
        q = (f"{name} buys {c} boxes of {item}. Each box holds {b} {item}. "
             f"{name} gives away {min(a, b * c)} of them. How many {item} are left?")
        ans, work = b * c - min(a, b * c), f"{c} * {b} - {min(a, b * c)} = {b * c - min(a, b * c)}"
    else:
        total = a * c
        q = (f"{name} shares {total} {item} equally among {c} bags. "
             f"Then {name} adds {b} {item} to one bag. How many {item} are in that bag?")
        ans, work = a + b, f"{total} / {c} + {b} = {a + b}"
    return q, f"{work}.\n#### {ans}"


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


def gsm8k_split(rng, split, n, prefix):
    rows = []
    for i in range(n):
        q, a = word_problem(rng)
        rows.append({"id": f"{prefix}-{i:03d}", "question": q, "answer": a, "split": split})
    return rows


def half_up(x):
    return Decimal(x).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


def replay_rows(rng, group, n, percentages):
    """Per-instance outcomes whose accuracies round to the given two-decimal percentages."""
    rows = []
    for (condition, position), pct in percentages:
        correct = round(pct / 100 * n)
        assert half_up(Decimal(correct * 100) / n) == half_up(Decimal(str(pct))), (group, condition, n)
        hits = set(rng.sample(range(n), correct))
        for i in range(n):
            row = {"instance_id": f"gsm8k-test-{i:04d}", "condition": condition, "group": group,
                   "correct": 1 if i in hits else 0}
            if position:
                row["position"] = position
                row["emotion"] = condition
            rows.append(row)
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    out = Path(ap.parse_args().out)
    out.mkdir(parents=True, exist_ok=True)

    rng = random.Random(20240611)
    train = gsm8k_split(rng, "train", 40, "gsm-train")
    test = gsm8k_split(rng, "test", 20, "gsm-test")
    test.append({"id": "gsm-test-nogold", "question": "Sam has 3 pens. How many pens does Sam have?",
                 "answer": "", "split": "test"})
    write_jsonl(out / "gsm8k_train.jsonl", train)
    write_jsonl(out / "gsm8k_test.jsonl", test)

    # Prepended column of the GSM8K structural-variant table. Sizes are the
    # smallest n for which integer counts reproduce every printed percentage
    # and delta after two-decimal rounding.
    deepseek = [(("baseline", ""), 94.97), (("FEAR", "prepended"), 95.07), (("ANGER", "prepended"), 94.77),
                (("HAPPINESS", "prepended"), 95.12), (("SADNESS", "prepended"), 95.42),
                (("DISGUST", "prepended"), 95.15), (("SURPRISE", "prepended"), 94.62)]
    qwen3 = [(("baseline", ""), 93.93), (("SURPRISE", "prepended"), 93.74)]
    rows = replay_rows(rng, "DeepSeek", 3976, deepseek) + replay_rows(rng, "Qwen3", 527, qwen3)
    write_jsonl(out / "published_outcomes.jsonl", rows)


if __name__ == "__main__":
    main()
