#!/usr/bin/env python3
"""Generate the bundled sample corpus under data/sample.

Documents are drawn from a handful of topics. Each topic has its own
vocabulary, embedding centroid, and distribution over quality levels 0..5,
so clusters built from the embeddings are informative about quality.
Chunk ids follow the chunker's rule (2048-token windows, tails under 50
tokens dropped) so embeddings and labels line up with its output.
"""

import argparse
import json
from pathlib import Path

import numpy as np

TOKEN_LIMIT = 2048
MIN_TOKENS = 50
DIM = 32
SYLLABLES = ["ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "qu", "do", "fe", "gi", "ho", "ju"]

# (share of documents, level probabilities for 0..5)
TOPICS = [
    (0.14, [0.02, 0.03, 0.05, 0.15, 0.35, 0.40]),
    (0.12, [0.01, 0.02, 0.07, 0.20, 0.40, 0.30]),
    (0.13, [0.55, 0.25, 0.12, 0.05, 0.02, 0.01]),
    (0.11, [0.40, 0.35, 0.15, 0.06, 0.03, 0.01]),
    (0.12, [0.10, 0.15, 0.25, 0.25, 0.15, 0.10]),
    (0.13, [0.05, 0.10, 0.20, 0.30, 0.20, 0.15]),
    (0.12, [0.70, 0.20, 0.06, 0.02, 0.01, 0.01]),
    (0.13, [0.00, 0.01, 0.04, 0.10, 0.30, 0.55]),
]


def chunk_count(n_tokens):
    full, tail = divmod(n_tokens, TOKEN_LIMIT)
    return full + (1 if tail >= MIN_TOKENS else 0)


def vocabulary(rng, size):
    words = set()
    while len(words) < size:
        k = int(rng.integers(2, 5))
        words.add("".join(rng.choice(SYLLABLES, size=k)))
    return sorted(words)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/sample")
    ap.add_argument("--docs", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    shares = np.array([t[0] for t in TOPICS])
    shares = shares / shares.sum()
    vocabs = [vocabulary(rng, 120) for _ in TOPICS]
    common = vocabulary(rng, 60)
    centroids = rng.normal(size=(len(TOPICS), DIM))

    docs, embeddings, labels = [], [], []
    for i in range(args.docs):
        doc_id = f"doc{i:04d}"
        topic = int(rng.choice(len(TOPICS), p=shares))
        # Mostly short documents, a few long enough to span several chunks.
        if rng.random() < 0.04:
            n_tokens = int(rng.integers(2100, 5000))
        else:
            n_tokens = int(rng.integers(60, 400))
        pool = vocabs[topic]
        words = [pool[j] if rng.random() < 0.8 else common[j % len(common)]
                 for j in rng.integers(0, len(pool), size=n_tokens)]
        lines = [" ".join(words[k:k + 15]) for k in range(0, n_tokens, 15)]
        docs.append({"doc_id": doc_id, "text": "\n".join(lines)})

        for c in range(chunk_count(n_tokens)):
            chunk_id = f"{doc_id}#{c}"
            vec = centroids[topic] + rng.normal(scale=0.6, size=DIM)
            embeddings.append({"chunk_id": chunk_id, "values": [round(float(x), 6) for x in vec]})
            level = int(rng.choice(6, p=TOPICS[topic][1]))
            labels.append({"chunk_id": chunk_id, "level": level})

    write_jsonl(out / "docs.jsonl", docs)
    write_jsonl(out / "embeddings.jsonl", embeddings)
    write_jsonl(out / "labels.jsonl", labels)

    oracle = {"kind": "lookup_file", "lookup": "labels.jsonl", "levels": 6}
    (out / "oracle.json").write_text(json.dumps(oracle, indent=2) + "\n")
    pipeline = {
        "seed": 17,
        "out_dir": "out",
        "chunk": {"docs": "docs.jsonl", "token_limit": TOKEN_LIMIT, "min_tokens": MIN_TOKENS},
        "cluster": {"embeddings": "embeddings.jsonl", "rounds": 5, "linkage": "centroid"},
        "oracle": oracle,
        "filter": {"alpha": 0.3, "beta": 0.4, "n_max": 50, "delta": 0.05, "mode": "credible",
                   "credible_mass": 0.95, "posterior_samples": 100, "leaf_policy": "midpoint"},
        "select": {"budget_tokens": 100000},
    }
    (out / "pipeline.json").write_text(json.dumps(pipeline, indent=2) + "\n")
    (out / "prompt_template.txt").write_text(
        "You are grading a passage for use as language model training data.\n"
        "Consider whether it is coherent, informative, and free of boilerplate or spam.\n"
        "Answer with a JSON object of the form {\"quality_score\": N} where N is an integer\n"
        "from 0 (unusable) to 5 (excellent). Do not add any other text.\n\n"
        "Passage:\n"
    )
    print(f"{len(docs)} documents, {len(labels)} chunks -> {out}")


if __name__ == "__main__":
    main()
