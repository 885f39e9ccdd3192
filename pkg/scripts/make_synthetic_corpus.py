#!/usr/bin/env python3
"""Regenerate the bundled synthetic test corpus.

Writes tests/data/corpus_500.ldjson (500 posts, one month of timestamps) and
tests/data/labels_500.ldjson (external classifier labels for every post).
Deterministic for a fixed seed; the committed files came from seed 2024.
"""

from __future__ import annotations

import argparse
import json
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

MEDS = {
    "hormone_therapy": ["tamoxifen", "letrozole", "anastrozole", "exemestane"],
    "chemotherapy": ["paclitaxel", "docetaxel", "doxorubicin", "capecitabine"],
    "kinase_inhibitor": ["palbociclib", "ribociclib"],
    "immune_checkpoint_inhibitor": ["pembrolizumab"],
}
# patient archetypes: medication pattern plus the side effects they lean toward
ARCHETYPES = [
    (("hormone_therapy",), ["hot flashes", "joint pain", "insomnia", "weight gain"]),
    (("chemotherapy",), ["hair loss", "nausea", "fatigue", "mouth sores"]),
    (("hormone_therapy", "chemotherapy"), ["hair loss", "hot flashes", "nausea", "body ache"]),
    (("hormone_therapy", "kinase_inhibitor"), ["fatigue", "diarrhea", "joint pain"]),
    (("immune_checkpoint_inhibitor",), ["rash", "pyrexia", "fatigue"]),
]
TYPO = {"tamoxifen": "tamoxefen", "paclitaxel": "paclitaxol", "letrozole": "letrazole"}
FILLER = [
    "another day in this breastcancer journey",
    "being a cancer survivor is strange some days",
    "chemo brain is real friends #breastcancer",
    "grateful for my oncology nurses #cancer",
    "one more cycle down, counting them all",
    "walking for awareness this weekend #breastcancer",
]
BYSTANDER = [
    "donate to cancer research today http://give.example/x",
    "so proud of every survivor out there #breastcancer",
    "pink ribbons everywhere this month #cancer",
    "my aunt is a survivor, sharing her story",
    "tamoxifen study recruiting, see link http://trial.example/y",
    "5k run for breastcancer awareness, join us @runclub",
]


def patient_posts(rng: random.Random, pattern, side_effects, n_posts: int) -> list[str]:
    meds = [rng.choice(MEDS[cls]) for cls in pattern]
    texts = [f"diagnosed last spring, starting {meds[0]} for my breastcancer"]
    for _ in range(n_posts - 1):
        roll = rng.random()
        med = rng.choice(meds)
        if roll < 0.35:
            se = rng.choice(side_effects)
            texts.append(f"the {se} from {med} is rough #cancer")
        elif roll < 0.5:
            se = rng.choice(side_effects)
            texts.append(f"week three on {med}. {se} again today")
        elif roll < 0.6:
            se = rng.choice(side_effects)
            texts.append(f"good news: no {se} this week on {med} #breastcancer")
        elif roll < 0.7 and med in TYPO:
            texts.append(f"my {TYPO[med]} dose went up, wish me luck #cancer")
        else:
            texts.append(rng.choice(FILLER))
    return texts[:n_posts]


def build_corpus(seed: int):
    rng = random.Random(seed)
    start = datetime(2024, 3, 1, tzinfo=timezone.utc)
    posts, labels = [], []
    counter = 0

    def add_post(user: str, text: str, label: str):
        nonlocal counter
        counter += 1
        ts = start + timedelta(minutes=rng.randint(0, 30 * 24 * 60))
        posts.append(
            {
                "id": f"t{counter:05d}",
                "user_id": user,
                "timestamp": ts.isoformat().replace("+00:00", "Z"),
                "text": text,
            }
        )
        labels.append({"post_id": f"t{counter:05d}", "label": label, "score": 0.97 if label == "S" else 0.04})

    # 60 patients spread over the archetypes, 3-6 posts each
    for i in range(60):
        pattern, side_effects = ARCHETYPES[i % len(ARCHETYPES)]
        user = f"patient{i:03d}"
        for text in patient_posts(rng, pattern, side_effects, rng.randint(3, 6)):
            add_post(user, text, "S")

    # bystanders fill the remainder up to 500 posts
    i = 0
    while counter < 500:
        user = f"bystander{i:03d}"
        for _ in range(rng.randint(1, 3)):
            if counter >= 500:
                break
            add_post(user, rng.choice(BYSTANDER), "NR")
        i += 1
    return posts, labels


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--out-dir", default="tests/data")
    args = parser.parse_args()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    posts, labels = build_corpus(args.seed)
    with open(out_dir / "corpus_500.ldjson", "w", encoding="utf-8") as fh:
        for post in posts:
            fh.write(json.dumps(post, sort_keys=True) + "\n")
    with open(out_dir / "labels_500.ldjson", "w", encoding="utf-8") as fh:
        for label in labels:
            fh.write(json.dumps(label, sort_keys=True) + "\n")
    print(f"wrote {len(posts)} posts and {len(labels)} labels to {out_dir}")


if __name__ == "__main__":
    main()
