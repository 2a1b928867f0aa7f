#!/usr/bin/env python3
"""Convert the public ABCD release (abcd_v1.1.json[.gz]) to jsonl-v1.

Usage:
    python3 scripts/convert_abcd.py abcd_v1.1.json.gz out_dir/

Writes out_dir/{train,dev,test}.jsonl. Uses the "delexed" turns: customer
and agent turns become user/system utterances, action turns become actions
named by their target action with their target values. The policy of a
dialogue is its scenario subflow (the customer intent).

Action values may not contain ';', '[', ']' or ','; those characters are
replaced by spaces and whitespace is collapsed. Empty values are dropped.
"""

import gzip
import json
import re
import sys
from pathlib import Path

SPEAKERS = {"customer": "user", "agent": "system"}


def clean_value(v):
    v = re.sub(r"[;\[\],]", " ", str(v))
    return " ".join(v.split())


def convert(convo):
    turns = []
    for t in convo["delexed"]:
        speaker = t["speaker"]
        if speaker == "action":
            targets = t["targets"]
            values = [clean_value(v) for v in targets[3]]
            turns.append({
                "kind": "action",
                "action": {"name": targets[2], "values": [v for v in values if v]},
            })
        else:
            turns.append({"kind": SPEAKERS[speaker], "text": t["text"]})
    return {
        "id": str(convo["convo_id"]),
        "policy": convo["scenario"]["subflow"],
        "success": None,
        "turns": turns,
    }


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    opener = gzip.open if src.suffix == ".gz" else open
    with opener(src, "rt", encoding="utf-8") as f:
        data = json.load(f)
    out.mkdir(parents=True, exist_ok=True)
    for split in ("train", "dev", "test"):
        with open(out / f"{split}.jsonl", "w", encoding="utf-8") as f:
            for convo in data[split]:
                f.write(json.dumps(convert(convo), ensure_ascii=False, separators=(",", ":")) + "\n")
        print(f"{split}: {len(data[split])} dialogues")


if __name__ == "__main__":
    main()
