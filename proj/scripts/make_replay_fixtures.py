#!/usr/bin/env python3
"""Regenerate the prompt replay fixtures under data/fixtures/.

Each fixture line is {"key", "prompt", "response"} where key is the lower-case
hex FNV-1a 64 of the UTF-8 prompt. Prompts are rendered from
data/prompt_template.txt exactly as the C++ client renders them.
"""

import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
OUT = DATA / "fixtures"

SENTIMENT_QUESTION = "positive sentiment"


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def load_template() -> str:
    text = (DATA / "prompt_template.txt").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def render(template: str, question: str, post: str) -> str:
    out, i = [], 0
    while i < len(template):
        if template.startswith("{question}", i):
            out.append(question)
            i += len("{question}")
        elif template.startswith("{post}", i):
            out.append(post)
            i += len("{post}")
        else:
            out.append(template[i])
            i += 1
    return "".join(out)


def load_conditions(pk_path: pathlib.Path):
    conds, section = [], None
    for raw in pk_path.read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].rstrip() if not raw.lstrip().startswith("#") else ""
        if not line.strip():
            continue
        if line.strip() in ("conditions:", "rules:"):
            section = line.strip()
            continue
        if section == "conditions:":
            cid, text = line.strip().split(":", 1)
            conds.append((cid.strip(), text.strip()))
    return conds


def write_fixture(name, pk_file, posts, template):
    conds = load_conditions(DATA / pk_file)
    records, post_rows = {}, []
    for post in posts:
        answers = post["answers"]
        for cid, text in conds:
            prompt = render(template, text, post["text"])
            records[prompt] = answers.get(cid, answers["default"])
        prompt = render(template, SENTIMENT_QUESTION, post["text"])
        records[prompt] = post["sentiment"]
        row = {"id": post["id"], "text": post["text"]}
        if "label" in post:
            row["label"] = post["label"]
        post_rows.append(row)
    with open(OUT / f"{name}_replay.jsonl", "w", encoding="utf-8") as f:
        for prompt in sorted(records, key=lambda p: fnv1a64(p.encode("utf-8"))):
            key = format(fnv1a64(prompt.encode("utf-8")), "016x")
            rec = {"key": key, "prompt": prompt, "response": records[prompt]}
            f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")
    with open(OUT / f"{name}_prompt_posts.jsonl", "w", encoding="utf-8") as f:
        for row in post_rows:
            f.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    template = load_template()
    cssrs = [
        {
            "id": "cssrs-c1",
            "text": "Some mornings I wish I just would not wake up. I still go to work and talk to people.",
            "label": "indication",
            "answers": {"C1": "Yes, the post expresses a wish to be dead.", "default": "No."},
            "sentiment": "No",
        },
        {
            "id": "cssrs-all",
            "text": "I planned how I would do it and picked a date. Last night I started and then stopped myself.",
            "label": "attempt",
            "answers": {"default": "yes"},
            "sentiment": "no.",
        },
        {
            "id": "cssrs-abstain",
            "text": "Long week. Not sure what to say about any of it.",
            "answers": {"default": "It depends on how you read it."},
            "sentiment": "Hard to tell.",
        },
    ]
    phq9 = [
        {
            "id": "phq9-c4",
            "text": "I am exhausted all the time, even after sleeping ten hours.",
            "label": "1",
            "answers": {"C4": "YES - tiredness is described.", "default": "no"},
            "sentiment": "no",
        },
        {
            "id": "phq9-none",
            "text": "Went hiking with friends and cooked a big dinner afterwards.",
            "label": "0",
            "answers": {"default": "No, nothing like that."},
            "sentiment": "Yes.",
        },
        {
            "id": "phq9-c2-c9",
            "text": "Everything feels hopeless and sometimes I think everyone would be better off without me.",
            "label": "1",
            "answers": {"C2": "Yes.", "C9": "yes", "default": "No"},
            "sentiment": "no",
        },
    ]
    write_fixture("cssrs", "cssrs.pk", cssrs, template)
    write_fixture("phq9", "phq9.pk", phq9, template)


if __name__ == "__main__":
    main()
