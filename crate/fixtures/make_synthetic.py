#!/usr/bin/env python3
"""Regenerates fixtures/synthetic-a: 24 five-second clips, three planted groups.

The output is committed; rerun only when the fixture layout changes.
"""
import json
import os
import random
import shutil

from PIL import Image, ImageDraw

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "synthetic-a")
W, H = 128, 96
FRAMES_PER_CLIP = 10  # 2 fps over 5 s
CLIP_US = 5_000_000
RECORDED_AT_US = 1_718_182_800_000_000  # 2024-06-12T09:00:00Z

# 12 street, 8 cyclist, 4 bus; the first five clips cover all three groups.
SEQUENCE = "SCBSS" "CSCSB" "SCSSC" "SCSBS" "CSCB"

GROUPS = {
    "S": {
        "name": "street",
        "captions": [
            "A street with cars parked on the side and a few pedestrians walking on the sidewalk.",
            "A street with cars parked on the side and a few people walking on the sidewalk.",
            "A street with cars and people walking on the sidewalk.",
        ],
        "background": (120, 120, 128),
        "objects": [
            ("car", [0.08, 0.55, 0.45, 0.85], (200, 40, 40)),
            ("pedestrian", [0.58, 0.30, 0.74, 0.82], (60, 60, 200)),
            ("sidewalk", [0.50, 0.82, 1.00, 1.00], (190, 190, 170)),
        ],
        # face overlaps the pedestrian box, plate sits on the car
        "sensitive": [[0.60, 0.31, 0.72, 0.48], [0.20, 0.74, 0.32, 0.80]],
        "region": (49.7530, 6.6400),
    },
    "C": {
        "name": "cyclist",
        "captions": [
            "A cyclist is riding down a city street.",
            "A cyclist is riding down a side street.",
        ],
        "background": (110, 150, 110),
        "objects": [
            ("cyclist", [0.35, 0.25, 0.62, 0.85], (230, 160, 20)),
            ("street", [0.00, 0.70, 1.00, 1.00], (80, 80, 80)),
        ],
        "sensitive": [],
        "region": (49.7560, 6.6300),
    },
    "B": {
        "name": "bus",
        "captions": [
            "A street with a bus stop and a building with flags.",
            "A bus stop in front of a building with flags.",
        ],
        "background": (150, 170, 200),
        "objects": [
            ("stop", [0.05, 0.40, 0.20, 0.85], (240, 220, 0)),
            ("building", [0.40, 0.05, 0.95, 0.65], (170, 110, 80)),
            ("flag", [0.45, 0.05, 0.55, 0.20], (0, 160, 200)),
        ],
        "sensitive": [],
        "region": (49.7545, 6.6500),
    },
}


def draw_frame(group, rng):
    img = Image.new("RGB", (W, H), group["background"])
    px = img.load()
    j = rng.randint(-6, 6)
    for y in range(H):
        for x in range(W):
            r, g, b = px[x, y]
            px[x, y] = (max(0, min(255, r + j + y // 8)), max(0, min(255, g + j)), max(0, min(255, b + j - x // 16)))
    d = ImageDraw.Draw(img)
    for _, (x1, y1, x2, y2), color in group["objects"]:
        d.rectangle([round(x1 * W), round(y1 * H), round(x2 * W) - 1, round(y2 * H) - 1], fill=color)
    for x1, y1, x2, y2 in group["sensitive"]:
        d.rectangle([round(x1 * W), round(y1 * H), round(x2 * W) - 1, round(y2 * H) - 1], fill=(230, 190, 160))
        d.point([(round(x1 * W) + 3, round(y1 * H) + 4), (round(x2 * W) - 4, round(y1 * H) + 4)], fill=(20, 20, 20))
        d.line([(round(x1 * W) + 2, round(y2 * H) - 3), (round(x2 * W) - 3, round(y2 * H) - 3)], fill=(120, 40, 40))
    return img


def main():
    assert len(SEQUENCE) == 24
    assert SEQUENCE.count("S") == 12 and SEQUENCE.count("C") == 8 and SEQUENCE.count("B") == 4
    if os.path.isdir(ROOT):
        shutil.rmtree(ROOT)
    os.makedirs(os.path.join(ROOT, "frames"))
    rng = random.Random(7)
    clips, track, frames_meta = [], [], {}
    variant_counter = {k: 0 for k in GROUPS}
    for i, key in enumerate(SEQUENCE):
        group = GROUPS[key]
        start = RECORDED_AT_US + i * CLIP_US
        variant = variant_counter[key] % len(group["captions"])
        variant_counter[key] += 1
        refs = []
        for f in range(FRAMES_PER_CLIP):
            rel = f"frames/c{i:02d}_f{f:02d}.png"
            draw_frame(group, rng).save(os.path.join(ROOT, rel), optimize=True)
            refs.append(rel)
            frames_meta[rel] = {
                "group": group["name"],
                "variant": variant,
                "objects": [{"label": l, "box": b, "score": 0.9} for l, b, _ in group["objects"]],
                "sensitive": group["sensitive"],
            }
        clips.append({"clip_index": i, "start_us": start, "end_us": start + CLIP_US, "frames": refs})
        lat, lon = group["region"]
        for off_s, jitter in ((1, 0.0), (4, 0.00015)):
            track.append({
                "t_us": start + off_s * 1_000_000,
                "lat": round(lat + rng.uniform(-0.0003, 0.0003) + jitter, 7),
                "lon": round(lon + rng.uniform(-0.0006, 0.0006) + jitter, 7),
                "alt": 130.0,
                "heading": float((i * 37 + off_s * 5) % 360),
            })
    manifest = {
        "session_id": "synthetic-a",
        "domain": "campus_outdoor",
        "recorded_at": RECORDED_AT_US,
        "clips": clips,
        "track": track,
    }
    with open(os.path.join(ROOT, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")

    first_seen = {}
    labels = []
    for key in SEQUENCE:
        first_seen.setdefault(key, len(first_seen))
        labels.append(first_seen[key])
    with open(os.path.join(ROOT, "ground_truth.json"), "w") as fh:
        json.dump({"annotator_id": "planted", "labels": labels, "instructions_version": "fixture-1"}, fh)
        fh.write("\n")

    mock = {
        "version": 1,
        "groups": {g["name"]: {"captions": g["captions"]} for g in GROUPS.values()},
        "frames": frames_meta,
    }
    with open(os.path.join(ROOT, "mock_fixture.json"), "w") as fh:
        json.dump(mock, fh, indent=1, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
