#!/usr/bin/env python3
"""Writes the 20-image VOC subset used by the dataset tests.

Image i holds 1 + i%3 with_mask faces, i%2 + (i%5 == 0) without_mask faces and
one mask_worn_incorrect face when i%6 == 0. Tallied by hand:
  with_mask     20 + (7*0 + 7*1 + 6*2) = 39
  without_mask  10 + 4                 = 14
  incorrect     files 0, 6, 12, 18     = 4
File 6 spells the third class "mask_weared_incorrect" as the public dataset
does.
"""
import json
import pathlib
import random

import cv2
import numpy as np

HERE = pathlib.Path(__file__).resolve().parent
W, H, CELL = 200, 150, 40
COLORS = {"with_mask": (200, 160, 60), "without_mask": (90, 140, 220), "mask_worn_incorrect": (60, 200, 200)}


def objects_for(i):
    out = ["with_mask"] * (1 + i % 3)
    out += ["without_mask"] * (i % 2 + (1 if i % 5 == 0 else 0))
    if i % 6 == 0:
        out.append("mask_worn_incorrect")
    return out


def main():
    rng = random.Random(20201201)
    (HERE / "images").mkdir(exist_ok=True)
    (HERE / "annotations").mkdir(exist_ok=True)
    tally = {"with_mask": 0, "without_mask": 0, "mask_worn_incorrect": 0}
    for i in range(20):
        name = f"maksssksksss{i}"
        img = np.full((H, W, 3), 96 + 4 * i, np.uint8)
        cv2.rectangle(img, (0, 120), (W - 1, H - 1), (40, 70, 110), -1)
        objs = []
        for k, label in enumerate(objects_for(i)):
            col, row = k % 5, k // 5
            size = rng.randint(16, 30)
            x0 = col * CELL + rng.randint(2, CELL - size - 2)
            y0 = row * CELL + rng.randint(2, CELL - size - 2)
            x1, y1 = x0 + size, y0 + size + rng.randint(-4, 4)
            cv2.ellipse(img, (((x0 + x1) / 2, (y0 + y1) / 2), ((x1 - x0) * 0.9, (y1 - y0) * 0.9), 0), COLORS[label], -1)
            written = "mask_weared_incorrect" if (label == "mask_worn_incorrect" and i == 6) else label
            objs.append((written, x0, y0, x1, y1))
            tally[label] += 1
        cv2.imwrite(str(HERE / "images" / f"{name}.png"), img)
        lines = ["<annotation>", "    <folder>images</folder>", f"    <filename>{name}.png</filename>",
                 "    <size>", f"        <width>{W}</width>", f"        <height>{H}</height>",
                 "        <depth>3</depth>", "    </size>", "    <segmented>0</segmented>"]
        for written, x0, y0, x1, y1 in objs:
            lines += ["    <object>", f"        <name>{written}</name>", "        <pose>Unspecified</pose>",
                      "        <truncated>0</truncated>", "        <occluded>0</occluded>",
                      "        <difficult>0</difficult>", "        <bndbox>", f"            <xmin>{x0}</xmin>",
                      f"            <ymin>{y0}</ymin>", f"            <xmax>{x1}</xmax>",
                      f"            <ymax>{y1}</ymax>", "        </bndbox>", "    </object>"]
        lines.append("</annotation>")
        (HERE / "annotations" / f"{name}.xml").write_text("\n".join(lines) + "\n")
    counts = {"with_mask": 39, "without_mask": 14, "mask_worn_incorrect": 4}
    assert tally == counts, tally
    (HERE / "counts.json").write_text(json.dumps(counts, indent=2) + "\n")


if __name__ == "__main__":
    main()
