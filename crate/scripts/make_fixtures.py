#!/usr/bin/env python3
"""Regenerates the synthetic menu fixtures under fixtures/.

Each menu gets per-frame detections, the keyframe's OCR document in the
canonical token format, and a ground-truth item list. Output is stable for a
given version of this script.
"""
import json
import os
import random

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")
DIMS = {"width": 1408, "height": 1408}
ROW = 64
LINE_H = 28
CHAR_W = 14

# (kind, text, price) rows per column; kind: H header, I item, D description, N noise
MENUS = {
    "menu_en": {
        "language": "en",
        "keyframe": 10,
        "columns": [
            (120, 200, [
                ("H", "STARTERS", None),
                ("I", ["Greek", "Salad"], "$8.50"),
                ("D", "with feta and olives", None),
                ("I", "Tomato Soup", "$6.00"),
                ("I", "Garlic Bread", "$4.50"),
                ("H", "MAINS", None),
                ("I", "Grilled Octopus", "$18.00"),
                ("D", "with lemon and oregano", None),
                ("I", "Shrimp Linguine", "$16.50"),
                ("D", "garlic, chili, parsley", None),
            ]),
            (760, 232, [
                ("H", "DESSERTS", None),
                ("I", ["Chocolate", "Cake"], "$7.00"),
                ("I", ["Peanut", "Butter Pie"], "$6.50"),
                ("D", "(contains peanuts)", None),
                ("H", "DRINKS", None),
                ("I", "Lemonade", "$3.00"),
                ("I", "Espresso", "$2.50"),
                ("N", "~", None),
                ("N", "|||", None),
            ]),
        ],
    },
    "menu_it": {
        "language": "it",
        "keyframe": 7,
        "columns": [
            (200, 180, [
                ("H", "ANTIPASTI", None),
                ("I", "Bruschetta al pomodoro", "€6,00"),
                ("I", "Carpaccio di manzo", "€12,00"),
                ("D", "con rucola e parmigiano", None),
                ("H", "PRIMI", None),
                ("I", "Spaghetti alla carbonara", "€11,00"),
                ("I", "Risotto ai funghi", "€13,50"),
                ("I", "Penne all'arrabbiata", "€9,00"),
                ("D", "piccante", None),
                ("H", "DOLCI", None),
                ("I", "Tiramisù", "€6,50"),
                ("I", "Panna cotta", "€5,50"),
                ("I", "Gelato al pistacchio", "€5,00"),
                ("N", "..", None),
            ]),
        ],
    },
    "menu_pl": {
        "language": "pl",
        "keyframe": 12,
        "columns": [
            (110, 220, [
                ("H", "ZUPY", None),
                ("I", "Żurek", "18,00 zł"),
                ("D", "z jajkiem i kiełbasą", None),
                ("I", "Barszcz czerwony", "15,00 zł"),
                ("H", "DANIA GŁÓWNE", None),
                ("I", "Pierogi ruskie", "24,00 zł"),
                ("I", "Kotlet schabowy", "32,00 zł"),
                ("D", "z ziemniakami", None),
            ]),
            (770, 252, [
                ("I", "Gołąbki", "28,00 zł"),
                ("H", "DESERY", None),
                ("I", "Sernik", "14,00 zł"),
                ("I", "Szarlotka", "13,00 zł"),
                ("D", "z lodami", None),
            ]),
        ],
    },
    "menu_el": {
        "language": "el",
        "keyframe": 15,
        "columns": [
            (180, 160, [
                ("H", "ΟΡΕΚΤΙΚΑ", None),
                ("I", "Τζατζίκι", "4,50€"),
                ("I", "Χωριάτικη σαλάτα", "8,00€"),
                ("D", "με φέτα και ελιές", None),
                ("I", "Γαρίδες σαγανάκι", "14,00€"),
                ("H", "ΚΥΡΙΩΣ ΠΙΑΤΑ", None),
                ("I", "Μουσακάς", "12,00€"),
                ("I", "Σουβλάκι χοιρινό", "10,50€"),
                ("I", "Χταπόδι στη σχάρα", "16,00€"),
                ("H", "ΓΛΥΚΑ", None),
                ("I", "Μπακλαβάς", "5,00€"),
                ("D", "με καρύδια και φιστίκι", None),
                ("N", "~ ~", None),
            ]),
        ],
    },
}


def quad(x0, y0, w, h, skew):
    return [[x0, y0 + skew], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h + skew]]


def token(rng, text, x, y, noise=False):
    w = max(CHAR_W, CHAR_W * len(text))
    conf = rng.uniform(0.05, 0.15) if noise else rng.uniform(0.86, 0.99)
    return {
        "text": text,
        "quad": quad(x, y, w, LINE_H, rng.choice([0, 1, 2])),
        "confidence": round(conf, 3),
    }


def ocr_tokens(rng, card):
    tokens = []
    for x0, y0, rows in card["columns"]:
        for i, (kind, text, price) in enumerate(rows):
            y = y0 + ROW * i
            x = x0 + (20 if kind == "D" else 0)
            parts = text if isinstance(text, list) else [text]
            for part in parts:
                tokens.append(token(rng, part, x, y, noise=kind == "N"))
                x += CHAR_W * (len(part) + 1)
            if price:
                tokens.append(token(rng, price, x0 + 520 - CHAR_W * len(price), y))
    return tokens


def detections(rng, keyframe):
    out = []
    for f in range(24):
        offset = (f - keyframe) * 38
        if f in (2, 3):
            continue  # card out of view
        cx = 704 + offset
        cy = 704 + ((f * 7) % 5 - 2) * 6
        half_w, half_h = 560, 600
        box = [max(0, cx - half_w), max(0, cy - half_h), min(1408, cx + half_w), min(1408, cy + half_h)]
        conf = 0.35 if f in (0, 1) else round(rng.uniform(0.62, 0.95), 3)
        out.append({"frame_index": f, "label": "menu", "confidence": conf, "bbox": box})
        if f % 4 == 0:
            out.append({"frame_index": f, "label": "person", "confidence": 0.9,
                        "bbox": [20, 400, 300, 1400]})
    # a very central but unconfident false positive
    out.append({"frame_index": 21, "label": "menu", "confidence": 0.3, "bbox": [604, 604, 804, 804]})
    return out


def truth_items(card):
    items = []
    for _, _, rows in card["columns"]:
        for kind, text, _ in rows:
            if kind == "I":
                items.append(" ".join(text) if isinstance(text, list) else text)
    return items


def write(path, obj):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, indent=2)
        f.write("\n")


def main():
    for n, (menu_id, card) in enumerate(MENUS.items()):
        rng = random.Random(1000 + n)
        kf = card["keyframe"]
        base = os.path.join(ROOT, "menus", menu_id)
        write(os.path.join(base, "detections.json"), {"dims": DIMS, "detections": detections(rng, kf)})
        doc = {"image_ref": f"{menu_id}/frame_{kf:04d}.png", "dims": DIMS, "tokens": ocr_tokens(rng, card)}
        write(os.path.join(base, "ocr", f"frame_{kf:04d}.ocr.json"), doc)
        write(os.path.join(ROOT, "truth", f"{menu_id}.json"),
              {"menu_id": menu_id, "language": card["language"], "items": truth_items(card)})
        print(menu_id, "tokens", len(doc["tokens"]), "items", len(truth_items(card)))


if __name__ == "__main__":
    main()
