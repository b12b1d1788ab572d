"""Regenerate the bundled lexicon, mini WordNet and 50-image fixture.

    python scripts/build_data.py

Output is deterministic; the generated files are committed under
src/compforge/data/.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "compforge" / "data"

# child -> parent; the first lemma names the synset, extra lemmas are synonyms
NOUN_TAXONOMY: dict[str, str | None] = {
    "entity": None,
    "physical entity": "entity",
    "object": "physical entity",
    "living thing": "object",
    "organism": "living thing",
    "animal": "organism",
    "vertebrate": "animal",
    "mammal": "vertebrate",
    "carnivore": "mammal",
    "canine": "carnivore",
    "feline": "carnivore",
    "dog": "canine",
    "wolf": "canine",
    "fox": "canine",
    "cat": "feline",
    "lion": "feline",
    "tiger": "feline",
    "bear": "carnivore",
    "ungulate": "mammal",
    "equine": "ungulate",
    "horse": "equine",
    "zebra": "equine",
    "bovid": "ungulate",
    "cow": "bovid",
    "sheep": "bovid",
    "ruminant": "ungulate",
    "giraffe": "ruminant",
    "deer": "ruminant",
    "proboscidean": "mammal",
    "elephant": "proboscidean",
    "bird": "vertebrate",
    "waterfowl": "bird",
    "duck": "waterfowl",
    "swan": "waterfowl",
    "seabird": "bird",
    "seagull": "seabird",
    "pelican": "seabird",
    "person": "organism",
    "male": "person",
    "female": "person",
    "man": "male",
    "boy": "male",
    "woman": "female",
    "girl": "female",
    "athlete": "person",
    "skier": "athlete",
    "surfer": "athlete",
    "player": "athlete",
    "plant": "organism",
    "woody plant": "plant",
    "tree": "woody plant",
    "bush": "woody plant",
    "herb": "plant",
    "grass": "herb",
    "flower": "herb",
    "artifact": "object",
    "furnishing": "artifact",
    "furniture": "furnishing",
    "bedroom furniture": "furniture",
    "bed": "bedroom furniture",
    "nightstand": "bedroom furniture",
    "dresser": "bedroom furniture",
    "seat": "furniture",
    "chair": "seat",
    "bench": "seat",
    "couch": "seat",
    "surface furniture": "furniture",
    "table": "surface furniture",
    "desk": "surface furniture",
    "storage furniture": "furniture",
    "shelf": "storage furniture",
    "cabinet": "storage furniture",
    "conveyance": "artifact",
    "vehicle": "conveyance",
    "wheeled vehicle": "vehicle",
    "motor vehicle": "wheeled vehicle",
    "car": "motor vehicle",
    "truck": "motor vehicle",
    "bus": "motor vehicle",
    "motorcycle": "motor vehicle",
    "model vehicle": "wheeled vehicle",
    "toy": "model vehicle",
    "pedal vehicle": "wheeled vehicle",
    "bicycle": "pedal vehicle",
    "scooter": "pedal vehicle",
    "vessel craft": "vehicle",
    "boat": "vessel craft",
    "clothing": "artifact",
    "garment": "clothing",
    "top garment": "garment",
    "shirt": "top garment",
    "sweater": "top garment",
    "coat": "garment",
    "jacket": "coat",
    "headdress": "clothing",
    "hat": "headdress",
    "helmet": "headdress",
    "structure": "artifact",
    "building": "structure",
    "dwelling": "building",
    "house": "dwelling",
    "cabin": "dwelling",
    "tower": "building",
    "platform": "structure",
    "porch": "platform",
    "deck": "platform",
    "balcony": "platform",
    "structure part": "structure",
    "opening": "structure part",
    "window": "opening",
    "doorway": "opening",
    "barrier": "structure",
    "fence": "barrier",
    "wall": "barrier",
    "door": "barrier",
    "device": "artifact",
    "appliance": "device",
    "grill": "appliance",
    "oven": "appliance",
    "refrigerator": "appliance",
    "light source": "device",
    "lamp": "light source",
    "candle": "light source",
    "timepiece": "device",
    "clock": "timepiece",
    "watch": "timepiece",
    "computer": "device",
    "laptop": "computer",
    "phone": "device",
    "container": "artifact",
    "vessel": "container",
    "cup": "vessel",
    "bowl": "vessel",
    "bottle": "vessel",
    "vase": "vessel",
    "bag": "container",
    "backpack": "bag",
    "suitcase": "bag",
    "box": "container",
    "basket": "container",
    "dish": "container",
    "plate": "dish",
    "tray": "dish",
    "equipment": "artifact",
    "game equipment": "equipment",
    "ball": "game equipment",
    "frisbee": "game equipment",
    "kite": "game equipment",
    "sports implement": "equipment",
    "racket": "sports implement",
    "bat": "sports implement",
    "skateboard": "sports implement",
    "surfboard": "sports implement",
    "display": "artifact",
    "sign": "display",
    "poster": "display",
    "screen": "display",
    "fabric item": "artifact",
    "pillow": "fabric item",
    "blanket": "fabric item",
    "curtain": "fabric item",
    "towel": "fabric item",
    "umbrella": "fabric item",
    "way": "artifact",
    "road": "way",
    "street": "way",
    "sidewalk": "way",
    "path": "way",
    "bridge": "way",
    "natural object": "object",
    "geological formation": "natural object",
    "elevation": "geological formation",
    "mountain": "elevation",
    "hill": "elevation",
    "shore": "geological formation",
    "beach": "shore",
    "rock": "natural object",
    "leaf": "natural object",
    "cloud": "natural object",
    "sky": "natural object",
    "sun": "natural object",
    "moon": "natural object",
    "substance": "physical entity",
    "water": "substance",
    "snow": "substance",
    "sand": "substance",
    "food": "substance",
    "pizza": "food",
    "sandwich": "food",
    "cake": "food",
    "apple": "food",
    "banana": "food",
    "orange fruit": "food",
    "donut": "food",
    "abstraction": "entity",
    "time period": "abstraction",
    "sunset": "time period",
    "region": "abstraction",
    "field": "region",
    "park": "region",
    "city": "region",
    "book": "artifact",
    "bird feeder": "device",
    "traffic light": "light source",
    "stop sign": "display",
    "tennis racket": "sports implement",
    "fire hydrant": "device",
    # colour nouns (attribute senses resolve through these)
    "attribute": "abstraction",
    "property": "attribute",
    "visual property": "property",
    "color": "visual property",
    "chromatic color": "color",
    "achromatic color": "color",
    "warm color": "chromatic color",
    "cool color": "chromatic color",
    "earth color": "chromatic color",
    "red": "warm color",
    "pink": "warm color",
    "orange": "warm color",
    "yellow": "warm color",
    "blue": "cool color",
    "green": "cool color",
    "purple": "cool color",
    "brown": "earth color",
    "tan": "earth color",
    "black": "achromatic color",
    "white": "achromatic color",
    "gray": "achromatic color",
    "silver": "achromatic color",
}
NOUN_SYNONYMS = {"couch": ["sofa"], "phone": ["telephone"], "gray": ["grey"], "cup": ["mug"]}

# adjectives: (lemma, antonym or None)
ADJECTIVES = [
    ("black", "white"), ("white", "black"), ("red", None), ("pink", None), ("orange", None),
    ("yellow", None), ("blue", None), ("green", None), ("purple", None), ("brown", None),
    ("tan", None), ("gray", None), ("silver", None),
    ("tall", "short"), ("short", "tall"), ("large", "small"), ("small", "large"),
    ("big", "little"), ("little", "big"), ("open", "closed"), ("closed", "open"),
    ("wet", "dry"), ("dry", "wet"), ("empty", "full"), ("full", "empty"),
    ("old", "new"), ("new", "old"), ("young", None), ("clean", "dirty"), ("dirty", "clean"),
    ("wooden", None), ("metal", None), ("plastic", None), ("stone", None), ("glass", None),
    ("furry", None), ("fluffy", None), ("smooth", "rough"), ("rough", "smooth"),
    ("striped", None), ("spotted", None), ("bright", "dark"), ("dark", "bright"),
    ("happy", "sad"), ("sad", "happy"), ("cloudy", "clear"), ("clear", "cloudy"),
    ("round", "square"), ("square", "round"), ("long", None), ("wide", "narrow"),
    ("narrow", "wide"), ("sliced", None), ("lit", None), ("parked", None),
]
# attribute groups without noun senses: (group, parent-of-group)
ATTRIBUTE_GROUPS = {
    "material property": ("physical property", ["wooden", "metal", "plastic", "stone", "glass"]),
    "texture property": ("physical property", ["furry", "fluffy", "smooth", "rough", "striped", "spotted"]),
    "size property": ("physical property", ["tall", "short", "large", "small", "big", "little", "long", "wide", "narrow"]),
    "state property": ("physical property", ["open", "closed", "wet", "dry", "empty", "full", "clean", "dirty", "sliced", "lit", "parked"]),
    "age property": ("physical property", ["old", "new", "young"]),
    "light property": ("visual quality", ["bright", "dark", "cloudy", "clear"]),
    "shape property": ("visual quality", ["round", "square"]),
    "mood property": ("visual quality", ["happy", "sad"]),
}
GROUP_ROOTS = {"physical property": "quality", "visual quality": "quality"}

RELATION_GROUPS = {
    "contact relation": ("spatial relation", ["on", "on top of", "against", "attached to"]),
    "lower relation": ("spatial relation", ["under", "underneath", "below", "beneath"]),
    "upper relation": ("spatial relation", ["above", "over"]),
    "depth relation": ("spatial relation", ["behind", "in front of"]),
    "proximity relation": ("spatial relation", ["near", "next to", "beside", "by"]),
    "containment relation": ("spatial relation", ["in", "inside", "outside"]),
    "grasp action": ("manual action", ["holding", "carrying", "grabbing", "throwing"]),
    "wear action": ("manual action", ["wearing"]),
    "travel action": ("motion action", ["riding", "driving", "pulling"]),
    "posture action": ("motion action", ["sitting on", "standing on", "lying on", "walking on", "walking in"]),
    "consume action": ("sense action", ["eating", "drinking"]),
    "perceive action": ("sense action", ["looking at", "watching"]),
    "possession": ("ownership relation", ["has", "with", "of"]),
}
RELATION_ROOTS = {"spatial relation": "relation", "manual action": "action", "motion action": "action",
                  "sense action": "action", "ownership relation": "relation"}
RELATION_ANTONYMS = [("on", "under"), ("on top of", "underneath"), ("above", "below"),
                     ("in front of", "behind"), ("inside", "outside")]
# pairs that may both hold at once and must never foil each other
RELATION_EXCLUDES = [("on", "on top of"), ("under", "underneath"), ("under", "below"),
                     ("under", "beneath"), ("underneath", "below"), ("underneath", "beneath"),
                     ("below", "beneath"), ("above", "over"), ("near", "next to"),
                     ("near", "beside"), ("next to", "beside"), ("near", "by"), ("by", "beside"),
                     ("by", "next to"), ("in", "inside"), ("has", "with"), ("has", "of"),
                     ("with", "of"), ("on", "sitting on"), ("on", "standing on"),
                     ("on", "lying on"), ("on", "walking on"), ("in", "walking in"),
                     ("holding", "carrying"), ("looking at", "watching")]
EXTRA_NOUNS = """
airplane apartment arm ball banana bank bathroom bat beach bear bed bench bike bird board boat body
book bottle bowl box branch bread brick bridge bucket building bus bush cabinet cake camera candle
cap car carpet cart cat ceiling chair child church city clock cloud coat computer counter cow cup
curtain desk dog door dress ear elephant eye face fence field finger fish floor flower food foot
fork fruit giraffe girl glove grass ground hair hand hat head hill horse house jacket jeans kitchen
kite knife lady lamp laptop leaf leg letter light line man mirror motorcycle mountain mouth neck
nose ocean orange outfit pan pants paper path people person phone picture pillow pizza plant plate
pole pot rail railing road rock roof room rope sand sandwich screen sea shadow sheep shelf shirt
shoe shore short sidewalk sign sink sky snow sock sofa spoon street sun surfboard table tail tie
tile tire toilet towel tower track train tree truck umbrella vase vegetable wall watch water wave
wheel window wing woman wood zebra
""".split()
EXTRA_ADJECTIVES = """
beautiful colorful cute delicious famous fresh gold golden heavy hot cold light modern nice pretty
sunny thin thick tiny ugly huge
""".split()
EXTRA_VERBS = """
holding wearing riding carrying eating drinking watching throwing grabbing pulling driving
sitting standing lying walking looking playing flying covering hanging crossing has
""".split()
EXTRA_PREPOSITIONS = """
on in under above below behind near beside by over inside outside with of at across along
against around between beneath underneath through toward towards into onto from
""".split() + ["on top of", "next to", "in front of", "attached to"]


def _name(lemma: str) -> str:
    return lemma.replace(" ", "_")


def write_wordnet(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    # nouns: offsets depend on line lengths, so render twice
    names = list(NOUN_TAXONOMY)
    offsets = {n: 0 for n in names}
    header = "  compforge miniature WordNet-format database; generated by scripts/build_data.py\n"
    for _ in range(3):
        lines = []
        pos = len(header.encode())
        for n in names:
            lemmas = [n] + NOUN_SYNONYMS.get(n, [])
            words = " ".join(f"{_name(w)} 0" for w in lemmas)
            parent = NOUN_TAXONOMY[n]
            ptrs = [f"@ {offsets[parent]:08d} n 0000"] if parent else []
            line = f"{offsets[n]:08d} 03 n {len(lemmas):02x} {words} {len(ptrs):03d}"
            line += "".join(" " + p for p in ptrs) + f" | {n}\n"
            new_off = pos
            lines.append((n, line))
            offsets[n] = new_off
            pos += len(line.encode())
    text = header + "".join(line for _, line in lines)
    (out / "data.noun").write_text(text, encoding="utf-8")
    index: dict[str, list[str]] = {}
    for n in names:
        for w in [n] + NOUN_SYNONYMS.get(n, []):
            index.setdefault(w, []).append(f"{offsets[n]:08d}")
    rows = []
    for w in sorted(index, key=_name):
        offs = index[w]
        rows.append(f"{_name(w)} n {len(offs)} 1 @ {len(offs)} 0 {' '.join(offs)}\n")
    (out / "index.noun").write_text(header + "".join(rows), encoding="utf-8")

    adjs = [a for a, _ in ADJECTIVES]
    aoff = {a: 0 for a in adjs}
    for _ in range(3):
        lines = []
        pos = len(header.encode())
        for a, ant in ADJECTIVES:
            ptrs = [f"! {aoff[ant]:08d} a 0101"] if ant else []
            line = f"{aoff[a]:08d} 00 a 01 {_name(a)} 0 {len(ptrs):03d}"
            line += "".join(" " + p for p in ptrs) + f" | {a}\n"
            lines.append(line)
            aoff[a] = pos
            pos += len(line.encode())
    (out / "data.adj").write_text(header + "".join(lines), encoding="utf-8")
    rows = [f"{_name(a)} a 1 {1 if ant else 0}{' !' if ant else ''} 1 0 {aoff[a]:08d}\n"
            for a, ant in sorted(ADJECTIVES)]
    (out / "index.adj").write_text(header + "".join(rows), encoding="utf-8")

    ov = ["# relation\tkind\tlemma\ttarget\n"]
    for group, (parent, members) in ATTRIBUTE_GROUPS.items():
        ov.append(f"hypernym\tAttribute\t{group}\t{parent}\n")
        ov.extend(f"hypernym\tAttribute\t{m}\t{group}\n" for m in members)
    for g, root in GROUP_ROOTS.items():
        ov.append(f"hypernym\tAttribute\t{g}\t{root}\n")
    for group, (parent, members) in RELATION_GROUPS.items():
        ov.append(f"hypernym\tRelationship\t{group}\t{parent}\n")
        ov.extend(f"hypernym\tRelationship\t{m}\t{group}\n" for m in members)
    for g, root in RELATION_ROOTS.items():
        ov.append(f"hypernym\tRelationship\t{g}\t{root}\n")
    ov.extend(f"antonym\tRelationship\t{a}\t{b}\n" for a, b in RELATION_ANTONYMS)
    ov.extend(f"exclude\tRelationship\t{a}\t{b}\n" for a, b in RELATION_EXCLUDES)
    ov.append("exclude\tObject\tcup\tmug\n")
    (out / "overrides.tsv").write_text("".join(ov), encoding="utf-8")


GROUP_WORDS = {"furniture", "artifact", "object", "entity", "organism", "animal", "vertebrate",
               "mammal", "carnivore", "canine", "feline", "ungulate", "equine", "bovid",
               "ruminant", "proboscidean", "waterfowl", "seabird", "male", "female", "athlete",
               "woody plant", "herb", "furnishing", "bedroom furniture", "seat",
               "surface furniture", "storage furniture", "conveyance", "vehicle",
               "wheeled vehicle", "motor vehicle", "model vehicle", "pedal vehicle",
               "vessel craft", "clothing", "garment", "top garment", "headdress", "structure",
               "dwelling", "platform", "structure part", "opening", "barrier", "device",
               "appliance", "light source", "timepiece", "computer", "container", "vessel",
               "equipment", "game equipment", "sports implement", "display", "fabric item",
               "way", "natural object", "geological formation", "elevation", "shore",
               "substance", "abstraction", "time period", "region", "attribute", "property",
               "visual property", "color", "chromatic color", "achromatic color", "warm color",
               "cool color", "earth color", "physical entity", "living thing", "orange fruit"}
COLOR_WORDS = {"red", "pink", "orange", "yellow", "blue", "green", "purple", "brown", "tan",
               "black", "white", "gray", "silver", "grey"}


def write_lexicon(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    nouns = {n for n in NOUN_TAXONOMY if n not in GROUP_WORDS and n not in COLOR_WORDS}
    nouns |= {s for v in NOUN_SYNONYMS.values() for s in v} - COLOR_WORDS
    nouns |= set(EXTRA_NOUNS) - COLOR_WORDS - {"light", "short", "orange", "people"}
    adjectives = {a for a, _ in ADJECTIVES} | set(EXTRA_ADJECTIVES) | {"grey"}
    preps = set(EXTRA_PREPOSITIONS)
    verbs = set(EXTRA_VERBS)
    for _, (_, members) in RELATION_GROUPS.items():
        for m in members:
            (preps if m.split()[0] not in verbs and not m.endswith("ing") else verbs).add(m)
    for name, words in (("nouns", nouns), ("adjectives", adjectives),
                        ("prepositions", preps), ("verbs", verbs)):
        (out / f"{name}.txt").write_text("\n".join(sorted(words)) + "\n", encoding="utf-8")


# -- fixture ----------------------------------------------------------------

FIXTURE_OBJECTS = ["dog", "cat", "horse", "cow", "sheep", "bird", "man", "woman", "boy", "girl",
                   "tree", "bush", "flower", "grass", "bed", "nightstand", "chair", "bench",
                   "couch", "table", "desk", "shelf", "car", "truck", "bus", "bicycle", "boat",
                   "shirt", "jacket", "hat", "helmet", "building", "house", "porch", "window",
                   "door", "fence", "wall", "grill", "lamp", "clock", "laptop", "cup", "bowl",
                   "bottle", "vase", "bag", "box", "plate", "ball", "kite", "frisbee", "racket",
                   "sign", "pillow", "blanket", "umbrella", "road", "street", "sidewalk",
                   "mountain", "beach", "rock", "cloud", "sky", "water", "snow", "pizza",
                   "sandwich", "cake", "apple", "toy", "zebra", "giraffe", "elephant", "duck",
                   "skateboard", "surfboard", "book", "curtain", "towel", "basket"]
HELD_OUT_OBJECTS = {"zebra", "giraffe", "elephant", "duck", "surfboard", "curtain"}
FIXTURE_ATTRIBUTES = ["black", "white", "red", "pink", "orange", "yellow", "blue", "green",
                      "purple", "brown", "gray", "tall", "short", "large", "small", "open",
                      "closed", "wet", "dry", "old", "new", "wooden", "metal", "plastic",
                      "furry", "striped", "bright", "dark", "round", "square", "empty", "full",
                      "clean", "dirty"]
HELD_OUT_ATTRIBUTES = {"purple", "striped"}
FIXTURE_RELATIONS = ["on", "under", "near", "behind", "in front of", "next to", "above",
                     "below", "on top of", "in", "holding", "wearing", "riding", "beside",
                     "sitting on", "standing on", "looking at"]


def _box(rng: random.Random, width: int, height: int) -> dict:
    w = rng.randint(160, min(520, width))
    h = rng.randint(max(100, w // 2), min(height, w * 2, 520))
    x = rng.randint(0, width - w)
    y = rng.randint(0, height - h)
    return {"x": x, "y": y, "w": w, "h": h}


def _hand_images() -> list[dict]:
    def o(oid, name, attrs, x, y, w, h):
        return {"object_id": oid, "names": [name], "attributes": attrs, "x": x, "y": y, "w": w, "h": h}

    return [
        {"image_id": "img001", "width": 800, "height": 600,
         "objects": [o(1, "grill", ["black"], 200, 80, 260, 220),
                     o(2, "porch", ["wooden"], 100, 200, 560, 360),
                     o(3, "chair", ["white"], 500, 260, 180, 240)],
         "relationships": [{"subject_id": 1, "predicate": "on top of", "object_id": 2},
                           {"subject_id": 3, "predicate": "on", "object_id": 2}]},
        {"image_id": "img002", "width": 800, "height": 600,
         "objects": [o(1, "car", ["pink"], 150, 150, 420, 300),
                     o(2, "road", ["gray"], 0, 300, 800, 300),
                     o(3, "tree", ["tall", "green"], 600, 0, 180, 450)],
         "relationships": [{"subject_id": 1, "predicate": "on", "object_id": 2}]},
        {"image_id": "img003", "width": 800, "height": 600,
         "objects": [o(1, "dog", ["brown"], 260, 180, 220, 180),
                     o(2, "bed", ["white"], 120, 140, 480, 360),
                     o(3, "nightstand", ["wooden"], 620, 220, 160, 240),
                     o(4, "lamp", [], 640, 60, 120, 170)],
         "relationships": [{"subject_id": 1, "predicate": "on", "object_id": 2},
                           {"subject_id": 4, "predicate": "on", "object_id": 3}]},
        {"image_id": "img004", "width": 800, "height": 600,
         "objects": [o(1, "boy", ["tall", "blue"], 300, 100, 200, 380),
                     o(2, "grass", ["green"], 0, 350, 800, 250),
                     o(3, "kite", ["red"], 520, 20, 160, 160)],
         "relationships": [{"subject_id": 1, "predicate": "on", "object_id": 2},
                           {"subject_id": 1, "predicate": "holding", "object_id": 3}]},
        {"image_id": "img005", "width": 800, "height": 600,
         "objects": [o(1, "dog", ["black"], 200, 200, 200, 200),
                     o(2, "building", ["tall"], 100, 100, 600, 480),
                     o(3, "dog", ["black"], 500, 360, 180, 200),
                     o(4, "window", ["open"], 150, 120, 160, 160),
                     o(5, "window", ["closed"], 420, 120, 160, 160)],
         "relationships": [{"subject_id": 1, "predicate": "on", "object_id": 2},
                           {"subject_id": 4, "predicate": "next to", "object_id": 5}]},
    ]


def _random_image(rng: random.Random, idx: int, objects: list[str], attributes: list[str]) -> dict:
    width, height = rng.choice([(800, 600), (640, 480), (1024, 768), (600, 800)])
    n_obj = rng.randint(3, 7)
    names = rng.sample(objects, n_obj)
    if rng.random() < 0.3:
        names[-1] = names[0]  # duplicate object names occur in real graphs
    objs = []
    for oid, name in enumerate(names, 1):
        attrs = rng.sample(attributes, rng.choice([0, 1, 1, 2]))
        objs.append({"object_id": oid, "names": [name], "attributes": attrs, **_box(rng, width, height)})
    rels = []
    pairs = set()
    for _ in range(rng.randint(1, n_obj)):
        s, t = rng.sample(range(1, n_obj + 1), 2)
        if (s, t) in pairs:
            continue
        pairs.add((s, t))
        rels.append({"subject_id": s, "predicate": rng.choice(FIXTURE_RELATIONS), "object_id": t})
    return {"image_id": f"img{idx:03d}", "width": width, "height": height,
            "objects": objs, "relationships": rels}


def _phrase(node: dict) -> str:
    attrs = node["attributes"]
    return " and ".join(attrs) + (" " if attrs else "") + node["names"][0]


def _region_caption(rng: random.Random, image: dict) -> tuple[str, dict] | None:
    objs = {o["object_id"]: o for o in image["objects"]}
    if image["relationships"] and rng.random() < 0.5:
        r = rng.choice(image["relationships"])
        s, t = objs[r["subject_id"]], objs[r["object_id"]]
        s_attr = rng.sample(s["attributes"], min(len(s["attributes"]), rng.randint(0, 1)))
        text = " ".join(s_attr + [s["names"][0], r["predicate"], "the", t["names"][0]])
        members = [s, t]
    else:
        cands = [o for o in image["objects"] if o["attributes"]]
        if not cands:
            return None
        o = rng.choice(cands)
        text = f"a {rng.choice(o['attributes'])} {o['names'][0]}"
        members = [o]
    x = min(m["x"] for m in members)
    y = min(m["y"] for m in members)
    x2 = max(m["x"] + m["w"] for m in members)
    y2 = max(m["y"] + m["h"] for m in members)
    return text, {"x": x, "y": y, "w": x2 - x, "h": y2 - y}


def write_fixture(out: Path, seed: int = 20230405) -> None:
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    images = _hand_images()
    for i in range(len(images) + 1, 51):
        images.append(_random_image(rng, i, FIXTURE_OBJECTS, FIXTURE_ATTRIBUTES))
    (out / "scene_graphs.json").write_text(json.dumps(images, indent=1) + "\n", encoding="utf-8")

    regions = []
    hand_regions = [
        ("img001", "a grill on top of the porch", {"x": 100, "y": 80, "w": 560, "h": 480}),
        ("img002", "a pink car", {"x": 150, "y": 150, "w": 420, "h": 300}),
        ("img003", "There is a dog on the bed and also a nightstand", {"x": 120, "y": 140, "w": 660, "h": 360}),
        ("img004", "tall and blue boy on green grass", {"x": 0, "y": 100, "w": 800, "h": 500}),
        ("img005", "Black dog on a building", {"x": 100, "y": 100, "w": 600, "h": 480}),
    ]
    for image_id, text, region in hand_regions:
        regions.append({"caption_id": f"{image_id}_r0", "image_id": image_id, "text": text, "region": region})
    for image in images:
        for k in range(1, 4):
            got = _region_caption(rng, image)
            if got is None:
                continue
            text, region = got
            regions.append({"caption_id": f"{image['image_id']}_r{k}", "image_id": image["image_id"],
                            "text": text, "region": region})
    (out / "test_regions.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in regions), encoding="utf-8")

    # training corpus: phrases over a vocabulary that leaves some atoms unseen
    train_objects = [o for o in FIXTURE_OBJECTS if o not in HELD_OUT_OBJECTS]
    train_attrs = [a for a in FIXTURE_ATTRIBUTES if a not in HELD_OUT_ATTRIBUTES]
    rows = []
    for i in range(400):
        a, o = rng.choice(train_attrs), rng.choice(train_objects)
        shape = rng.random()
        if shape < 0.4:
            text = f"a {a} {o}"
        elif shape < 0.8:
            text = f"{a} {o} {rng.choice(FIXTURE_RELATIONS)} the {rng.choice(train_objects)}"
        else:
            text = f"{o} {rng.choice(FIXTURE_RELATIONS)} {rng.choice(train_attrs)} {rng.choice(train_objects)}"
        rows.append({"caption_id": f"train{i:04d}", "text": text})
    # the exemplar compounds are seen in training so they land in SC/UC
    for j, text in enumerate(["a pink car", "grill on top of the porch", "dog on the bed",
                              "a black dog", "dog on a building", "tall boy", "blue boy",
                              "green grass", "boy on grass", "a nightstand"]):
        rows.append({"caption_id": f"train_x{j}", "text": text})
    (out / "train_captions.jsonl").write_text(
        "".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def write_few_shot(out: Path) -> None:
    """Five hand-written caption examples per complexity 4..12."""
    base = [
        ({"objects": [{"id": 1, "name": "boy", "attributes": ["tall", "blue"]},
                      {"id": 2, "name": "grass", "attributes": []}],
          "relationships": [{"subject": 1, "predicate": "on", "object": 2}]},
         "A tall boy in blue stands on the grass."),
        ({"objects": [{"id": 1, "name": "dog", "attributes": ["black"]},
                      {"id": 2, "name": "bed", "attributes": []}],
          "relationships": [{"subject": 1, "predicate": "on", "object": 2}]},
         "A black dog is lying on the bed."),
        ({"objects": [{"id": 1, "name": "bushes", "attributes": []},
                      {"id": 2, "name": "bench", "attributes": []},
                      {"id": 3, "name": "woman", "attributes": []}],
          "relationships": [{"subject": 1, "predicate": "behind", "object": 2},
                            {"subject": 2, "predicate": "behind", "object": 3}]},
         "Bushes grow behind a bench where a woman stands."),
        ({"objects": [{"id": 1, "name": "car", "attributes": ["red"]},
                      {"id": 2, "name": "street", "attributes": ["wet"]}],
          "relationships": [{"subject": 1, "predicate": "on", "object": 2}]},
         "A red car drives on the wet street."),
        ({"objects": [{"id": 1, "name": "cup", "attributes": ["white"]},
                      {"id": 2, "name": "table", "attributes": ["wooden"]}],
          "relationships": [{"subject": 1, "predicate": "on", "object": 2}]},
         "A white cup sits on a wooden table."),
    ]
    rows = []
    for n in range(4, 13):
        for graph, caption in base:
            rows.append({"n": n, "graph": graph, "caption": caption})
    (out / "few_shot.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


if __name__ == "__main__":
    write_wordnet(DATA / "wordnet")
    write_lexicon(DATA / "lexicon")
    write_fixture(DATA / "fixture")
    write_few_shot(DATA / "fixture")
    print(f"wrote {DATA}")
