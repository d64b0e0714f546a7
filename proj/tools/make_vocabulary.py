#!/usr/bin/env python3
"""Writes data/vocabulary.txt: the 16 synthetic categories followed by
adjective-noun filler names, 4585 lines in total."""

import itertools
import pathlib
import random

COLORS = ["red", "green", "blue", "yellow"]
SHAPES = ["circle", "square", "triangle", "cross"]

ADJECTIVES = """
wooden metal plastic glass paper leather woolen cotton silk rubber ceramic stone
marble concrete bamboo wicker velvet denim canvas copper silver golden bronze iron
steel brass tin frozen boiled fried roasted baked grilled steamed sliced dried fresh
ripe rotten folding sliding rolling spinning hanging floating broken antique vintage
modern electric manual wireless portable heavy light tiny huge small large tall short
narrow wide round flat striped spotted dotted checkered plaid floral shiny matte
fuzzy smooth rough soft hard wet dry dusty clean dirty empty full open closed
""".split()

NOUNS = """
chair table sofa bench stool desk shelf cabinet drawer wardrobe bed pillow blanket
lamp candle mirror clock vase bowl plate cup mug glass bottle jar kettle teapot pan
pot spoon fork knife ladle whisk grater tray basket bucket box crate barrel bag
backpack suitcase wallet purse umbrella hat cap helmet scarf glove sock shoe boot
sandal jacket coat shirt sweater dress skirt belt tie watch ring necklace bracelet
phone laptop keyboard mouse monitor speaker camera radio television remote charger
cable battery bicycle scooter skateboard car truck bus train tram boat kayak canoe
kite balloon ball racket bat glove drum guitar violin piano flute trumpet book
notebook pencil pen marker eraser ruler stapler envelope stamp map poster frame
painting sculpture statue fountain bridge tower fence gate door window roof chimney
ladder rope chain hammer wrench saw drill shovel rake hose broom mop sponge towel
soap brush comb toothbrush apple banana orange lemon grape cherry peach pear melon
carrot potato onion tomato pepper cabbage lettuce bread cake cookie donut pizza
sandwich burger noodle rice egg cheese sausage fish crab shrimp dog cat horse cow
sheep goat pig rabbit mouse duck goose chicken owl eagle parrot pigeon turtle frog
snake lizard bee butterfly spider ant snail tree bush flower leaf branch log rock
shell feather cloud tent flag sign banner trophy medal coin key lock padlock
""".split()


def main() -> None:
    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "vocabulary.txt"
    names = [f"{c} {s}" for c in COLORS for s in SHAPES]
    adjectives = sorted(set(ADJECTIVES))
    nouns = sorted(set(NOUNS))
    filler = [f"{a} {n}" for a, n in itertools.product(adjectives, nouns)]
    random.Random(4585).shuffle(filler)
    names += filler[: 4585 - len(names)]
    assert len(names) == len(set(names)) == 4585
    out.write_text("\n".join(names) + "\n")


if __name__ == "__main__":
    main()
