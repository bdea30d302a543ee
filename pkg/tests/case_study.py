"""Case-study fixture: one OIE2016 sentence, three model answers, gold standard."""

SENTENCE = (
    "Although in Flanders, the Flemish Region assigned all of its powers to the Flemish Community, "
    "the Walloon Region remains in principle distinct from and independent from the French Community, "
    "and vice-versa."
)

ZERO_SHOT = """1. (the Flemish Region, remains, in principle distinct from and independent from the French Community)
2. (Walloon Region, remains, in principle distinct from and independent from the French Community)
3. (the French Community, remains, in principle distinct from and independent from the Walloon Region)"""

SELECTED_DEMO = """1. (the Flemish Region, assigned, all of its powers to the Flemish Community)
2. (the Walloon Region, remains, distinct from and independent from the French Community)
3. (the Walloon Region, remains, in principle distinct from and independent from the French Community)
4. (the French Community, is, distinct from and independent from the Walloon Region)
5. (the French Community, is, in principle distinct from and independent from the Walloon Region)"""

UNCERTAINTY = """1. (the Flemish Region, assigned, all of its powers to the Flemish Community)
2. (the Walloon Region, remains in principle distinct from, the French Community)
3. (the Walloon Region, remains independent from, the French Community)
4. (the French Community, is, distinct from and independent from the Walloon Region)"""

GOLD = [
    ("the Flemish Region", "assigned", "all of its powers"),
    ("the Walloon Region", "remains in principle distinct from", "the French Community"),
    ("the Walloon Region", "remains independent from", "the French Community"),
]

GOLD_TEXT = """1. (the Flemish Region, assigned, all of its powers)
2. (the Walloon Region, remains in principle distinct from, the French Community)
3. (the Walloon Region, remains independent from, the French Community)"""
