"""Building a unified label space by concatenation.

Two datasets name overlapping things. We never merge labels: the
unified space keeps every entry distinct and remembers where it came
from, so any dataset's slice can be recovered at test time.
"""

import numpy as np

from labelspace_align import (
    LabelEntry,
    LabelSet,
    concat_label_spaces,
    external_subspace,
    l2_normalize_rows,
    subspace,
)

rng = np.random.default_rng(0)

# -- two small label sets with embeddings ------------------------------------

street = LabelSet(
    name="street",
    labels=(
        LabelEntry(id="person", display="person"),
        LabelEntry(id="car", display="car"),
        LabelEntry(id="sneakers", display="sneakers"),
    ),
    dim=8,
)
home = LabelSet(
    name="home",
    labels=(
        LabelEntry(id="person", display="person"),   # same name, different dataset
        LabelEntry(id="footwear", display="footwear"),
    ),
    dim=8,
)
street_emb = l2_normalize_rows(rng.normal(size=(3, 8))).astype(np.float32)
home_emb = l2_normalize_rows(rng.normal(size=(2, 8))).astype(np.float32)

unified = concat_label_spaces([(street, street_emb), (home, home_emb)])
print(f"unified space: n={unified.n} from sources {unified.sources}")
for entry in unified.entries:
    print(f"  [{entry.global_index}] {entry.dataset}/{entry.id}")

# the two "person" labels stay distinct entries
people = [e for e in unified.entries if e.id == "person"]
print(f"\ntwo distinct 'person' entries: indices {[e.global_index for e in people]}")

# -- test-time views ----------------------------------------------------------

view = subspace(unified, "home")
print(f"\nhome subspace selects global indices {view.global_indices}")

downstream = LabelSet(
    name="aquarium",
    labels=(LabelEntry(id="jellyfish", display="jellyfish"),
            LabelEntry(id="stingray", display="stingray")),
    dim=8,
)
down_emb = l2_normalize_rows(rng.normal(size=(2, 8))).astype(np.float32)
external = external_subspace(downstream, down_emb)
print(f"external label set {external.source!r}: {external.names} (never aliased)")
