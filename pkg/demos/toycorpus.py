"""Small synthetic code-mixed corpus shared by the demo scripts.

Five sentiment classes, each with its own signal words plus a pool of
shared filler, loosely imitating romanized Tamil movie comments.
"""

import numpy as np

from cmsenti.corpus import LabeledExample, LabelSchema

SCHEMA = LabelSchema.for_language("tamil")

CLASS_WORDS = {
    "positive": ["semma", "vera", "level", "super", "mass"],
    "negative": ["mokka", "waste", "bore", "flop"],
    "mixed_feelings": ["okok", "paravala", "soso"],
    "not_tamil": ["hindi", "telugu", "english", "dubbed"],
    "unknown_state": ["enna", "idhu", "yaru", "eppo"],
}
SHARED_WORDS = ["padam", "movie", "da", "scene", "song", "trailer"]


def make_corpus(n_per_class=20, seed=7, shared_fraction=0.35):
    rng = np.random.default_rng(seed)
    out = []
    for label in SCHEMA.labels:
        own = CLASS_WORDS[label]
        for _ in range(n_per_class):
            n = int(rng.integers(3, 7))
            words = [
                SHARED_WORDS[rng.integers(0, len(SHARED_WORDS))]
                if rng.random() < shared_fraction
                else own[rng.integers(0, len(own))]
                for _ in range(n)
            ]
            if not set(words) & set(own):
                words[0] = own[rng.integers(0, len(own))]
            out.append(LabeledExample(" ".join(words), label))
    perm = np.random.default_rng(seed + 1).permutation(len(out))
    return [out[i] for i in perm]
