#!/usr/bin/env python3
"""Generate the bundled bilingual sample corpus (fully deterministic).

Two synthetic languages with distinct morphological texture:

* ``fr``: French-like phonotactics and suffixes, with accented letters
  (é è à ç ô î û) that do not occur in the other language.
* ``en``: English-like phonotactics and suffixes, ASCII only.

Words are stem+suffix formations; token frequencies follow a Zipf law
over a shuffled type list, with a separate high-frequency function-word
pool. A slice of content types per language is held out of the training
and development splits entirely and injected into test lines, so the
test sets carry a controlled out-of-vocabulary rate against the training
vocabulary.

Output (UTF-8, one sentence per line, no punctuation):

    data/train_fr.txt  data/dev_fr.txt  data/test_fr.txt
    train_en.txt  dev_en.txt  test_en.txt

Run from the repository root: ``python3 tools/gen_corpus.py``.
Regeneration is byte-identical (fixed seed, ordered collections only).
"""

import os
import random

SEED = 20260816
TRAIN_LINES = 1300
DEV_LINES = 50
TEST_LINES = 100
HELD_OUT_TYPES = 90
ZIPF_EXPONENT = 1.1

LANGS = {
    "fr": dict(
        onsets=["b", "bl", "c", "ch", "cl", "d", "f", "fl", "g", "gr", "j",
                "l", "m", "n", "p", "pl", "pr", "qu", "r", "s", "t", "tr", "v"],
        nuclei=["a", "e", "i", "o", "u", "é", "è", "ai", "ou", "oi", "on",
                "an", "eau", "ô", "î", "û", "à"],
        codas=["r", "l", "n", "s", "t", "ç"],
        coda_prob=0.30,
        suffixes=["er", "e", "es", "a", "ait", "aient", "ant", "ons", "ez",
                  "é", "ée", "és", "ation", "eur", "eurs", "euse", "ement",
                  "age", "ier", "ine"],
        functions=("le la les un une de du des et ou il elle on nous vous "
                   "dans pour sur avec par ne pas plus à bien est sont "
                   "était comme mais si alors donc").split(),
    ),
    "en": dict(
        onsets=["b", "bl", "br", "c", "cl", "cr", "d", "dr", "f", "fl", "fr",
                "g", "gl", "h", "k", "l", "m", "n", "p", "pl", "r", "s", "sh",
                "sl", "sp", "st", "str", "t", "th", "tr", "w"],
        nuclei=["a", "e", "i", "o", "u", "ea", "ee", "oo", "ou", "ai", "igh"],
        codas=["b", "ck", "d", "g", "k", "l", "ll", "m", "n", "ng", "p", "r",
               "s", "ss", "t", "th"],
        coda_prob=0.45,
        suffixes=["", "s", "ed", "ing", "er", "ers", "ly", "ness", "tion",
                  "ment", "ful", "less", "ish", "y", "en", "est"],
        functions=("the a an of to and or in on for with by he she it we "
                   "they you this that not more very is are was will be as "
                   "but if then so").split(),
    ),
}


def make_stems(rng, spec, count):
    stems = set()
    while len(stems) < count:
        parts = []
        for _ in range(rng.randint(1, 2)):
            parts.append(rng.choice(spec["onsets"]))
            parts.append(rng.choice(spec["nuclei"]))
            if rng.random() < spec["coda_prob"]:
                parts.append(rng.choice(spec["codas"]))
        stem = "".join(parts)
        if 3 <= len(stem) <= 9:
            stems.add(stem)
    return sorted(stems)


def make_content_types(rng, spec, stems):
    types = set()
    for stem in stems:
        n = rng.randint(6, 10)
        for suffix in rng.sample(spec["suffixes"], min(n, len(spec["suffixes"]))):
            word = stem + suffix
            if word not in spec["functions"]:
                types.add(word)
    return sorted(types)


def zipf_weights(n):
    return [1.0 / (rank + 2) ** ZIPF_EXPONENT for rank in range(n)]


class WordSampler:
    """Zipf sampler over a shuffled type list."""

    def __init__(self, rng, types):
        self.types = list(types)
        rng.shuffle(self.types)
        self.weights = zipf_weights(len(self.types))

    def without(self, excluded):
        s = WordSampler.__new__(WordSampler)
        pairs = [(t, w) for t, w in zip(self.types, self.weights)
                 if t not in excluded]
        s.types = [t for t, _ in pairs]
        s.weights = [w for _, w in pairs]
        return s

    def draw(self, rng):
        return rng.choices(self.types, weights=self.weights, k=1)[0]


def make_line(rng, functions, content, min_words=5, max_words=9):
    n = rng.randint(min_words, max_words)
    words = []
    content_positions = []
    for i in range(n):
        # Guarantee at least two content positions per line.
        force_content = sum(1 for p in content_positions) < 2 and i >= n - 2
        if not force_content and rng.random() < 0.40:
            words.append(functions.draw(rng))
        else:
            content_positions.append(i)
            words.append(content.draw(rng))
    return words, content_positions


def generate_language(lang, spec, rng):
    stems = make_stems(rng, spec, 170)
    content_types = make_content_types(rng, spec, stems)
    functions = WordSampler(rng, spec["functions"])
    all_content = WordSampler(rng, content_types)

    # Hold out mid-frequency types: never sampled for train/dev.
    candidates = all_content.types[40:]
    held_out = sorted(rng.sample(candidates, HELD_OUT_TYPES))
    train_content = all_content.without(set(held_out))

    def lines(count, inject_held_out):
        out = []
        for idx in range(count):
            words, cpos = make_line(rng, functions, train_content)
            if inject_held_out and idx % 2 == 0 and cpos:
                words[rng.choice(cpos)] = rng.choice(held_out)
            out.append(" ".join(words))
        return out

    # Sweep lines: every trainable content type occurs at least once, so
    # the training vocabulary equals the (non-held-out) type inventory.
    def sweep_lines():
        pool = list(train_content.types)
        rng.shuffle(pool)
        out = []
        i = 0
        while i < len(pool):
            n = rng.randint(5, 9)
            chunk = pool[i:i + n]
            i += n
            # Mix in a function word for texture.
            chunk.insert(rng.randrange(len(chunk) + 1), functions.draw(rng))
            out.append(" ".join(chunk))
        return out

    train = lines(TRAIN_LINES, False) + sweep_lines()
    rng.shuffle(train)
    return dict(
        train=train,
        dev=lines(DEV_LINES, False),
        test=lines(TEST_LINES, True),
        held_out=held_out,
        content_types=content_types,
    )


def vocab_of(lines):
    return {w for line in lines for w in line.split()}


def main():
    rng = random.Random(SEED)
    os.makedirs("data", exist_ok=True)
    corpora = {}
    for lang in sorted(LANGS):
        corpora[lang] = generate_language(lang, LANGS[lang], rng)

    train_vocab = {lang: vocab_of(c["train"]) for lang, c in corpora.items()}
    union_vocab = set().union(*train_vocab.values())
    print(f"distinct train words: "
          + ", ".join(f"{l}={len(v)}" for l, v in sorted(train_vocab.items()))
          + f", union={len(union_vocab)}")
    assert len(union_vocab) >= 2000, "bundled corpus must have >= 2000 distinct words"

    total_tokens = 0
    oov_tokens = 0
    for lang, c in sorted(corpora.items()):
        tokens = [w for line in c["test"] for w in line.split()]
        oov = [w for w in tokens if w not in train_vocab[lang]]
        total_tokens += len(tokens)
        oov_tokens += len(oov)
        pct = 100.0 * len(oov) / len(tokens)
        print(f"{lang}: test tokens={len(tokens)} oov={len(oov)} ({pct:.1f}%)")
        train_chars = {ch for line in c["train"] for ch in line}
        test_chars = {ch for line in c["test"] + c["dev"] for ch in line}
        assert test_chars <= train_chars, f"{lang}: test uses unseen characters"
    combined = 100.0 * oov_tokens / total_tokens
    print(f"combined test OOV: {combined:.1f}%")
    assert 5.5 <= combined <= 10.0, "test OOV rate out of range"

    for lang, c in sorted(corpora.items()):
        for split in ("train", "dev", "test"):
            path = os.path.join("data", f"{split}_{lang}.txt")
            with open(path, "w", encoding="utf-8") as f:
                f.write("\n".join(c[split]) + "\n")
            print(f"wrote {path} ({len(c[split])} lines)")


if __name__ == "__main__":
    main()
