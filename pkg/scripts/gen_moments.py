"""Generate the Brownian Stratonovich moment table shipped with mkvcub.

The expected Stratonovich signature of (t, B_t) over [0, 1] is
exp(e0 + 1/2 * sum_i e_i e_i) in the tensor algebra.  The coefficient of a
word is therefore a sum over tilings of the word by blocks ``(0)`` and
``(i, i)``: a tiling with k blocks and p pair-blocks contributes
``(1/2)**p / k!``.  Values are exact rationals.

Words are stored in canonical form (non-zero letters relabelled 1, 2, ... in
order of first appearance); Brownian components are exchangeable so the
moment only depends on the canonical word.

Usage:  python scripts/gen_moments.py [max_norm]
"""
import itertools
import json
import sys
from fractions import Fraction
from math import factorial
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "mkvcub" / "data" / "brownian_moments.json"


def norm(word):
    return len(word) + sum(1 for a in word if a == 0)


def canonical(word):
    relabel = {}
    out = []
    for a in word:
        if a == 0:
            out.append(0)
        else:
            out.append(relabel.setdefault(a, len(relabel) + 1))
    return tuple(out)


def tilings(word):
    """Yield (blocks, pairs) for every tiling of ``word``."""
    if not word:
        yield 0, 0
        return
    if word[0] == 0:
        for k, p in tilings(word[1:]):
            yield k + 1, p
    elif len(word) >= 2 and word[1] == word[0]:
        for k, p in tilings(word[2:]):
            yield k + 1, p + 1


def moment(word):
    total = Fraction(0)
    for k, p in tilings(word):
        total += Fraction(1, 2**p) / factorial(k)
    return total


def canonical_words(max_norm):
    # at most 3 distinct non-zero letters can carry a non-zero moment for norm <= 6,
    # but we enumerate enough letters to cover every canonical word
    letters = range(0, max_norm + 1)
    seen = set()
    for length in range(0, max_norm + 1):
        for word in itertools.product(letters, repeat=length):
            if norm(word) <= max_norm:
                c = canonical(word)
                if c not in seen:
                    seen.add(c)
                    yield c


def main(max_norm=6):
    table = {}
    for w in canonical_words(max_norm):
        m = moment(w)
        if m != 0:
            table[",".join(map(str, w))] = f"{m.numerator}/{m.denominator}"
    payload = {
        "description": "E[Stratonovich iterated integral of (t, B_t) over [0,1]] for canonical words; "
        "absent canonical words have moment 0",
        "max_norm": max_norm,
        "moments": dict(sorted(table.items(), key=lambda kv: (len(kv[0]), kv[0]))),
    }
    OUT.write_text(json.dumps(payload, indent=1) + "\n")
    print(f"wrote {len(table)} non-zero moments to {OUT}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 6)
