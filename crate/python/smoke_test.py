"""Smoke test for the fabula Python extension.

Build the extension and put it on the path as ``fabula.so``:

    cargo build --release -p fabula-py --features extension-module
    cp target/release/libfabula_py.so python/fabula.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import fabula  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "crates", "core", "tests", "fixtures")


def main():
    assert fabula.tokenize("The Fox's tail, wasn't it?") == ["the", "fox's", "tail", "wasn't", "it"]
    assert fabula.edit_distance(["A", "B", "C"], ["A", "C"]) == 1
    assert fabula.scaled_frame_distance(["A", "B"], ["A", "Z", "B"]) == 0.0

    v = fabula.hash_embedding("fox", 16, 7)
    assert len(v) == 16 and abs(math.sqrt(sum(x * x for x in v)) - 1.0) < 1e-9
    assert v == fabula.hash_embedding("fox", 16, 7)
    assert abs(fabula.cosine(v, v) - 1.0) < 1e-12

    assert fabula.kappa([True, False, True, False], [True, False, True, False]) == 1.0
    assert abs(fabula.kappa([True, False, True, False], [False, True, False, True]) + 1.0) < 1e-12
    assert abs(fabula.pearson([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]) - 1.0) < 1e-12

    assert fabula.classify_series([6.5] * 7 + [4.2] * 3) == ("H-H-L", "TRAGEDY")
    profile = fabula.arc_profile("joy joy joy joy grief", {"joy": 7.0, "grief": 3.0}, window=1)
    assert profile["levels"] == "H-H-L" and profile["arc"] == "TRAGEDY"

    words = " ".join(str(i) for i in range(1, 1001))
    mid = fabula.middle_window(words, 500).split()
    assert (len(mid), mid[0], mid[-1]) == (500, "251", "750")

    stories = fabula.load_corpus(os.path.join(FIXTURES, "corpus.jsonl"))
    assert len(stories) == 13 and stories[0]["id"] == "f01"
    assert "GREED" in fabula.MORAL_TAGS and len(fabula.DIMENSIONS) == 7
    try:
        fabula.load_corpus("/no/such/file.jsonl")
    except OSError:
        pass
    else:
        raise AssertionError("missing corpus should raise OSError")

    x = [[1.0, 1.0], [1.2, 0.8], [-1.0, -1.0], [-0.9, -1.1]]
    y = [True, True, False, False]
    model = fabula.LogisticModel.train(x, y, epochs=300)
    assert all(model.predict(row) == label for row, label in zip(x, y))
    assert all(b <= a for a, b in zip(model.losses, model.losses[1:]))
    assert model.gradient_check(x, y) < 1e-5
    try:
        model.predict([1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("wrong feature width should raise ValueError")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
