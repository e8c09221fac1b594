"""Smoke test for the Python bindings: python python/smoke.py"""

import math
import os
import tempfile

import surrogate

acc, prec, rec, f1 = surrogate.metrics(2602, 2, 21, 144)
assert abs(acc - 0.9917) < 1e-4 and abs(f1 - 0.9260) < 1e-4

t, df, p = surrogate.welch([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
assert abs(t + 3.674234614174767) < 1e-12 and abs(df - 4.0) < 1e-12
assert abs(p - 0.021311641128756727) < 1e-10

assert surrogate.quantile([0.0, 10.0], 0.75) == 7.5
assert surrogate.gini(5, 5) == 0.5
assert surrogate.label([1, 2, 3, 4], [4, 3, 2, 1]) == [0, 0, 0, 1]

schema = surrogate.Schema.default()
assert "No-policy" == schema.policies()[0]
assert len(schema.regions()) == 46

x = [[i / 100.0, (i * 7 % 13) / 13.0] for i in range(200)]
y = [int(row[0] > 0.5) for row in x]
forest = surrogate.Forest.fit(x, y, n_trees=20, max_depth=6, seed=1)
pred = forest.predict(x)
hits = sum(int(c == label) for (c, _), label in zip(pred, y))
assert hits >= 195, hits

with tempfile.TemporaryDirectory() as d:
    path = os.path.join(d, "forest.bin")
    forest.save(path)
    assert surrogate.Forest.load(path).predict(x) == pred

    runs = os.path.join(d, "runs.csv")
    assert surrogate.toy_corpus(runs, 300, seed=2) == 300
    with open(runs) as fh:
        assert sum(1 for _ in fh) == 301

    cfg = os.path.join(d, "toy.toml")
    with open(cfg, "w") as fh:
        fh.write("seed = 1\nn_generate = 2000\n[toy]\nruns = 1500\n[forest]\nn_trees = 5\n")
    stages = surrogate.run_pipeline(cfg)
    assert [s for s, _ in stages][-1] == "report"
    assert all(o == "skipped" for _, o in surrogate.run_pipeline(cfg))

assert not math.isnan(acc)
print("smoke ok")
