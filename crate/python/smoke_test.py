"""Smoke test for the `recourse` extension module.

Install with `pip install --no-build-isolation crates/py` (maturin), or build in place:
    cargo build --release -p recourse-py --features extension-module
    cp target/release/librecourse.so python/recourse.so
    python python/smoke_test.py
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import recourse  # noqa: E402


def main():
    with tempfile.TemporaryDirectory() as tmp:
        recourse.write_fixture(tmp, rows=300, seed=7)
        csv = os.path.join(tmp, "credit.csv")
        schema_path = os.path.join(tmp, "credit.schema.toml")
        weights = os.path.join(tmp, "credit.weights.json")

        schema = recourse.FeatureSchema.load(schema_path)
        assert len(schema) == 11, schema
        assert recourse.FeatureSchema.from_toml(schema.to_toml()).names() == schema.names()

        data = recourse.Dataset.load(csv, schema)
        model = recourse.Model.load(weights, schema)
        assert len(data) == 300
        row = data.row(0)
        probs = model.predict_proba(row)
        assert abs(sum(probs) - 1.0) < 1e-9
        assert model.is_favorable(row) == (probs[1] > probs[0])
        affected = data.affected(model)
        assert 0 < len(affected) < 300
        for i in affected[:10]:
            assert not model.is_favorable(data.row(i))

        sets = data.apriori(0.3)
        assert sets and all("=" in s for s in sets)

        og = recourse.generate(data, 0.3)
        rl = recourse.generate(data, 0.3, method="rl-reduction")
        assert len(og) == len(rl) > 0
        assert og.triples() == rl.triples()
        assert rl.iteration_count <= og.iteration_count
        loose = recourse.generate(data, 0.3, method="then-generation", q=0.05)
        strict = recourse.generate(data, 0.3, method="then-generation", q=0.2)
        assert len(strict) <= len(loose)
        json.loads(og.to_json())
        ev = og.evaluate(data, model, budget=200)
        assert ev["affected"] == len(affected)
        assert 0.0 <= ev["acc"] <= 100.0

        out = os.path.join(tmp, "run")
        cfg = recourse.RunConfig(csv, schema_path, weights, out, p=0.5, budget_seconds=30.0)
        report = recourse.run(cfg)
        assert report["status"] == "complete", report
        assert report["acc_r"] <= report["acc_selected"] + 1e-9
        with open(os.path.join(out, "rules.json")) as fh:
            rules = json.load(fh)
        assert len(rules["rules"]) == report["recourse_size"]

        try:
            recourse.RunConfig(csv, schema_path, weights, out, q=0.1)
        except ValueError as e:
            assert "q" in str(e)
        else:
            raise AssertionError("q without then-generation was accepted")

        a = recourse.RunConfig(csv, schema_path, weights, os.path.join(tmp, "a"), p=0.5)
        b = recourse.RunConfig(csv, schema_path, weights, os.path.join(tmp, "b"), p=0.5, method="rl-reduction")
        rows = recourse.compare([a, b])
        assert {r["run"] for r in rows} == {"a", "b"}

    print(f"ok: {len(og)} triples, acc(R) {report['acc_r']:.1f}%, {report['recourse_size']} rules")


if __name__ == "__main__":
    main()
