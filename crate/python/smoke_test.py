"""Smoke test for the pygsd extension.

Build first:  cargo build --release -p privgsd-python
then run:     python3 python/smoke_test.py
"""
import csv
import os
import random
import shutil
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)


def load_module():
    build = tempfile.mkdtemp()
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libpygsd.so")
        if os.path.exists(lib):
            shutil.copy(lib, os.path.join(build, "pygsd.so"))
            sys.path.insert(0, build)
            import pygsd
            return pygsd
    sys.exit("libpygsd.so not found; run cargo build -p privgsd-python first")


SCHEMA = """{"attributes":[
  {"name":"sex","kind":"categorical","categories":["f","m"]},
  {"name":"region","kind":"categorical","categories":["n","s","e"]},
  {"name":"age","kind":"numeric","min":0,"max":100},
  {"name":"income","kind":"numeric"}]}"""


def main():
    g = load_module()
    tmp = tempfile.mkdtemp()
    rng = random.Random(3)
    data_path = os.path.join(tmp, "data.csv")
    with open(data_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sex", "region", "age", "income"])
        for _ in range(200):
            w.writerow([rng.choice("fm"), rng.choice("nse"), rng.randint(0, 100), rng.randint(20000, 90000)])

    schema = g.Schema.from_json(SCHEMA)
    assert schema.names == ["sex", "region", "age", "income"]
    data = g.Dataset.load_csv(data_path, schema)
    assert data.n_rows == 200 and len(data.rows()[0]) == 4

    ws = g.categorical_marginals(schema, 2) + [g.random_prefixes(schema, 20, seed=1)]
    assert len(ws) == 2
    assert abs(ws[0].l2_sensitivity - 2 ** 0.5) < 1e-12
    answers = g.eval_workloads(ws, data)
    assert len(answers) == len(ws[0]) + 20
    assert g.max_error(ws, data, data) == 0.0

    cfg = g.GsdConfig(synthetic_rows=40, max_generations=300, seed=5)
    cfg.p_cross = 20
    syn, loss, gens = g.run_gsd(schema, ws, answers, cfg)
    assert syn.n_rows == 40 and loss >= 0 and gens <= 300

    out = g.adaptive(data, ws, 1.0, epochs=5, samples=1, config=cfg)
    assert len(out.ledger) == 10
    assert abs(out.rho_spent - 1.0) < 1e-12
    assert abs(out.epsilon - g.zcdp_to_dp(1.0, out.delta)) < 1e-12
    again = g.adaptive(data, ws, 1.0, epochs=5, samples=1, config=cfg)
    assert again.synthetic == out.synthetic

    one = g.one_shot(data, ws, 0.5, config=cfg)
    assert len(one.ledger) == 1
    syn_path = os.path.join(tmp, "syn.csv")
    one.synthetic.save_csv(syn_path)
    with open(syn_path) as f:
        assert next(csv.reader(f)) == ["sex", "region", "age", "income"]

    assert abs(g.zcdp_to_dp(0.5, 1e-6) - 5.7565) < 1e-3
    rho = g.dp_to_zcdp(2.0, 1e-6)
    assert abs(g.zcdp_to_dp(rho, 1e-6) - 2.0) < 1e-9

    demo = g.sigmoid_demo()
    assert demo["annealed_true_error"] == 0.5 and demo["gsd_true_error"] <= 0.05

    try:
        g.GsdConfig(p_mut=0, p_cross=0)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")
    try:
        g.Schema.load(os.path.join(tmp, "missing.json"))
    except OSError:
        pass
    else:
        raise AssertionError("missing file accepted")

    print("pygsd smoke test ok")


if __name__ == "__main__":
    main()
