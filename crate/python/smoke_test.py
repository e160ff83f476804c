"""Smoke test for the atlas_py extension module.

Build and install first, e.g. `cd crates/python && maturin develop --release`,
then run `python python/smoke_test.py` from the repository root.
"""

import json
import math
import pathlib
import tempfile

import atlas_py

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURE = ROOT / "crates" / "core" / "tests" / "fixtures" / "corpus15.jsonl"


def check_text():
    assert atlas_py.tokenize("Spike-protein binding, 2 assays!") == ["spike", "protein", "binding", "assays"]
    code, conf = atlas_py.detect_language("The virus was found in the samples that we collected from the ward.")
    assert code == "en" and conf > 0.2
    code, _ = atlas_py.detect_language("Los pacientes fueron estudiados durante el brote en la ciudad.")
    assert code == "other"


def check_tfidf():
    terms, rows = atlas_py.vectorize(["virus virus cell", "cell membrane"])
    assert terms == ["cell", "membrane", "virus"]
    # recompute with the smoothed idf by hand
    idf = {t: math.log(3 / (1 + df)) + 1 for t, df in {"cell": 2, "membrane": 1, "virus": 1}.items()}
    raw = [idf["cell"], 0.0, 2 * idf["virus"]]
    norm = math.sqrt(sum(v * v for v in raw))
    assert all(abs(a - b / norm) < 1e-12 for a, b in zip(rows[0], raw))
    for row in rows:
        assert abs(math.sqrt(sum(v * v for v in row)) - 1) < 1e-9


def check_pipeline_pieces():
    texts, truth = atlas_py.planted_topics(n_topics=3, docs_per_topic=40, tokens_per_doc=120, seed=4)
    _, x1 = atlas_py.vectorize(texts)
    pca = atlas_py.fit_pca(x1, variance_target=0.95)
    ratio = pca.explained_variance_ratio
    assert sum(ratio) >= 0.95 and sum(ratio[:-1]) < 0.95
    x2 = pca.transform(x1)
    assert len(x2) == len(texts) and len(x2[0]) == pca.n_components

    km = atlas_py.kmeans_fit(x2, 3, seed=1)
    hist = km.inertia_history
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert atlas_py.adjusted_rand_index(truth, km.labels) >= 0.9

    curve, chosen = atlas_py.elbow_sweep(x2, k_min=1, k_max=8, step=1, seed=2, n_init=4)
    assert [k for k, _ in curve] == list(range(1, 9))
    assert chosen == 3, curve

    coords, kl, trace = atlas_py.tsne_embed(x1, perplexity=10.0, n_iter=500, seed=3)
    assert len(coords) == len(texts) and all(math.isfinite(c) for xy in coords for c in xy)
    assert kl >= 0 and trace[-1][0] == 500

    try:
        atlas_py.tsne_embed(x1[:10], perplexity=30.0)
    except ValueError as e:
        assert "perplexity" in str(e)
    else:
        raise AssertionError("infeasible perplexity accepted")


def check_run_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = pathlib.Path(tmp) / "atlas.toml"
        cfg.write_text(
            f'inputs = ["{FIXTURE}"]\nk = 3\nout_dir = "out"\n'
            "[tsne]\nperplexity = 3.0\nlearning_rate = 10.0\nn_iter = 300\n"
        )
        written = atlas_py.run_pipeline("all", str(cfg))
        atlas_file = pathlib.Path(tmp) / "out" / "atlas.json"
        assert str(atlas_file) in written
        atlas = json.loads(atlas_file.read_text())
        assert atlas["schema_version"] == "1"
        assert len(atlas["points"]) == 15
        assert sum(c["size"] for c in atlas["clusters"]) == 15
        try:
            atlas_py.run_pipeline("cluster", str(cfg), out=str(pathlib.Path(tmp) / "empty"))
        except ValueError as e:
            assert "reduce" in str(e)
        else:
            raise AssertionError("cluster ran without a reduce cache")


if __name__ == "__main__":
    check_text()
    check_tfidf()
    check_pipeline_pieces()
    check_run_pipeline()
    print("atlas_py smoke test passed")
