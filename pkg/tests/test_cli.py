import csv
import subprocess
import sys

import numpy as np
import pytest

from conftest import texture_pair, tree_bytes, write_pgm
from mweica.cli import main, read_meta
from mweica.evaluation import match_sources
from mweica.independence import independence_index
from mweica.io_harness import load_csv, load_image_gray, save_csv, synth_sources


@pytest.fixture
def sources_csv(tmp_path):
    S = synth_sources("uniform", 5000, 2, seed=3).data
    path = tmp_path / "sources.csv"
    save_csv(S, path, names=["s0", "s1"])
    return S, path


@pytest.fixture
def images(tmp_path):
    paths = []
    for i, img in enumerate(texture_pair()):
        p = tmp_path / f"tex{i}.pgm"
        write_pgm(p, img)
        paths.append(p)
    return paths


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestMix:
    def test_csv(self, tmp_path, sources_csv):
        S, src = sources_csv
        out = tmp_path / "mix"
        assert main(["mix", str(src), "--seed", "7", "--out", str(out)]) == 0
        meta = read_meta(out / "meta.txt")
        assert meta["seed"] == "7"
        assert float(meta["condition"]) <= 20
        A = load_csv(out / "A.csv").data
        np.testing.assert_allclose(load_csv(out / "mixed.csv").data, S @ A.T, rtol=1e-15)

    def test_images(self, tmp_path, images):
        out = tmp_path / "mix"
        assert main(["mix", *map(str, images), "--seed", "7", "--out", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["A.csv", "meta.txt", "mixed_0.pgm", "mixed_1.pgm"]
        assert load_image_gray(out / "mixed_0.pgm").image_shape == (64, 64)

    def test_mismatched_lengths(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        save_csv(np.ones((5, 1)), a)
        save_csv(np.ones((6, 1)), b)
        out = tmp_path / "mix"
        assert main(["mix", str(a), str(b), "--out", str(out)]) == 2
        assert "mismatched input lengths" in capsys.readouterr().err
        assert list(out.iterdir()) == []

    def test_mixed_media(self, tmp_path, images, sources_csv):
        out = tmp_path / "mix"
        assert main(["mix", str(images[0]), str(sources_csv[1]), "--out", str(out)]) == 2
        assert list(out.iterdir()) == []


class TestUnmix:
    def test_end_to_end(self, tmp_path, sources_csv):
        S, src = sources_csv
        mixed = tmp_path / "mix"
        main(["mix", str(src), "--seed", "1", "--out", str(mixed)])
        for method, floor in [("mweica", 0.95), ("weica", 0.5), ("fastica", 0.95)]:
            out = tmp_path / method
            assert main(["unmix", str(mixed / "mixed.csv"), "--method", method, "--out", str(out),
                         "--reference", str(src)]) == 0
            est = load_csv(out / "source.csv").data
            assert match_sources(est, S).mean_abs_congruence >= floor
            meta = read_meta(out / "meta.txt")
            assert float(meta["matched_abs_congruence"]) >= floor
            assert meta["method"] == method
            assert load_csv(out / "W.csv").data.shape == (2, 2)

    def test_unreadable_input(self, tmp_path):
        out = tmp_path / "out"
        assert main(["unmix", str(tmp_path / "missing.csv"), "--out", str(out)]) == 2
        assert list(out.iterdir()) == []

    def test_algorithm_failure(self, tmp_path):
        p = tmp_path / "tiny.csv"
        save_csv([[0.0, 0.0], [1.0, 2.0], [1e6, 0.0], [0.0, 1e6]], p)
        out = tmp_path / "out"
        assert main(["unmix", str(p), "--n-weights", "4", "--out", str(out)]) == 3
        assert list(out.iterdir()) == []

    def test_jobs_do_not_change_outputs(self, tmp_path, sources_csv):
        _, src = sources_csv
        main(["unmix", str(src), "--out", str(tmp_path / "a")])
        main(["unmix", str(src), "--jobs", "3", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "W.csv").read_bytes() == (tmp_path / "b" / "W.csv").read_bytes()


class TestIndex:
    def test_paired(self, tmp_path, sources_csv, capsys):
        _, src = sources_csv
        mixed = tmp_path / "mix"
        main(["mix", str(src), "--seed", "2", "--out", str(mixed)])
        main(["index", str(src), "--out", str(tmp_path / "i0")])
        main(["index", str(mixed / "mixed.csv"), "--out", str(tmp_path / "i1")])
        lines = capsys.readouterr().out.split()
        small, large = (float(line.split("=")[1]) for line in lines)
        assert small < large
        rows = read_rows(tmp_path / "i0" / "index.csv")
        assert len(rows) == 32
        assert np.mean([float(r["diag_error"]) for r in rows]) == pytest.approx(small, abs=1e-12)

    def test_single_point(self, tmp_path, sources_csv, capsys):
        S, src = sources_csv
        main(["index", str(src), "--n-weights", "1", "--seed", "4", "--out", str(tmp_path / "i")])
        value = float(capsys.readouterr().out.split("=")[1])
        assert value == pytest.approx(independence_index(S, n=1, seed=4).per_point[0], abs=1e-15)


class TestBench:
    def test_outputs_and_ranking(self, tmp_path):
        out = tmp_path / "bench"
        assert main(["bench", "--trials", "6", "--samples", "4000", "--out", str(out)]) == 0
        scores = read_rows(out / "scores.csv")
        assert len(scores) == 18
        ranks = {r["method"]: r for r in read_rows(out / "ranks.csv")}
        assert float(ranks["mweica"]["median"]) <= float(ranks["weica"]["median"])
        assert not (out / "timing.csv").exists()

    def test_single_trial(self, tmp_path):
        out = tmp_path / "bench"
        assert main(["bench", "--trials", "1", "--samples", "500", "--method", "mweica,weica",
                     "--out", str(out)]) == 0
        rows = read_rows(out / "ranks.csv")
        assert {r["method"] for r in rows} == {"mweica", "weica"}
        assert all(r["q1"] == r["median"] == r["q3"] == r["mean_rank"] for r in rows)

    def test_timing_grows_with_k(self, tmp_path):
        out = tmp_path / "bench"
        assert main(["bench", "--trials", "3", "--samples", "1000,10000,100000", "--method", "mweica",
                     "--n-weights", "16", "--dim", "4", "--timing", "--out", str(out)]) == 0
        rows = read_rows(out / "timing.csv")
        medians = [np.median([float(r["unmix_seconds"]) for r in rows if r["k"] == str(k)])
                   for k in (1000, 10000, 100000)]
        assert medians == sorted(medians)

    def test_bad_method(self, tmp_path):
        assert main(["bench", "--method", "pca", "--out", str(tmp_path / "b")]) == 2


class TestDeterminism:
    def test_every_command_repeats_bytewise(self, tmp_path, sources_csv, images):
        _, src = sources_csv
        runs = {
            "mix": ["mix", *map(str, images), "--seed", "7"],
            "unmix": ["unmix", str(src), "--seed", "5", "--jobs", "2"],
            "index": ["index", str(src), "--seed", "5"],
            "bench": ["bench", "--trials", "3", "--samples", "2000", "--jobs", "2"],
        }
        for name, argv in runs.items():
            trees = []
            for rep in range(2):
                out = tmp_path / f"{name}{rep}"
                assert main(argv + ["--out", str(out)]) == 0
                trees.append(tree_bytes(out))
            assert trees[0] == trees[1], name


def test_module_entry_point(tmp_path, sources_csv):
    _, src = sources_csv
    proc = subprocess.run([sys.executable, "-m", "mweica", "index", str(src), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("index=")
