import json
import math

import numpy as np
import pytest

from conftest import PlantedPredictor

from affectgen.corpus import CorpusSpec, generate_corpus
from affectgen.extractor import FeatureExtractor, WindowConfig
from affectgen.metrics import (MetricsReport, ScatterRow, ccc, evaluate_system,
                               frechet_distance, pearson_r, r_squared,
                               read_scatter_csv, write_scatter_csv)


def brute_pearson(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    sx = math.sqrt(sum((a - mx) ** 2 for a in x) / n)
    sy = math.sqrt(sum((b - my) ** 2 for b in y) / n)
    return cov / (sx * sy)


def brute_ccc(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    return 2 * cov / (vx + vy + (mx - my) ** 2)


def brute_r2(y_true, y_pred):
    m = sum(y_true) / len(y_true)
    ss_res = sum((t - p) ** 2 for t, p in zip(y_true, y_pred))
    ss_tot = sum((t - m) ** 2 for t in y_true)
    return 1 - ss_res / ss_tot


class TestPearson:
    def test_exact_linear_relations(self):
        assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson_r([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(2, 50))
            x = rng.standard_normal(n)
            y = rng.standard_normal(n)
            assert abs(pearson_r(x, y) - brute_pearson(list(x), list(y))) < 1e-10

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="zero-variance"):
            pearson_r([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_affine_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(40)
        y = rng.standard_normal(40)
        base = pearson_r(x, y)
        assert abs(pearson_r(3.0 * x + 7.0, y) - base) < 1e-10
        assert abs(pearson_r(x, 0.2 * y - 4.0) - base) < 1e-10

    def test_estimates_known_gaussian_correlation(self):
        rho = 0.6
        rng = np.random.default_rng(2)
        n = 10_000
        x = rng.standard_normal(n)
        y = rho * x + math.sqrt(1 - rho ** 2) * rng.standard_normal(n)
        se = (1 - rho ** 2) / math.sqrt(n)
        assert abs(pearson_r(x, y) - rho) < 3 * se


class TestRSquared:
    def test_perfect_fit(self):
        assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)

    def test_mean_baseline_is_zero(self):
        assert r_squared([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == pytest.approx(0.0)

    def test_can_go_negative(self):
        assert r_squared([1.0, 2.0, 3.0], [3.0, 3.0, 3.0]) == pytest.approx(-1.5)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n = int(rng.integers(2, 50))
            y = rng.standard_normal(n)
            p = rng.standard_normal(n)
            assert abs(r_squared(y, p) - brute_r2(list(y), list(p))) < 1e-10

    def test_never_exceeds_one(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            y = rng.standard_normal(10)
            p = rng.standard_normal(10)
            assert r_squared(y, p) <= 1.0

    def test_not_affine_invariant(self):
        y = [1.0, 2.0, 3.0]
        p = [1.1, 2.0, 2.9]
        assert abs(r_squared(y, p) - r_squared(y, [3 * v for v in p])) > 1e-3

    def test_constant_truth_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            r_squared([2.0, 2.0], [1.0, 3.0])


class TestCcc:
    def test_self_agreement(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(20)
        assert ccc(x, x) == pytest.approx(1.0)

    def test_perfect_discordance(self):
        assert ccc([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)

    def test_constant_input_rejected(self):
        with pytest.raises(ValueError, match="zero-variance"):
            ccc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            n = int(rng.integers(2, 50))
            x = rng.standard_normal(n)
            y = rng.standard_normal(n)
            assert abs(ccc(x, y) - brute_ccc(list(x), list(y))) < 1e-10

    def test_magnitude_bounded_by_pearson(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(3, 40))
            x = rng.standard_normal(n) * rng.uniform(0.1, 3.0) + rng.uniform(-2, 2)
            y = rng.standard_normal(n) * rng.uniform(0.1, 3.0) + rng.uniform(-2, 2)
            assert abs(ccc(x, y)) <= abs(pearson_r(x, y)) + 1e-12

    def test_symmetric(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(25)
        y = rng.standard_normal(25)
        assert abs(ccc(x, y) - ccc(y, x)) < 1e-12


class TestFrechet:
    def test_identical_sets_give_zero(self):
        x = np.random.default_rng(9).standard_normal((40, 6))
        assert frechet_distance(x, x) <= 1e-8

    def test_univariate_mean_shift(self):
        # fitted moments: mean 0 / std 1 vs mean 1 / std 1; eps shrunk because
        # the diagonal regularization biases the exact closed form by ~eps
        x = np.array([[-1.0], [1.0]])
        y = np.array([[0.0], [2.0]])
        assert frechet_distance(x, y, eps=1e-8) == pytest.approx(1.0, abs=1e-6)

    def test_univariate_scale_gap(self):
        x = np.array([[-1.0], [1.0]])
        y = np.array([[-3.0], [3.0]])
        assert frechet_distance(x, y, eps=1e-8) == pytest.approx(4.0, abs=1e-6)

    def test_default_eps_bias_is_of_eps_order(self):
        x = np.array([[-1.0], [1.0]])
        y = np.array([[-3.0], [3.0]])
        assert frechet_distance(x, y) == pytest.approx(4.0, abs=1e-5)

    def test_symmetric_and_non_negative(self):
        rng = np.random.default_rng(10)
        for _ in range(25):
            x = rng.standard_normal((int(rng.integers(3, 30)), 5))
            y = rng.standard_normal((int(rng.integers(3, 30)), 5)) + rng.uniform(-1, 1)
            d_xy = frechet_distance(x, y)
            d_yx = frechet_distance(y, x)
            assert d_xy >= 0.0
            assert abs(d_xy - d_yx) < 1e-8

    def test_rank_deficient_sets_survive(self):
        # fewer samples than dimensions: covariance is singular
        rng = np.random.default_rng(11)
        x = rng.standard_normal((3, 8))
        y = rng.standard_normal((4, 8))
        assert frechet_distance(x, y) >= 0.0

    def test_input_validation(self):
        good = np.zeros((3, 2))
        with pytest.raises(ValueError, match="at least 2"):
            frechet_distance(good[:1], good)
        with pytest.raises(ValueError, match="dims differ"):
            frechet_distance(np.zeros((3, 2)), np.zeros((3, 3)))
        bad = good.copy()
        bad[0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            frechet_distance(bad, good)


class TestReportSerialization:
    def make_report(self):
        return MetricsReport(system_name="demo", fd=0.5, r_a=0.9, r_v=0.8,
                             r2_a=0.7, r2_v=-0.2, ccc_a=0.85, ccc_v=0.75,
                             n_clips=100, seed=3)

    def test_json_round_trip(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "report.json"
        report.save_json(path)
        assert MetricsReport.load_json(path) == report
        keys = list(json.loads(path.read_text()))
        assert keys == list(report.to_dict())

    def test_extra_field_rejected(self):
        data = self.make_report().to_dict()
        data["bogus"] = 1
        with pytest.raises(ValueError, match="bogus"):
            MetricsReport.from_dict(data)

    def test_missing_field_rejected(self):
        data = self.make_report().to_dict()
        del data["fd"]
        with pytest.raises(ValueError, match="fd"):
            MetricsReport.from_dict(data)

    def test_scatter_csv_round_trip(self, tmp_path):
        rows = [ScatterRow("c1", 1.0, 2.0, 1.5, 2.5),
                ScatterRow("c2", 9.0, 8.0, 8.5, 7.5)]
        path = tmp_path / "scatter.csv"
        write_scatter_csv(rows, path)
        assert path.read_text().splitlines()[0] == "clip_id,v_true,a_true,v_pred,a_pred"
        assert read_scatter_csv(path) == rows


@pytest.fixture(scope="module")
def eval_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("eval_corpus")
    spec = CorpusSpec(n_clips=100, seed=5, vocab_size=64, clip_len=256)
    return generate_corpus(spec, out), spec


class TestEvaluateSystem:
    def oracle(self, spec):
        extractor = FeatureExtractor(spec.vocab_size, WindowConfig(32, 32), d_feat=24)
        return PlantedPredictor(extractor)

    def test_reference_against_itself_with_oracle(self, eval_corpus):
        manifest, spec = eval_corpus
        report, rows = evaluate_system(manifest, self.oracle(spec), manifest,
                                       system_name="oracle-self")
        assert report.fd <= 1e-8
        assert report.r_a >= 0.95 and report.r_v >= 0.95
        assert report.n_clips == len(rows) == 100

    def test_accepts_directory_as_manifest_location(self, eval_corpus):
        manifest, spec = eval_corpus
        report, _ = evaluate_system(manifest.parent, self.oracle(spec), manifest.parent)
        assert report.n_clips == 100

    def test_missing_generated_dir_fails(self, tmp_path, eval_corpus):
        manifest, spec = eval_corpus
        with pytest.raises(FileNotFoundError, match="manifest"):
            evaluate_system(tmp_path / "nowhere", self.oracle(spec), manifest)

    def test_unreadable_clip_excluded_and_counted(self, tmp_path, eval_corpus, caplog):
        manifest, spec = eval_corpus
        import shutil
        clone = tmp_path / "clone"
        shutil.copytree(manifest.parent, clone)
        victim = sorted((clone / "tokens").iterdir())[0]
        victim.unlink()
        with caplog.at_level("WARNING"):
            report, rows = evaluate_system(clone, self.oracle(spec), manifest)
        assert report.n_clips == 99
        assert "excluded 1" in caplog.text

    def test_extractor_seed_mismatch_is_hard_error(self, tmp_path, eval_corpus):
        manifest, spec = eval_corpus
        lines = manifest.read_text().splitlines()
        rows = [json.loads(line) for line in lines]
        for row in rows:
            row["extractor_seed"] = 99
        clone = tmp_path / "mismatch"
        import shutil
        shutil.copytree(manifest.parent, clone)
        (clone / "manifest.jsonl").write_text(
            "\n".join(json.dumps(r) for r in rows) + "\n")
        with pytest.raises(RuntimeError, match="extractor seed mismatch"):
            evaluate_system(clone, self.oracle(spec), manifest)
