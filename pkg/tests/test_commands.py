import math

import numpy as np
import pytest

from app.commands.torsion import cmd_torsion
from app.core.errors import ContractViolation
from app.core.render import render_summary
from app.core.settings import EXIT_OK, EXIT_USAGE
from app.main import main
from app.services import storage
from app.services.adiabatic_lab import FAIL, INFO, ExperimentReport
from app.services.model_spectra import CircleGeometry, circle_hodge_spectrum

SMALL = "discretization.N = 8\ndiscretization.max_mode = 50\ndiscretization.cutoff = 4\n"


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL, encoding="utf-8")
    return path


def test_verify_selected_tags(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["verify", "--only", "clifford-identities,hodge-star", "--out", str(out), "--seed", "5"]) == EXIT_OK
    for name in ("clifford-identities.csv", "clifford-identities.json", "hodge-star.json", "verdicts.json",
                 "summary.md"):
        assert (out / name).exists(), name
    verdicts = storage.read_json(out / "verdicts.json")
    assert verdicts["clifford-identities"]["verdict"] == "pass"
    assert "seed = 5" in (out / "summary.md").read_text(encoding="utf-8")
    assert "2/2 reports passed" in capsys.readouterr().out


def test_verify_numerical_tags(tmp_path, config_file, capsys):
    out = tmp_path / "out"
    tags = "contour-heat,mckean-singer,fiber-decay"
    assert main(["verify", "--config", str(config_file), "--only", tags, "--out", str(out)]) == EXIT_OK
    verdicts = storage.read_json(out / "verdicts.json")
    assert sorted(verdicts) == sorted(tags.split(","))
    assert {summary["verdict"] for summary in verdicts.values()} == {"pass"}
    assert "3/3 reports passed" in capsys.readouterr().out


def test_missing_config_is_a_usage_error(tmp_path):
    assert main(["verify", "--config", str(tmp_path / "nope.cfg")]) == EXIT_USAGE


@pytest.mark.parametrize("argv", [["frobnicate"], ["verify", "--only", "no-such-tag"], ["verify", "--jobs", "0"]])
def test_bad_arguments_exit_with_usage(argv):
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    assert excinfo.value.code == EXIT_USAGE


def test_spectrum_files(tmp_path, config_file):
    out = tmp_path / "out"
    assert main(["spectrum", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    assert sorted(p.name for p in out.glob("spectrum_*.csv")) == [
        "spectrum_base.csv", "spectrum_fiber.csv", "spectrum_product.csv"]
    base = storage.read_spectrum_csv(out / "spectrum_base.csv")
    assert base.kernel_dimensions() == (1, 1)
    assert len(base) == len(circle_hodge_spectrum(CircleGeometry(2 * math.pi), 50))
    d0 = storage.read_coo_matrix(out / "circle_d0.coo")
    assert d0.shape == (8, 8)
    assert storage.read_json(out / "circle_dirac.json")["degrees"] == [0] * 8 + [1] * 8
    fiber = storage.read_json(out / "fiber_dirac.json")
    # basis 4 on the plane: 10 functions, 12 one-forms, 3 two-forms
    assert sorted(fiber["degrees"]).count(1) == 12
    assert len(fiber["degrees"]) == fiber["shape"][0] == 25
    assert (out / "clifford_c_e1.txt").exists()


def test_spectrum_writes_the_twisted_product(tmp_path, config_file):
    config_file.write_text(SMALL + "geometry.alpha = 3.141592653589793\n", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["spectrum", "--config", str(config_file), "--out", str(out)]) == EXIT_OK
    assert (out / "spectrum_twisted.csv").exists()


def test_torsion_methods_agree(small_config):
    assert cmd_torsion(small_config) == EXIT_OK
    out = small_config.output.dir
    point = storage.read_json(out / "main_theorem.json")
    assert point["log_torsion_M"] == pytest.approx(-math.log(2 * math.pi), abs=1e-12)
    assert storage.read_json(out / "torsion_M.json")["difference"] <= 1e-3


class TestStorage:

    def test_json_keeps_non_finite_values_readable(self, tmp_path):
        path = storage.write_json(tmp_path / "x.json", {"a": math.nan, "b": np.float64(0.1), "c": (1, 2)})
        assert storage.read_json(path) == {"a": "nan", "b": 0.1, "c": [1, 2]}

    def test_coo_matrix_reads_back(self, tmp_path):
        matrix = np.array([[0.0, 1.5], [-2.0, 0.0]])
        storage.write_coo_matrix(tmp_path, "m", matrix, {"note": "demo"}, degrees=np.array([0, 1]))
        assert np.array_equal(storage.read_coo_matrix(tmp_path / "m.coo").toarray(), matrix)
        descriptor = storage.read_json(tmp_path / "m.json")
        assert descriptor["nnz"] == 2
        assert descriptor["degrees"] == [0, 1]

    def test_degree_labels_must_cover_the_basis(self, tmp_path):
        with pytest.raises(ContractViolation):
            storage.write_coo_matrix(tmp_path, "m", np.eye(3), degrees=[0, 1])

    def test_spectrum_csv_header_is_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("degree,eigenvalue\n0,1.0\n", encoding="utf-8")
        with pytest.raises(ContractViolation):
            storage.read_spectrum_csv(path)

    def test_report_files(self, tmp_path):
        report = ExperimentReport("demo")
        report.add("p", {"epsilon": 0.5}, 1.0, 0.0, 0.1)
        report.add("q", {}, 2.0, 0.0, math.inf, INFO)
        csv_path, json_path = storage.write_report(tmp_path, report)
        assert csv_path.read_text(encoding="utf-8").splitlines()[0] == "point,params,observed,predicted,budget,verdict,note"
        summary = storage.read_json(json_path)
        assert summary["verdict"] == FAIL and summary["failing"] == ["p"]


def test_summary_lists_acceptance_and_extras():
    good = ExperimentReport("good")
    good.add("p", {}, 0.0, 0.0, 0.0)
    extra = ExperimentReport("extra", acceptance=False)
    extra.add("p", {}, 1.0, 0.0, 0.0)
    extra.slopes["rate"] = 1.25
    text = render_summary([good, extra], title="demo")
    assert text.startswith("# demo")
    assert "Overall: **pass**" in text
    assert "| extra | fail | 1 | p |" in text
    assert "slope `rate` = 1.25" in text
