import json

import pytest

from deepshallow.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main, parse_network, parse_seeds


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def problems(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["gen", "--size", "A", "--seeds", "15", "--out", str(out)]) == EXIT_OK
    return out / "problems"


def test_gen_writes_45_problem_files(problems):
    files = sorted(problems.glob("A_*_seed*.npz"))
    assert len(files) == 45
    manifest = json.loads((problems / "manifest.json").read_text())
    assert len(manifest["problems"]) == 45


def test_gen_manifest_is_reproducible(problems, tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "--size", "a", "--out", tmp_path, "--no-arrays")
    assert code == EXIT_OK
    a = json.loads((problems / "manifest.json").read_text())
    b = json.loads((tmp_path / "problems" / "manifest.json").read_text())
    assert [p["sha256"] for p in a["problems"]] == [p["sha256"] for p in b["problems"]]


def test_gen_master_seed_shifts_seeds(tmp_path, capsys):
    run(capsys, "gen", "--seeds", "2", "--master-seed", "7", "--out", tmp_path, "--no-arrays")
    names = sorted(p.name for p in (tmp_path / "problems").glob("*.json") if p.name != "manifest.json")
    assert names[:2] == ["A_1_seed7.json", "A_1_seed8.json"]


def test_invalid_size_is_a_config_error(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "--size", "Q", "--out", tmp_path)
    assert code == EXIT_CONFIG and "Q" in err


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('size = "A"\nseeds = "3"\nmaster-seed = 4\n')
    run(capsys, "--config", cfg, "gen", "--seeds", "1", "--out", tmp_path, "--no-arrays")
    manifest = json.loads((tmp_path / "problems" / "manifest.json").read_text())
    assert manifest["config"]["seeds"] == [4]
    assert manifest["config"]["master_seed"] == 4


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("size = \n")
    code, _, _ = run(capsys, "--config", cfg, "gen", "--out", tmp_path)
    assert code == EXIT_CONFIG
    code, _, _ = run(capsys, "--config", tmp_path / "missing.toml", "gen", "--out", tmp_path)
    assert code == EXIT_IO


def test_fit_self_fit_cg(problems, tmp_path, capsys):
    out = tmp_path / "trace.json"
    code, text, _ = run(capsys, "fit", problems / "A_1_seed0.npz", "--method", "cg", "--out", out)
    assert code == EXIT_OK
    printed = dict(line.split(None, 1) for line in text.splitlines() if line.startswith("f_"))
    assert float(printed["f_opt"]) < 1e-3 * float(printed["f_init"])
    trace = json.loads(out.read_text())["trace"]
    assert trace["f_opt"] < 1e-3 * trace["f_init"]


def test_fit_budget_one(problems, tmp_path, capsys):
    code, text, _ = run(capsys, "fit", problems / "A_3_seed1.npz", "--method", "rmsprop",
                        "--budget", 1, "--out", tmp_path / "t.json")
    assert code == EXIT_OK
    assert "gradient calls  1\n" in text


def test_fit_cross_network(problems, tmp_path, capsys):
    code, _, _ = run(capsys, "fit", problems / "A_1_seed2.npz", "--network", "A_5",
                     "--method", "sgd", "--budget", 3, "--out", tmp_path / "t.json")
    assert code == EXIT_OK
    rec = json.loads((tmp_path / "t.json").read_text())
    assert rec["network_arch"]["hidden_count"] == 5


def test_fit_dimension_mismatch_names_both_shapes(problems, capsys):
    code, _, err = run(capsys, "fit", problems / "A_1_seed0.npz", "--network", "300:60x1:150")
    assert code == EXIT_CONFIG
    assert "300 -> 150" in err and "(80, 100)" in err and "(80, 50)" in err


def test_fit_missing_problem_file(tmp_path, capsys):
    code, _, _ = run(capsys, "fit", tmp_path / "nope.npz")
    assert code == EXIT_IO


def test_crosscheck_and_report(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DEEPSHALLOW_OUT", str(tmp_path / "env_out"))
    code, text, _ = run(capsys, "crosscheck", "--seeds", "2", "--budget", "15",
                        "--workers", 1, "--format", "txt")
    assert code == EXIT_OK
    out = tmp_path / "env_out"
    store = out / "results.jsonl"
    assert store.exists()
    detail_md = (out / "detail.md").read_text()
    assert len(detail_md.splitlines()) == 2 + 28
    assert len((out / "summary.md").read_text().splitlines()) == 2 + 2
    assert "Ratio Deep/Shallow" in text

    # re-rendering from the store reproduces the written tables byte for byte
    code, md, _ = run(capsys, "report", store, "--format", "md", "--table", "detail")
    assert code == EXIT_OK and md == detail_md
    code, csv_text, _ = run(capsys, "report", store, "--format", "csv", "--table", "summary")
    assert csv_text == (out / "summary.csv").read_text()


def test_report_on_empty_store(tmp_path, capsys):
    store = tmp_path / "results.jsonl"
    store.write_text("")
    code, _, err = run(capsys, "report", store)
    assert code != EXIT_OK and "empty" in err


def test_unknown_method_is_config_error(tmp_path, capsys):
    code, _, err = run(capsys, "crosscheck", "--methods", "cg,adam", "--out", tmp_path)
    assert code == EXIT_CONFIG and "adam" in err


def test_parse_helpers():
    assert parse_seeds("3", 10) == [10, 11, 12]
    assert parse_seeds("5,1,9", 0) == [5, 1, 9]
    arch = parse_network("100:16x3:50", 1.5)
    assert (arch.input_dim, arch.hidden_width, arch.hidden_count, arch.output_dim) == (100, 16, 3, 50)
    assert parse_network("B_5", 1.5).hidden_width == 43
