"""End-to-end command behavior: happy-path chains and the exit-code
contract (0 ok, 2 usage, 3 bad data, 4 numeric divergence)."""

import json

import pytest

from hpc_sentinel import cli
from hpc_sentinel.mutate import synth_base_listing


def run_cli(*argv):
    try:
        return cli.main(list(argv))
    except SystemExit as exc:  # argparse errors
        return exc.code


@pytest.fixture(scope="module")
def base_asm(tmp_path_factory):
    path = tmp_path_factory.mktemp("fw") / "base.asm"
    path.write_text(synth_base_listing(seed=6), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def corpus_csv(tmp_path_factory, base_asm):
    root = tmp_path_factory.mktemp("corpus")
    mutant = root / "bad.asm"
    assert run_cli("mutate", "--base", str(base_asm), "--attack", "mppt_dos",
                   "--seed", "3", "--out", str(mutant)) == 0
    benign = root / "benign.csv"
    mal = root / "mal.csv"
    assert run_cli("extract", "--label", "benign", "--out", str(benign),
                   str(base_asm)) == 0
    assert run_cli("extract", "--label", "malicious", "--attack", "mppt_dos",
                   "--out", str(mal), str(mutant)) == 0
    merged = root / "data.csv"
    b_lines = benign.read_text().splitlines()
    m_lines = mal.read_text().splitlines()
    assert b_lines[0] == m_lines[0]
    merged.write_text("\n".join(b_lines + m_lines[1:]) + "\n")
    return merged


def test_extract_header_and_rows(corpus_csv):
    lines = corpus_csv.read_text().splitlines()
    assert lines[0].startswith("firmware_id,window_index,partial,a,b,l,n,s,aa,")
    assert lines[0].endswith(",label,attack_kind")
    assert len(lines) > 100


def test_train_eval_rank_chain(tmp_path, corpus_csv):
    model = tmp_path / "dt.json"
    assert run_cli("train", "--model", "dt", "--data", str(corpus_csv),
                   "--seed", "9", "--out", str(model)) == 0
    obj = json.loads(model.read_text())
    assert obj["kind"] == "dt"

    report = tmp_path / "report.json"
    assert run_cli("eval", "--model", str(model), "--data", str(corpus_csv),
                   "--out", str(report)) == 0
    rep = json.loads(report.read_text())
    assert set(rep["metrics"]) >= {"accuracy", "precision", "recall",
                                   "fp_rate", "fn_rate"}
    assert 0.0 <= rep["metrics"]["accuracy"] <= 1.0

    ranking = tmp_path / "rank.json"
    assert run_cli("rank", "--data", str(corpus_csv),
                   "--out", str(ranking)) == 0
    robj = json.loads(ranking.read_text())
    assert len(robj["ranking"]) == 30


def test_train_balanced_rf_and_nn(tmp_path, corpus_csv):
    rf = tmp_path / "rf.json"
    assert run_cli("train", "--model", "rf", "--data", str(corpus_csv),
                   "--trees", "10", "--balance", "--seed", "1",
                   "--out", str(rf)) == 0
    nn = tmp_path / "nn.json"
    assert run_cli("train", "--model", "nn", "--data", str(corpus_csv),
                   "--hidden", "4", "--epochs", "40", "--seed", "1",
                   "--out", str(nn)) == 0
    assert json.loads(rf.read_text())["kind"] == "rf"
    assert json.loads(nn.read_text())["kind"] == "nn"


def test_ablate_row_count(tmp_path, corpus_csv):
    out = tmp_path / "abl.csv"
    assert run_cli("ablate", "--data", str(corpus_csv), "--exclusions", "1",
                   "--seed", "2", "--out", str(out)) == 0
    # 5 single-class exclusions, each evaluated with all three model kinds
    assert len(out.read_text().splitlines()) == 1 + 15


def test_simulate_named_and_file_scenarios(tmp_path):
    out = tmp_path / "sim.csv"
    assert run_cli("simulate", "--scenario", "nominal",
                   "--out", str(out)) == 0
    assert len(out.read_text().splitlines()) == 1 + 6000

    from hpc_sentinel.mgsim import named_scenario
    spec = named_scenario("mppt_dos").to_dict()
    spec["duration_s"] = 2.0
    sc_file = tmp_path / "scenario.json"
    sc_file.write_text(json.dumps(spec))
    out2 = tmp_path / "sim2.csv"
    assert run_cli("simulate", "--scenario-file", str(sc_file),
                   "--out", str(out2)) == 0
    assert len(out2.read_text().splitlines()) == 1 + 200


def test_report_renders_charts(tmp_path):
    bundle = tmp_path / "bundle"
    bundle.mkdir()
    assert run_cli("simulate", "--scenario", "nominal",
                   "--out", str(bundle / "sim_nominal.csv")) == 0
    assert run_cli("report", "--bundle", str(bundle)) == 0
    power = bundle / "plots" / "nominal_power.svg"
    freq = bundle / "plots" / "nominal_freq.svg"
    assert power.exists() and freq.exists()
    assert power.read_text().lstrip().startswith("<svg")


# --- exit codes -----------------------------------------------------------------

def test_usage_errors_exit_2(tmp_path, corpus_csv):
    assert run_cli("no-such-command") == 2
    assert run_cli("extract", "--label", "nonsense", "--out", "x.csv",
                   "f.asm") == 2
    # malicious extraction without an attack kind, and the converse
    assert run_cli("extract", "--label", "malicious", "--out", "x.csv",
                   "f.asm") == 2
    assert run_cli("extract", "--label", "benign", "--attack", "mppt_dos",
                   "--out", "x.csv", "f.asm") == 2
    assert run_cli("simulate", "--out", str(tmp_path / "s.csv")) == 2
    assert run_cli("train", "--model", "svm", "--data", str(corpus_csv),
                   "--out", str(tmp_path / "m.json")) == 2


def test_data_errors_exit_3(tmp_path, base_asm):
    assert run_cli("extract", "--label", "benign",
                   "--out", str(tmp_path / "x.csv"),
                   str(tmp_path / "missing.asm")) == 3
    assert run_cli("train", "--model", "dt",
                   "--data", str(tmp_path / "missing.csv"),
                   "--out", str(tmp_path / "m.json")) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("firmware_id,window_index,partial,zz,label,attack_kind\n"
                   "f,0,0,1,benign,\n")
    assert run_cli("rank", "--data", str(bad),
                   "--out", str(tmp_path / "r.json")) == 3
    # mutate with an anchorless base listing
    flat = tmp_path / "flat.asm"
    flat.write_text("008000 a501 MOV AL,@VarA\n")
    assert run_cli("mutate", "--base", str(flat), "--attack", "mppt_dos",
                   "--out", str(tmp_path / "m.asm")) == 3
    # scenario file that is not valid JSON
    bad_json = tmp_path / "scenario.json"
    bad_json.write_text("{not json")
    assert run_cli("simulate", "--scenario-file", str(bad_json),
                   "--out", str(tmp_path / "s.csv")) == 3


def test_numeric_divergence_exits_4(tmp_path, corpus_csv):
    assert run_cli("train", "--model", "nn", "--data", str(corpus_csv),
                   "--lr", "1e12", "--epochs", "60",
                   "--out", str(tmp_path / "nn.json")) == 4


def test_reproduce_smoke(tmp_path):
    out = tmp_path / "bundle"
    assert run_cli("reproduce", "--seed", "7", "--out", str(out)) == 0
    files = {p.name for p in out.iterdir() if p.is_file()}
    assert len(files) == 20
    assert "summary.md" in files and "dataset.csv" in files
