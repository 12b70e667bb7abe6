import json
import math
import subprocess
import sys

from netrecon.cli import main


def run(argv):
    return main([str(a) for a in argv])


def synth(tmp_path, name="data.txt", *extra):
    path = tmp_path / name
    args = ["synth", "--n", 60, "--alpha", 0.42, "--beta", 0.004, "--rho", 0.034, "--trials", 8,
            "--seed", 1, "--no-timestamp", "--output", path, *extra]
    assert run(args) == 0
    return path


def infer(tmp_path, data, name="fit.json", *extra):
    out = tmp_path / name
    code = run(["infer", "--input", data, "--no-timestamp", "--output", out, *extra])
    return code, out


def all_finite(obj):
    if isinstance(obj, dict):
        return all(all_finite(v) for v in obj.values())
    if isinstance(obj, list):
        return all(all_finite(v) for v in obj)
    if isinstance(obj, float):
        return math.isfinite(obj)
    return True


def test_infer_document(tmp_path):
    data = synth(tmp_path)
    code, out = infer(tmp_path, data)
    assert code == 0
    doc = json.loads(out.read_text())
    for key in ("manifest", "parameters", "rates", "edges", "convergence", "posterior", "nodes"):
        assert key in doc
    assert doc["manifest"]["inputs"][0]["sha256"]
    assert "wall_clock_seconds" not in doc["manifest"]
    qs = [e["q"] for e in doc["edges"]]
    assert qs == sorted(qs, reverse=True) and min(qs) >= 0.5
    assert doc["rates"]["false_discovery_rate"] + doc["rates"]["precision"] == 1.0
    assert all_finite(doc)
    members = sum(c["member_count"] for c in doc["posterior"]["classes"])
    assert members == 60 * 59 // 2


def test_infer_is_byte_identical(tmp_path):
    data = synth(tmp_path)
    _, a = infer(tmp_path, data, "a.json")
    _, b = infer(tmp_path, data, "b.json")
    assert a.read_bytes() == b.read_bytes()


def test_timestamp_present_by_default(tmp_path):
    data = synth(tmp_path)
    out = tmp_path / "t.json"
    assert run(["infer", "--input", data, "--output", out]) == 0
    assert "wall_clock_seconds" in json.loads(out.read_text())["manifest"]


def test_threshold_above_one(tmp_path):
    data = synth(tmp_path)
    code, out = infer(tmp_path, data, "x.json", "--q-threshold", 1.1)
    assert code == 0 and json.loads(out.read_text())["edges"] == []


def test_pernode_on_undirected_is_contract_error(tmp_path, capsys):
    data = synth(tmp_path)
    code, _ = infer(tmp_path, data, "x.json", "--model", "pernode")
    err = capsys.readouterr().err
    assert code == 1
    assert len(err.strip().splitlines()) == 1 and "directed" in err


def test_parse_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("#default_N 3\na b 1 3\na c 5 3\n")
    code, _ = infer(tmp_path, bad)
    assert code == 1 and "line 3" in capsys.readouterr().err
    assert run(["infer", "--input", tmp_path / "missing.txt"]) == 1


def test_max_iter_exit_code(tmp_path):
    data = synth(tmp_path)
    code, out = infer(tmp_path, data, "x.json", "--max-iter", 1, "--restarts", 1)
    assert code == 2
    assert json.loads(out.read_text())["convergence"]["converged"] is False


def test_noiseless_round_trip(tmp_path):
    data = tmp_path / "clean.txt"
    assert run(["synth", "--n", 30, "--alpha", 1, "--beta", 0, "--rho", 0.1, "--trials", 4, "--seed", 2,
                "--output", data]) == 0
    truth = json.loads((tmp_path / "clean.txt.truth.json").read_text())
    code, out = infer(tmp_path, data, "x.json", "--q-threshold", 0.99)
    doc = json.loads(out.read_text())
    found = sorted(sorted((e["u"], e["v"])) for e in doc["edges"])
    assert found == sorted(sorted(p) for p in truth["truth_edges"])


def test_synth_zero_prior_and_determinism(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    for path in (a, b):
        assert run(["synth", "--n", 10, "--alpha", 0.5, "--rho", 0, "--trials", 3,
                    "--output", path, "--no-timestamp"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = [ln for ln in a.read_text().splitlines() if not ln.startswith("#")]
    assert rows == []


def test_synth_invalid_range(tmp_path, capsys):
    assert run(["synth", "--n", 10, "--alpha", 1.5, "--rho", 0.1, "--output", tmp_path / "x"]) == 1
    assert "alpha" in capsys.readouterr().err


def test_synth_pernode_and_reports(tmp_path):
    data = tmp_path / "rep.txt"
    assert run(["synth", "--model", "pernode", "--n", 30, "--alpha", "0.4,0.9", "--beta", "0,0.02",
                "--rho", 0.05, "--output", data]) == 0
    code, out = infer(tmp_path, data, "x.json", "--model", "pernode", "--format", "reports", "--restarts", 1)
    assert code == 0
    doc = json.loads(out.read_text())
    assert len(doc["parameters"]["alpha"]) == 30
    assert len(doc["rates"]["false_discovery_rate"]) == 30
    assert doc["posterior"]["storage"] == "pairs"


def test_snapshot_and_nodes(tmp_path):
    log = tmp_path / "log.txt"
    log.write_text("d1 a b\nd2 a b\nd1 b c\nd2 c d\n")
    nodes = tmp_path / "nodes.txt"
    nodes.write_text("e\n")
    code, out = infer(tmp_path, log, "x.json", "--format", "snapshots", "--nodes", nodes, "--restarts", 1)
    assert code in (0, 2)
    doc = json.loads(out.read_text())
    assert doc["nodes"] == ["a", "b", "c", "d", "e"]
    assert len(doc["manifest"]["inputs"]) == 2


def test_multimodal_counts(tmp_path):
    data = tmp_path / "mm.txt"
    assert run(["synth", "--model", "multimodal", "--n", 30, "--alpha", "0.5,0.7", "--beta", "0.02,0.05",
                "--rho", 0.1, "--trials", "3,4", "--output", data]) == 0
    code, out = infer(tmp_path, data, "x.json", "--model", "multimodal", "--modes", 2, "--restarts", 1)
    assert code == 0
    assert len(json.loads(out.read_text())["parameters"]["alpha"]) == 2


def test_sample_command(tmp_path):
    data = synth(tmp_path)
    _, fit = infer(tmp_path, data)
    doc = json.loads(fit.read_text())
    out = tmp_path / "s.txt"
    M = 2000
    assert run(["sample", "--posterior", fit, "--count", M, "--seed", 3, "--metric", "edges",
                "--metric", "degree:0", "--output", out]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == f"# manifest seed=3 count={M}"
    metric = [ln for ln in lines if ln.startswith("# metric edges")][0]
    fields = dict(kv.split("=") for kv in metric.split()[3:])
    total_q = sum(c["q"] * c["member_count"] for c in doc["posterior"]["classes"])
    var = float(fields["variance"])
    assert abs(float(fields["mean"]) - total_q) <= 4 * math.sqrt(var / M)
    again = tmp_path / "s2.txt"
    run(["sample", "--posterior", fit, "--count", M, "--seed", 3, "--metric", "edges",
         "--metric", "degree:0", "--output", again])
    assert again.read_bytes() == out.read_bytes()


def test_sample_complete_graph(tmp_path):
    fit = tmp_path / "q.json"
    fit.write_text(json.dumps({"nodes": ["a", "b", "c"],
                               "posterior": {"kind": "binary", "storage": "pairs",
                                             "pairs": [["a", "b", 1.0], ["a", "c", 1.0], ["b", "c", 1.0]]}}))
    out = tmp_path / "s.txt"
    assert run(["sample", "--posterior", fit, "--count", 1, "--output", out]) == 0
    assert out.read_text().splitlines()[1:] == ["0 a b", "0 a c", "0 b c"]


def test_sample_errors(tmp_path, capsys):
    data = synth(tmp_path)
    _, fit = infer(tmp_path, data)
    assert run(["sample", "--posterior", fit, "--count", 0]) == 1
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"nodes": ["a", "b"]}))
    assert run(["sample", "--posterior", broken, "--count", 2]) == 1
    assert "posterior" in capsys.readouterr().err
    assert run(["sample", "--posterior", fit, "--count", 2, "--metric", "bogus"]) == 1


def test_gof_with_params(tmp_path):
    data = synth(tmp_path)
    _, fit = infer(tmp_path, data)
    out = tmp_path / "g.json"
    table = tmp_path / "h.tsv"
    assert run(["gof", "--input", data, "--params", fit, "--output", out, "--table", table,
                "--no-timestamp"]) == 0
    report = json.loads(out.read_text())["report"]
    assert sum(b["observed"] for b in report["bins"]) == 60 * 59 // 2
    assert report["reject"] in (True, False)
    assert table.read_text().splitlines()[0] == "e\tobserved\tpredicted"


def test_gof_select_levels(tmp_path):
    data = tmp_path / "ml.txt"
    assert run(["synth", "--model", "multilevel", "--n", 150, "--alpha", "0.01,0.3,0.8",
                "--rho", "0.9,0.07,0.03", "--trials", 8, "--seed", 1, "--output", data]) == 0
    out = tmp_path / "g.json"
    assert run(["gof", "--input", data, "--select-levels", 4, "--output", out, "--restarts", 3]) == 0
    doc = json.loads(out.read_text())
    assert doc["selected_levels"] == 3
    assert set(doc["reports"]) == {"2", "3", "4"}


def test_gof_heterogeneous_trials(tmp_path, capsys):
    data = tmp_path / "het.txt"
    data.write_text("#default_N 3\na b 1 3\nb c 2 4\n")
    fit = tmp_path / "p.json"
    fit.write_text(json.dumps({"model": "iid", "parameters": {"alpha": 0.5, "beta": 0.1, "rho": 0.2}}))
    assert run(["gof", "--input", data, "--params", fit]) == 1
    assert "trials" in capsys.readouterr().err


def test_gof_needs_a_mode(tmp_path):
    data = synth(tmp_path)
    assert run(["gof", "--input", data]) == 1


def test_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("NETRECON_SEED", "11")
    data = synth(tmp_path)
    out = tmp_path / "e.json"
    from netrecon import cli
    args = cli.build_parser().parse_args(["infer", "--input", str(data), "--output", str(out)])
    assert args.seed == 11


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "netrecon", "infer"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "--input" in proc.stderr
