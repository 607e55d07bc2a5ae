# tests/test_cli.py
import json

from cli.experiment import derive_seed
from cli.main import EXIT_CONFIG, EXIT_OK, EXIT_STEP, main


def _write_manifest(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_step_by_step_pipeline(tmp_path, capsys):
    lanes, gt, out = tmp_path / "lanes.jsonl", tmp_path / "gt.jsonl", tmp_path / "r.json"
    assert main(["synth", "--preset", "openlane-like", "--seed", "7", "--scenes", "30", "--out", str(lanes)]) == EXIT_OK
    assert main(["gen-gt", "--input", str(lanes), "--mode", "short", "--m", "20", "--out", str(gt)]) == EXIT_OK
    capsys.readouterr()
    assert main(["eval", "--gt", str(lanes), "--pred", str(gt), "--report", str(out),
                 "--label", "mode=short", "--label", "m=20", "--per-length-bucket", "0:20,20:40,40:103",
                 "--iou-sweep", "0.75,0.9"]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    report = json.loads(out.read_text())
    assert report["labels"] == {"mode": "short", "m": 20}
    assert report["metrics"]["f1"] == printed["f1"]
    assert [r["bucket"] for r in report["length_buckets"]] == ["0:20", "20:40", "40:103"]
    assert report["iou_sweep"][1]["f1"] <= report["iou_sweep"][0]["f1"]


def test_patched_pipeline_with_ep_infer(tmp_path):
    lanes, gt, patched, out = (tmp_path / n for n in ("lanes.jsonl", "gt.jsonl", "p.jsonl", "r.json"))
    main(["synth", "--seed", "1", "--scenes", "20", "--out", str(lanes)])
    main(["gen-gt", "--input", str(lanes), "--mode", "patched", "--m", "20", "--out", str(gt)])
    assert main(["ep-infer", "--input", str(gt), "--out", str(patched), "--patch-single"]) == EXIT_OK
    flags = [json.loads(line).get("flags", []) for line in patched.read_text().splitlines()]
    assert any("patched" in f for f in flags)
    assert main(["eval", "--gt", str(lanes), "--pred", str(patched), "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["metrics"]["f1"] > 0.99


def test_manifest_run_equals_manual_steps(tmp_path):
    manifest = _write_manifest(tmp_path / "m.json", {
        "name": "small", "seed": 3, "steps": [
            {"id": "synth", "kind": "synth", "params": {"scenes": 25, "out": "lanes.jsonl"}},
            {"id": "gt", "kind": "gen-gt", "params": {"input": "lanes.jsonl", "mode": "long", "m": 10, "out": "gt.jsonl"}},
            {"id": "eval", "kind": "eval", "params": {"gt": "lanes.jsonl", "pred": "gt.jsonl", "out": "r.json"}},
        ]})
    work = tmp_path / "work"
    assert main(["run", manifest, "--workdir", str(work)]) == EXIT_OK

    manual = tmp_path / "manual"
    manual.mkdir()
    main(["synth", "--seed", str(derive_seed(3, "synth")), "--scenes", "25", "--out", str(manual / "lanes.jsonl")])
    main(["gen-gt", "--input", str(manual / "lanes.jsonl"), "--mode", "long", "--m", "10",
          "--out", str(manual / "gt.jsonl")])
    main(["eval", "--gt", str(manual / "lanes.jsonl"), "--pred", str(manual / "gt.jsonl"),
          "--out", str(manual / "r.json")])
    for name in ("lanes.jsonl", "gt.jsonl", "r.json"):
        assert (work / name).read_bytes() == (manual / name).read_bytes()


def test_report_subcommand(tmp_path, capsys):
    reports = []
    for m in (10, 5):
        path = tmp_path / f"r{m}.json"
        path.write_text(json.dumps({"labels": {"mode": "short", "m": m}, "metrics": {
            "recall": 0.5, "precision": 0.9, "f1": 0.642857, "x_err_near": 0.01,
            "x_err_far": 0.02, "z_err_near": 0.0, "z_err_far": 0.0}}))
        reports.append(str(path))
    md, csv_path = tmp_path / "t.md", tmp_path / "t.csv"
    assert main(["report", "--reports", *reports, "--out", str(md), "--csv", str(csv_path)]) == EXIT_OK
    rows = md.read_text().splitlines()[2:]
    assert rows[0].startswith("|  | short | 5 | 50.0 | 90.0 | 64.3 |")
    assert csv_path.read_text().splitlines()[1].startswith(",short,5,50.0,90.0,64.3")
    capsys.readouterr()
    assert main(["report", "--reports", *reports]) == EXIT_OK
    assert "| short | 10 |" in capsys.readouterr().out


def test_attn_bench_json(capsys):
    assert main(["attn-bench", "--n", "4", "--m", "5", "--c", "16", "--heads", "2", "--json"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["pla"]["score_units"] == 4 * 36 + 16 + 5 * 16
    assert out["msa"]["score_units"] == 24 ** 2
    assert out["attention_ratio"] > 1.0


def test_config_errors_exit_2(tmp_path):
    assert main(["gen-gt", "--input", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "o.jsonl")]) == EXIT_CONFIG
    assert main(["gen-gt", "--input", "x", "--out", "y", "--mode", "sideways"]) == EXIT_CONFIG
    assert main(["synth", "--scenes", "-1", "--out", str(tmp_path / "l.jsonl")]) == EXIT_CONFIG
    bad = _write_manifest(tmp_path / "bad.json", {"steps": [{"id": "x", "kind": "teleport", "params": {}}]})
    assert main(["run", bad, "--workdir", str(tmp_path / "w")]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG


def test_step_failure_exits_3(tmp_path):
    manifest = _write_manifest(tmp_path / "m.json", {"inputs": ["lanes.jsonl"], "steps": [
        {"id": "gt", "kind": "gen-gt", "params": {"input": "lanes.jsonl", "mode": "short", "m": 5, "out": "gt.jsonl"}},
    ]})
    assert main(["run", manifest, "--workdir", str(tmp_path / "w")]) == EXIT_STEP


def test_bad_lanes_are_skipped_not_fatal(tmp_path):
    lanes = tmp_path / "lanes.jsonl"
    lanes.write_text(
        json.dumps({"scene_id": "s", "lane_id": "ok", "points": [[0, 10, 0], [0, 50, 0]]}) + "\n"
        + json.dumps({"scene_id": "s", "lane_id": "bad", "points": [[0, 10, 0], [0, 5, 0]]}) + "\n"
    )
    gt = tmp_path / "gt.jsonl"
    assert main(["gen-gt", "--input", str(lanes), "--out", str(gt)]) == EXIT_OK
    assert [json.loads(l)["lane_id"] for l in gt.read_text().splitlines()] == ["ok"]


def test_documented_flag_spellings(tmp_path):
    lanes, gt, pred, report = (str(tmp_path / n) for n in ("lanes.jsonl", "gt.jsonl", "pred.jsonl", "r.json"))
    assert main(["synth", "--preset", "apollosim-like", "--seed", "7", "--scenes", "10", "--out", lanes]) == EXIT_OK
    assert main(["gen-gt", "--mode", "patched", "--m", "20", "--range", "3:103", "--in", lanes, "--out", gt]) == EXIT_OK
    assert main(["ep-infer", "--pred", gt, "--out", pred]) == EXIT_OK
    assert main(["eval", "--gt", lanes, "--pred", pred, "--iou", "0.75", "--report", report]) == EXIT_OK
    assert json.loads((tmp_path / "r.json").read_text())["config"]["lane_iou"] == 0.75
