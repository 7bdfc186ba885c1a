import dataclasses
import functools
import io
import json
import math

import pytest

from antiuav import checks, cli, edl, metric
from antiuav.formats import dump_config
from antiuav.presets import oracle_config

FOUR_FRAME_ACC = "0.212550"  # 0.375 - 0.2 * 0.5**0.3


def write_lines(path, *records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def four_frame(tmp_path):
    ann = write_lines(
        tmp_path / "ann.jsonl",
        {"sequence": "s4"},
        {"frame": 0, "box": [0, 0, 2, 2]},
        {"frame": 1, "box": [0, 0, 2, 2]},
        {"frame": 2, "box": "Not Exist"},
        {"frame": 3, "box": "Not Exist"},
    )
    pred = write_lines(
        tmp_path / "pred.jsonl",
        {"sequence": "s4"},
        {"frame": 0, "box": [0, 0, 2, 1]},
        {"frame": 1, "box": "Not Exist"},
        {"frame": 2, "box": "Not Exist"},
        {"frame": 3, "box": [50, 50, 2, 2]},
    )
    return ann, pred


def run(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out=out)
    return code, out.getvalue()


class TestEval:
    def test_perfect_predictions(self, tmp_path):
        ann = write_lines(tmp_path / "a.jsonl", {"sequence": "s"}, {"frame": 0, "box": [1, 1, 4, 4]}, {"frame": 1, "box": "Not Exist"})
        pred = write_lines(tmp_path / "p.jsonl", {"sequence": "s"}, {"frame": 0, "box": [1, 1, 4, 4]}, {"frame": 1, "box": "Not Exist"})
        code, out = run("eval", str(ann), str(pred))
        assert code == 0
        assert "dataset Acc 1.000000" in out

    def test_four_frame_fixture(self, four_frame):
        assert float(FOUR_FRAME_ACC) == round(0.375 - 0.2 * 0.5**0.3, 6)
        code, out = run("eval", *map(str, four_frame))
        assert code == 0
        assert f"dataset Acc {FOUR_FRAME_ACC}" in out

    def test_alpha_beta_flags(self, four_frame):
        _, out = run("eval", *map(str, four_frame), "--alpha", "0", "--beta", "1")
        assert "dataset Acc 0.375000" in out

    def test_attribute_slice(self, tmp_path):
        ann = write_lines(
            tmp_path / "a.jsonl",
            {"sequence": "s"},
            {"frame": 0, "box": [0, 0, 2, 2], "attributes": ["FM"]},
            {"frame": 1, "box": [0, 0, 2, 2]},
        )
        pred = write_lines(tmp_path / "p.jsonl", {"sequence": "s"}, {"frame": 0, "box": [0, 0, 2, 2]}, {"frame": 1, "box": "Not Exist"})
        code, out = run("eval", str(ann), str(pred), "--attribute", "FM", "--attribute", "OV")
        assert code == 0
        assert "attribute FM Acc 1.000000" in out
        assert "attribute OV: no tagged frames" in out

    def test_empty_prediction_file(self, four_frame, tmp_path, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        code, _ = run("eval", str(four_frame[0]), str(empty))
        assert code != 0
        assert "no sequences" in capsys.readouterr().err

    def test_misaligned_lengths(self, four_frame, tmp_path, capsys):
        pred = write_lines(tmp_path / "short.jsonl", {"sequence": "s4"}, {"frame": 0, "box": "Not Exist"})
        code, _ = run("eval", str(four_frame[0]), str(pred))
        err = capsys.readouterr().err
        assert code != 0
        assert "'s4'" in err and "4 annotated frames" in err and "1 predictions" in err

    def test_unknown_sequence(self, four_frame, tmp_path, capsys):
        pred = write_lines(tmp_path / "other.jsonl", {"sequence": "zz"}, {"frame": 0, "box": "Not Exist"})
        assert run("eval", str(four_frame[0]), str(pred))[0] != 0
        assert "s4" in capsys.readouterr().err

    def test_bad_file_is_reported(self, tmp_path, capsys):
        ann = write_lines(tmp_path / "a.jsonl", {"sequence": "s"}, {"frame": 0, "box": [0, 0, -1, 2]})
        code, _ = run("eval", str(ann), str(ann))
        assert code == 2
        assert "frame 0" in capsys.readouterr().err


class TestSimulate:
    def test_oracle_ec_row(self, tmp_path):
        code, out = run("simulate", "--preset", "oracle", "--trials", "5", "--out", str(tmp_path))
        assert code == 0
        ec_row = next(line for line in out.splitlines() if line.startswith("EC "))
        assert "1.000000 ± 0.000000" in ec_row
        assert {p.name for p in tmp_path.iterdir()} == {"summary.csv", "trials.csv", "resolved_config.json"}

    def test_config_file_and_overrides(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(dump_config(oracle_config(trials=50)))
        code, _ = run("simulate", "--config", str(cfg), "--trials", "3", "--seed", "9", "--theta-eh", "0.3", "--out", str(tmp_path / "o"))
        assert code == 0
        resolved = json.loads((tmp_path / "o" / "resolved_config.json").read_text())
        assert resolved["trials"] == 3 and resolved["seed"] == 9 and resolved["theta_eh"] == 0.3
        assert len((tmp_path / "o" / "trials.csv").read_text().splitlines()) == 1 + 3 * 3

    def test_byte_identical_reruns(self, tmp_path):
        for name in ("a", "b"):
            assert run("simulate", "--preset", "stress", "--trials", "6", "--out", str(tmp_path / name))[0] == 0
        for f in ("summary.csv", "trials.csv", "resolved_config.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_needs_exactly_one_source(self, tmp_path):
        assert run("simulate", "--out", str(tmp_path))[0] == 2

    def test_invalid_override(self, tmp_path, capsys):
        assert run("simulate", "--preset", "oracle", "--theta-eh", "1.5", "--out", str(tmp_path))[0] == 2
        assert "theta_eh" in capsys.readouterr().err


class TestCheck:
    def test_edl_passes(self):
        code, out = run("check", "edl", "--cases", "300")
        assert code == 0
        assert "edl: PASS (300 passed, 0 failed)" in out

    @pytest.mark.parametrize("target", ["metric", "rdm"])
    def test_other_targets_pass(self, target):
        assert run("check", target, "--cases", "200")[0] == 0

    def test_perturbed_loss_is_caught(self, monkeypatch):
        def perturbed(ev, label):
            return edl.edl_loss(ev, label) + 1e-3 * math.sin(ev.evidence[0])

        monkeypatch.setitem(checks.CHECKS, "edl", functools.partial(checks.check_edl, loss=perturbed))
        code, out = run("check", "edl", "--cases", "50", "--seed", "100")
        assert code != 0
        assert "edl: FAIL" in out
        assert "failing case seed=100" in out

    def test_perturbed_metric_is_caught(self):
        def off_by_one_frame(visible, ious, predicted, config):
            result = metric.evaluate_scores(visible, ious, predicted, config)
            return dataclasses.replace(result, acc=result.acc + 1.0 / (len(visible) + 1) ** 2)

        report = checks.check_metric(cases=20, evaluate=off_by_one_frame)
        assert not report.ok and len(report.failures) == 20
