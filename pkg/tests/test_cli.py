import json

import numpy as np
import pytest

from robustlr.cli import main, parse_config_file
from robustlr.data import effective_noise_rate, load_csv


def _gen(tmp_path, name="ds.csv", classes=4, per_class=50, seed=7):
    path = tmp_path / name
    rc = main([
        "gen", "--classes", str(classes), "--per-class", str(per_class),
        "--dim", "2", "--spread", "0.6", "--seed", str(seed), "-o", str(path),
    ])
    assert rc == 0
    return path


def _train_config(tmp_path, data, eval_data, out, **extra):
    lines = {
        "data": str(data),
        "eval_data": str(eval_data),
        "out": str(out),
        "preset": "light",
        "seed": "3",
        "warm_iters": "40",
        "round_iters": "40",
        "rounds": "2",
        "learning_rate": "0.05",
    }
    lines.update({k: str(v) for k, v in extra.items()})
    path = tmp_path / "run.toml"
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    return path


class TestGen:
    def test_row_count_and_summary(self, tmp_path, capsys):
        path = _gen(tmp_path, classes=4, per_class=500)
        assert len(path.read_text().strip().split("\n")) == 2001
        assert "N=2000 C=4 D=2" in capsys.readouterr().out

    def test_single_class_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--classes", "1", "--per-class", "5", "-o", str(tmp_path / "x.csv")])
        assert exc.value.code != 0

    def test_same_args_same_file(self, tmp_path):
        a = _gen(tmp_path, name="a.csv")
        b = _gen(tmp_path, name="b.csv")
        assert a.read_bytes() == b.read_bytes()


class TestCorrupt:
    def test_symmetric_prints_effective_rate(self, tmp_path, capsys):
        src = _gen(tmp_path, classes=10, per_class=2000, seed=1)
        out = tmp_path / "noisy.csv"
        rc = main(["corrupt", str(src), "--kind", "symmetric", "--rate", "0.5",
                   "--seed", "3", "-o", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        rate = float(printed.split("effective_noise_rate=")[1].strip())
        assert rate == pytest.approx(0.45, abs=0.02)
        assert effective_noise_rate(load_csv(out)) == pytest.approx(rate)

    def test_zero_rate(self, tmp_path, capsys):
        src = _gen(tmp_path, seed=2)
        rc = main(["corrupt", str(src), "--kind", "symmetric", "--rate", "0", "--seed", "1",
                   "-o", str(tmp_path / "same.csv")])
        assert rc == 0
        assert "effective_noise_rate=0.0000" in capsys.readouterr().out

    def test_non_stochastic_matrix_names_row(self, tmp_path, capsys):
        src = _gen(tmp_path, classes=3, seed=3)
        matrix = tmp_path / "m.csv"
        matrix.write_text("1,0,0\n0,0.5,0\n0,0,1\n")
        rc = main(["corrupt", str(src), "--kind", "asymmetric", "--matrix", str(matrix),
                   "-o", str(tmp_path / "out.csv")])
        assert rc != 0
        assert "row 1" in capsys.readouterr().err

    def test_instance_kind(self, tmp_path, capsys):
        src = _gen(tmp_path, seed=4)
        rc = main(["corrupt", str(src), "--kind", "instance", "--strength", "0.6",
                   "--seed", "2", "-o", str(tmp_path / "inst.csv")])
        assert rc == 0
        assert "effective_noise_rate=" in capsys.readouterr().out


class TestTrain:
    def test_zero_rounds_single_record(self, tmp_path):
        data = _gen(tmp_path, name="train.csv", seed=5)
        eval_data = _gen(tmp_path, name="test.csv", seed=6)
        out = tmp_path / "run0"
        config = _train_config(tmp_path, data, eval_data, out, rounds=0)
        assert main(["train", "--config", str(config)]) == 0
        lines = (out / "records.jsonl").read_text().strip("\n").split("\n")
        assert len(lines) == 1
        assert json.loads(lines[0])["round"] == 0

    def test_records_and_models_deterministic(self, tmp_path, capsys):
        data = _gen(tmp_path, name="train.csv", seed=7)
        eval_data = _gen(tmp_path, name="test.csv", seed=8)
        outs, summaries = [], []
        for name in ("runA", "runB"):
            out = tmp_path / name
            config = _train_config(tmp_path, data, eval_data, out)
            assert main(["train", "--config", str(config)]) == 0
            outs.append((out / "records.jsonl").read_bytes())
            summaries.append(capsys.readouterr().out.strip().split("\n")[-1].rsplit(" out=", 1)[0])
        assert outs[0] == outs[1]
        assert summaries[0] == summaries[1]

    def test_no_gmm_pins_estimate_to_zero(self, tmp_path):
        data = _gen(tmp_path, name="train.csv", seed=9)
        eval_data = _gen(tmp_path, name="test.csv", seed=10)
        out = tmp_path / "nogmm"
        config = _train_config(tmp_path, data, eval_data, out)
        assert main(["train", "--config", str(config), "--no-gmm"]) == 0
        records = [json.loads(l) for l in (out / "records.jsonl").read_text().strip().split("\n")]
        assert all(r["est_noise_fraction"] == 0.0 for r in records[1:])

    def test_flag_overrides_config(self, tmp_path):
        data = _gen(tmp_path, name="train.csv", seed=11)
        eval_data = _gen(tmp_path, name="test.csv", seed=12)
        out = tmp_path / "ovr"
        config = _train_config(tmp_path, data, eval_data, out, rounds=2)
        assert main(["train", "--config", str(config), "--rounds", "1"]) == 0
        lines = (out / "records.jsonl").read_text().strip().split("\n")
        assert len(lines) == 2  # warm-up + one round

    def test_generated_dataset_path(self, tmp_path):
        out = tmp_path / "genrun"
        config = tmp_path / "gen.toml"
        config.write_text(
            "classes = 4\nper_class = 40\ndim = 2\nspread = 0.6\n"
            "noise_kind = symmetric\nnoise_rate = 0.5\n"
            f"out = {out}\nseed = 1\nwarm_iters = 40\nround_iters = 40\nrounds = 1\n"
            "learning_rate = 0.05\n"
        )
        assert main(["train", "--config", str(config)]) == 0
        assert (out / "records.jsonl").exists()
        assert (out / "model0.npz").exists() and (out / "model1.npz").exists()

    def test_preset_locks_hyperparameters(self, tmp_path, capsys):
        data = _gen(tmp_path, name="train.csv", seed=13)
        eval_data = _gen(tmp_path, name="test.csv", seed=14)
        config = _train_config(tmp_path, data, eval_data, tmp_path / "x", temperature=0.5)
        rc = main(["train", "--config", str(config)])
        assert rc != 0
        assert "custom" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path, capsys):
        config = tmp_path / "bad.toml"
        config.write_text("bananas = 7\n")
        assert main(["train", "--config", str(config)]) != 0
        assert "bananas" in capsys.readouterr().err


class TestAudit:
    def test_planted_errors_recovered(self, tmp_path):
        # train on a mostly-clean set with 10 planted flips, then audit
        from robustlr.data import gen_blobs, save_csv, LabeledDataset

        train = gen_blobs(4, 250, 2, 0.6, seed=21)
        rng = np.random.default_rng(5)
        planted = rng.choice(train.n, 10, replace=False)
        observed = train.true_labels.copy()
        observed[planted] = (observed[planted] + 1) % 4
        ds = LabeledDataset(train.features, train.true_labels, observed, 4)
        data = tmp_path / "planted.csv"
        save_csv(ds, data)
        eval_data = _gen(tmp_path, name="test.csv", seed=22)

        out = tmp_path / "auditrun"
        config = _train_config(
            tmp_path, data, eval_data, out,
            warm_iters=200, round_iters=200, rounds=3,
        )
        assert main(["train", "--config", str(config)]) == 0
        audit_csv = tmp_path / "audit.csv"
        rc = main(["audit", "--model", str(out / "model0.npz"), "--data", str(data),
                   "-k", "10", "-o", str(audit_csv)])
        assert rc == 0
        rows = audit_csv.read_text().strip().split("\n")[1:]
        found = {int(r.split(",")[0]) for r in rows}
        assert len(found & set(planted.tolist())) >= 8

    def test_k_larger_than_n(self, tmp_path):
        data = _gen(tmp_path, name="small.csv", per_class=5, seed=23)
        eval_data = _gen(tmp_path, name="test.csv", per_class=5, seed=24)
        out = tmp_path / "k"
        config = _train_config(tmp_path, data, eval_data, out, rounds=0, warm_iters=10)
        assert main(["train", "--config", str(config)]) == 0
        audit_csv = tmp_path / "audit.csv"
        rc = main(["audit", "--model", str(out / "model0.npz"), "--data", str(data),
                   "-k", "999", "-o", str(audit_csv)])
        assert rc == 0
        assert len(audit_csv.read_text().strip().split("\n")) == 21  # header + N rows

    def test_missing_model_is_error(self, tmp_path, capsys):
        data = _gen(tmp_path, seed=25)
        rc = main(["audit", "--model", str(tmp_path / "absent.npz"), "--data", str(data),
                   "-k", "5", "-o", str(tmp_path / "a.csv")])
        assert rc != 0
        assert capsys.readouterr().err

    def test_deterministic(self, tmp_path):
        data = _gen(tmp_path, name="d.csv", seed=26)
        eval_data = _gen(tmp_path, name="t.csv", seed=27)
        out = tmp_path / "det"
        config = _train_config(tmp_path, data, eval_data, out, rounds=1)
        assert main(["train", "--config", str(config)]) == 0
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for target in (a, b):
            assert main(["audit", "--model", str(out / "model0.npz"), "--data", str(data),
                         "-k", "10", "-o", str(target)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestReport:
    def _records(self, tmp_path, rounds=2):
        data = _gen(tmp_path, name="train.csv", seed=31)
        eval_data = _gen(tmp_path, name="test.csv", seed=32)
        out = tmp_path / "rep"
        config = _train_config(tmp_path, data, eval_data, out, rounds=rounds)
        assert main(["train", "--config", str(config)]) == 0
        return out / "records.jsonl"

    def test_csv_shape_and_invariants(self, tmp_path):
        records = self._records(tmp_path)
        out = tmp_path / "report.csv"
        assert main(["report", "--records", str(records), "-o", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        header = lines[0].split(",")
        assert header[:6] == ["round", "I", "II", "III", "IV", "residual"]
        assert len(lines) == 4  # header + warmup + 2 rounds
        rounds = []
        for line in lines[1:]:
            cells = line.split(",")
            rounds.append(int(cells[0]))
            groups = list(map(float, cells[1:6]))
            assert sum(groups) == pytest.approx(1.0, abs=1e-6)
        assert rounds == sorted(rounds)
        assert all(b > a for a, b in zip(rounds, rounds[1:]))

    def test_malformed_line_reports_number(self, tmp_path, capsys):
        records = self._records(tmp_path, rounds=1)
        with open(records, "a") as f:
            f.write("{broken\n")
        rc = main(["report", "--records", str(records), "-o", str(tmp_path / "r.csv")])
        assert rc != 0
        assert "line 3" in capsys.readouterr().err


class TestConfigFile:
    def test_parse_basics(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('# comment\nrounds = 5\nname = "quoted"  # trailing\n\n')
        assert parse_config_file(path) == {"rounds": "5", "name": "quoted"}

    def test_missing_equals_is_error(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("justakey\n")
        with pytest.raises(ValueError, match="line 1"):
            parse_config_file(path)


class TestLossExport:
    def test_audit_losses_out_table(self, tmp_path):
        data = _gen(tmp_path, name="d.csv", seed=41)
        eval_data = _gen(tmp_path, name="t.csv", seed=42)
        out = tmp_path / "lx"
        config = _train_config(tmp_path, data, eval_data, out, rounds=1)
        assert main(["train", "--config", str(config)]) == 0
        losses_csv = tmp_path / "losses.csv"
        rc = main(["audit", "--model", str(out / "model0.npz"), "--data", str(data),
                   "-k", "5", "-o", str(tmp_path / "a.csv"), "--losses-out", str(losses_csv)])
        assert rc == 0
        lines = losses_csv.read_text().strip().split("\n")
        assert lines[0] == "index,raw_loss,normalized_loss,w"
        assert len(lines) == 201  # header + one row per example
        cells = lines[1].split(",")
        assert int(cells[0]) == 0
        assert 0.0 <= float(cells[2]) <= 1.0 and 0.0 <= float(cells[3]) <= 1.0
