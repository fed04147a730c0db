import json

import numpy as np
import pytest

from blockrec import cli
from blockrec import objectives as obj
from blockrec import trainer
from blockrec.data import GeneratorConfig, build_examples, generate_corpus, split_dataset
from blockrec.errors import TrainingError

GEN = dict(num_queries=90, mean_candidates_per_query=16, d_raw=8, click_noise=0.1, proximity_weight=1.0, seed=2)
DIMS = dict(
    encoder=dict(d_raw=8, d_hidden=12, d_a=12, d_e=6),
    decoder=dict(d_e=6, lstm_hidden_dim=6, hmn_hidden_dim=6, maxout_pool=2),
)


@pytest.fixture(scope="module")
def corpus():
    cfg = GeneratorConfig(**GEN)
    examples, _ = build_examples(generate_corpus(cfg), cfg)
    assert len(examples) >= 50
    return examples


def run_config(**kw):
    return trainer.RunConfig.from_dict({**DIMS, "epochs": 2, "lr": 3e-3, **kw})


class TestRunConfig:
    def test_roundtrip_and_hash(self, tmp_path):
        cfg = run_config(objectives=["div", "ce"], seed=4)
        path = tmp_path / "run.json"
        path.write_text(json.dumps(cfg.to_dict()))
        back = trainer.RunConfig.load(path)
        assert back == cfg and back.config_hash() == cfg.config_hash()
        assert back.objectives == ("ce", "div")
        assert run_config(seed=5).config_hash() != run_config(seed=4).config_hash()

    def test_rejects(self):
        with pytest.raises(ValueError):
            run_config(objectives=["f1"])
        with pytest.raises(ValueError):
            trainer.RunConfig.from_dict({"encoder": {"d_e": 4}})  # decoder d_e stays 32
        with pytest.raises(ValueError):
            trainer.RunConfig.from_dict({"learning_rate": 0.1})

    @pytest.mark.parametrize("objectives,count", [(["ce"], 1), (["ce", "f1", "div", "mrr"], 4)])
    def test_loss_weight_count(self, objectives, count):
        store = trainer.build_model(run_config(objectives=objectives))
        assert store[obj.WEIGHTS_NAME].shape == (count,)


class TestTrain:
    def test_smoke_reduces_ce(self, corpus):
        cfg = run_config(lr=1e-2)
        data = corpus[:50]
        before = trainer.mean_ce(data, trainer.build_model(cfg), cfg.decoder)
        result = trainer.train(cfg, data)
        after = trainer.mean_ce(data, result.store, cfg.decoder)
        assert after <= 0.8 * before
        assert [e["epoch"] for e in result.log] == [0, 1]

    def test_bit_identical_reruns(self, corpus):
        cfg = run_config(objectives="ce+f1+mrr+div", seed=3, temperature=0.5)
        runs = []
        for _ in range(2):
            res = trainer.train(cfg, corpus[:20], corpus[20:30])
            rep = trainer.evaluate_model(corpus[30:40], res.store, cfg)
            runs.append((json.dumps(res.log), [res.store[n].data.tobytes() for n in res.store.names()], rep.row()))
        assert runs[0] == runs[1]

    def test_weights_stay_in_box(self, corpus):
        cfg = run_config(objectives="ce+f1+mrr+div", epochs=1, log_weight_bounds=[-0.5, 0.5])
        res = trainer.train(cfg, corpus[:20])
        s = res.store[obj.WEIGHTS_NAME].data
        assert np.all(s >= -0.5) and np.all(s <= 0.5)

    def test_best_checkpoint_by_val_recall(self, corpus, tmp_path):
        ckpt = tmp_path / "best.json"
        cfg = run_config(epochs=3, checkpoint_path=str(ckpt))
        res = trainer.train(cfg, corpus[:30], corpus[30:45])
        recalls = [e["validation"]["recall"] for e in res.log]
        assert res.best_epoch == int(np.argmax(recalls))
        again, store = cli.restore_model(ckpt)
        assert again == cfg
        assert trainer.evaluate_model(corpus[30:45], store, cfg).recall == max(recalls)

    def test_nan_aborts_with_query(self, corpus):
        cfg = run_config(epochs=1)
        store = trainer.build_model(cfg)
        store["encoder.b"].data[:] = np.nan
        with pytest.raises(TrainingError, match="query"):
            trainer.train(cfg, corpus[:3], store=store)


class TestMatrix:
    def test_mmr_rows_only(self, corpus, monkeypatch):
        calls = []
        real = trainer.train_mmr_classifier
        monkeypatch.setattr(trainer, "train_mmr_classifier", lambda *a: calls.append(1) or real(*a))
        train, val, test = split_dataset(corpus)
        report = trainer.run_matrix(run_config(classifier_epochs=1), train, val, test, rows=tuple(trainer.MMR_ROWS))
        assert list(report.rows) == ["mmr(γ = 0.6)", "mmr(γ = 1.0)"]
        assert len(calls) == 1
        assert all(set(r) == {"div_score", "recall", "p_at_1", "em"} for r in report.rows.values())

    def test_failed_row_is_annotated(self, corpus):
        train, val, test = split_dataset(corpus)
        report = trainer.run_matrix(run_config(epochs=1), train[:10], val, test, rows=("ce", "ce+bleu"))
        assert "error" in report.rows["ce+bleu"] and "error" not in report.rows["ce"]
        assert "FAILED" in report.table()

    def test_row_names(self):
        assert trainer.TABLE1_ROWS == (
            "ce", "ce+f1", "ce+f1+mrr", "ce+f1+div", "ce+f1+mrr+div", "mmr(γ = 0.6)", "mmr(γ = 1.0)",
        )


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    gen = tmp_path_factory.mktemp("cfg") / "gen.json"
    gen.write_text(json.dumps(GEN))
    assert cli.main(["gen-data", "--config", str(gen), "--out", str(out)]) == 0
    return out


class TestCli:
    def test_gen_data_layout(self, data_dir):
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert sum(manifest["splits"].values()) == manifest["kept"]
        for split in cli.SPLITS:
            assert (data_dir / f"{split}.jsonl").exists()

    def test_env_default_data_dir(self, data_dir, monkeypatch):
        monkeypatch.setenv(cli.DATA_ENV, str(data_dir))
        assert cli.default_data_dir() == data_dir

    def test_train_eval(self, data_dir, tmp_path, capsys):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({**DIMS, "epochs": 1}))
        ckpt = tmp_path / "model.json"
        assert cli.main(["train", "--config", str(cfg_path), "--data", str(data_dir), "--checkpoint", str(ckpt),
                         "--log", str(tmp_path / "log.json"), "--objectives", "ce+div"]) == 0
        report = tmp_path / "report.json"
        trace = tmp_path / "trace.jsonl"
        assert cli.main(["eval", "--checkpoint", str(ckpt), "--data", str(data_dir), "--report", str(report),
                         "--dump-trace", str(trace)]) == 0
        row = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        saved = json.loads(report.read_text())
        assert saved["metadata"]["objectives"] == ["ce", "div"]
        assert row == {k: saved[k] for k in row}
        lines = trace.read_text().splitlines()
        assert len(lines) == len(saved["per_query"])
        assert 1 <= len(json.loads(lines[0])["iterations"]) <= 8

    def test_mmr_baseline_reuses_checkpoint(self, data_dir, tmp_path, capsys):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({**DIMS, "classifier_epochs": 1}))
        ckpt = tmp_path / "clf.json"
        args = ["mmr-baseline", "--config", str(cfg_path), "--data", str(data_dir), "--checkpoint", str(ckpt)]
        assert cli.main(args + ["--gamma", "1.0"]) == 0
        assert ckpt.exists()
        assert cli.main(args + ["--gamma", "0.6", "--report", str(tmp_path / "r.json")]) == 0
        assert json.loads((tmp_path / "r.json").read_text())["metadata"]["row"] == "mmr(γ = 0.6)"

    def test_run_matrix_partial_failure_exit_code(self, data_dir, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({**DIMS, "epochs": 1, "classifier_epochs": 1}))
        base = ["run-matrix", "--config", str(cfg_path), "--data", str(data_dir)]
        assert cli.main(base + ["--rows", "mmr(γ = 1.0)", "--report", str(tmp_path / "m.json")]) == 0
        assert cli.main(base + ["--rows", "mmr(γ = 1.0),nonsense"]) == 1

    def test_input_errors_exit_2(self, tmp_path):
        assert cli.main(["eval", "--checkpoint", str(tmp_path / "missing.json")]) == 2
        bad = tmp_path / "gen.json"
        bad.write_text(json.dumps({"num_querys": 5}))
        assert cli.main(["gen-data", "--config", str(bad), "--out", str(tmp_path)]) == 2
