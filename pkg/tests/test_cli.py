"""
End-to-end tests of the command group through click's CliRunner, using the
testing configuration (small hidden size, two epochs).
"""
import json

import numpy as np
import pytest
from click.testing import CliRunner

from application import create_app
from application.blueprints.evaluate.evaluateSchemas import evaluation_schema
from application.blueprints.train.trainSchemas import train_result_schema
from application.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from application.hsi_data import HsiCube, load_cube, load_labels, save_cube
from application.models import BiClstmModel, ModelConfig
from application.tensor import Rng, Tensor

FAST = ["--epochs", "1", "--augment", "off", "--train-fraction", "0.25"]


@pytest.fixture
def cli():
    return create_app('testing')


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def cube_path(cli, runner, tmp_path):
    path = tmp_path / "cube.hsc"
    result = runner.invoke(cli, ["synth", "--classes", "2", "--size", "8x8", "--bands", "3", "--seed", "1",
                                 "--separation", "10", "--out", str(path)])
    assert result.exit_code == 0, result.output
    return path


@pytest.fixture
def trained(cli, runner, cube_path, tmp_path):
    checkpoint = tmp_path / "model.bck"
    result = runner.invoke(cli, ["train", "--cube", str(cube_path), "--out", str(checkpoint), *FAST])
    assert result.exit_code == 0, result.output
    return checkpoint


class TestSynth:
    """Test cases for the synth command"""

    def test_writes_cube_pair(self, cube_path):
        """Test that synth writes a loadable cube and label file"""
        cube = load_cube(cube_path)
        assert cube.values.shape == (3, 8, 8)
        assert set(np.unique(cube.labels).tolist()) == {1, 2}

    def test_same_seed_same_bytes(self, cli, runner, tmp_path):
        """Test that synth output is a pure function of its arguments"""
        args = ["synth", "--classes", "3", "--size", "6x5", "--bands", "4", "--seed", "9", "--separation", "inf"]
        for name in ("a.hsc", "b.hsc"):
            assert runner.invoke(cli, [*args, "--out", str(tmp_path / name)]).exit_code == 0
        assert (tmp_path / "a.hsc").read_bytes() == (tmp_path / "b.hsc").read_bytes()
        assert (tmp_path / "a.hsl").read_bytes() == (tmp_path / "b.hsl").read_bytes()

    def test_prints_class_populations(self, cli, runner, tmp_path):
        """Test the population table on stdout"""
        result = runner.invoke(cli, ["synth", "--classes", "2", "--size", "4x4", "--bands", "2",
                                     "--out", str(tmp_path / "c.hsc")])
        assert result.exit_code == 0
        assert "4x4x2 cube" in result.output

    @pytest.mark.parametrize("args", [
        ["--classes", "1", "--size", "8x8", "--bands", "3"],
        ["--classes", "2", "--size", "8by8", "--bands", "3"],
        ["--classes", "2", "--size", "8x8", "--bands", "3", "--separation", "0"],
    ])
    def test_invalid_requests_exit_2(self, cli, runner, tmp_path, args):
        """Test that invalid synth parameters are usage errors"""
        result = runner.invoke(cli, ["synth", *args, "--out", str(tmp_path / "x.hsc")])
        assert result.exit_code == 2
        assert not (tmp_path / "x.hsc").exists()


class TestTrainEvalPredict:
    """Test cases for the train -> eval -> predict workflow"""

    def test_train_writes_checkpoint_and_report(self, trained):
        """Test the checkpoint provenance and the JSON report"""
        checkpoint = load_checkpoint(trained)
        assert checkpoint.run_config["epochs"] == 1
        assert checkpoint.run_config["hidden_channels"] == 4
        assert "threads" not in checkpoint.run_config
        assert checkpoint.optimizer_state.kind == "adam"
        report = json.loads(trained.with_suffix(".json").read_text())
        assert len(report["train"]["epochs"]) == 1
        assert report["split"]["train_samples"] == report["split"]["train_pixels"]
        assert report["split"]["train_pixels"] + report["split"]["test_pixels"] == 64
        assert 0.0 <= report["test"]["oa"] <= 1.0
        assert report["model"]["bands"] == 3
        assert train_result_schema.validate(report) == {}

    def test_eval_reproduces_test_metrics(self, cli, runner, trained, tmp_path):
        """Test that eval re-derives the held-out split and matches the train report"""
        out = tmp_path / "metrics.json"
        result = runner.invoke(cli, ["eval", "--checkpoint", str(trained), "--out", str(out)])
        assert result.exit_code == 0, result.output
        evaluation = json.loads(out.read_text())
        report = json.loads(trained.with_suffix(".json").read_text())
        assert evaluation["metrics"] == report["test"]
        assert evaluation["pixels"] == report["split"]["test_pixels"]
        assert evaluation_schema.validate(evaluation) == {}
        assert "OA:" in result.output

    def test_eval_all_split(self, cli, runner, trained, tmp_path):
        """Test scoring every labeled pixel"""
        out = tmp_path / "all.json"
        result = runner.invoke(cli, ["eval", "--checkpoint", str(trained), "--split", "all", "--out", str(out)])
        assert result.exit_code == 0
        assert json.loads(out.read_text())["pixels"] == 64

    def test_predict_writes_map_raster_and_sidecar(self, cli, runner, trained, tmp_path):
        """Test the PPM map, HSL1 raster and JSON provenance"""
        out = tmp_path / "map.ppm"
        result = runner.invoke(cli, ["predict", "--checkpoint", str(trained), "--out", str(out), "--threads", "2"])
        assert result.exit_code == 0, result.output
        assert out.read_bytes()[:2] == b"P6"
        raster = load_labels(tmp_path / "map.hsl")
        assert raster.shape == (8, 8)
        assert set(np.unique(raster).tolist()) <= {1, 2}
        sidecar = json.loads((tmp_path / "map.json").read_text())
        assert sidecar["predicted_pixels"] == 64
        assert sidecar["config"]["epochs"] == 1

    def test_zero_learning_rate_keeps_initial_weights(self, cli, runner, cube_path, tmp_path):
        """Test that --lr 0 writes the seeded initial parameters unchanged"""
        checkpoint = tmp_path / "frozen.bck"
        result = runner.invoke(cli, ["train", "--cube", str(cube_path), "--out", str(checkpoint), "--lr", "0",
                                     "--seed", "5", *FAST])
        assert result.exit_code == 0, result.output
        model = load_checkpoint(checkpoint).model
        initial = BiClstmModel.initialize(model.config, Rng(5).derive("init"))
        for name, value in initial.parameters().items():
            assert model.parameters()[name].equals(value), name

    def test_outputs_do_not_depend_on_threads(self, cli, runner, cube_path, tmp_path):
        """Test byte-identical checkpoints and reports for 1 and 3 worker threads"""
        checkpoint = tmp_path / "det.bck"
        outputs = []
        for threads in ("1", "3"):
            result = runner.invoke(cli, ["train", "--cube", str(cube_path), "--out", str(checkpoint),
                                         "--threads", threads, *FAST])
            assert result.exit_code == 0, result.output
            outputs.append((checkpoint.read_bytes(), checkpoint.with_suffix(".json").read_bytes()))
        assert outputs[0] == outputs[1]

    def test_config_file_and_flag_precedence(self, cli, runner, cube_path, tmp_path):
        """Test that flags override the config file, which overrides the defaults"""
        config_file = tmp_path / "run.json"
        config_file.write_text(json.dumps({"cube": str(cube_path), "epochs": 3, "seed": 7, "augment": False,
                                           "train_fraction": 0.25}))
        checkpoint = tmp_path / "cfg.bck"
        result = runner.invoke(cli, ["train", "--config", str(config_file), "--epochs", "1",
                                     "--out", str(checkpoint)])
        assert result.exit_code == 0, result.output
        run_config = load_checkpoint(checkpoint).run_config
        assert (run_config["epochs"], run_config["seed"], run_config["batch_size"]) == (1, 7, 8)

    def test_all_correct_model_scores_one(self, cli, runner, tmp_path):
        """Test OA = AA = kappa = 1 for a model that always predicts the true class"""
        labels = np.ones((8, 8), dtype=np.int64)
        labels[0, :3] = 0
        save_cube(HsiCube(Tensor(Rng(3).normal((3, 8, 8))), labels), tmp_path / "ones.hsc")
        model = BiClstmModel.zeros(ModelConfig(patch_size=8, bands=3, classes=2, hidden_channels=2))
        model.load_parameters({**model.parameters(), "head.bias": Tensor([1.0, 0.0])})
        save_checkpoint(Checkpoint(model), tmp_path / "toy.bck")

        out = tmp_path / "toy.json"
        result = runner.invoke(cli, ["eval", "--checkpoint", str(tmp_path / "toy.bck"),
                                     "--cube", str(tmp_path / "ones.hsc"), "--out", str(out)])
        assert result.exit_code == 0, result.output
        metrics = json.loads(out.read_text())["metrics"]
        assert (metrics["oa"], metrics["aa"], metrics["kappa"]) == (1.0, 1.0, 1.0)
        assert metrics["total"] == 61


class TestGradcheckAndExperiment:
    """Test cases for the gradcheck and experiment commands"""

    def test_gradcheck_passes(self, cli, runner, tmp_path):
        """Test a passing gradient check and its JSON report"""
        report = tmp_path / "grad.json"
        result = runner.invoke(cli, ["gradcheck", "--bands", "2", "--report", str(report)])
        assert result.exit_code == 0, result.output
        assert "PASS" in result.output
        payload = json.loads(report.read_text())
        assert payload["passed"] is True
        assert "input" in payload["errors"]

    def test_experiment_sweep(self, cli, runner, cube_path, tmp_path):
        """Test a two-value sweep with two seeds each"""
        out = tmp_path / "exp.json"
        result = runner.invoke(cli, ["experiment", "--cube", str(cube_path), "--vary", "direction",
                                     "--values", "bidirectional,forward", "--out", str(out), *FAST])
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text())
        assert report["repeats"] == 2
        assert [s["value"] for s in report["settings"]] == ["bidirectional", "forward"]
        assert [r["seed"] for r in report["settings"][0]["runs"]] == [0, 1]
        assert report["settings"][0]["oa"]["runs"] == 2

    def test_experiment_vary_needs_values(self, cli, runner, cube_path):
        """Test that --vary without --values is a usage error"""
        result = runner.invoke(cli, ["experiment", "--cube", str(cube_path), "--vary", "patch_size"])
        assert result.exit_code == 2
