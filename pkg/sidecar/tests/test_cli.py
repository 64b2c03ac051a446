import json

from embedding_sidecar.cli import build_arg_parser, load_in_background, main
from embedding_sidecar.service import ServiceState


class TestArgParser:
    def test_defaults(self, monkeypatch):
        for var in ("SIDECAR_MODEL_DIR", "SIDECAR_MODEL_ID",
                    "SIDECAR_HOST", "SIDECAR_PORT"):
            monkeypatch.delenv(var, raising=False)
        args = build_arg_parser().parse_args([])
        assert args.model_dir == "./sidecar-model"
        assert args.model_id == "default"
        assert args.host == "127.0.0.1"
        assert args.port == 8750
        assert args.seed == 1234
        assert args.build_only is False

    def test_environment_fallback(self, monkeypatch):
        monkeypatch.setenv("SIDECAR_MODEL_DIR", "/somewhere/encoder")
        monkeypatch.setenv("SIDECAR_MODEL_ID", "prod")
        monkeypatch.setenv("SIDECAR_HOST", "0.0.0.0")
        monkeypatch.setenv("SIDECAR_PORT", "9001")
        args = build_arg_parser().parse_args([])
        assert args.model_dir == "/somewhere/encoder"
        assert args.model_id == "prod"
        assert args.host == "0.0.0.0"
        assert args.port == 9001

    def test_flags_override_environment(self, monkeypatch):
        monkeypatch.setenv("SIDECAR_PORT", "9001")
        args = build_arg_parser().parse_args(["--port", "7000"])
        assert args.port == 7000


class TestBuildOnly:
    def test_builds_model_and_exits_zero(self, tmp_path, capsys):
        target = tmp_path / "encoder"
        code = main(["--build-only", "--model-dir", str(target),
                     "--seed", "5"])
        assert code == 0
        assert (target / "config.json").exists()
        config = json.loads((target / "config.json").read_text())
        assert config["hidden_size"] * 4 == 3072
        assert str(target) in capsys.readouterr().out


class TestBackgroundLoading:
    def test_state_becomes_ready(self, model_dir):
        state = ServiceState(model_id="default")
        assert not state.ready()
        thread = load_in_background(state, str(model_dir), seed=99)
        thread.join(timeout=60)
        assert state.ready()
        assert state.load_error is None
        assert state.embedder.dim == 3072

    def test_failure_is_reported_not_raised(self, tmp_path):
        bad_dir = tmp_path / "bad"
        bad_dir.mkdir()
        (bad_dir / "config.json").write_text("{ not json")
        state = ServiceState(model_id="default")
        thread = load_in_background(state, str(bad_dir), seed=1)
        thread.join(timeout=60)
        assert not state.ready()
        assert state.load_error
