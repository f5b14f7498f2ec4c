import pytest
import yaml

from saiplab.cli import EXIT_RUNTIME_FAILURE, EXIT_USAGE, build_parser, main
from saiplab.configuration import Keys


@pytest.fixture(autouse=True)
def keep_log_handlers(mocker):
    return mocker.patch("saiplab.cli.configure_logging_to_terminal")


def test_parser_common_options():
    args = build_parser().parse_args(
        ["run", "--config", "recipe.yaml", "--out", "results", "--seed", "3", "--threads", "2"]
    )
    assert args.command == "run"
    assert args.config == "recipe.yaml"
    assert args.out == "results"
    assert args.seed == 3
    assert args.threads == 2
    assert not args.verbose
    assert not args.no_progress


def test_parser_subcommand_options():
    parser = build_parser()
    assert parser.parse_args(["verify", "--inject-scale-fault", "1e-3"]).inject_scale_fault == 1e-3
    assert parser.parse_args(["sweep", "--omegas", "0.1", "1", "10"]).omegas == [0.1, 1.0, 10.0]
    assert parser.parse_args(["trace-plot", "trace.csv"]).trace_csv == "trace.csv"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["explode"],
        ["run", "--seed", "abc"],
        ["sweep", "--omegas"],
        ["trace-plot"],
    ],
)
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == EXIT_USAGE


def test_missing_config_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == EXIT_USAGE


def test_invalid_config_exits_2(tmp_path, caplog):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({Keys.SAIP: {Keys.VARIANT: "eq13"}}))
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "must be one of" in caplog.text


def test_sweep_on_image_task_exits_2(tmp_path):
    path = tmp_path / "denoise.yaml"
    path.write_text(yaml.safe_dump({Keys.TASK: {Keys.NAME: "denoise"}}))
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path)]) == EXIT_USAGE


def test_bad_trace_exits_2(tmp_path):
    path = tmp_path / "trace.csv"
    path.write_text("not,a,trace\n")
    assert main(["trace-plot", str(path)]) == EXIT_USAGE
    assert main(["trace-plot", str(tmp_path / "missing.csv")]) == EXIT_USAGE


def test_verify(tmp_path):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "verify.csv").exists()


def test_verify_with_fault_exits_1(caplog):
    assert main(["verify", "--inject-scale-fault", "1e-3"]) == EXIT_RUNTIME_FAILURE
    assert "checks failed" in caplog.text


def test_run(tmp_path):
    path = tmp_path / "toy.yaml"
    path.write_text(
        yaml.safe_dump(
            {
                Keys.TASK: {Keys.NAME: "synthetic_gmm"},
                Keys.SAMPLER: {Keys.STEPS: 10, Keys.CHAINS: 2},
                Keys.METRICS: {Keys.REFERENCE_SAMPLES: 100},
            }
        )
    )
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out), "--no-progress"]) == 0
    assert (out / "metrics.csv").exists()
    assert main(["trace-plot", str(out / "traces" / "trace_saip_chain0.csv")]) == 0
    assert (out / "traces" / "trace_saip_chain0.dat").exists()


def test_verbose_flag(keep_log_handlers):
    main(["trace-plot", "missing.csv", "--verbose"])
    keep_log_handlers.assert_called_once_with(True)
