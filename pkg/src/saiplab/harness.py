"""
=============
   Harness
=============

Config-driven experiment commands behind the ``saiplab`` CLI. Each command
returns an exit code; configuration and input errors propagate as
:class:`ConfigurationError` / :class:`DataSourceError` and are mapped to exit
code 2 by the CLI.

Output layout of ``run``::

    <out>/ground_truth.pgm, measurement.pgm, mask.pgm (inpainting)
    <out>/reconstruction_<variant>.pgm       chain mean, image tasks
    <out>/samples_<variant>.csv              terminal samples, vector tasks
    <out>/metrics.csv
    <out>/traces/trace_<variant>_chain<k>.csv
    <out>/config.yaml
    <out>/manifest.yaml                      lists every file above
"""

import copy
import os
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from layered_config_tree import LayeredConfigTree
from loguru import logger

from saiplab._version import __version__
from saiplab.configuration import Keys, get_configuration
from saiplab.configuration.generator import load_overrides
from saiplab.constants import data_values
from saiplab.constants.metadata import MANIFEST_VERSION, METRICS_COLUMNS, RunVariants, TaskNames
from saiplab.constants.paths import OUTPUT_DIR_ENV_VAR
from saiplab.exceptions import ConfigurationError, DataSourceError
from saiplab.image_io import write_pgm
from saiplab.metrics import evaluate
from saiplab.numerics import Rng
from saiplab.saip import SaipConfig, read_trace_csv, summarize_trace, write_trace_csv
from saiplab.sampler import RunResult, reference_samples, sample_posterior, sweep_scale
from saiplab.tasks import TaskInstance, build_sampler_config, build_task
from saiplab.verification import run_verification

CSV_FLOAT_FORMAT = "%.17g"
SPARK_CHARACTERS = "▁▂▃▄▅▆▇█"


def resolve_configuration(
    config_path: Optional[Union[Path, str]] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> LayeredConfigTree:
    """Loads the config file (or a manifest) and applies command-line overrides on top."""
    overrides = copy.deepcopy(load_overrides(config_path))
    if seed is not None:
        overrides[Keys.SEED] = seed
    if threads is not None:
        sampler = overrides.setdefault(Keys.SAMPLER, {})
        if isinstance(sampler, Dict):
            sampler[Keys.THREADS] = threads
    return get_configuration(overrides)


def resolve_output_dir(out: Optional[Union[Path, str]], config: LayeredConfigTree) -> Path:
    """``--out``, then ``io.output_dir``, then ``$SAIP_LAB_OUT``, then ``./saiplab_output``."""
    candidates = [out, config[Keys.IO][Keys.OUTPUT_DIR], os.environ.get(OUTPUT_DIR_ENV_VAR)]
    chosen = next((c for c in candidates if c), data_values.DEFAULT_OUTPUT_DIR)
    output_dir = Path(chosen)
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"Output directory '{output_dir}' is not writable: {e}") from None
    if not os.access(output_dir, os.W_OK):
        raise ConfigurationError(f"Output directory '{output_dir}' is not writable.")
    return output_dir


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def _variants(saip: SaipConfig) -> List[Tuple[str, SaipConfig]]:
    variants = [(RunVariants.BASELINE, replace(saip, enabled=False))]
    if saip.enabled:
        variants.append((RunVariants.SAIP, saip))
    return variants


def _reference_samples(task: TaskInstance, config: LayeredConfigTree) -> Optional[np.ndarray]:
    if task.name != TaskNames.SYNTHETIC_GMM:
        return None
    if task.model.noise_std <= 0:
        logger.warning("Noise-free measurement: skipping the sliced Wasserstein metric.")
        return None
    return reference_samples(
        task.prior,
        task.model,
        task.y,
        config[Keys.METRICS][Keys.REFERENCE_SAMPLES],
        config[Keys.SEED],
    )


def _applied_omega(saip: SaipConfig, result: RunResult, guidance_scale: float) -> float:
    """
    The omega the run used: ``saip.omega`` when set, otherwise the mean of the
    per-step effective scales recorded in the traces.
    """
    if saip.omega is not None:
        return float(saip.omega)
    values = np.array([record.omega for trace in result.traces for record in trace])
    if values.size == 0:
        return float(guidance_scale)
    if np.all(values == values[0]):
        return float(values[0])
    return float(values.mean())


def _metric_row(
    config: LayeredConfigTree,
    task: TaskInstance,
    variant: str,
    saip: SaipConfig,
    result: RunResult,
    reference: Optional[np.ndarray],
) -> Dict:
    metrics = config[Keys.METRICS]
    report = evaluate(
        task.ground_truth,
        result.posterior_mean(),
        peak=metrics[Keys.PEAK],
        samples=result.samples_array() if reference is not None else None,
        reference_samples=reference,
        projections=metrics[Keys.PROJECTIONS],
        rng=Rng(metrics[Keys.METRIC_SEED]),
    )
    omega = _applied_omega(saip, result, config[Keys.GUIDANCE][Keys.SCALE])
    return {
        "run_id": f"{task.name}-{variant}",
        "task": task.name,
        "method": config[Keys.GUIDANCE][Keys.METHOD],
        "saip_enabled": saip.enabled,
        "saip_variant": saip.variant,
        "omega": omega,
        "seed": int(config[Keys.SEED]),
        "psnr_db": report.psnr_db,
        "ssim": report.ssim,
        "sw_distance": report.sw_distance,
        "wall_time_s": float(result.wall_time_seconds),
        "extra_memory_bytes": int(result.peak_extra_memory_bytes),
    }


def _write_task_images(task: TaskInstance, output_dir: Path) -> List[Path]:
    if task.image_shape is None:
        return []
    files = [output_dir / "ground_truth.pgm", output_dir / "measurement.pgm"]
    write_pgm(files[0], task.ground_truth)
    write_pgm(files[1], task.model.operator.visualize(task.y))
    if task.mask is not None:
        files.append(output_dir / "mask.pgm")
        write_pgm(files[-1], task.mask.as_image())
    return files


def _write_reconstruction(
    task: TaskInstance, variant: str, result: RunResult, output_dir: Path
) -> List[Path]:
    if task.image_shape is not None:
        path = output_dir / f"reconstruction_{variant}.pgm"
        write_pgm(path, result.posterior_mean())
    else:
        path = output_dir / f"samples_{variant}.csv"
        samples = result.samples_array()
        columns = [f"x{i}" for i in range(samples.shape[1])]
        _write_csv(pd.DataFrame(samples, columns=columns), path)
    return [path]


def _write_traces(variant: str, result: RunResult, output_dir: Path) -> List[Path]:
    trace_dir = output_dir / "traces"
    trace_dir.mkdir(exist_ok=True)
    files = []
    for chain, trace in enumerate(result.traces):
        if not trace:
            continue
        path = trace_dir / f"trace_{variant}_chain{chain}.csv"
        write_trace_csv(trace, path)
        files.append(path)
    return files


def write_manifest(
    output_dir: Path,
    config: LayeredConfigTree,
    command: str,
    files: Sequence[Path],
    runs: Optional[List[Dict]] = None,
    errors: Optional[Dict[str, List[Optional[str]]]] = None,
) -> Path:
    """
    Writes ``manifest.yaml``: the resolved configuration, the build version, the
    per-run metric rows (timings included) and the inventory of written files.
    The manifest is itself a valid configuration file.
    """
    manifest = {
        Keys.MANIFEST_VERSION: MANIFEST_VERSION,
        "saiplab_version": __version__,
        "command": command,
        Keys.CONFIG: config.to_dict(),
        "runs": runs or [],
        "errors": errors or {},
        "files": sorted(str(path.relative_to(output_dir)) for path in files),
    }
    path = output_dir / "manifest.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(manifest, f, sort_keys=False)
    return path


def _write_config(config: LayeredConfigTree, output_dir: Path) -> Path:
    path = output_dir / "config.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=False)
    return path


def _report_failures(variant: str, result: RunResult) -> None:
    for chain in result.failed:
        logger.error(f"{variant} chain {chain} failed: {result.errors[chain]}")


def cmd_run(
    config_path: Optional[Union[Path, str]] = None,
    out: Optional[Union[Path, str]] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    show_progress: bool = True,
) -> int:
    """
    Runs the configured task for the baseline sampler and, when SAIP is enabled,
    the SAIP sampler under the same seed, and writes images, metrics, traces,
    the resolved config and the manifest.

    :return: 0 on success, 1 when any chain failed
    """
    config = resolve_configuration(config_path, seed, threads)
    output_dir = resolve_output_dir(out, config)
    task = build_task(config)
    base_cfg = build_sampler_config(config, show_progress=show_progress)
    reference = _reference_samples(task, config)
    record_timing = config[Keys.IO][Keys.RECORD_TIMING]

    files = _write_task_images(task, output_dir)
    rows, errors = [], {}
    exit_code = 0
    for variant, saip in _variants(base_cfg.saip):
        logger.info(f"Running {task.name} with {base_cfg.guidance.kind} guidance ({variant}).")
        result = sample_posterior(replace(base_cfg, saip=saip), task.prior, task.model, task.y)
        errors[variant] = result.errors
        if result.failed:
            _report_failures(variant, result)
            exit_code = 1
        if not result.succeeded:
            continue
        rows.append(_metric_row(config, task, variant, saip, result, reference))
        files += _write_reconstruction(task, variant, result, output_dir)
        files += _write_traces(variant, result, output_dir)

    metrics = pd.DataFrame(rows, columns=METRICS_COLUMNS)
    if not record_timing:
        metrics[["wall_time_s", "extra_memory_bytes"]] = None
    files.append(output_dir / "metrics.csv")
    _write_csv(metrics, files[-1])
    files.append(_write_config(config, output_dir))
    write_manifest(output_dir, config, "run", files, rows, errors)
    logger.info(f"Wrote {len(files) + 1} files to {output_dir}.")
    return exit_code


def cmd_verify(
    seed: Optional[int] = None,
    scale_fault: float = 0.0,
    out: Optional[Union[Path, str]] = None,
) -> int:
    """
    Runs the oracle suite and prints the pass/fail table.

    :return: 0 when every check passes, 1 otherwise
    """
    report = run_verification(
        data_values.CANONICAL_TOY_SEED if seed is None else seed, scale_fault
    )
    logger.info("Oracle checks:\n" + report.to_string(index=False))
    if out is not None:
        output_dir = Path(out)
        output_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(report, output_dir / "verify.csv")
    failed = report.loc[~report["passed"], "check"].tolist()
    if failed:
        logger.error(f"{len(failed)} checks failed: {', '.join(failed)}")
        return 1
    logger.info(f"All {len(report)} checks passed.")
    return 0


def cmd_sweep(
    config_path: Optional[Union[Path, str]] = None,
    omegas: Optional[Sequence[float]] = None,
    out: Optional[Union[Path, str]] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    show_progress: bool = True,
) -> int:
    """
    Sweeps the guidance strength on a synthetic GMM task and writes ``sweep.csv``
    with the sliced Wasserstein distance of baseline and SAIP samples to the
    exact posterior.
    """
    config = resolve_configuration(config_path, seed, threads)
    if config[Keys.TASK][Keys.NAME] != TaskNames.SYNTHETIC_GMM:
        raise ConfigurationError(
            f"'sweep' needs '{Keys.TASK}.{Keys.NAME}: {TaskNames.SYNTHETIC_GMM}' so the exact "
            f"posterior is available. Provided '{config[Keys.TASK][Keys.NAME]}'."
        )
    omegas = list(data_values.DEFAULT_SWEEP_OMEGAS if omegas is None else omegas)
    if not omegas or any(omega <= 0 for omega in omegas):
        raise ConfigurationError(f"Sweep omegas must be positive. Provided {omegas}.")
    output_dir = resolve_output_dir(out, config)
    task = build_task(config)
    cfg = build_sampler_config(config, show_progress=show_progress)
    frame = sweep_scale(
        cfg,
        task.prior,
        task.model,
        task.y,
        omegas,
        projections=config[Keys.METRICS][Keys.PROJECTIONS],
        reference=_reference_samples(task, config),
    )
    if not config[Keys.IO][Keys.RECORD_TIMING]:
        frame["wall_time_s"] = None
    path = output_dir / "sweep.csv"
    _write_csv(frame, path)
    write_manifest(output_dir, config, "sweep", [path], frame.to_dict("records"))
    return 0


def sparkline(values: Sequence[float], width: int = data_values.SPARKLINE_WIDTH) -> str:
    """Block-character sparkline; longer series are averaged into ``width`` bins."""
    values = np.asarray(values, dtype=np.float64)
    if values.size > width:
        values = np.array([chunk.mean() for chunk in np.array_split(values, width)])
    low, high = values.min(), values.max()
    if high - low < 1e-12:
        return SPARK_CHARACTERS[len(SPARK_CHARACTERS) // 2] * values.size
    levels = np.round((values - low) / (high - low) * (len(SPARK_CHARACTERS) - 1)).astype(int)
    return "".join(SPARK_CHARACTERS[level] for level in levels)


def cmd_trace_plot(trace_path: Union[Path, str]) -> int:
    """
    Writes ``<trace>.dat`` (``t s`` columns, for gnuplot) next to the trace and
    logs a sparkline of s in sampling order with the trace summary.

    :raises DataSourceError: when the trace is missing, malformed or empty
    """
    trace_path = Path(trace_path)
    trace = read_trace_csv(trace_path)
    if not trace:
        raise DataSourceError(f"Trace '{trace_path}' has no rows.")
    data_path = trace_path.with_suffix(".dat")
    with open(data_path, "w") as f:
        f.write("# t s\n")
        for record in trace:
            f.write(f"{record.t} {record.s:.17g}\n")
    summary = summarize_trace(trace)
    logger.info(f"s from t={trace[0].t} to t={trace[-1].t}: {sparkline([r.s for r in trace])}")
    for key, value in summary.items():
        logger.info(f"  {key}: {value}")
    logger.info(f"Wrote {data_path}.")
    return 0
