"""Command-line entry point: run a scenario preset and write its artifacts.

Exit status is 0 on success, 2 for configuration errors and 3 when an
episode aborts (barrier violation or divergence). Partial logs of aborted
runs are still written.
"""
from __future__ import annotations

import argparse
import copy
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .config import PRESET_NAMES, ConfigError, ScenarioPreset, load_preset, parse_config
from .critic import CriticState
from .csvlog import write_comparison, write_trajectory, write_weights
from .metrics import MetricsReport, emit_metrics
from .performance import ConstraintViolation
from .simulation import DivergenceError, EpisodeAborted, TrajectoryLog, run_scenario

log = logging.getLogger("pptrack")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3
COMPARE_LABELS = {"quadratic": "quadratic", "risk-sensitive": "risk_sensitive"}


@dataclass
class RunResult:
    preset: ScenarioPreset
    log: TrajectoryLog
    critic: CriticState
    runtime_s: float
    abort: dict | None

    @property
    def ok(self) -> bool:
        return self.abort is None


def _abort_info(exc: EpisodeAborted) -> dict:
    cause = exc.cause
    info = {"reason": type(cause).__name__, "message": str(cause)}
    if isinstance(cause, ConstraintViolation):
        info.update(kind=cause.kind, index=cause.index, margin=cause.margin, t=cause.t)
    elif isinstance(cause, DivergenceError):
        info.update(t=cause.t)
    return info


def run_preset(preset: ScenarioPreset) -> RunResult:
    """Run one episode; aborts are captured in ``RunResult.abort``."""
    critic = preset.critic()
    t0 = time.perf_counter()
    abort = None
    try:
        trajectory = run_scenario(preset.sim_config(), preset.models(), preset.cost(),
                                  preset.basis(), preset.x0, critic, monitor=preset.penalty())
    except EpisodeAborted as exc:
        trajectory, abort = exc.log, _abort_info(exc)
    return RunResult(preset, trajectory, critic, time.perf_counter() - t0, abort)


def metrics_of(result: RunResult) -> MetricsReport:
    sim = result.preset.sim_config()
    steps = round(result.log.t[-1] / sim.dt) if len(result.log) else 0
    return emit_metrics(result.log, result.preset, buffer=result.critic.buffer,
                        runtime_s=result.runtime_s, steps=steps, abort=result.abort)


def write_artifacts(result: RunResult, out_dir: Path, stem: str | None = None) -> dict[str, Path]:
    stem = stem or result.preset.name
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "config": out_dir / f"{stem}_config.ini",
        "trajectory": out_dir / f"{stem}_trajectory.csv",
        "weights": out_dir / f"{stem}_weights.csv",
    }
    paths["config"].write_text(result.preset.to_ini())
    write_trajectory(result.log, paths["trajectory"])
    write_weights(result.log, paths["weights"])
    if len(result.log):
        report = metrics_of(result)
        paths["metrics_json"] = out_dir / f"{stem}_metrics.json"
        paths["metrics_txt"] = out_dir / f"{stem}_metrics.txt"
        paths["metrics_json"].write_text(report.to_json())
        paths["metrics_txt"].write_text(report.to_text())
    return paths


def comparison_presets(preset: ScenarioPreset) -> dict[str, ScenarioPreset]:
    """The same scenario under both cost variants, everything else shared."""
    out = {}
    for variant, label in COMPARE_LABELS.items():
        values = copy.deepcopy(preset.values)
        values["cost"]["variant"] = variant
        values["scenario"]["name"] = f"{preset.name}--{label}"
        out[label] = ScenarioPreset(values)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pptrack",
        description="Adaptive-critic optimal tracking with prescribed-performance penalties.")
    p.add_argument("--scenario", choices=PRESET_NAMES, default="pp-otcp",
                   help="preset to run, or the base of --config overrides (default: %(default)s)")
    p.add_argument("--config", type=Path, help="INI file overriding preset values")
    p.add_argument("--out-dir", type=Path, default=Path("runs"),
                   help="artifact directory (default: %(default)s)")
    p.add_argument("--t-end", type=float, help="override simulation horizon [s]")
    p.add_argument("--dt", type=float, help="override integration step [s]")
    p.add_argument("--compare-ppf", action="store_true",
                   help="run quadratic and risk-sensitive costs from the same initial state "
                        "and write a joint margins CSV")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective configuration and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_preset(args) -> ScenarioPreset:
    preset = (parse_config(args.config, base=args.scenario) if args.config
              else load_preset(args.scenario))
    overrides = {}
    if args.t_end is not None:
        overrides["simulation.t_end"] = args.t_end
    if args.dt is not None:
        overrides["simulation.dt"] = args.dt
    return preset.with_overrides(overrides) if overrides else preset


def _report(result: RunResult, paths: dict[str, Path]):
    status = "completed" if result.ok else f"ABORTED ({result.abort['message']})"
    print(f"{result.preset.name}: {status}, {len(result.log)} rows, "
          f"{result.runtime_s:.2f} s wall")
    for kind, path in paths.items():
        print(f"  {kind:<12} {path}")


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        preset = resolve_preset(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(preset.to_ini())
        return EXIT_OK

    if not args.compare_ppf:
        result = run_preset(preset)
        _report(result, write_artifacts(result, args.out_dir))
        return EXIT_OK if result.ok else EXIT_ABORT

    results = {label: run_preset(p) for label, p in comparison_presets(preset).items()}
    for label, result in results.items():
        _report(result, write_artifacts(result, args.out_dir, stem=f"compare_{label}"))
    monitor = preset.penalty()
    path = write_comparison({k: r.log for k, r in results.items()},
                            lambda t: monitor.alpha * monitor.rho(t),
                            args.out_dir / "compare_margins.csv")
    print(f"  {'margins':<12} {path}")
    return EXIT_OK if all(r.ok for r in results.values()) else EXIT_ABORT


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
