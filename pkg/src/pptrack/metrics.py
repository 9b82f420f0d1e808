"""Summary metrics of a closed-loop episode."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .critic import ExperienceBuffer, hamiltonian_residual
from .performance import ConstraintViolation
from .simulation import TrajectoryLog

WINDOW = 10.0  # s, averaging window for early/late tracking error
FINAL_WINDOW = 5.0  # s, window of final_error_norm
SETTLE_WINDOW = 30.0  # s, trailing window of the weight relative change


@dataclass
class MetricsReport:
    scenario: str
    completed: bool
    t_final: float
    rows: int
    weight_convergence_time: float
    weight_rel_change_tail: float
    weight_norm_final: float
    violation_count: int
    max_margin: list[float]
    final_error_norm: float
    mean_error_first: float
    mean_error_last: float
    hjb_residual_first: float
    hjb_residual_last: float
    buffer_min_sv: float
    buffer_rank: int | None = None
    buffer_lambda_min: float | None = None
    buffer_size: int | None = None
    runtime_s: float | None = None
    steps: int | None = None
    abort: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=False, default=_jsonable) + "\n"

    def to_text(self) -> str:
        rows = []
        for key, value in asdict(self).items():
            if isinstance(value, list):
                value = ", ".join(_num(v) for v in value)
            elif isinstance(value, dict):
                value = json.dumps(value, default=_jsonable) if value else "-"
            elif value is None:
                value = "-"
            else:
                value = _num(value)
            rows.append((key, value))
        width = max(len(k) for k, _ in rows)
        return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def _num(v) -> str:
    if isinstance(v, bool) or isinstance(v, (int, np.integer)) or isinstance(v, str):
        return str(v)
    return f"{float(v):.6g}"


def weight_convergence_time(t, W, eps: float | None = None, rel: float = 0.01) -> float:
    """First ``t`` with ``sup_{tau >= t} |W(tau) - W(t_end)| <= eps``.

    ``eps`` defaults to ``rel * |W(t_end)|``.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    dist = np.linalg.norm(W - W[-1], axis=1)
    if eps is None:
        eps = rel * np.linalg.norm(W[-1])
    tail_sup = np.maximum.accumulate(dist[::-1])[::-1]
    return float(np.asarray(t)[np.argmax(tail_sup <= eps)])


def weight_relative_change(t, W, t_from: float) -> float:
    """``sup_{tau >= t_from} |W(tau) - W(t_end)| / |W(t_end)|``."""
    t = np.asarray(t)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    sel = t >= t_from - 1e-9
    dist = np.linalg.norm(W[sel] - W[-1], axis=1).max(initial=0.0)
    norm = np.linalg.norm(W[-1])
    if norm == 0:
        return 0.0 if dist == 0 else float("inf")
    return float(dist / norm)


def window_mean(t, values, t_lo: float, t_hi: float) -> float:
    t = np.asarray(t)
    sel = (t >= t_lo - 1e-9) & (t <= t_hi + 1e-9)
    return float(np.mean(np.asarray(values)[sel])) if sel.any() else float("nan")


def violation_count(margins) -> int:
    margins = np.atleast_2d(np.asarray(margins, dtype=float))
    return int(np.count_nonzero(np.any(margins >= 1.0, axis=1)))


def hjb_residual_series(log: TrajectoryLog, preset, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Hamiltonian residual at logged rows, using each row's weights."""
    models, cost, spec, critic = preset.models(), preset.cost(), preset.basis(), preset.critic()
    idx = np.arange(0, len(log), stride)
    out = np.empty(idx.size)
    for j, i in enumerate(idx):
        eta = np.concatenate((log.e[i], log.x_r[i]))
        c = critic.with_weights(log.W[i])
        try:
            out[j] = hamiltonian_residual(c, spec, models.plant, models.reference, cost, eta,
                                          float(log.t[i]))
        except ConstraintViolation:
            out[j] = np.nan
    return log.t[idx], out


def emit_metrics(log: TrajectoryLog, preset, *, buffer: ExperienceBuffer | None = None,
                 runtime_s: float | None = None, steps: int | None = None,
                 abort: dict | None = None, residual_stride: int = 10) -> MetricsReport:
    """Summarise an episode; ``abort`` describes why a run stopped early."""
    if not len(log):
        raise ValueError("cannot compute metrics of an empty log")
    t = log.t
    t0, t1 = float(t[0]), float(t[-1])
    err = np.linalg.norm(log.e, axis=1)
    margins = log.margins
    has_margins = not np.all(np.isnan(margins))
    rt, res = hjb_residual_series(log, preset, stride=residual_stride)
    abs_res = np.abs(res)
    return MetricsReport(
        scenario=preset.name,
        completed=abort is None,
        t_final=t1,
        rows=len(log),
        weight_convergence_time=weight_convergence_time(t, log.W),
        weight_rel_change_tail=weight_relative_change(t, log.W, t1 - SETTLE_WINDOW),
        weight_norm_final=float(np.linalg.norm(log.W[-1])),
        violation_count=violation_count(margins) if has_margins else 0,
        max_margin=(np.nanmax(margins, axis=0).tolist() if has_margins
                    else [float("nan")] * log.n),
        final_error_norm=window_mean(t, err, t1 - FINAL_WINDOW, t1),
        mean_error_first=window_mean(t, err, t0, t0 + WINDOW),
        mean_error_last=window_mean(t, err, t1 - WINDOW, t1),
        hjb_residual_first=window_mean(rt, abs_res, t0, t0 + WINDOW),
        hjb_residual_last=window_mean(rt, abs_res, t1 - WINDOW, t1),
        buffer_min_sv=float(log.min_sv[-1]),
        buffer_rank=None if buffer is None else buffer.rank,
        buffer_lambda_min=None if buffer is None else buffer.lambda_min(),
        buffer_size=None if buffer is None else len(buffer),
        runtime_s=runtime_s,
        steps=steps,
        abort=abort,
    )
