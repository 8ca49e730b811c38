"""Evaluation metrics and report containers.

The trajectory error is the mean Euclidean pixel distance per timestep.
Datasets are scored as the mean of per-scene errors over the denoising
window (observed span) and the prediction window separately; their sum is
the single ranking number used everywhere.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyInput, EmptyTrajectory, LengthMismatch


def mse_t(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean Euclidean distance between two (T, 2) pixel tracks."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.ndim != 2 or pred.shape[1] != 2 or truth.ndim != 2 or truth.shape[1] != 2:
        raise LengthMismatch(f"pixel tracks must be (T, 2), got {pred.shape} and {truth.shape}")
    if pred.shape[0] != truth.shape[0]:
        raise LengthMismatch(f"{pred.shape[0]} predicted steps vs {truth.shape[0]} true steps")
    if pred.shape[0] == 0:
        raise EmptyTrajectory("cannot score an empty trajectory")
    return float(np.linalg.norm(pred - truth, axis=1).mean())


@dataclass(frozen=True)
class EvalReport:
    """Scores for one method on one split."""

    method: str
    split: str
    n_scenes: int
    mse_d: float  # denoising window error, pixels
    mse_p: float  # prediction window error, pixels
    mse_sum: float  # mse_d + mse_p
    config_hash: str = ""
    seed: int = 0

    def validate(self) -> None:
        if abs(self.mse_sum - (self.mse_d + self.mse_p)) > 1e-9:
            raise ValueError(
                f"sum {self.mse_sum} != {self.mse_d} + {self.mse_p} for {self.method}"
            )
        if self.mse_d < 0 or self.mse_p < 0:
            raise ValueError(f"negative error in report for {self.method}")


def score_scenes(predict, scenes, method: str, split: str, config_hash: str = "", seed: int = 0) -> EvalReport:
    """Run predict(scene) -> (denoised_px, future_px) over scenes and
    aggregate. Scenes are processed in ascending seed order so reports do
    not depend on input ordering."""
    if not scenes:
        raise EmptyInput(f"no scenes in split {split!r}")
    d_errors, p_errors = [], []
    for scene in sorted(scenes, key=lambda s: s.seed):
        hidden = scene.out_of_sight()
        denoised, future = predict(scene)
        d_errors.append(mse_t(denoised, hidden.pixel[: scene.t_obs]))
        p_errors.append(mse_t(future, hidden.pixel[scene.t_obs:]))
    mse_d = float(np.mean(d_errors))
    mse_p = float(np.mean(p_errors))
    report = EvalReport(
        method=method,
        split=split,
        n_scenes=len(scenes),
        mse_d=mse_d,
        mse_p=mse_p,
        mse_sum=mse_d + mse_p,
        config_hash=config_hash,
        seed=seed,
    )
    report.validate()
    return report


CSV_FIELDS = ["method", "split", "n_scenes", "mse_d", "mse_p", "mse_sum", "config_hash", "seed"]


def reports_to_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        row = asdict(report)
        for key in ("mse_d", "mse_p", "mse_sum"):
            row[key] = repr(row[key])
        writer.writerow(row)
    return buf.getvalue()


def reports_from_csv(text: str) -> list[EvalReport]:
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for row in reader:
        out.append(
            EvalReport(
                method=row["method"],
                split=row["split"],
                n_scenes=int(row["n_scenes"]),
                mse_d=float(row["mse_d"]),
                mse_p=float(row["mse_p"]),
                mse_sum=float(row["mse_sum"]),
                config_hash=row.get("config_hash", ""),
                seed=int(row.get("seed", 0)),
            )
        )
    return out


def reports_to_markdown(reports: list[EvalReport], title: str = "Evaluation") -> str:
    lines = [f"# {title}", ""]
    lines.append("| method | split | scenes | MSE-D | MSE-P | SUM | seed |")
    lines.append("|---|---|---|---|---|---|---|")
    for r in reports:
        lines.append(
            f"| {r.method} | {r.split} | {r.n_scenes} | {r.mse_d:.3f} | {r.mse_p:.3f} | "
            f"{r.mse_sum:.3f} | {r.seed} |"
        )
    lines.append("")
    return "\n".join(lines)
