"""The vision-positioning pipeline: denoise the hidden agent's sensor
track, estimate a per-timestep camera matrix from the visible agents'
(pixel, sensor) pairs, project the denoised track into the image with a
differentiable pinhole map, and predict future pixels from the projected
track. Trained end to end on pixel targets only; positions are never
supervised directly.

Model inputs are strictly: the hidden agent's sensor window and the
visible agents' pixel/sensor windows. The hidden agent's ground-truth
pixels appear only inside loss targets and metrics, never in the forward
pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import LengthMismatch, NonFiniteLoss, NoInSightAgents
from .geometry import EPS_DEPTH, CameraIntrinsics, compose_matrix, homogeneous_apply, look_at
from .metrics import mse_t
from .nn import Adam, Linear, Module, SequenceTrunk
from .simulator import (
    AIM_H,
    AIM_X,
    AIM_Y,
    ARENA_X,
    ARENA_Y,
    FOCAL,
    HEIGHT_RANGE,
    IMAGE_SIZE,
    MOUNT_H,
    MOUNT_X,
    MOUNT_Y,
    Scene,
)
from .tensor import (
    Tensor,
    add,
    clamp_away_from_zero,
    col_scale,
    concat_cols,
    div,
    mean_rows,
    mse_loss,
    mul,
    reshape,
    row_sum,
    scale,
    slice_cols,
    slice_rows,
    tile_rows,
)


@dataclass(frozen=True)
class ModelConfig:
    t_obs: int = 20
    t_pred: int = 20
    width: int = 64
    layers: int = 2
    heads: int = 4
    n_in_max: int = 8  # visible-agent slots for the camera estimator
    predictor_kind: str = "transformer"
    use_denoiser: bool = True
    use_estimator: bool = True
    use_projection: bool = True
    use_predictor: bool = True

    def slot_width(self) -> int:
        # per slot: u, v (normalized), sensor x, y, z; plus one presence
        # column per slot; the block appears twice, once per timestep and
        # once averaged over the window
        return 12 * self.n_in_max


# feature conditioning: positions are centered on the arena box and
# scaled to roughly [-1, 1]; pixels are centered on the image
ARENA_MID = np.array(
    [sum(ARENA_X) / 2.0, sum(ARENA_Y) / 2.0, sum(HEIGHT_RANGE) / 2.0]
)
ARENA_HALF = np.array(
    [(ARENA_X[1] - ARENA_X[0]) / 2.0, (ARENA_Y[1] - ARENA_Y[0]) / 2.0, (HEIGHT_RANGE[1] - HEIGHT_RANGE[0]) / 2.0]
)


def estimator_features(scene: Scene, n_in_max: int) -> np.ndarray:
    """Per-timestep feature rows for the camera estimator, (t_obs, 12*n).

    Visible agents fill slots in ascending agent_id order; surplus agents
    beyond n_in_max are dropped. Each slot holds the image-centered pixel
    [u/W - 1/2, v/H - 1/2] and the arena-normalized sensor position, with
    a trailing presence flag per slot; absent or momentarily invisible
    slots are zeroed with flag 0. The second half of every row repeats
    the block averaged over each slot's visible timesteps (flag column:
    fraction of the window visible): sensor noise shrinks with the window
    length there, which keeps the estimate usable when readings are noisy,
    while the per-timestep half still tracks a moving mount.
    """
    agents = sorted(scene.in_sight(), key=lambda a: a.agent_id)[:n_in_max]
    if not agents:
        raise NoInSightAgents(f"scene seed {scene.seed} has no visible agents")
    w, h = scene.image_size
    t_obs = scene.t_obs
    block = 6 * n_in_max
    feats = np.zeros((t_obs, 2 * block))
    for slot, agent in enumerate(agents):
        vis = agent.visible[:t_obs]
        pixel = np.nan_to_num(agent.pixel[:t_obs], nan=0.0)
        base = 5 * slot
        feats[vis, base + 0] = pixel[vis, 0] / w - 0.5
        feats[vis, base + 1] = pixel[vis, 1] / h - 0.5
        feats[vis, base + 2 : base + 5] = (agent.sensor[vis] - ARENA_MID) / ARENA_HALF
        feats[vis, 5 * n_in_max + slot] = 1.0
        if vis.any():
            feats[:, block + base : block + base + 5] = feats[vis, base : base + 5].mean(axis=0)
        feats[:, block + 5 * n_in_max + slot] = vis.mean()
    return feats


def project_rows(matrix_rows: Tensor, points: Tensor) -> Tensor:
    """Differentiable pinhole projection.

    matrix_rows is (T, 12), one row-major 3x4 matrix per step; points is
    (T, 3). Output is (T, 2) pixels. The perspective denominator is kept
    away from zero by a sign-preserving clamp whose backward pass masks
    clamped entries, so the map stays finite and differentiable for any
    matrix the estimator emits. Scaling a row by any positive factor leaves
    the output unchanged.
    """
    steps = points.data.shape[0]
    if points.data.shape[1] != 3:
        raise LengthMismatch(f"points must be (T, 3), got {points.data.shape}")
    if matrix_rows.data.shape != (steps, 12):
        raise LengthMismatch(f"matrix rows {matrix_rows.data.shape} for {steps} points")
    hom = concat_cols([points, Tensor(np.ones((steps, 1)))])
    u_num = row_sum(mul(slice_cols(matrix_rows, 0, 4), hom))
    v_num = row_sum(mul(slice_cols(matrix_rows, 4, 8), hom))
    den = clamp_away_from_zero(row_sum(mul(slice_cols(matrix_rows, 8, 12), hom)), EPS_DEPTH)
    return concat_cols([div(u_num, den), div(v_num, den)])


class TrajectoryModel(Module):
    """Interface shared by the pipeline and the learned baselines: a
    forward pass from a scene to raw-pixel tracks, with losses and metrics
    derived uniformly from it."""

    name = "model"
    cfg: ModelConfig

    def forward(self, scene: Scene) -> tuple[Tensor, Tensor]:
        raise NotImplementedError

    def loss_terms(self, scene: Scene) -> tuple[Tensor, Tensor]:
        """(denoising loss, prediction loss): mean squared error on pixel
        coordinates normalized by the image size."""
        visual, future = self.forward(scene)
        return pixel_losses(scene, visual, future)

    def predict(self, scene: Scene) -> tuple[np.ndarray, np.ndarray]:
        visual, future = self.forward(scene)
        return visual.data.copy(), future.data.copy()


def pixel_losses(scene: Scene, visual: Tensor, future: Tensor) -> tuple[Tensor, Tensor]:
    hidden = scene.out_of_sight()
    w, h = scene.image_size
    norm = np.array([1.0 / w, 1.0 / h])
    loss_d = mse_loss(col_scale(visual, norm), Tensor(hidden.pixel[: scene.t_obs] * norm))
    loss_p = mse_loss(col_scale(future, norm), Tensor(hidden.pixel[scene.t_obs:] * norm))
    return loss_d, loss_p


def nominal_camera() -> tuple[np.ndarray, np.ndarray]:
    """Camera rows of the nominal rig mount, with per-element spreads.

    Estimated cameras are parameterized as corrections to this matrix:
    row = nominal + spread * raw. The spread of each element over the
    corners of the published mount box makes a unit raw output span the
    plausible cameras, so the projection is well conditioned from the
    first optimizer step: denominators start at true scene depths, far
    from the clamp, instead of at random near-zero values. Both arrays
    are (1, 12), row-major, for the package's standard rig.
    """
    w, h = IMAGE_SIZE
    intrinsics = CameraIntrinsics(fx=FOCAL, fy=FOCAL, cx=w / 2.0, cy=h / 2.0)
    mid_mount = np.array([sum(MOUNT_X) / 2.0, sum(MOUNT_Y) / 2.0, sum(MOUNT_H) / 2.0])
    mid_aim = np.array([sum(AIM_X) / 2.0, sum(AIM_Y) / 2.0, sum(AIM_H) / 2.0])
    nominal = compose_matrix(1.0, intrinsics, look_at(mid_mount, mid_aim))
    corners = np.array(
        [
            compose_matrix(
                1.0, intrinsics, look_at(np.array([x, y, z]), np.array([u, v, s]))
            )
            for x in MOUNT_X
            for y in MOUNT_Y
            for z in MOUNT_H
            for u in AIM_X
            for v in AIM_Y
            for s in AIM_H
        ]
    )
    spread = np.maximum(np.abs(corners - nominal).max(axis=0), 1e-2)
    return nominal.reshape(1, 12), spread.reshape(1, 12)


class SensorDenoiser(Module):
    """Residual correction of the noisy sensor track, (T, 3) -> (T, 3)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.trunk = SequenceTrunk("transformer", 3, cfg.width, cfg.layers, cfg.heads, rng)
        self.head = Linear(cfg.width, 3, rng)

    def __call__(self, sensor: Tensor) -> Tensor:
        return add(sensor, self.head(self.trunk(sensor)))


class CameraEstimator(Module):
    """Per-timestep camera matrix rows from visible-agent pairs,
    (T, 6*n) -> (T, 12), as a preconditioned correction to the nominal
    mount's camera."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.trunk = SequenceTrunk("transformer", cfg.slot_width(), cfg.width, cfg.layers, cfg.heads, rng)
        self.head = Linear(cfg.width, 12, rng)
        nominal, spread = nominal_camera()
        self.nominal = Tensor(nominal)
        self.spread = spread.ravel()

    def __call__(self, feats: Tensor) -> Tensor:
        return add(col_scale(self.head(self.trunk(feats)), self.spread), self.nominal)


class FuturePixelPredictor(Module):
    """Forecast the prediction window from an observed pixel track.

    Input and output are raw pixels; coordinates are normalized by the
    image size internally and denormalized on the way out.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, kind: str | None = None):
        self.t_pred = cfg.t_pred
        self.trunk = SequenceTrunk(kind or cfg.predictor_kind, 2, cfg.width, cfg.layers, cfg.heads, rng)
        self.head = Linear(cfg.width, 2 * cfg.t_pred, rng)

    def __call__(self, pixels: Tensor, image_size: tuple[int, int]) -> Tensor:
        w, h = image_size
        normalized = col_scale(pixels, (1.0 / w, 1.0 / h))
        pooled = mean_rows(self.trunk(normalized))
        out = reshape(self.head(pooled), self.t_pred, 2)
        return col_scale(out, (w, h))


class VisionPipeline(TrajectoryModel):
    """The full four-stage model, with each stage independently removable.

    Removed stages fall back to: identity on the sensor (no denoiser), one
    learned scene-independent matrix (no estimator), a learned linear
    sensor-to-pixel map (no projection, which also drops the estimator),
    and carrying the last denoised pixel forward (no predictor).
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, name: str = "full"):
        self.cfg = cfg
        self.name = name
        if cfg.use_denoiser:
            self.denoiser = SensorDenoiser(cfg, rng)
        if cfg.use_projection:
            if cfg.use_estimator:
                self.estimator = CameraEstimator(cfg, rng)
            else:
                # scene-independent camera: a learned correction to the
                # nominal mount, starting exactly at the nominal
                nominal, spread = nominal_camera()
                self.static_rows = Tensor(np.zeros((1, 12)), requires_grad=True)
                self.static_nominal = Tensor(nominal)
                self.static_spread = spread.ravel()
        else:
            self.visual_head = Linear(3, 2, rng)
        if cfg.use_predictor:
            self.predictor = FuturePixelPredictor(cfg, rng)

    def forward(self, scene: Scene) -> tuple[Tensor, Tensor]:
        """Returns (denoised pixel track (t_obs, 2), future track (t_pred, 2))."""
        cfg = self.cfg
        if scene.t_pred != cfg.t_pred:
            raise LengthMismatch(f"scene predicts {scene.t_pred} steps, model expects {cfg.t_pred}")
        hidden = scene.out_of_sight()
        sensor = Tensor(hidden.sensor)
        t_obs = scene.t_obs

        denoised = self.denoiser(sensor) if cfg.use_denoiser else sensor

        if cfg.use_projection:
            if cfg.use_estimator:
                rows = self.estimator(Tensor(estimator_features(scene, cfg.n_in_max)))
            else:
                static = add(col_scale(self.static_rows, self.static_spread), self.static_nominal)
                rows = tile_rows(static, t_obs)
            visual = project_rows(rows, denoised)
        else:
            visual = col_scale(self.visual_head(denoised), scene.image_size)

        if cfg.use_predictor:
            future = self.predictor(visual, scene.image_size)
        else:
            future = tile_rows(slice_rows(visual, t_obs - 1, t_obs), scene.t_pred)
        return visual, future


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    pred_weight: float = 1.0  # weight of the prediction loss in the total
    seed: int = 0


@dataclass
class EpochStats:
    epoch: int
    loss_denoise: float
    loss_pred: float
    val_mse_d: float | None = None
    val_mse_p: float | None = None
    val_sum: float | None = None


@dataclass
class TrainResult:
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_sum: float | None = None


def _shuffle(seed: int, epoch: int, count: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1000003, epoch]))
    return rng.permutation(count)


def snapshot_parameters(model: Module) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.named_parameters()}


def restore_parameters(model: Module, arrays: dict[str, np.ndarray]) -> None:
    for name, p in model.named_parameters():
        if name not in arrays:
            raise KeyError(f"missing parameter {name!r} in snapshot")
        if arrays[name].shape != p.data.shape:
            raise LengthMismatch(
                f"parameter {name!r}: stored {arrays[name].shape} vs model {p.data.shape}"
            )
        p.data[...] = arrays[name]


def evaluate_split(model, scenes: list[Scene]) -> tuple[float, float]:
    """Mean denoising and prediction errors (raw pixels) over scenes."""
    d_errors, p_errors = [], []
    for scene in scenes:
        hidden = scene.out_of_sight()
        denoised, future = model.predict(scene)
        d_errors.append(mse_t(denoised, hidden.pixel[: scene.t_obs]))
        p_errors.append(mse_t(future, hidden.pixel[scene.t_obs:]))
    return float(np.mean(d_errors)), float(np.mean(p_errors))


def train_model(
    model,
    train_scenes: list[Scene],
    val_scenes: list[Scene],
    tcfg: TrainConfig,
    optimizer: Adam | None = None,
    start_epoch: int = 0,
    stop_epoch: int | None = None,
    on_epoch=None,
) -> TrainResult:
    """Joint training on the weighted pixel losses.

    The scene order is reshuffled each epoch from a generator keyed by
    (seed, epoch) alone, so resuming from a checkpoint replays the exact
    batch sequence; stop_epoch pauses a run early for checkpointing. The
    model is left holding the parameters of its best validation epoch
    (by summed error); without validation scenes, the final epoch wins.
    """
    optimizer = optimizer or Adam(model.parameters(), lr=tcfg.lr)
    result = TrainResult()
    best: dict[str, np.ndarray] | None = None
    end_epoch = tcfg.epochs if stop_epoch is None else min(stop_epoch, tcfg.epochs)
    for epoch in range(start_epoch, end_epoch):
        order = _shuffle(tcfg.seed, epoch, len(train_scenes))
        sum_d = sum_p = 0.0
        for batch_no, start in enumerate(range(0, len(order), tcfg.batch_size)):
            batch = order[start:start + tcfg.batch_size]
            terms = []
            batch_d = batch_p = 0.0
            for idx in batch:
                loss_d, loss_p = model.loss_terms(train_scenes[idx])
                terms.append(add(loss_d, scale(loss_p, tcfg.pred_weight)))
                batch_d += loss_d.item()
                batch_p += loss_p.item()
            total = scale(_sum_terms(terms), 1.0 / len(batch))
            if not np.isfinite(total.item()):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}", epoch=epoch, batch=batch_no
                )
            total.backward()
            optimizer.step()
            sum_d += batch_d
            sum_p += batch_p
        stats = EpochStats(
            epoch=epoch,
            loss_denoise=sum_d / len(order),
            loss_pred=sum_p / len(order),
        )
        if val_scenes:
            stats.val_mse_d, stats.val_mse_p = evaluate_split(model, val_scenes)
            stats.val_sum = stats.val_mse_d + stats.val_mse_p
            if result.best_val_sum is None or stats.val_sum < result.best_val_sum:
                result.best_val_sum = stats.val_sum
                result.best_epoch = epoch
                best = snapshot_parameters(model)
        result.history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    if best is not None:
        restore_parameters(model, best)
    elif result.history:
        result.best_epoch = result.history[-1].epoch
    return result


def _sum_terms(terms: list) -> "Tensor":
    total = terms[0]
    for term in terms[1:]:
        total = add(total, term)
    return total


def history_to_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,loss_denoise,loss_pred,val_mse_d,val_mse_p,val_sum"]
    for s in history:
        val = (
            f"{s.val_mse_d!r},{s.val_mse_p!r},{s.val_sum!r}"
            if s.val_sum is not None
            else ",,"
        )
        lines.append(f"{s.epoch},{s.loss_denoise!r},{s.loss_pred!r},{val}")
    return "\n".join(lines) + "\n"


def ablation_config(base: ModelConfig, drop: str) -> ModelConfig:
    """Config with one stage removed; drop is one of denoiser, estimator,
    projection, predictor."""
    flags = {
        "denoiser": "use_denoiser",
        "estimator": "use_estimator",
        "projection": "use_projection",
        "predictor": "use_predictor",
    }
    if drop not in flags:
        raise ValueError(f"unknown stage {drop!r}; expected one of {sorted(flags)}")
    return replace(base, **{flags[drop]: False})
