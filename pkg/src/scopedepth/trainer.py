"""Gradient-descent training of depth fields under five supervision regimes.

Supervision comes from ground-truth depth, simulated SfM labels, multi-view
photometric consistency, or a frozen teacher ensemble (with or without the
teacher's predictive variance folded into the loss scale).  Optimization is
plain fixed-step gradient descent on the MAP objective, which keeps every
run bitwise reproducible from (regime, data, config, seed) and lets the
finite-difference audit check the assembled analytic gradient end to end,
warp, sampling, SSIM and minimum-over-sources included.
"""

from __future__ import annotations

import enum
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .geometry import CameraIntrinsics, Pose, warp_coordinates_with_jacobian
from .imagery import DepthMap, Image, Mask, UncMap
from .losses import (
    LossConfig,
    plain_student_nll_arrays,
    prior_loss,
    selfsup_nll_arrays,
    supervised_nll_arrays,
    uncertain_teacher_nll_arrays,
)
from .photometry import (
    PhotometricConfig,
    edge_aware_smoothness,
    edge_aware_smoothness_grad,
    ssim_backward_channel,
    _ssim_channel,
)
from .predictor import DepthField, TrainConfig, backward, forward_arrays, init_random


class Regime(enum.Enum):
    SUPERVISED_GT = "supervised-gt"
    SUPERVISED_SFM = "supervised-sfm"
    SELF_SUPERVISED = "self-supervised"
    PLAIN_STUDENT = "plain-student"
    UNCERTAIN_STUDENT = "uncertain-student"


class NumericFailure(RuntimeError):
    """Loss or gradient became non-finite; carries the failing step."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True, eq=False)
class LabeledFrame:
    """Depth-supervised sample: label map plus optional validity mask.

    The observation image is carried for provenance but the field predictor
    does not condition on it.
    """

    depth: DepthMap
    mask: Mask | None = None
    image: Image | None = None


@dataclass(frozen=True, eq=False)
class StudentFrame:
    """Distillation sample: teacher depth, optionally teacher std."""

    d_teacher: DepthMap
    sigma_teacher: UncMap | None = None
    mask: Mask | None = None
    image: Image | None = None


@dataclass(frozen=True, eq=False)
class Triplet:
    """Self-supervision sample: target plus warped-source ingredients."""

    target: Image
    sources: tuple[Image, ...]
    rel_poses: tuple[Pose, ...]  # target-camera -> source-camera

    def __post_init__(self):
        if len(self.sources) != len(self.rel_poses) or not self.sources:
            raise ValueError("need equally many sources and relative poses")


@dataclass(frozen=True, eq=False)
class TrainData:
    """Regime-dependent bundle; exactly one of the collections is used."""

    frames: tuple[LabeledFrame, ...] = ()
    student_frames: tuple[StudentFrame, ...] = ()
    triplets: tuple[Triplet, ...] = ()
    K: CameraIntrinsics | None = None
    photometric: PhotometricConfig = PhotometricConfig()

    def resolution(self) -> tuple[int, int]:
        if self.frames:
            return self.frames[0].depth.width, self.frames[0].depth.height
        if self.student_frames:
            f = self.student_frames[0]
            return f.d_teacher.width, f.d_teacher.height
        if self.triplets:
            t = self.triplets[0].target
            return t.width, t.height
        raise ValueError("empty training bundle")


@dataclass(frozen=True, eq=False)
class TrainReport:
    losses: np.ndarray
    wall_clock: float
    seed: int

    def smoothed(self, window: int = 50) -> np.ndarray:
        """Trailing moving average of the loss trajectory."""
        if window < 1 or window > self.losses.size:
            raise ValueError("bad smoothing window")
        c = np.concatenate([[0.0], np.cumsum(self.losses)])
        return (c[window:] - c[:-window]) / window

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write("step,loss\r\n")
            for i, v in enumerate(self.losses):
                f.write(f"{i},{v!r}\r\n")


def _check_bundle(regime: Regime, data: TrainData) -> None:
    if regime in (Regime.SUPERVISED_GT, Regime.SUPERVISED_SFM):
        if not data.frames:
            raise ValueError(f"{regime.value} needs labeled frames")
    elif regime == Regime.SELF_SUPERVISED:
        if not data.triplets or data.K is None:
            raise ValueError("self-supervised training needs triplets and intrinsics")
    else:
        if not data.student_frames:
            raise ValueError(f"{regime.value} needs teacher frames")
        if regime == Regime.UNCERTAIN_STUDENT:
            for f in data.student_frames:
                if f.sigma_teacher is None:
                    raise ValueError("uncertain-student needs teacher sigma maps")
                if f.sigma_teacher.kind != "std":
                    raise ValueError("teacher sigma must be std-kind")


def _sample_with_grad(
    src: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear sample of (h, w, c) float64 data with spatial derivatives.

    Returns (values, d/dx, d/dy, valid); invalid lookups give zeros.
    """
    h, w = src.shape[0], src.shape[1]
    valid = (xs >= 0.0) & (xs <= w - 1) & (ys >= 0.0) & (ys <= h - 1)
    xc = np.clip(np.where(valid, xs, 0.0), 0.0, w - 1)
    yc = np.clip(np.where(valid, ys, 0.0), 0.0, h - 1)
    x0 = np.minimum(np.floor(xc).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    c00 = src[y0, x0]
    c10 = src[y0, x1]
    c01 = src[y1, x0]
    c11 = src[y1, x1]
    vals = (c00 * (1 - fx) + c10 * fx) * (1 - fy) + (c01 * (1 - fx) + c11 * fx) * fy
    ddx = (c10 - c00) * (1 - fy) + (c11 - c01) * fy
    ddy = (c01 - c00) * (1 - fx) + (c11 - c10) * fx
    vals[~valid] = 0.0
    ddx[~valid] = 0.0
    ddy[~valid] = 0.0
    return vals, ddx, ddy, valid


@dataclass(frozen=True, eq=False)
class _Objective:
    """Scalar MAP loss and its gradient with respect to the grids.

    ``fingerprint`` optionally captures every integer-valued switch of the
    piecewise-smooth objective (L1 signs, clamp gates, bilinear cell
    indices, warp validity, argmin selections, smoothness signs).  Two
    parameter points with equal fingerprints lie on the same smooth piece.
    """

    loss: float
    grad_log_depth: np.ndarray
    grad_log_sigma: np.ndarray
    fingerprint: tuple | None = None


def _fingerprints_equal(a: tuple, b: tuple) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _supervised_objective(
    field: DepthField, frames, w: int, h: int, loss_cfg: LossConfig,
    teacher_mode: str | None,
    collect_fingerprint: bool = False,
) -> _Objective:
    d_hat, sigma = forward_arrays(field, w, h)
    total = 0.0
    grad_d = np.zeros((h, w))
    grad_s = np.zeros((h, w))
    nf = len(frames)
    marks: list[np.ndarray] = []
    if collect_fingerprint:
        marks.append((sigma > loss_cfg.sigma_min).astype(np.int8))
    for fr in frames:
        valid = np.full((h, w), True) if fr.mask is None else fr.mask.data
        if teacher_mode is None:
            label = fr.depth.data.astype(np.float64)
            lv = supervised_nll_arrays(label, d_hat, sigma, valid, loss_cfg)
        elif teacher_mode == "plain":
            label = fr.d_teacher.data.astype(np.float64)
            lv = plain_student_nll_arrays(label, d_hat, sigma, valid, loss_cfg)
        else:
            label = fr.d_teacher.data.astype(np.float64)
            lv = uncertain_teacher_nll_arrays(
                label, fr.sigma_teacher.data.astype(np.float64),
                d_hat, sigma, valid, loss_cfg,
            )
        if collect_fingerprint:
            marks.append(np.sign(label - d_hat).astype(np.int8) * valid)
        total += lv.scalar / nf
        grad_d += lv.grad_depth / nf
        grad_s += lv.grad_sigma / nf
    g_ld, g_ls = backward(field, grad_d, grad_s, w, h)
    return _Objective(total, g_ld, g_ls, tuple(marks) if collect_fingerprint else None)


def _selfsup_objective(
    field: DepthField, data: TrainData, w: int, h: int, loss_cfg: LossConfig,
    collect_fingerprint: bool = False,
) -> _Objective:
    pcfg = data.photometric
    alpha = pcfg.alpha
    d_hat, u_hat = forward_arrays(field, w, h)
    total = 0.0
    grad_d = np.zeros((h, w))
    grad_u = np.zeros((h, w))
    nt = len(data.triplets)
    marks: list[np.ndarray] = []
    if collect_fingerprint:
        marks.append((u_hat > loss_cfg.sigma_min).astype(np.int8))
    for trip in data.triplets:
        tgt = trip.target.data.astype(np.float64)
        nchan = tgt.shape[2]
        per_source = []
        for I_src, pose in zip(trip.sources, trip.rel_poses):
            xs, ys, in_front, dxd, dyd = warp_coordinates_with_jacobian(
                d_hat, data.K, pose
            )
            src = I_src.data.astype(np.float64)
            vals, ddx, ddy, samp_ok = _sample_with_grad(src, xs, ys)
            valid = in_front & samp_ok
            l1 = np.abs(tgt - vals).mean(axis=2)
            ssim_ch = [
                _ssim_channel(tgt[:, :, c], vals[:, :, c], pcfg) for c in range(nchan)
            ]
            ssim = np.mean(ssim_ch, axis=0)
            cand = (1 - alpha) * l1 + 0.5 * alpha * (1 - ssim)
            per_source.append(
                {"cand": np.where(valid, cand, np.inf), "vals": vals, "ddx": ddx,
                 "ddy": ddy, "dxd": dxd, "dyd": dyd, "valid": valid}
            )
            if collect_fingerprint:
                marks.append(valid.astype(np.int8))
                marks.append(np.floor(np.where(valid, xs, -1)).astype(np.int32))
                marks.append(np.floor(np.where(valid, ys, -1)).astype(np.int32))
                marks.append(
                    np.sign(tgt - vals).astype(np.int8) * valid[..., None]
                )
        stack = np.stack([s["cand"] for s in per_source])
        arg = np.argmin(stack, axis=0)
        f_p = np.min(stack, axis=0)
        valid_px = np.isfinite(f_p)
        f_p = np.where(valid_px, f_p, 0.0)
        if collect_fingerprint:
            marks.append(np.where(valid_px, arg, -1).astype(np.int8))
        lv = selfsup_nll_arrays(f_p, u_hat, valid_px, loss_cfg)
        total += lv.scalar / nt
        grad_u += lv.grad_sigma / nt
        # route d(scalar)/d(F_p) through the argmin source only
        for s_idx, s in enumerate(per_source):
            up = np.where((arg == s_idx) & valid_px, lv.grad_depth, 0.0) / nt
            if not np.any(up):
                continue
            g_vals = (
                (1 - alpha) / nchan * (-np.sign(tgt - s["vals"])) * up[..., None]
            )
            for c in range(nchan):
                g_vals[:, :, c] += ssim_backward_channel(
                    tgt[:, :, c], s["vals"][:, :, c], -0.5 * alpha / nchan * up, pcfg
                )
            d_dd = (g_vals * s["ddx"]).sum(axis=2) * s["dxd"] + (
                g_vals * s["ddy"]
            ).sum(axis=2) * s["dyd"]
            grad_d += np.where(s["valid"], d_dd, 0.0)
        if loss_cfg.lambda_u > 0:
            total += loss_cfg.lambda_u * edge_aware_smoothness(d_hat, trip.target).mean() / nt
            grad_d += loss_cfg.lambda_u * edge_aware_smoothness_grad(d_hat, trip.target) / nt
            if collect_fingerprint:
                marks.append(np.sign(np.diff(d_hat, axis=1)).astype(np.int8))
                marks.append(np.sign(np.diff(d_hat, axis=0)).astype(np.int8))
    g_ld, g_ls = backward(field, grad_d, grad_u, w, h)
    return _Objective(total, g_ld, g_ls, tuple(marks) if collect_fingerprint else None)


def _objective(
    regime: Regime, data: TrainData, field: DepthField, loss_cfg: LossConfig,
    w: int, h: int, collect_fingerprint: bool = False,
) -> _Objective:
    if regime in (Regime.SUPERVISED_GT, Regime.SUPERVISED_SFM):
        obj = _supervised_objective(
            field, data.frames, w, h, loss_cfg, None, collect_fingerprint
        )
    elif regime == Regime.PLAIN_STUDENT:
        obj = _supervised_objective(
            field, data.student_frames, w, h, loss_cfg, "plain", collect_fingerprint
        )
    elif regime == Regime.UNCERTAIN_STUDENT:
        obj = _supervised_objective(
            field, data.student_frames, w, h, loss_cfg, "uncertain",
            collect_fingerprint,
        )
    elif regime == Regime.SELF_SUPERVISED:
        obj = _selfsup_objective(field, data, w, h, loss_cfg, collect_fingerprint)
    else:
        raise ValueError(f"unknown regime {regime}")
    if loss_cfg.weight_decay > 0:
        p_loss, p_grad = prior_loss(field.params(), loss_cfg)
        n = field.log_depth.size
        return _Objective(
            obj.loss + p_loss,
            obj.grad_log_depth + p_grad[:n].reshape(field.log_depth.shape),
            obj.grad_log_sigma + p_grad[n:].reshape(field.log_sigma.shape),
            obj.fingerprint,
        )
    return obj


def train_member(
    regime: Regime, data: TrainData, cfg: TrainConfig
) -> tuple[DepthField, TrainReport]:
    """Run ``cfg.steps`` fixed-rate gradient-descent steps from a seeded
    random field; deterministic given (regime, data, cfg)."""
    _check_bundle(regime, data)
    w, h = data.resolution()
    field = init_random(cfg.seed, cfg.grid_w, cfg.grid_h, cfg.depth_init_mm, cfg.jitter)
    losses = np.empty(cfg.steps)
    t0 = time.perf_counter()
    for step in range(cfg.steps):
        obj = _objective(regime, data, field, cfg.loss, w, h)
        if not np.isfinite(obj.loss):
            raise NumericFailure(step, f"non-finite loss {obj.loss}")
        if not (np.all(np.isfinite(obj.grad_log_depth)) and np.all(np.isfinite(obj.grad_log_sigma))):
            raise NumericFailure(step, "non-finite gradient")
        losses[step] = obj.loss
        field = DepthField(
            field.log_depth - cfg.learning_rate * obj.grad_log_depth,
            field.log_sigma - cfg.learning_rate * obj.grad_log_sigma,
            field.seed,
        )
    return field, TrainReport(losses, time.perf_counter() - t0, cfg.seed)


def _train_worker(args):
    regime_value, data, cfg = args
    field, report = train_member(Regime(regime_value), data, cfg)
    return field, report


def train_ensemble(
    regime: Regime,
    data: TrainData,
    cfg: TrainConfig,
    members: int,
    base_seed: int,
    jobs: int = 1,
) -> list[tuple[DepthField, TrainReport]]:
    """Train ``members`` independent fields seeded base_seed + i, ordered by
    seed.  ``jobs`` > 1 trains members in parallel processes; results are
    identical for any jobs value."""
    if members < 1:
        raise ValueError("need at least one member")
    tasks = [
        (regime.value, data, replace(cfg, seed=base_seed + i)) for i in range(members)
    ]
    if jobs > 1 and members > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, members)) as pool:
            return list(pool.map(_train_worker, tasks))
    return [_train_worker(t) for t in tasks]


# ---------------------------------------------------------------------------
# finite-difference audit


class KinkStraddled(RuntimeError):
    """A finite-difference probe crossed a non-smooth switch of the
    objective (L1 sign, argmin flip, bilinear cell edge, validity change or
    clamp), so central differences do not measure the analytic branch."""


def finite_diff_audit(
    regime: Regime,
    data: TrainData,
    field: DepthField,
    step: float = 1e-4,
    loss_cfg: LossConfig | None = None,
) -> float:
    """Worst relative disagreement between the assembled analytic gradient
    of the full MAP objective and central finite differences, per grid
    parameter (relative step; denominator floored at 1e-8).

    Every evaluation carries an integer fingerprint of the objective's
    piecewise switches; a probe whose fingerprint differs from the base
    point raises :class:`KinkStraddled` instead of returning a corrupted
    comparison.
    """
    if field.grid_w > 8 or field.grid_h > 8:
        raise ValueError("audit fields are limited to 8x8 grids")
    _check_bundle(regime, data)
    loss_cfg = loss_cfg if loss_cfg is not None else LossConfig()
    w, h = data.resolution()
    obj = _objective(regime, data, field, loss_cfg, w, h, collect_fingerprint=True)
    analytic = np.concatenate(
        [obj.grad_log_depth.ravel(), obj.grad_log_sigma.ravel()]
    )
    theta0 = field.params()
    worst = 0.0
    for i in range(theta0.size):
        hstep = step * max(1.0, abs(theta0[i]))
        probes = []
        for sgn in (1.0, -1.0):
            theta = theta0.copy()
            theta[i] += sgn * hstep
            p = _objective(
                regime, data, field.with_params(theta), loss_cfg, w, h,
                collect_fingerprint=True,
            )
            if not _fingerprints_equal(p.fingerprint, obj.fingerprint):
                raise KinkStraddled(f"parameter {i} probe crossed a switch")
            probes.append(p.loss)
        fd = (probes[0] - probes[1]) / (2 * hstep)
        denom = max(abs(fd), abs(analytic[i]), 1e-8)
        worst = max(worst, abs(fd - analytic[i]) / denom)
    return worst


def audit_random_fields(
    regime: Regime,
    data: TrainData,
    draws: int,
    grid: int = 4,
    depth_init_mm: float = 25.0,
    jitter: float = 0.25,
    seed0: int = 100,
    step: float = 1e-4,
    loss_cfg: LossConfig | None = None,
    max_resample: int = 60,
) -> list[float]:
    """Run the audit over ``draws`` random fields, redrawing any field whose
    probes straddle a kink of the piecewise-smooth objective."""
    loss_cfg = loss_cfg if loss_cfg is not None else LossConfig()
    errors = []
    seed = seed0
    attempts = 0
    while len(errors) < draws:
        field = init_random(seed, grid, grid, depth_init_mm, jitter)
        seed += 1
        attempts += 1
        if attempts > draws + max_resample:
            raise RuntimeError("could not find enough kink-free samples")
        try:
            errors.append(finite_diff_audit(regime, data, field, step, loss_cfg))
        except KinkStraddled:
            continue
    return errors
