"""Likelihood losses with analytic gradients.

All three likelihoods share the heteroscedastic L1 shape ``|r|/s + log s``
averaged over valid pixels; they differ in what plays the role of the
residual and the scale:

* supervised: residual to depth labels, scale is the predicted aleatoric std
* self-supervised: photometric residual, scale is the photometric
  uncertainty
* uncertain teacher-student: residual to teacher depth, scale is
  sqrt(teacher_var + student_aleatoric^2)

Any predicted scale is clamped from below at ``sigma_min`` before entering
the loss; gradients are taken with respect to the raw (unclamped) scale,
zero where the clamp is active, so they match finite differences of the
actual computation.  Gradient maps hold the derivative of the *scalar*
(mean-reduced) loss, and the L1 subgradient at zero residual is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagery import DepthMap, Mask, UncMap, same_shape


@dataclass(frozen=True)
class LossConfig:
    sigma_min: float = 1e-3
    lambda_u: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.sigma_min <= 0:
            raise ValueError("sigma_min must be positive")
        if self.lambda_u < 0 or self.weight_decay < 0:
            raise ValueError("lambda_u and weight_decay must be >= 0")


@dataclass(frozen=True, eq=False)
class LossValue:
    """Scalar loss, per-pixel contributions, and gradient maps.

    ``scalar`` is the mean of ``per_pixel`` over the ``n_valid`` pixels that
    entered the reduction; gradient maps are d(scalar)/d(input) and are zero
    at masked-out pixels.
    """

    scalar: float
    per_pixel: np.ndarray
    grad_depth: np.ndarray
    grad_sigma: np.ndarray
    n_valid: int


def _reduce(term: np.ndarray, valid: np.ndarray) -> tuple[float, np.ndarray, int]:
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid pixels")
    per_pixel = np.where(valid, term, 0.0)
    return float(per_pixel.sum() / n), per_pixel, n


def supervised_nll_arrays(
    d: np.ndarray,
    d_hat: np.ndarray,
    sigma_a: np.ndarray,
    valid: np.ndarray,
    cfg: LossConfig,
) -> LossValue:
    """Mean over valid pixels of |d - d_hat| / s + log s, s = clamped sigma."""
    s = np.maximum(sigma_a, cfg.sigma_min)
    gate = (sigma_a > cfg.sigma_min).astype(np.float64)
    r = d - d_hat
    term = np.abs(r) / s + np.log(s)
    scalar, per_pixel, n = _reduce(term, valid)
    v = valid.astype(np.float64)
    grad_depth = -np.sign(r) / s * v / n
    grad_sigma = (-np.abs(r) / s**2 + 1.0 / s) * gate * v / n
    return LossValue(scalar, per_pixel, grad_depth, grad_sigma, n)


def selfsup_nll_arrays(
    f_p: np.ndarray,
    u_hat: np.ndarray,
    valid: np.ndarray,
    cfg: LossConfig,
) -> LossValue:
    """Mean over valid pixels of F_p / u + log u.

    ``grad_depth`` here carries d(scalar)/d(F_p); the chain through the warp
    into actual depth parameters happens in the trainer.
    """
    u = np.maximum(u_hat, cfg.sigma_min)
    gate = (u_hat > cfg.sigma_min).astype(np.float64)
    term = f_p / u + np.log(u)
    scalar, per_pixel, n = _reduce(term, valid)
    v = valid.astype(np.float64)
    grad_fp = (1.0 / u) * v / n
    grad_sigma = (-f_p / u**2 + 1.0 / u) * gate * v / n
    return LossValue(scalar, per_pixel, grad_fp, grad_sigma, n)


def uncertain_teacher_nll_arrays(
    d_teacher: np.ndarray,
    sigma_teacher: np.ndarray,
    d_hat: np.ndarray,
    sigma_a: np.ndarray,
    valid: np.ndarray,
    cfg: LossConfig,
) -> LossValue:
    """Teacher-supervised loss with combined scale
    s_m = sqrt(sigma_T^2 + clamp(sigma_a)^2).

    The teacher maps are constants; grad_sigma is the chain-rule derivative
    with respect to the student's raw aleatoric std.  With sigma_T == 0 the
    result is bitwise identical to :func:`supervised_nll_arrays`.
    """
    s_a = np.maximum(sigma_a, cfg.sigma_min)
    gate = (sigma_a > cfg.sigma_min).astype(np.float64)
    s_m = np.hypot(sigma_teacher, s_a)  # hypot(0, x) == x exactly
    r = d_teacher - d_hat
    term = np.abs(r) / s_m + np.log(s_m)
    scalar, per_pixel, n = _reduce(term, valid)
    v = valid.astype(np.float64)
    grad_depth = -np.sign(r) / s_m * v / n
    d_sm = (-np.abs(r) / s_m**2 + 1.0 / s_m)
    grad_sigma = d_sm * (s_a / s_m) * gate * v / n
    return LossValue(scalar, per_pixel, grad_depth, grad_sigma, n)


def plain_student_nll_arrays(
    d_teacher: np.ndarray,
    d_hat: np.ndarray,
    sigma_a: np.ndarray,
    valid: np.ndarray,
    cfg: LossConfig,
) -> LossValue:
    """Baseline distillation: supervised loss with teacher depth as label."""
    return supervised_nll_arrays(d_teacher, d_hat, sigma_a, valid, cfg)


def prior_loss(theta: np.ndarray, cfg: LossConfig) -> tuple[float, np.ndarray]:
    """weight_decay * sum(theta^2) and its gradient."""
    theta = np.asarray(theta, dtype=np.float64)
    return cfg.weight_decay * float((theta**2).sum()), 2.0 * cfg.weight_decay * theta


# ---------------------------------------------------------------------------
# typed wrappers over the raster containers


def _mask_or_full(mask: Mask | None, h: int, w: int) -> np.ndarray:
    return np.full((h, w), True) if mask is None else mask.data


def _require_std(u: UncMap, name: str) -> None:
    if u.kind != "std":
        raise ValueError(f"{name} must be a std-kind UncMap (call .to_std())")


def supervised_nll(
    d: DepthMap, d_hat: DepthMap, sigma_a: UncMap, mask: Mask | None,
    cfg: LossConfig,
) -> LossValue:
    same_shape(d, d_hat, sigma_a)
    _require_std(sigma_a, "sigma_a")
    valid = _mask_or_full(mask, d.height, d.width)
    return supervised_nll_arrays(
        d.data.astype(np.float64), d_hat.data.astype(np.float64),
        sigma_a.data.astype(np.float64), valid, cfg,
    )


def selfsup_nll(
    f_p: np.ndarray, u_hat: UncMap, valid: Mask, cfg: LossConfig
) -> LossValue:
    _require_std(u_hat, "u_hat")
    if f_p.shape != u_hat.data.shape:
        raise ValueError("residual and uncertainty dimensions disagree")
    return selfsup_nll_arrays(
        np.asarray(f_p, dtype=np.float64), u_hat.data.astype(np.float64),
        valid.data, cfg,
    )


def uncertain_teacher_nll(
    d_teacher: DepthMap, sigma_teacher: UncMap, d_hat: DepthMap,
    sigma_a: UncMap, mask: Mask | None, cfg: LossConfig,
) -> LossValue:
    same_shape(d_teacher, sigma_teacher, d_hat, sigma_a)
    _require_std(sigma_teacher, "sigma_teacher")
    _require_std(sigma_a, "sigma_a")
    valid = _mask_or_full(mask, d_hat.height, d_hat.width)
    return uncertain_teacher_nll_arrays(
        d_teacher.data.astype(np.float64), sigma_teacher.data.astype(np.float64),
        d_hat.data.astype(np.float64), sigma_a.data.astype(np.float64),
        valid, cfg,
    )


def plain_student_nll(
    d_teacher: DepthMap, d_hat: DepthMap, sigma_a: UncMap, mask: Mask | None,
    cfg: LossConfig,
) -> LossValue:
    return supervised_nll(d_teacher, d_hat, sigma_a, mask, cfg)
