"""Procedural colon-like scenes with exact ground truth.

A scene is an implicit tube around a gently curving axis, with periodic
radial ridges (haustra-like folds), a procedural albedo texture, and a
point light travelling with the camera (inverse-square falloff plus
optional saturating specular discs).  Rays are sphere-traced against the
implicit surface with a conservative Lipschitz step, so straight-tube
configurations have closed-form oracle intersections and every reported
hit re-substitutes into the surface equation to sub-micron residuals.

The generator also fabricates structure-from-motion style depth labels:
globally rescaled, multiplicatively noised, with holes concentrated in
high-gradient regions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, Pose, rotation_xyz
from .imagery import DepthMap, Image, Mask, write_pfm, write_ppm
from .rng import Xoshiro256, hash_unit_np, normal_field_np


@dataclass(frozen=True)
class SceneParams:
    radius_mm: float = 12.0
    curve_amp_mm: float = 10.0
    curve_freq: float = 0.05  # rad/mm along the axis
    ridge_amp_mm: float = 2.0
    ridge_period_mm: float = 14.0
    texture_octaves: int = 3
    texture_contrast: float = 0.55
    texture_scale_mm: float = 6.0  # base wavelength of the albedo noise
    far_cap_mm: float = 80.0
    seed: int = 0

    def __post_init__(self):
        if not self.radius_mm > self.ridge_amp_mm >= 0:
            raise ValueError("need radius > ridge amplitude >= 0")
        if self.far_cap_mm <= 0:
            raise ValueError("far cap must be positive")

    def shifted_domain(
        self,
        texture_contrast_scale: float = 1.6,
        light_scale: float = 0.7,
        curvature_scale: float = 1.2,
    ) -> "SceneParams":
        """Altered-appearance variant used for domain-transfer experiments:
        texture contrast, illumination (applied via the light model), and
        curvature amplitude change while the tube topology stays put."""
        return replace(
            self,
            texture_contrast=self.texture_contrast * texture_contrast_scale,
            curve_amp_mm=self.curve_amp_mm * curvature_scale,
        )


@dataclass(frozen=True)
class LightModel:
    """Head-mounted point light: intensity * cos / distance^2 Lambertian
    shading, optionally topped by view-aligned specular saturation discs."""

    intensity: float = 1000.0
    specular: bool = False
    spec_strength: float = 1.5  # > 1 so disc cores saturate after clamping
    spec_power: float = 16.0


def _axis_center(params: SceneParams, z):
    z = np.asarray(z, dtype=np.float64)
    cx = params.curve_amp_mm * np.sin(params.curve_freq * z)
    cy = params.curve_amp_mm * np.sin(0.73 * params.curve_freq * z + 1.1)
    return cx, cy


def _axis_tangent(params: SceneParams, z):
    z = np.asarray(z, dtype=np.float64)
    dcx = params.curve_amp_mm * params.curve_freq * np.cos(params.curve_freq * z)
    dcy = (
        params.curve_amp_mm
        * 0.73
        * params.curve_freq
        * np.cos(0.73 * params.curve_freq * z + 1.1)
    )
    return dcx, dcy


def _ridge_radius(params: SceneParams, z):
    bump = 0.5 + 0.5 * np.cos(2.0 * np.pi * np.asarray(z, np.float64) / params.ridge_period_mm)
    return params.radius_mm - params.ridge_amp_mm * bump


def _ridge_radius_dz(params: SceneParams, z):
    k = 2.0 * np.pi / params.ridge_period_mm
    return params.ridge_amp_mm * 0.5 * k * np.sin(k * np.asarray(z, np.float64))


def surface_field(params: SceneParams, points: np.ndarray) -> np.ndarray:
    """Implicit wall function: positive inside the lumen, zero on the wall.

    f(p) = ridge_radius(z) - || p.xy - axis(z) ||.
    """
    p = np.asarray(points, dtype=np.float64)
    cx, cy = _axis_center(params, p[..., 2])
    rho = np.hypot(p[..., 0] - cx, p[..., 1] - cy)
    return _ridge_radius(params, p[..., 2]) - rho


def _lipschitz(params: SceneParams) -> float:
    axis_slope = params.curve_amp_mm * params.curve_freq * np.hypot(1.0, 0.73)
    ridge_slope = params.ridge_amp_mm * np.pi / params.ridge_period_mm
    return 1.0 + axis_slope + ridge_slope


def surface_normal(params: SceneParams, points: np.ndarray) -> np.ndarray:
    """Inward unit normal (gradient of :func:`surface_field`)."""
    p = np.asarray(points, dtype=np.float64)
    cx, cy = _axis_center(params, p[..., 2])
    dx = p[..., 0] - cx
    dy = p[..., 1] - cy
    rho = np.maximum(np.hypot(dx, dy), 1e-12)
    ux = dx / rho
    uy = dy / rho
    dcx, dcy = _axis_tangent(params, p[..., 2])
    gz = _ridge_radius_dz(params, p[..., 2]) + ux * dcx + uy * dcy
    g = np.stack([-ux, -uy, gz], axis=-1)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


_TRACE_TOL = 1e-4  # mm
_TRACE_MAX_ITERS = 2048


def _trace(params: SceneParams, origins: np.ndarray, dirs: np.ndarray,
           z_cam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sphere-trace rays (world frame).  ``z_cam`` holds each ray's
    camera-frame z rate, so ``t * z_cam`` is its current z-depth.  Returns
    (ray parameter t, hit flag); misses stop at the far-cap depth."""
    n = origins.shape[0]
    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    L = _lipschitz(params)
    t_cap = params.far_cap_mm / np.maximum(z_cam, 1e-9)
    for _ in range(_TRACE_MAX_ITERS):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        p = origins[idx] + t[idx, None] * dirs[idx]
        f = surface_field(params, p)
        newly_hit = f < _TRACE_TOL
        hit[idx[newly_hit]] = True
        active[idx[newly_hit]] = False
        adv = idx[~newly_hit]
        t[adv] += f[~newly_hit] / L
        over = t[adv] >= t_cap[adv]
        active[adv[over]] = False
    return t, hit


def _value_noise(seed: int, pts: np.ndarray, octaves: int) -> np.ndarray:
    """Seamless 3-D value noise in [0, 1]; trilinear lattice interpolation
    of hashed corners, octave amplitudes halving."""
    total = np.zeros(pts.shape[:-1])
    amp_sum = 0.0
    amp = 1.0
    for octave in range(max(octaves, 1)):
        q = pts * (2.0**octave)
        base = np.floor(q).astype(np.int64)
        frac = q - base
        acc = np.zeros(pts.shape[:-1])
        for corner in range(8):
            off = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
            w = np.ones(pts.shape[:-1])
            for axis in range(3):
                fa = frac[..., axis]
                w = w * (fa if off[axis] else 1.0 - fa)
            v = hash_unit_np(
                seed + 101 * octave,
                base[..., 0] + off[0],
                base[..., 1] + off[1],
                base[..., 2] + off[2],
            )
            acc += w * v
        total += amp * acc
        amp_sum += amp
        amp *= 0.5
    return total / amp_sum


def _albedo(params: SceneParams, points: np.ndarray) -> np.ndarray:
    """Procedural mucosa-like color at surface points."""
    p = np.asarray(points, dtype=np.float64)
    cx, cy = _axis_center(params, p[..., 2])
    dx = p[..., 0] - cx
    dy = p[..., 1] - cy
    theta = np.arctan2(dy, dx)
    wrap = params.radius_mm / params.texture_scale_mm
    uv = np.stack(
        [wrap * np.cos(theta), wrap * np.sin(theta),
         p[..., 2] / params.texture_scale_mm], axis=-1,
    )
    noise = _value_noise(params.seed, uv, params.texture_octaves)
    mod = 1.0 + params.texture_contrast * (noise - 0.5)
    base = np.array([0.80, 0.46, 0.38])
    fine = _value_noise(params.seed + 7, uv * 3.1, max(params.texture_octaves - 1, 1))
    tint = 1.0 + 0.35 * params.texture_contrast * (fine[..., None] - 0.5) * np.array(
        [0.3, 1.0, 0.8]
    )
    return np.clip(base * mod[..., None] * tint, 0.0, 1.0)


def render_view(
    params: SceneParams,
    pose: Pose,
    K: CameraIntrinsics,
    w: int,
    h: int,
    light: LightModel | None = None,
) -> tuple[Image, DepthMap, Mask]:
    """Ray-cast one view.  ``pose`` is the camera-to-world transform.

    Returns the shaded image, the camera-frame z-depth map (far-cap depth
    where the ray leaves the tube unhit), and the hit-validity mask.
    """
    light = light or LightModel()
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    rays_cam = np.stack(
        [(gx - K.cx) / K.fx, (gy - K.cy) / K.fy, np.ones_like(gx)], axis=-1
    )
    norms = np.linalg.norm(rays_cam, axis=-1, keepdims=True)
    dirs_cam = rays_cam / norms
    dirs_world = dirs_cam @ pose.rotation.T
    origin = pose.translation
    n = w * h
    dirs_flat = dirs_world.reshape(n, 3)
    z_rate = dirs_cam[..., 2].reshape(n)
    origins = np.broadcast_to(origin, (n, 3))
    if surface_field(params, origin[None, :])[0] <= 0:
        raise ValueError("camera is outside the tube")
    t, hit = _trace(params, origins, dirs_flat, z_rate)
    depth = np.where(hit, t * z_rate, params.far_cap_mm)
    pts = origins + t[:, None] * dirs_flat
    normals = surface_normal(params, pts)
    to_cam = -dirs_flat  # light sits at the camera center
    cosi = np.maximum((normals * to_cam).sum(axis=-1), 0.0)
    dist2 = np.maximum(t, 1e-6) ** 2
    alb = _albedo(params, pts)
    shade = alb * (light.intensity * cosi / dist2)[:, None]
    if light.specular:
        spec = light.spec_strength * np.power(cosi, light.spec_power)
        shade = shade + spec[:, None]
    shade = np.where(hit[:, None], shade, 0.0)
    img = np.clip(shade, 0.0, 1.0).reshape(h, w, 3)
    return (
        Image(img),
        DepthMap(depth.reshape(h, w)),
        Mask(hit.reshape(h, w)),
    )


def generate_trajectory(
    params: SceneParams,
    n_frames: int,
    step_mm: float,
    heading_noise_rad: float = 0.008,
    z_start: float = 0.0,
    sway_mm: float = 0.0,
    sway_period: float = 8.0,
) -> list[Pose]:
    """Camera-to-world poses advancing along the tube axis.

    The camera rides the axis looking along its tangent, with small
    deterministic per-frame heading perturbations drawn from the scene
    seed's "trajectory" substream.  ``sway_mm`` adds a slow sinusoidal
    lateral offset (random phase, period ``sway_period`` frames) that gives
    consecutive frames a sideways baseline component; pure forward motion
    has no parallax at the focus of expansion, so photometric supervision
    benefits from a little sway, like a real scope tip.
    """
    if n_frames < 3:
        raise ValueError("need at least 3 frames for source/target triplets")
    if step_mm <= 0:
        raise ValueError("step must be positive")
    if step_mm > params.radius_mm:
        raise ValueError("step too large: camera would leave the tube between frames")
    if not 0 <= sway_mm < params.radius_mm - params.ridge_amp_mm:
        raise ValueError("sway must keep the camera inside the tube")
    gen = Xoshiro256(params.seed).substream("trajectory")
    phase_x = gen.uniform(0, 2 * np.pi)
    phase_y = gen.uniform(0, 2 * np.pi)
    poses = []
    for i in range(n_frames):
        z = z_start + i * step_mm
        cx, cy = _axis_center(params, z)
        off_x = sway_mm * np.sin(2 * np.pi * i / sway_period + phase_x)
        off_y = sway_mm * np.sin(2 * np.pi * i / sway_period * 0.73 + phase_y)
        dcx, dcy = _axis_tangent(params, z)
        forward = np.array([float(dcx), float(dcy), 1.0])
        forward /= np.linalg.norm(forward)
        right = np.cross(np.array([0.0, 1.0, 0.0]), forward)
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward], axis=1)
        noise = rotation_xyz(
            gen.uniform(-heading_noise_rad, heading_noise_rad),
            gen.uniform(-heading_noise_rad, heading_noise_rad),
            gen.uniform(-heading_noise_rad, heading_noise_rad),
        )
        center = np.array([float(cx) + off_x, float(cy) + off_y, z])
        poses.append(Pose(R @ noise, center))
    return poses


def simulate_sfm_labels(
    d_gt: DepthMap,
    seed: int,
    hole_fraction: float = 0.3,
    noise_rel: float = 0.05,
    global_scale: float = 1.0,
) -> tuple[DepthMap, Mask]:
    """Fake SfM reconstruction: scaled, relatively noised, hole-ridden.

    Holes are Bernoulli-drawn with probability proportional to the rank of
    the local depth-gradient magnitude, mimicking dropouts around depth
    discontinuities; the expected hole budget equals ``hole_fraction``.
    Pixels whose noised depth stays non-positive after a few redraws are
    masked out instead.
    """
    if not 0.0 <= hole_fraction < 1.0:
        raise ValueError("hole_fraction must be in [0, 1)")
    if noise_rel < 0 or global_scale <= 0:
        raise ValueError("noise_rel must be >= 0 and global_scale > 0")
    d = d_gt.data.astype(np.float64)
    h, w = d.shape
    n = d.size
    eps = noise_rel * normal_field_np(seed, (h, w), salt=0)
    for retry in range(1, 8):
        bad = 1.0 + eps <= 0
        if not bad.any():
            break
        redraw = noise_rel * normal_field_np(seed, (h, w), salt=retry)
        eps = np.where(bad, redraw, eps)
    usable = 1.0 + eps > 0
    d_sfm = np.where(usable, global_scale * d * (1.0 + eps), d.mean())
    gmag = np.hypot(*np.gradient(d))
    ranks = np.empty(n)
    ranks[np.argsort(gmag.ravel(), kind="stable")] = np.arange(1, n + 1)
    p_hole = np.minimum(hole_fraction * ranks / ((n + 1) / 2.0), 0.98).reshape(h, w)
    u = hash_unit_np(seed ^ 0xD1CE, np.arange(n).reshape(h, w))
    mask = (u >= p_hole) & usable
    return DepthMap(d_sfm), Mask(mask)


# ---------------------------------------------------------------------------
# dataset directory layout


def write_dataset(
    directory,
    params: SceneParams,
    K: CameraIntrinsics,
    n_frames: int,
    step_mm: float,
    w: int,
    h: int,
    light: LightModel | None = None,
    heading_noise_rad: float = 0.008,
    sway_mm: float = 0.0,
) -> dict:
    """Render a trajectory into the on-disk layout:

    frame_%04d.ppm, depth_%04d.pfm, pose_%04d.json, intrinsics.json,
    manifest.json.  Poses are camera-to-world.  Returns the manifest dict.
    """
    light = light or LightModel()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    poses = generate_trajectory(params, n_frames, step_mm, heading_noise_rad,
                                sway_mm=sway_mm)
    frames = []
    for i, pose in enumerate(poses):
        img, depth, _hit = render_view(params, pose, K, w, h, light)
        write_ppm(img, directory / f"frame_{i:04d}.ppm")
        write_pfm(depth, directory / f"depth_{i:04d}.pfm")
        pose.save(directory / f"pose_{i:04d}.json")
        frames.append(i)
    with open(directory / "intrinsics.json", "w") as f:
        json.dump(K.to_json(), f, indent=1)
        f.write("\n")
    manifest = {
        "params": {
            "radius_mm": params.radius_mm,
            "curve_amp_mm": params.curve_amp_mm,
            "curve_freq": params.curve_freq,
            "ridge_amp_mm": params.ridge_amp_mm,
            "ridge_period_mm": params.ridge_period_mm,
            "texture_octaves": params.texture_octaves,
            "texture_contrast": params.texture_contrast,
            "texture_scale_mm": params.texture_scale_mm,
            "far_cap_mm": params.far_cap_mm,
            "seed": params.seed,
        },
        "light": {
            "intensity": light.intensity,
            "specular": light.specular,
            "spec_strength": light.spec_strength,
            "spec_power": light.spec_power,
        },
        "width": w,
        "height": h,
        "n_frames": n_frames,
        "step_mm": step_mm,
        "heading_noise_rad": heading_noise_rad,
        "sway_mm": sway_mm,
        "frames": frames,
    }
    with open(directory / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")
    return manifest


def scene_params_from_manifest(manifest: dict) -> SceneParams:
    return SceneParams(**manifest["params"])


def light_from_manifest(manifest: dict) -> LightModel:
    return LightModel(**manifest["light"])
