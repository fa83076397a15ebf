#!/usr/bin/env python3
"""View synthesis from ground truth: warp a source frame into the target.

With true depth and true relative pose, the warped source should look like
the target almost everywhere — the assumption photometric self-supervision
rests on. Prints the residual and shows how it grows with camera step.
"""

import numpy as np

from scopedepth import (
    CameraIntrinsics,
    SceneParams,
    generate_trajectory,
    relative_pose,
    render_view,
    synthesize_warped_image,
)

K = CameraIntrinsics(48, 48, 31.5, 31.5)
params = SceneParams(seed=3)

for step in (0.35, 1.0, 2.0):
    traj = generate_trajectory(params, 3, step)
    views = [render_view(params, p, K, 64, 64) for p in traj]
    tgt_img, tgt_depth, tgt_hit = views[1]
    rel = relative_pose(traj[1], traj[0])
    warped, valid = synthesize_warped_image(views[0][0], tgt_depth, rel, K)
    sel = valid.data & tgt_hit.data
    l1 = np.abs(
        warped.data.astype(np.float64) - tgt_img.data.astype(np.float64)
    ).mean(axis=2)
    print(
        f"step {step:4.2f} mm: mean L1 on valid wall pixels {l1[sel].mean():.4f} "
        f"(valid {sel.mean():.2%})"
    )

print()
print("residual scales with the step because the light travels with the")
print("camera; small inter-frame motion is the photometrically consistent")
print("regime, as in real video")
