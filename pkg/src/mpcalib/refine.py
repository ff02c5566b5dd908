"""Joint nonlinear refinement of intrinsics, distortion, and poses.

Minimizes the squared reprojection residual over all poses at once with
Levenberg-Marquardt.  Residuals compare the rectified observed ray with the
model-predicted one, divided per axis by the current image-plane scales so
they are expressed in pixels.  The pixel scaling matters: in raw ray units
the cost owns a degenerate valley where every intrinsic shrinks toward zero
while the board recedes, which drags the optimizer away from the solution
on noisy data; pixel residuals pin the scale to the observations and also
make the optimized RMS pixel error the quantity actually minimized.

The Jacobian is analytic; residuals are ordered pose by pose, observation
by observation, with the two components interleaved.  Parameter vector
layout: ten shared entries (k_i, k_j, k_u, k_v, u0, v0, d1..d4) followed by
six per pose (rotation vector, then translation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Distortion, Intrinsics, Pose
from .dataset import CalibrationDataset, RefinementReport
from .exceptions import DegenerateProjection, InvalidIntrinsics, NonFinite
from .geometry import EPS_Z, FloatArray, rodrigues, rotation_jacobian

N_GLOBAL = 10
MAX_LAMBDA = 1e32

__all__ = [
    "PoseBlock",
    "RefineData",
    "pack_parameters",
    "unpack_parameters",
    "residual_vector",
    "full_jacobian",
    "refine_calibration",
]


@dataclass(frozen=True, slots=True)
class PoseBlock:
    """Observations of one pose, resolved to world points."""

    pose_id: int
    i: FloatArray
    j: FloatArray
    u: FloatArray
    v: FloatArray
    world: FloatArray  # (M, 3) board corners in the board frame


class RefineData:
    """Per-pose observation blocks extracted from a dataset."""

    __slots__ = ("blocks",)

    def __init__(self, blocks: list[PoseBlock]):
        self.blocks = blocks

    @classmethod
    def from_dataset(cls, dataset: CalibrationDataset) -> "RefineData":
        board3 = dataset.board.corner_points_3d()
        blocks = []
        for pose_obs, pidx in dataset.iter_flat():
            blocks.append(
                PoseBlock(
                    pose_id=pose_obs.pose_id,
                    i=pose_obs.i.astype(np.float64),
                    j=pose_obs.j.astype(np.float64),
                    u=np.asarray(pose_obs.u, dtype=np.float64),
                    v=np.asarray(pose_obs.v, dtype=np.float64),
                    world=board3[pidx],
                )
            )
        return cls(blocks)

    @property
    def n_residuals(self) -> int:
        return 2 * sum(len(b.i) for b in self.blocks)


def pack_parameters(
    intrinsics: Intrinsics, distortion: Distortion, poses: list[Pose]
) -> FloatArray:
    parts = [intrinsics.as_array(), distortion.as_array()]
    for pose in poses:
        parts.append(pose.rotation)
        parts.append(pose.translation)
    return np.concatenate(parts)


def unpack_parameters(
    theta: FloatArray, n_poses: int
) -> tuple[Intrinsics, Distortion, list[Pose]]:
    theta = np.asarray(theta, dtype=np.float64)
    expected = N_GLOBAL + 6 * n_poses
    if theta.shape != (expected,):
        raise ValueError(f"expected {expected} parameters, got {theta.shape}")
    intr = Intrinsics.from_array(theta[:6])
    dist = Distortion.from_array(theta[6:10])
    poses = []
    for p in range(n_poses):
        base = N_GLOBAL + 6 * p
        poses.append(
            Pose(rotation=theta[base : base + 3], translation=theta[base + 3 : base + 6])
        )
    return intr, dist, poses


def _pose_terms(
    theta: FloatArray, block: PoseBlock, rot: FloatArray, tvec: FloatArray
) -> dict:
    """Shared intermediates for one pose's residuals and Jacobian."""
    ki, kj, ku, kv, u0, v0, d1, d2, d3, d4 = theta[:N_GLOBAL]
    s = ki * block.i
    t = kj * block.j
    x = ku * block.u + u0
    y = kv * block.v + v0
    r2 = x * x + y * y
    gam = 1.0 + d1 * r2 + d2 * r2 * r2
    xu = gam * x + d3 * s
    yu = gam * y + d4 * t
    pc = block.world @ rot.T + tvec
    zc = pc[:, 2]
    if np.any(np.abs(zc) < EPS_Z):
        raise DegenerateProjection("a board corner lies on the view plane")
    xh = (pc[:, 0] - s) / zc
    yh = (pc[:, 1] - t) / zc
    rx = (xu - xh) / ku
    ry = (yu - yh) / kv
    return {
        "s": s, "t": t, "x": x, "y": y, "r2": r2, "gam": gam,
        "xu": xu, "yu": yu, "pc": pc, "zc": zc, "xh": xh, "yh": yh,
        "rx": rx, "ry": ry, "ku": ku, "kv": kv,
    }


def _pose_residuals(terms: dict) -> FloatArray:
    return np.column_stack([terms["rx"], terms["ry"]]).ravel()


def _pose_jacobian(
    theta: FloatArray, block: PoseBlock, terms: dict, drot: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """Jacobian blocks for one pose: (2M, 10) shared and (2M, 6) local."""
    _, _, ku, kv, _, _, d1, d2, d3, d4 = theta[:N_GLOBAL]
    s, t = terms["s"], terms["t"]
    x, y, r2, gam = terms["x"], terms["y"], terms["r2"], terms["gam"]
    zc, xh, yh = terms["zc"], terms["xh"], terms["yh"]
    rx, ry = terms["rx"], terms["ry"]
    m = len(zc)

    g = 2.0 * (d1 + 2.0 * d2 * r2)
    dxu_dx = gam + g * x * x
    dxu_dy = g * x * y
    dyu_dy = gam + g * y * y

    # derivatives of the unscaled differences (xu - xh, yu - yh); the pixel
    # scaling 1/ku (1/kv) is applied at the end, plus the quotient-rule term
    # for the scale parameter itself
    jg_x = np.zeros((m, N_GLOBAL))
    jg_y = np.zeros((m, N_GLOBAL))
    jg_x[:, 0] = d3 * block.i + block.i / zc
    jg_y[:, 1] = d4 * block.j + block.j / zc
    jg_x[:, 2] = dxu_dx * block.u
    jg_y[:, 2] = dxu_dy * block.u
    jg_x[:, 3] = dxu_dy * block.v
    jg_y[:, 3] = dyu_dy * block.v
    jg_x[:, 4] = dxu_dx
    jg_y[:, 4] = dxu_dy
    jg_x[:, 5] = dxu_dy
    jg_y[:, 5] = dyu_dy
    jg_x[:, 6] = r2 * x
    jg_y[:, 6] = r2 * y
    jg_x[:, 7] = r2 * r2 * x
    jg_y[:, 7] = r2 * r2 * y
    jg_x[:, 8] = s
    jg_y[:, 9] = t

    jl_x = np.zeros((m, 6))
    jl_y = np.zeros((m, 6))
    for k in range(3):
        dpc = block.world @ drot[k].T
        jl_x[:, k] = -(dpc[:, 0] - xh * dpc[:, 2]) / zc
        jl_y[:, k] = -(dpc[:, 1] - yh * dpc[:, 2]) / zc
    jl_x[:, 3] = -1.0 / zc
    jl_y[:, 4] = -1.0 / zc
    jl_x[:, 5] = xh / zc
    jl_y[:, 5] = yh / zc

    jg_x /= ku
    jg_y /= kv
    jl_x /= ku
    jl_y /= kv
    jg_x[:, 2] -= rx / ku
    jg_y[:, 3] -= ry / kv

    jg = np.empty((2 * m, N_GLOBAL))
    jg[0::2] = jg_x
    jg[1::2] = jg_y
    jl = np.empty((2 * m, 6))
    jl[0::2] = jl_x
    jl[1::2] = jl_y
    return jg, jl


def _pose_state(theta: FloatArray, p: int) -> tuple[FloatArray, FloatArray, FloatArray]:
    base = N_GLOBAL + 6 * p
    w = theta[base : base + 3]
    return w, rodrigues(w), theta[base + 3 : base + 6]


def _evaluate_cost(theta: FloatArray, data: RefineData) -> tuple[float, list[FloatArray]]:
    residuals = []
    cost = 0.0
    for p, block in enumerate(data.blocks):
        _, rot, tvec = _pose_state(theta, p)
        r = _pose_residuals(_pose_terms(theta, block, rot, tvec))
        if not np.all(np.isfinite(r)):
            raise NonFinite(f"non-finite residuals for pose {block.pose_id}")
        residuals.append(r)
        cost += float(r @ r)
    return cost, residuals


def residual_vector(theta: FloatArray, data: RefineData) -> FloatArray:
    """Stacked residuals in the canonical ordering."""
    _, residuals = _evaluate_cost(np.asarray(theta, dtype=np.float64), data)
    return np.concatenate(residuals)


def full_jacobian(theta: FloatArray, data: RefineData) -> FloatArray:
    """Dense residual Jacobian; intended for small problems and testing."""
    theta = np.asarray(theta, dtype=np.float64)
    n = N_GLOBAL + 6 * len(data.blocks)
    out = []
    for p, block in enumerate(data.blocks):
        w, rot, tvec = _pose_state(theta, p)
        terms = _pose_terms(theta, block, rot, tvec)
        jg, jl = _pose_jacobian(theta, block, terms, rotation_jacobian(w))
        row = np.zeros((jg.shape[0], n))
        row[:, :N_GLOBAL] = jg
        row[:, N_GLOBAL + 6 * p : N_GLOBAL + 6 * p + 6] = jl
        out.append(row)
    return np.concatenate(out, axis=0)


def _normal_system(
    theta: FloatArray, data: RefineData, residuals: list[FloatArray]
) -> tuple[FloatArray, FloatArray]:
    """Accumulate J^T J and J^T r without forming the dense Jacobian."""
    n = N_GLOBAL + 6 * len(data.blocks)
    a = np.zeros((n, n))
    grad = np.zeros(n)
    for p, block in enumerate(data.blocks):
        w, rot, tvec = _pose_state(theta, p)
        terms = _pose_terms(theta, block, rot, tvec)
        jg, jl = _pose_jacobian(theta, block, terms, rotation_jacobian(w))
        r = residuals[p]
        sl = slice(N_GLOBAL + 6 * p, N_GLOBAL + 6 * p + 6)
        a[:N_GLOBAL, :N_GLOBAL] += jg.T @ jg
        cross = jg.T @ jl
        a[:N_GLOBAL, sl] = cross
        a[sl, :N_GLOBAL] = cross.T
        a[sl, sl] = jl.T @ jl
        grad[:N_GLOBAL] += jg.T @ r
        grad[sl] = jl.T @ r
    return a, grad


def refine_calibration(
    dataset: CalibrationDataset,
    intrinsics: Intrinsics,
    poses: list[Pose],
    distortion: Distortion | None = None,
    *,
    max_iter: int = 200,
    tol_grad: float = 1e-10,
    tol_cost: float = 1e-12,
) -> tuple[Intrinsics, Distortion, list[Pose], RefinementReport]:
    """Refine all parameters jointly; the cost never increases.

    ``poses`` must align with ``dataset.poses`` in order.  Starts from the
    given values (zero distortion by default) and runs Levenberg-Marquardt
    with identity damping and Nielsen's gain-ratio update.  Raises only when
    the starting point itself is degenerate; failed trial steps are rejected
    and retried with stronger damping.
    """
    if distortion is None:
        distortion = Distortion()
    if len(poses) != dataset.n_poses:
        raise ValueError(
            f"{len(poses)} pose estimate(s) for {dataset.n_poses} dataset pose(s)"
        )
    data = RefineData.from_dataset(dataset)
    theta = pack_parameters(intrinsics, distortion, poses)

    cost, residuals = _evaluate_cost(theta, data)
    initial_cost = cost
    a, grad = _normal_system(theta, data, residuals)

    lam = 1e-3 * float(np.max(np.diag(a)))
    if lam <= 0.0 or not np.isfinite(lam):
        lam = 1e-3
    nu = 2.0
    n_params = theta.shape[0]
    termination = "max_iter"
    n_iter = 0

    for _ in range(max_iter):
        if float(np.max(np.abs(grad))) < tol_grad:
            termination = "gradient"
            break
        n_iter += 1
        try:
            delta = np.linalg.solve(a + lam * np.eye(n_params), -grad)
        except np.linalg.LinAlgError:
            delta = None
        accepted = False
        if delta is not None and np.all(np.isfinite(delta)):
            theta_new = theta + delta
            try:
                cost_new, residuals_new = _evaluate_cost(theta_new, data)
            except (DegenerateProjection, NonFinite, InvalidIntrinsics):
                cost_new = np.inf
            if cost_new < cost:
                denom = lam * float(delta @ delta) - float(delta @ grad)
                rho = (cost - cost_new) / denom if denom > 0.0 else 1.0
                rel_decrease = (cost - cost_new) / cost if cost > 0.0 else 0.0
                theta = theta_new
                cost = cost_new
                residuals = residuals_new
                a, grad = _normal_system(theta, data, residuals)
                lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                accepted = True
                if rel_decrease <= tol_cost:
                    termination = "cost"
                    break
            elif np.isfinite(cost_new) and abs(cost_new - cost) <= tol_cost * cost:
                # a rejected step that changes the cost by less than the
                # relative tolerance means the floor is reached
                termination = "cost"
                break
        if not accepted:
            lam *= nu
            nu *= 2.0
            if lam > MAX_LAMBDA:
                termination = "stalled"
                break

    intr_out, dist_out, poses_out = unpack_parameters(theta, len(data.blocks))
    report = RefinementReport(
        initial_cost=initial_cost,
        final_cost=cost,
        n_iter=n_iter,
        termination=termination,
    )
    return intr_out, dist_out, poses_out, report
