"""Deterministic dataset augmentation: rotation, anisotropic scaling, noise.

A plan enumerates a fixed list of transform descriptors: the identity, a set
of rotations at evenly spaced angles up to the configured maximum, per-axis
scalings at evenly spaced factors, every rotation x scaling pairing, and
(when a noise kind is selected) one additional noisy copy of each descriptor,
doubling the list.  Geometric transforms hit the CT image and its mask
identically (bilinear for CT, nearest for masks so labels stay binary);
noise hits the CT channel only.

Resampling is inverse-mapping about the image centre ((w-1)/2, (h-1)/2) on a
fixed canvas, filling with 0 outside the source extent.  For combined
descriptors the content is scaled first, then rotated, as a single composed
warp.  Everything is a pure function of its inputs: a descriptor carries its
own noise draw seed, so identical plans give bit-identical outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .imaging import BinaryMask2D, ScalarImage2D
from .weak_label import LabeledSlice

NOISE_KINDS = ("gaussian", "uniform", "salt_pepper", "none")

# (low, high) bounds enforced on plan parameters
_PLAN_RANGES = {
    "max_rotation_deg": (0.0, 180.0),
    "n_rotations": (1, 10),
    "max_scale": (0.05, 0.15),
    "n_scales_x": (0, 5),
    "n_scales_y": (0, 5),
    "n_noisy": (1, 10),
    "gaussian_max_sigma": (1.0, 10.0),
    "uniform_max_amp": (1.0, 10.0),
    "saltpepper_max_density": (0.05, 0.5),
}


@dataclass(frozen=True)
class AugmentationPlan:
    """User-specifiable augmentation parameters with enforced bounds."""

    max_rotation_deg: float = 45.0
    n_rotations: int = 4
    max_scale: float = 0.1
    n_scales_x: int = 2
    n_scales_y: int = 2
    n_noisy: int = 4
    gaussian_max_sigma: float = 5.0
    uniform_max_amp: float = 5.0
    saltpepper_max_density: float = 0.2
    noise_kind: str = "none"
    seed: int = 0

    def __post_init__(self):
        for name, (low, high) in _PLAN_RANGES.items():
            value = getattr(self, name)
            if not low <= value <= high:
                raise ValueError(
                    f"{name} must lie in [{low}, {high}], got {value}"
                )
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(
                f"noise_kind must be one of {NOISE_KINDS}, got {self.noise_kind!r}"
            )
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    magnitude: float
    draw_seed: int


@dataclass(frozen=True)
class TransformDescriptor:
    """One enumerated augmentation: rotation, per-axis scale, optional noise."""

    rotation_deg: float = 0.0
    scale_x: float = 1.0
    scale_y: float = 1.0
    noise: NoiseSpec | None = None


# ---------------------------------------------------------------------------
# Resampling core


def _inverse_matrix(rotation_deg: float, scale_x: float, scale_y: float) -> np.ndarray:
    """Inverse of the forward map 'scale about centre, then rotate'."""
    theta = np.deg2rad(rotation_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    # S^-1 @ R(-theta), acting on (x, y) offsets from the image centre
    return np.array(
        [
            [cos_t / scale_x, sin_t / scale_x],
            [-sin_t / scale_y, cos_t / scale_y],
        ]
    )


def _source_coords(shape: tuple[int, int], inv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    dx = np.arange(w, dtype=np.float64) - cx
    dy = np.arange(h, dtype=np.float64) - cy
    gx, gy = np.meshgrid(dx, dy)
    sx = inv[0, 0] * gx + inv[0, 1] * gy + cx
    sy = inv[1, 0] * gx + inv[1, 1] * gy + cy
    return sx, sy


def _sample_bilinear(values: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = values.shape
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros(sx.shape, dtype=np.float64)
    for dy_, dx_, weight in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yy = y0 + dy_
        xx = x0 + dx_
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = values[yy.clip(0, h - 1), xx.clip(0, w - 1)]
        out += np.where(valid, vals * weight, 0.0)
    return out


def _sample_nearest(values: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = values.shape
    xx = np.rint(sx).astype(np.int64)
    yy = np.rint(sy).astype(np.int64)
    valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
    vals = values[yy.clip(0, h - 1), xx.clip(0, w - 1)]
    return np.where(valid, vals, 0)


def _warp_values(
    values: np.ndarray, rotation_deg: float, scale_x: float, scale_y: float, interp: str
) -> np.ndarray:
    inv = _inverse_matrix(rotation_deg, scale_x, scale_y)
    sx, sy = _source_coords(values.shape, inv)
    if interp == "bilinear":
        return _sample_bilinear(values, sx, sy)
    if interp == "nearest":
        return _sample_nearest(values, sx, sy)
    raise ValueError(f"unknown interpolation {interp!r}")


def _warp(img, rotation_deg: float, scale_x: float, scale_y: float, interp: str):
    if isinstance(img, BinaryMask2D):
        if interp != "nearest":
            raise ValueError("masks must be resampled with nearest interpolation")
        warped = _warp_values(
            img.labels.astype(np.float64), rotation_deg, scale_x, scale_y, "nearest"
        )
        return BinaryMask2D(warped.astype(np.uint8))
    if isinstance(img, ScalarImage2D):
        warped = _warp_values(img.values, rotation_deg, scale_x, scale_y, interp)
        return ScalarImage2D(warped, img.spacing)
    raise TypeError(f"cannot warp object of type {type(img).__name__}")


def rotate(img, angle_deg: float, interp: str = "bilinear"):
    """Rotate about the image centre on a fixed canvas, filling with 0."""
    if not np.isfinite(angle_deg):
        raise ValueError("rotation angle must be finite")
    return _warp(img, angle_deg, 1.0, 1.0, interp)


def scale(img, fx: float, fy: float, interp: str = "bilinear"):
    """Scale about the image centre with independent x/y factors."""
    if fx <= 0 or fy <= 0:
        raise ValueError(f"scale factors must be positive, got ({fx}, {fy})")
    return _warp(img, 0.0, fx, fy, interp)


# ---------------------------------------------------------------------------
# Noise


def add_noise(img: ScalarImage2D, kind: str, magnitude: float, seed: int) -> ScalarImage2D:
    """Additive or impulse noise on a scalar image, deterministic per seed.

    gaussian: i.i.d. zero-mean draws with std ``magnitude``; uniform: draws
    in [-magnitude, +magnitude]; salt_pepper: a ``magnitude`` fraction of
    pixels, chosen without replacement, set to the image minimum or maximum
    with equal probability.
    """
    if kind not in ("gaussian", "uniform", "salt_pepper"):
        raise ValueError(f"unknown noise kind {kind!r}")
    if magnitude < 0 or not np.isfinite(magnitude):
        raise ValueError(f"noise magnitude must be non-negative, got {magnitude}")
    if magnitude == 0 and kind != "salt_pepper":
        return ScalarImage2D(img.values.copy(), img.spacing)
    rng = np.random.default_rng(seed)
    v = img.values
    if kind == "gaussian":
        out = v + rng.normal(0.0, magnitude, v.shape)
    elif kind == "uniform":
        out = v + rng.uniform(-magnitude, magnitude, v.shape)
    else:
        if magnitude > 1:
            raise ValueError(f"salt/pepper density must lie in [0, 1], got {magnitude}")
        n_alter = int(round(magnitude * v.size))
        out = v.copy().ravel()
        if n_alter:
            picks = rng.choice(v.size, size=n_alter, replace=False)
            salt = rng.random(n_alter) < 0.5
            out[picks[salt]] = v.max()
            out[picks[~salt]] = v.min()
        out = out.reshape(v.shape)
    return ScalarImage2D(out, img.spacing)


# ---------------------------------------------------------------------------
# Plan enumeration


def _noise_magnitude(plan: AugmentationPlan) -> float:
    return {
        "gaussian": plan.gaussian_max_sigma,
        "uniform": plan.uniform_max_amp,
        "salt_pepper": plan.saltpepper_max_density,
    }[plan.noise_kind]


def enumerate_plan(plan: AugmentationPlan) -> list[TransformDescriptor]:
    """Deterministic descriptor list for a plan.

    Identity, then rotations at angles evenly spaced in
    (0, max_rotation_deg], then x- and y-scalings at factors evenly spaced
    in (1, 1 + max_scale], then every rotation x scaling pair.  With a noise
    kind selected the whole list is emitted a second time with noise
    attached, so the length is

        (1 + R + Sx + Sy + R * (Sx + Sy)) * (2 if noise else 1)
    """
    angles = [
        plan.max_rotation_deg * j / plan.n_rotations
        for j in range(1, plan.n_rotations + 1)
    ]
    factors_x = [
        1.0 + plan.max_scale * j / plan.n_scales_x
        for j in range(1, plan.n_scales_x + 1)
    ]
    factors_y = [
        1.0 + plan.max_scale * j / plan.n_scales_y
        for j in range(1, plan.n_scales_y + 1)
    ]

    descs = [TransformDescriptor()]
    descs += [TransformDescriptor(rotation_deg=a) for a in angles]
    descs += [TransformDescriptor(scale_x=f) for f in factors_x]
    descs += [TransformDescriptor(scale_y=f) for f in factors_y]
    for a in angles:
        descs += [TransformDescriptor(rotation_deg=a, scale_x=f) for f in factors_x]
        descs += [TransformDescriptor(rotation_deg=a, scale_y=f) for f in factors_y]

    if plan.noise_kind != "none":
        rng = np.random.default_rng(plan.seed)
        magnitude = _noise_magnitude(plan)
        noisy = [
            dataclasses.replace(
                d,
                noise=NoiseSpec(
                    kind=plan.noise_kind,
                    magnitude=magnitude,
                    draw_seed=int(rng.integers(0, 2**63)),
                ),
            )
            for d in descs
        ]
        descs = descs + noisy
    return descs


def plan_length(plan: AugmentationPlan) -> int:
    """Closed-form descriptor count for a plan."""
    base = (
        1
        + plan.n_rotations
        + plan.n_scales_x
        + plan.n_scales_y
        + plan.n_rotations * (plan.n_scales_x + plan.n_scales_y)
    )
    return base * (2 if plan.noise_kind != "none" else 1)


def apply_descriptor(ls: LabeledSlice, desc: TransformDescriptor) -> LabeledSlice:
    """Apply one descriptor: shared warp for CT and mask, noise on CT only."""
    ct = _warp(ls.ct, desc.rotation_deg, desc.scale_x, desc.scale_y, "bilinear")
    mask = _warp(ls.mask, desc.rotation_deg, desc.scale_x, desc.scale_y, "nearest")
    if desc.noise is not None:
        ct = add_noise(ct, desc.noise.kind, desc.noise.magnitude, desc.noise.draw_seed)
    return LabeledSlice(
        patient_id=ls.patient_id,
        slice_index=ls.slice_index,
        ct=ct,
        mask=mask,
    )


def augment_pair(
    ls: LabeledSlice, plan: AugmentationPlan
) -> list[tuple[TransformDescriptor, LabeledSlice]]:
    """All augmented copies of one labeled slice, in enumeration order."""
    return [(d, apply_descriptor(ls, d)) for d in enumerate_plan(plan)]
