"""Pinhole projection of 3D annotation boxes and expanded square crop regions.

The crop pipeline mirrors how the appearance dataset records pedestrian
image regions: project the 3D box into the camera to get a 2D pixel box,
then expand it to a square of twice the largest dimension. Only geometry is
produced here; no pixels are decoded. Crops are recorded as-is even when
they extend beyond the image bounds so that pixel consumers can choose
their own padding instead of losing information near image edges.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import BehindCamera, DegenerateBox, FullyBehindCamera
from .tracks import RawTrack, ResampledTrack, SquareCrop, resample_track

DEPTH_EPSILON = 1e-6
DEFAULT_EXPAND_FACTOR = 2.0


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics (zero skew), world-to-camera rigid transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3) world -> camera
    translation: np.ndarray  # (3,)
    image_size: tuple[int, int]  # (width, height) pixels

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthonormal (R^T R = I within 1e-9)")
        if self.translation.shape != (3,):
            raise ValueError("translation must be a 3-vector")

    @property
    def intrinsic_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


def identity_camera(fx: float, fy: float, cx: float, cy: float, image_size=(1600, 900)) -> CameraModel:
    """Camera at the world origin looking down +z; handy for tests and synthetic data."""
    return CameraModel(fx=fx, fy=fy, cx=cx, cy=cy, rotation=np.eye(3), translation=np.zeros(3), image_size=image_size)


@dataclass(frozen=True)
class Box3D:
    """Axis-sized 3D box with yaw about the world vertical axis."""

    center: np.ndarray  # (3,) meters
    size: np.ndarray  # (length, width, height) meters
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "size", np.asarray(self.size, dtype=float))
        if self.center.shape != (3,):
            raise ValueError("center must be a 3-vector")
        if self.size.shape != (3,) or not np.all(self.size > 0):
            raise ValueError("size components must be positive")


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned pixel-space bounding box (real-valued, possibly off-image)."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if self.u_min > self.u_max or self.v_min > self.v_max:
            raise ValueError("pixel box must have u_min <= u_max and v_min <= v_max")

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max))


def project_point(cam: CameraModel, point: np.ndarray) -> tuple[float, float]:
    """Project one world point through the pinhole model to pixel (u, v)."""
    p_cam = cam.rotation @ np.asarray(point, dtype=float) + cam.translation
    depth = p_cam[2]
    if depth <= DEPTH_EPSILON:
        raise BehindCamera(f"point depth {depth:.3g} m is not in front of the camera")
    return (cam.fx * p_cam[0] / depth + cam.cx, cam.fy * p_cam[1] / depth + cam.cy)


def box_corners(box: Box3D) -> np.ndarray:
    """The 8 world-frame corners of a yaw-rotated box, shape (8, 3)."""
    half = 0.5 * box.size
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
    local = signs * half
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rot.T + box.center


def project_box(cam: CameraModel, box: Box3D) -> PixelBox:
    """Axis-aligned pixel bounding box of a 3D box's visible corners.

    Corners with non-positive depth are excluded rather than clipped to the
    image plane; pedestrian boxes are small enough that straddling the
    camera plane is rare. The result is not clipped to the image.
    """
    corners = box_corners(box)
    cam_pts = corners @ cam.rotation.T + cam.translation
    in_front = cam_pts[:, 2] > DEPTH_EPSILON
    if not np.any(in_front):
        raise FullyBehindCamera("all 8 box corners are behind the camera")
    visible = cam_pts[in_front]
    u = cam.fx * visible[:, 0] / visible[:, 2] + cam.cx
    v = cam.fy * visible[:, 1] / visible[:, 2] + cam.cy
    return PixelBox(u_min=float(u.min()), v_min=float(v.min()), u_max=float(u.max()), v_max=float(v.max()))


def expand_crop(box: PixelBox, factor: float = DEFAULT_EXPAND_FACTOR, image_size: tuple[int, int] | None = None) -> SquareCrop:
    """Square crop centered on the pixel box with side = factor x largest dimension.

    ``image_size`` is accepted for interface symmetry but the crop is neither
    shifted nor shrunk at image borders; consumers pad as needed.
    """
    del image_size
    if factor <= 0:
        raise ValueError(f"expansion factor must be positive, got {factor}")
    largest = max(box.width, box.height)
    if largest == 0:
        raise DegenerateBox("cannot expand a zero-area pixel box")
    cu, cv = box.center
    return SquareCrop(center_u=cu, center_v=cv, side=factor * largest)


def attach_crops(
    track: ResampledTrack,
    raw: RawTrack,
    cam: CameraModel,
    mode: str = "anti_causal_linear",
    expand_factor: float = DEFAULT_EXPAND_FACTOR,
) -> ResampledTrack:
    """Fill in crop geometry for every step of ``track`` that has a frame ref.

    The vertical coordinate discarded at resampling is re-derived from the
    raw track with the same resampling mode; box extents and yaw are taken
    from the nearest raw sample in time. Steps whose box projects fully
    behind the camera keep their frame reference without a crop.
    """
    if not any(ref is not None for ref in track.frame_refs):
        return track

    raw_ts = raw.timestamps_us
    z_track = RawTrack(
        agent_id=raw.agent_id,
        camera_view=raw.camera_view,
        samples=tuple(
            replace(s, position=np.array([s.position[2], 0.0, 0.0])) for s in raw.samples
        ),
    )
    z_resampled = resample_track(z_track, rate=track.rate, mode=mode)
    if not np.array_equal(z_resampled.timestamps_us, track.timestamps_us):
        raise ValueError("track grid does not match the raw track it was resampled from")
    z_values = z_resampled.positions[:, 0]

    refs: list = []
    for i, ref in enumerate(track.frame_refs):
        if ref is None:
            refs.append(None)
            continue
        step_ts = int(track.timestamps_us[i])
        nearest = int(np.argmin(np.abs(raw_ts - step_ts)))
        center = np.array([track.positions[i, 0], track.positions[i, 1], z_values[i]])
        box = Box3D(center=center, size=raw.samples[nearest].box_size, yaw=raw.samples[nearest].yaw)
        try:
            pixel_box = project_box(cam, box)
            crop = expand_crop(pixel_box, factor=expand_factor, image_size=cam.image_size)
        except (FullyBehindCamera, DegenerateBox):
            refs.append(replace(ref, crop=None))
            continue
        refs.append(replace(ref, crop=crop))
    return replace(track, frame_refs=tuple(refs))
