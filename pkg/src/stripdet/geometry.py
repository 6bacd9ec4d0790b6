"""Axis-aligned box geometry and the IoU metric family.

Boxes live in absolute pixel coordinates as (cx, cy, w, h) center format.
Everything here is pure float64 scalar math: the overlap metrics (IoU,
GIoU, DIoU, CIoU), the focal-weighted FECIoU variant, closed-form
gradients with respect to the predicted box, and the image transforms
that the synthetic-scene augmentations reuse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple, Union

__all__ = [
    "METRIC_LITERAL",
    "FOCAL_CIOU_LOSS",
    "LOSS_MODES",
    "GradientUndefined",
    "BoundingBox",
    "LossConfig",
    "IoUBreakdown",
    "BoxGradient",
    "MetricGradients",
    "iou",
    "breakdown",
    "feciou_objective",
    "grad_objective",
    "metric_gradients",
    "finite_difference_gradient",
    "FlipH",
    "FlipV",
    "Rotate90CW",
    "Translate",
    "Scale",
    "BoxTransform",
    "transform_box",
]

# How the FECIoU quantity enters an objective: either the literal
# similarity score (to maximize) or the focal-weighted CIoU loss
# (1 - IoU)^gamma * (1 - CIoU) (to minimize).
METRIC_LITERAL = "metric_literal"
FOCAL_CIOU_LOSS = "focal_ciou_loss"
LOSS_MODES = (METRIC_LITERAL, FOCAL_CIOU_LOSS)

_FOUR_OVER_PI2 = 4.0 / math.pi**2


class GradientUndefined(ValueError):
    """The focal factor (1 - IoU)^(gamma - 1) diverges: gamma in (0, 1) at IoU = 1."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in center format, absolute pixel units."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"box field {name!r} must be finite, got {value!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box: w={self.w}, h={self.h}")

    @property
    def x1(self) -> float:
        return self.cx - self.w / 2

    @property
    def y1(self) -> float:
        return self.cy - self.h / 2

    @property
    def x2(self) -> float:
        return self.cx + self.w / 2

    @property
    def y2(self) -> float:
        return self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> Tuple[float, float, float, float]:
        """(x1, y1, x2, y2) corner coordinates."""
        return self.x1, self.y1, self.x2, self.y2

    def astuple(self) -> Tuple[float, float, float, float]:
        return self.cx, self.cy, self.w, self.h


@dataclass(frozen=True)
class LossConfig:
    """Focal exponent and objective direction for the FECIoU family.

    gamma >= 0 controls how strongly low-overlap pairs are re-weighted.
    gamma = 0 disables the weighting entirely.
    """

    gamma: float = 0.5
    loss_mode: str = METRIC_LITERAL

    def __post_init__(self):
        if not math.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")


@dataclass(frozen=True)
class IoUBreakdown:
    """Every intermediate quantity of the CIoU/FECIoU computation for one pair.

    rho2 is the squared center distance, c2 the squared diagonal of the
    smallest axis-aligned box enclosing both inputs, v the aspect-ratio
    penalty and alpha its trade-off weight (resolved to 0 at the 0/0
    point of perfect overlap).
    """

    iou: float
    rho2: float
    c2: float
    v: float
    alpha: float
    giou: float
    diou: float
    ciou: float
    feciou: float


@dataclass(frozen=True)
class BoxGradient:
    """Partial derivatives of a scalar objective w.r.t. (cx, cy, w, h) of the predicted box."""

    d_cx: float
    d_cy: float
    d_w: float
    d_h: float

    def astuple(self) -> Tuple[float, float, float, float]:
        return self.d_cx, self.d_cy, self.d_w, self.d_h

    def norm(self) -> float:
        return math.sqrt(self.d_cx**2 + self.d_cy**2 + self.d_w**2 + self.d_h**2)


@dataclass(frozen=True)
class MetricGradients:
    """Values and predicted-box gradients of the four overlap metrics in one pass."""

    iou: float
    giou: float
    diou: float
    ciou: float
    d_iou: BoxGradient
    d_giou: BoxGradient
    d_diou: BoxGradient
    d_ciou: BoxGradient


def iou(pred: BoundingBox, gt: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    px1, py1, px2, py2 = pred.corners()
    gx1, gy1, gx2, gy2 = gt.corners()
    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (pred.area + gt.area - inter)


def breakdown(pred: BoundingBox, gt: BoundingBox, config: LossConfig = LossConfig()) -> IoUBreakdown:
    """Compute IoU, GIoU, DIoU, CIoU and FECIoU with all intermediates."""
    px1, py1, px2, py2 = pred.corners()
    gx1, gy1, gx2, gy2 = gt.corners()

    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    inter = iw * ih if (iw > 0 and ih > 0) else 0.0
    union = pred.area + gt.area - inter
    iou_ = inter / union

    rho2 = (pred.cx - gt.cx) ** 2 + (pred.cy - gt.cy) ** 2
    cw = max(px2, gx2) - min(px1, gx1)
    ch = max(py2, gy2) - min(py1, gy1)
    c2 = cw * cw + ch * ch
    carea = cw * ch

    giou = iou_ - (carea - union) / carea

    v = _FOUR_OVER_PI2 * (math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)) ** 2
    denom = (1.0 - iou_) + v
    alpha = 0.0 if denom == 0.0 else v / denom

    diou = iou_ - rho2 / c2
    ciou = diou - alpha * v
    feciou = (1.0 - iou_) ** config.gamma * ciou

    return IoUBreakdown(
        iou=iou_, rho2=rho2, c2=c2, v=v, alpha=alpha,
        giou=giou, diou=diou, ciou=ciou, feciou=feciou,
    )


def feciou_objective(pred: BoundingBox, gt: BoundingBox, config: LossConfig = LossConfig()) -> float:
    """Scalar objective for the configured mode.

    METRIC_LITERAL returns the focal-weighted similarity
    (1 - IoU)^gamma * CIoU (higher is better). FOCAL_CIOU_LOSS returns
    (1 - IoU)^gamma * (1 - CIoU), a nonnegative quantity to minimize.
    """
    b = breakdown(pred, gt, config)
    if config.loss_mode == METRIC_LITERAL:
        return b.feciou
    return (1.0 - b.iou) ** config.gamma * (1.0 - b.ciou)


# Subgradient convention at exact coordinate ties: every min/max kink takes
# the slope obtained when the predicted coordinate approaches the tie from
# below. Ties have probability zero for randomly drawn pairs.

def _d_min(a: float, b: float) -> float:
    return 1.0 if a <= b else 0.0


def _d_max(a: float, b: float) -> float:
    return 1.0 if a > b else 0.0


def _axpy(c: float, x, y):
    return tuple(c * xi + yi for xi, yi in zip(x, y))


def _quotient_grad(num: float, d_num, den: float, d_den):
    den2 = den * den
    return tuple((dn * den - num * dd) / den2 for dn, dd in zip(d_num, d_den))


def _metric_terms(pred: BoundingBox, gt: BoundingBox):
    """Values and d/d(cx, cy, w, h) tuples for iou, giou, diou, ciou.

    alpha is held constant during differentiation, matching common
    detector-training practice for the aspect-ratio trade-off weight.
    """
    px1, py1, px2, py2 = pred.corners()
    gx1, gy1, gx2, gy2 = gt.corners()

    # d of each predicted corner w.r.t. (cx, cy, w, h)
    d_px1 = (1.0, 0.0, -0.5, 0.0)
    d_px2 = (1.0, 0.0, 0.5, 0.0)
    d_py1 = (0.0, 1.0, 0.0, -0.5)
    d_py2 = (0.0, 1.0, 0.0, 0.5)
    zero = (0.0, 0.0, 0.0, 0.0)

    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    if iw > 0 and ih > 0:
        inter = iw * ih
        d_iw = _axpy(_d_min(px2, gx2), d_px2, _axpy(-_d_max(px1, gx1), d_px1, zero))
        d_ih = _axpy(_d_min(py2, gy2), d_py2, _axpy(-_d_max(py1, gy1), d_py1, zero))
        d_inter = _axpy(ih, d_iw, _axpy(iw, d_ih, zero))
    else:
        inter = 0.0
        d_inter = zero

    union = pred.area + gt.area - inter
    d_union = (
        -d_inter[0],
        -d_inter[1],
        pred.h - d_inter[2],
        pred.w - d_inter[3],
    )
    iou_ = inter / union
    d_iou = _quotient_grad(inter, d_inter, union, d_union)

    # enclosing box
    cw = max(px2, gx2) - min(px1, gx1)
    ch = max(py2, gy2) - min(py1, gy1)
    d_cw = _axpy(_d_max(px2, gx2), d_px2, _axpy(-_d_min(px1, gx1), d_px1, zero))
    d_ch = _axpy(_d_max(py2, gy2), d_py2, _axpy(-_d_min(py1, gy1), d_py1, zero))
    c2 = cw * cw + ch * ch
    d_c2 = _axpy(2.0 * cw, d_cw, _axpy(2.0 * ch, d_ch, zero))
    carea = cw * ch
    d_carea = _axpy(ch, d_cw, _axpy(cw, d_ch, zero))

    giou = iou_ - (carea - union) / carea
    d_ratio = _quotient_grad(union, d_union, carea, d_carea)
    d_giou = tuple(a + b for a, b in zip(d_iou, d_ratio))

    rho2 = (pred.cx - gt.cx) ** 2 + (pred.cy - gt.cy) ** 2
    d_rho2 = (2.0 * (pred.cx - gt.cx), 2.0 * (pred.cy - gt.cy), 0.0, 0.0)
    diou = iou_ - rho2 / c2
    d_pen = _quotient_grad(rho2, d_rho2, c2, d_c2)
    d_diou = tuple(a - b for a, b in zip(d_iou, d_pen))

    t = math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)
    v = _FOUR_OVER_PI2 * t * t
    s = pred.w * pred.w + pred.h * pred.h
    d_v = (
        0.0,
        0.0,
        -2.0 * _FOUR_OVER_PI2 * t * pred.h / s,
        2.0 * _FOUR_OVER_PI2 * t * pred.w / s,
    )
    denom = (1.0 - iou_) + v
    alpha = 0.0 if denom == 0.0 else v / denom
    ciou = diou - alpha * v
    d_ciou = tuple(a - alpha * b for a, b in zip(d_diou, d_v))

    return iou_, giou, diou, ciou, d_iou, d_giou, d_diou, d_ciou


def metric_gradients(pred: BoundingBox, gt: BoundingBox) -> MetricGradients:
    """Gradients of IoU, GIoU, DIoU and CIoU w.r.t. the predicted box."""
    iou_, giou, diou, ciou, d_iou, d_giou, d_diou, d_ciou = _metric_terms(pred, gt)
    return MetricGradients(
        iou=iou_, giou=giou, diou=diou, ciou=ciou,
        d_iou=BoxGradient(*d_iou),
        d_giou=BoxGradient(*d_giou),
        d_diou=BoxGradient(*d_diou),
        d_ciou=BoxGradient(*d_ciou),
    )


def _focal_factors(u: float, gamma: float) -> Tuple[float, float]:
    """(u^gamma, gamma * u^(gamma-1)) with the u = 0 limits resolved.

    gamma = 0 makes the weight a constant 1, so its derivative factor is 0
    even at u = 0. For 0 < gamma < 1 the derivative factor diverges at
    u = 0 and the caller must stop before that point.
    """
    if gamma == 0.0:
        return 1.0, 0.0
    if u == 0.0:
        if gamma < 1.0:
            raise GradientUndefined(
                f"focal derivative (1-IoU)^(gamma-1) diverges at IoU=1 for gamma={gamma}"
            )
        return 0.0, (1.0 if gamma == 1.0 else 0.0)
    return u**gamma, gamma * u ** (gamma - 1.0)


def grad_objective(pred: BoundingBox, gt: BoundingBox, config: LossConfig = LossConfig()) -> BoxGradient:
    """Closed-form gradient of feciou_objective w.r.t. the predicted box.

    alpha is treated as a constant; min/max kinks take the left-limit
    subgradient. Raises GradientUndefined when gamma is in (0, 1) and the
    boxes overlap perfectly.
    """
    iou_, _giou, _diou, ciou, d_iou, _dg, _dd, d_ciou = _metric_terms(pred, gt)
    u = 1.0 - iou_
    wpow, dwf = _focal_factors(u, config.gamma)
    if config.loss_mode == METRIC_LITERAL:
        # d[u^g * ciou], with du = -d_iou
        grad = tuple(-dwf * ciou * di + wpow * dc for di, dc in zip(d_iou, d_ciou))
    else:
        # d[u^g * (1 - ciou)]
        grad = tuple(-dwf * (1.0 - ciou) * di - wpow * dc for di, dc in zip(d_iou, d_ciou))
    return BoxGradient(*grad)


def finite_difference_gradient(
    fn: Callable[[BoundingBox], float],
    box: BoundingBox,
    step: float = 1e-5,
) -> BoxGradient:
    """Central finite differences of a scalar box function.

    Independent numerical check for the closed-form gradients; box sizes
    must exceed the step so perturbed boxes stay valid.
    """
    cx, cy, w, h = box.astuple()
    parts = []
    for i in range(4):
        lo = [cx, cy, w, h]
        hi = [cx, cy, w, h]
        lo[i] -= step
        hi[i] += step
        f_lo = fn(BoundingBox(*lo))
        f_hi = fn(BoundingBox(*hi))
        parts.append((f_hi - f_lo) / (2.0 * step))
    return BoxGradient(*parts)


# ---------------------------------------------------------------------------
# Image-space box transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlipH:
    """Mirror across the vertical image axis."""

    image_width: float

    def __post_init__(self):
        if self.image_width <= 0:
            raise ValueError(f"image_width must be positive, got {self.image_width}")


@dataclass(frozen=True)
class FlipV:
    """Mirror across the horizontal image axis."""

    image_height: float

    def __post_init__(self):
        if self.image_height <= 0:
            raise ValueError(f"image_height must be positive, got {self.image_height}")


@dataclass(frozen=True)
class Rotate90CW:
    """Quarter-turn clockwise; the output image is image_height wide."""

    image_width: float
    image_height: float

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")


@dataclass(frozen=True)
class Translate:
    dx: float
    dy: float


@dataclass(frozen=True)
class Scale:
    factor: float

    def __post_init__(self):
        if not math.isfinite(self.factor) or self.factor <= 0:
            raise ValueError(f"scale factor must be positive, got {self.factor}")


BoxTransform = Union[FlipH, FlipV, Rotate90CW, Translate, Scale]


def transform_box(box: BoundingBox, op: BoxTransform) -> BoundingBox:
    """Apply an image transform to a box, consistently with the raster transform."""
    if isinstance(op, FlipH):
        return BoundingBox(op.image_width - box.cx, box.cy, box.w, box.h)
    if isinstance(op, FlipV):
        return BoundingBox(box.cx, op.image_height - box.cy, box.w, box.h)
    if isinstance(op, Rotate90CW):
        # point (x, y) maps to (H - y, x); width and height swap
        return BoundingBox(op.image_height - box.cy, box.cx, box.h, box.w)
    if isinstance(op, Translate):
        return BoundingBox(box.cx + op.dx, box.cy + op.dy, box.w, box.h)
    if isinstance(op, Scale):
        s = op.factor
        return BoundingBox(box.cx * s, box.cy * s, box.w * s, box.h * s)
    raise ValueError(f"unknown transform: {op!r}")
