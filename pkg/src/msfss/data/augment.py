"""Joint image/mask augmentation.

Geometric transforms hit image and mask identically; masks are always resampled
with nearest neighbour so they keep their label set. Blur touches the image only.
Pixels introduced by padding get image value 0 and mask value 255 (ignore).
"""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from ..errors import DegenerateCrop
from .splits import IGNORE_LABEL


@dataclass(frozen=True)
class AugmentPolicy:
    scale: bool = False
    rotate: bool = False
    hflip: bool = False
    crop: bool = False
    blur: bool = False
    scale_range: tuple[float, float] = (0.9, 1.1)
    rotate_range: tuple[float, float] = (-10.0, 10.0)
    crop_size: tuple[int, int] = (96, 96)
    hflip_prob: float = 0.5
    blur_prob: float = 0.5
    blur_sigma: tuple[float, float] = (0.1, 1.0)

    @property
    def is_identity(self) -> bool:
        return not (self.scale or self.rotate or self.hflip or self.crop or self.blur)

    @classmethod
    def training(cls, crop_size=(96, 96)) -> "AugmentPolicy":
        return cls(scale=True, rotate=True, hflip=True, crop=True, blur=True, crop_size=tuple(crop_size))


def hflip(image, mask):
    return image[:, ::-1].copy(), mask[:, ::-1].copy()


def rotate(image, mask, angle_deg: float):
    """Rotate clockwise by ``angle_deg`` about the image centre."""
    k, rem = divmod(float(angle_deg), 90.0)
    if rem == 0.0:
        k = -int(k) % 4
        return np.rot90(image, k).copy(), np.rot90(mask, k).copy()
    h, w = mask.shape
    # cv2 angles are counter-clockwise
    m = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), -angle_deg, 1.0)
    img = cv2.warpAffine(image, m, (w, h), flags=cv2.INTER_LINEAR,
                         borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    msk = cv2.warpAffine(mask, m, (w, h), flags=cv2.INTER_NEAREST,
                         borderMode=cv2.BORDER_CONSTANT, borderValue=IGNORE_LABEL)
    return img, msk


def rescale(image, mask, factor: float):
    h, w = mask.shape
    nh, nw = max(1, int(round(h * factor))), max(1, int(round(w * factor)))
    img = cv2.resize(image, (nw, nh), interpolation=cv2.INTER_LINEAR)
    msk = cv2.resize(mask, (nw, nh), interpolation=cv2.INTER_NEAREST)
    return img, msk


def crop(image, mask, size, rng=None, offset=None):
    """Crop to ``size``, padding first when the input is smaller."""
    ch, cw = size
    if ch <= 0 or cw <= 0:
        raise DegenerateCrop(f"crop size {size} is empty")
    h, w = mask.shape
    ph, pw = max(ch - h, 0), max(cw - w, 0)
    if ph or pw:
        image = cv2.copyMakeBorder(image, ph // 2, ph - ph // 2, pw // 2, pw - pw // 2,
                                   cv2.BORDER_CONSTANT, value=0)
        mask = cv2.copyMakeBorder(mask, ph // 2, ph - ph // 2, pw // 2, pw - pw // 2,
                                  cv2.BORDER_CONSTANT, value=IGNORE_LABEL)
        h, w = mask.shape
    if offset is None:
        top = int(rng.integers(0, h - ch + 1)) if rng is not None else (h - ch) // 2
        left = int(rng.integers(0, w - cw + 1)) if rng is not None else (w - cw) // 2
    else:
        top, left = offset
    return image[top:top + ch, left:left + cw].copy(), mask[top:top + ch, left:left + cw].copy()


def gaussian_blur(image, sigma: float):
    return cv2.GaussianBlur(image, (0, 0), sigmaX=sigma)


def augment(image, mask, policy: AugmentPolicy, rng: np.random.Generator):
    if policy.is_identity:
        return image, mask
    image = np.ascontiguousarray(image, dtype=np.float32)
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if policy.scale:
        image, mask = rescale(image, mask, rng.uniform(*policy.scale_range))
    if policy.rotate:
        image, mask = rotate(image, mask, rng.uniform(*policy.rotate_range))
    if policy.blur and rng.uniform() < policy.blur_prob:
        image = gaussian_blur(image, rng.uniform(*policy.blur_sigma))
    if policy.crop:
        image, mask = crop(image, mask, policy.crop_size, rng)
    if policy.hflip and rng.uniform() < policy.hflip_prob:
        image, mask = hflip(image, mask)
    return np.clip(image, 0.0, 1.0), mask
