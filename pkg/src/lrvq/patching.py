"""Image tensors and the non-overlapping square patch grid."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


@dataclass(eq=False)
class ImageTensor:
    """Unit-interval intensities stored channel-major, shape (C, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or min(data.shape) < 1:
            raise InvalidInput(f"image must have shape (C, H, W), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidInput("image contains non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise InvalidInput("image intensities must lie in [0, 1]")
        self.data = data

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, ImageTensor):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


@dataclass(eq=False)
class PatchGrid:
    patch_size: int
    grid_rows: int
    grid_cols: int
    original_height: int
    original_width: int
    # (C, grid_rows, grid_cols, P, P)
    patches: np.ndarray

    @property
    def channels(self):
        return self.patches.shape[0]

    def validate(self):
        p = self.patch_size
        expected = (self.grid_rows, self.grid_cols, p, p)
        if p < 1 or self.patches.ndim != 5 or self.patches.shape[1:] != expected:
            raise InvalidInput(
                f"patch array shape {self.patches.shape} does not match grid {expected}"
            )
        if self.grid_rows != -(-self.original_height // p) or self.grid_cols != -(
            -self.original_width // p
        ):
            raise InvalidInput("grid dimensions do not tile the original image minimally")


def extract_patches(img, patch_size):
    """Tile each channel into P x P patches, edge-padding the bottom and right."""
    p = int(patch_size)
    if p < 1:
        raise InvalidInput(f"patch size must be >= 1, got {patch_size}")
    if p > max(img.height, img.width):
        raise InvalidInput(
            f"patch size {p} exceeds the image extent {img.height}x{img.width}"
        )
    rows, cols = -(-img.height // p), -(-img.width // p)
    canvas = np.pad(
        img.data,
        ((0, 0), (0, rows * p - img.height), (0, cols * p - img.width)),
        mode="edge",
    )
    patches = canvas.reshape(img.channels, rows, p, cols, p).transpose(0, 1, 3, 2, 4)
    return PatchGrid(p, rows, cols, img.height, img.width, np.ascontiguousarray(patches))


def assemble_patches(grid):
    """Inverse of :func:`extract_patches`: reassemble, crop and clamp to [0, 1]."""
    grid.validate()
    p, c = grid.patch_size, grid.channels
    canvas = grid.patches.transpose(0, 1, 3, 2, 4).reshape(
        c, grid.grid_rows * p, grid.grid_cols * p
    )
    data = canvas[:, : grid.original_height, : grid.original_width]
    return ImageTensor(np.clip(data, 0.0, 1.0))
