"""Soft lesion masks from weak annotations: trimaps, grabcut, closed-form matting,
label operators and segmentation metrics."""

__version__ = "0.1.0"
