"""Joint refinement of per-frame depth maps and camera poses with plane-sweep
(depth) and pose-sweep cost volumes."""

__version__ = "0.1.0"
