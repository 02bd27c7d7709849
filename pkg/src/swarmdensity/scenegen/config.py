from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

HIGH_DENSITY_MAX = 150


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the procedural scene generator (distances in meters)."""

    min_count: int = 1
    max_count: int = 35
    near_prob: float = 0.6
    near_threshold: float = 8.0
    near_min_distance: float = 1.5
    near_group_max: int = 4
    near_group_radius: float = 2.0
    far_groups_max: int = 4
    far_max_distance: float = 55.0
    far_group_radius: float = 3.0
    max_tilt_deg: float = 30.0
    frustum_margin: float = 0.02
    crop_bias: float = 3.0
    source_scale: int = 2
    balance_cap: int = 15
    val_count: int = -1
    test_count: int = -1
    max_candidates_factor: int = 400
    max_retries: int = 64
    seed: int = 0
    high_density: bool = False

    def __post_init__(self):
        for f in ("near_threshold", "near_group_radius", "far_max_distance", "far_group_radius",
                  "near_min_distance"):
            v = getattr(self, f)
            if not (v == v and abs(v) != float("inf")):
                raise ValueError(f"{f} must be finite")
        if self.max_count < 1 or self.min_count < 1 or self.min_count > self.max_count:
            raise ValueError("count range must satisfy 1 <= min_count <= max_count")
        if self.balance_cap < 1:
            raise ValueError("balance_cap must be at least 1")
        if self.source_scale < 1:
            raise ValueError("source_scale must be at least 1")
        if self.near_prob > 0 and not (self.near_min_distance + self.near_group_radius
                                       < self.near_threshold - self.near_group_radius):
            raise ValueError("near group does not fit below the near threshold")
        if not self.far_max_distance > self.near_threshold + self.far_group_radius:
            raise ValueError("far range is empty")
        if self.crop_bias < 0:
            raise ValueError("crop_bias must be non-negative")

    def with_high_density(self) -> "GenConfig":
        return replace(self, high_density=True, max_count=HIGH_DENSITY_MAX,
                       far_groups_max=max(self.far_groups_max, 8), source_scale=1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name: f.type for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class RenderStyle:
    sky_top: tuple = (150, 185, 225)
    sky_bottom: tuple = (205, 215, 220)
    noise: int = 12
    body: tuple = (45, 45, 50)
    body_jitter: int = 25

    def to_dict(self) -> dict:
        return asdict(self)
