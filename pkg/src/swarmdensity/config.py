"""Run configuration: INI sections merged over a preset, then flag overrides."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .geometry import CameraIntrinsics, GridSpec
from .labeling import MODES, LabelSpec
from .metrics import DEFAULT_WINDOW
from .regressor.arch import DESK_STAGES, FULL_STAGES, TAIL_ALIASES, ArchSpec
from .regressor.train import TrainConfig
from .scenegen.config import GenConfig

PRESETS = ("full", "desk")
_TRUE = {"1", "yes", "true", "on"}
_FALSE = {"0", "no", "false", "off"}


def _coerce(text: str, like):
    if isinstance(like, bool):
        t = text.strip().lower()
        if t in _TRUE | _FALSE:
            return t in _TRUE
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text.strip()


def _stages_text(stages) -> str:
    return ",".join(f"{f}x{c}" for f, c in stages)


def _parse_stages(text: str):
    out = []
    for part in text.split(","):
        f, _, c = part.strip().partition("x")
        out.append((int(f), int(c or 1)))
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    labels: LabelSpec = field(default_factory=LabelSpec)
    mode: str = "partial"
    grid: GridSpec = field(default_factory=GridSpec)
    gen: GenConfig = field(default_factory=GenConfig)
    n: int = 16000
    stages: tuple = FULL_STAGES
    tail: str = "one_by_one_conv"
    train: TrainConfig = field(default_factory=TrainConfig)
    loss_beta: float = 4.0
    loss_d_near: float = 12.0
    window: tuple = DEFAULT_WINDOW
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown label mode {self.mode!r}")
        object.__setattr__(self, "tail", TAIL_ALIASES.get(self.tail, self.tail))
        if self.n < 1:
            raise ValueError("n must be positive")
        # the seed drives both generation and training
        if self.gen.seed != self.seed or self.train.seed != self.seed:
            object.__setattr__(self, "gen", replace(self.gen, seed=self.seed))
            object.__setattr__(self, "train", replace(self.train, seed=self.seed))
        self.arch  # validates shapes

    @classmethod
    def preset(cls, name: str) -> "RunConfig":
        if name == "full":
            return cls()
        if name == "desk":
            return cls(camera=CameraIntrinsics(96, 96, 32, 32, 64, 64), n=1500,
                       gen=GenConfig(val_count=200, test_count=100), stages=DESK_STAGES)
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")

    @property
    def arch(self) -> ArchSpec:
        return ArchSpec(w_in=self.camera.width, h_in=self.camera.height, n_bin=self.labels.n_bin,
                        grid=self.grid, stages=self.stages, tail=self.tail)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    # ---------------------------------------------------------------- INI

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = {"seed": str(self.seed), "n": str(self.n)}
        cp["camera"] = {k: _fmt(v) for k, v in self.camera.to_dict().items() if k != "windowed"}
        cp["labels"] = {"delta_d": _fmt(self.labels.delta_d), "n_bin": str(self.labels.n_bin),
                        "sigma": _fmt(self.labels.sigma), "k": str(self.labels.k), "mode": self.mode,
                        "grid": str(self.grid)}
        cp["generation"] = {f.name: _fmt(getattr(self.gen, f.name))
                            for f in fields(GenConfig) if f.name != "seed"}
        cp["architecture"] = {"stages": _stages_text(self.stages), "tail": self.tail}
        cp["training"] = {f.name: _fmt(getattr(self.train, f.name))
                          for f in fields(TrainConfig) if f.name != "seed"}
        cp["training"]["loss_beta"] = _fmt(self.loss_beta)
        cp["training"]["loss_d_near"] = _fmt(self.loss_d_near)
        cp["metrics"] = {"window_lo": str(self.window[0]), "window_hi": str(self.window[1])}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def write(self, directory) -> Path:
        path = Path(directory) / "config.ini"
        path.write_text(self.to_ini())
        return path

    @classmethod
    def from_ini(cls, text: str, base: Optional["RunConfig"] = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        known = {"run", "camera", "labels", "generation", "architecture", "training", "metrics"}
        unknown = set(cp.sections()) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        preset = cp.get("run", "preset", fallback=None)
        cfg = base or (cls.preset(preset) if preset else cls())

        def section(name):
            return dict(cp[name]) if cp.has_section(name) else {}

        def merge(obj, values, skip=()):
            cur = {f.name: getattr(obj, f.name) for f in fields(obj)}
            for k in values:
                if k not in cur or k in skip:
                    raise ValueError(f"unknown key {k!r} in [{type(obj).__name__}]")
            return replace(obj, **{k: _coerce(v, cur[k]) for k, v in values.items()})

        run = section("run")
        run.pop("preset", None)
        seed = int(run.pop("seed", cfg.seed))
        n = int(run.pop("n", cfg.n))
        if run:
            raise ValueError(f"unknown keys in [run]: {sorted(run)}")
        camera = merge(cfg.camera, section("camera"), skip=("windowed",))
        lab = section("labels")
        mode = lab.pop("mode", cfg.mode)
        grid = GridSpec.parse(lab.pop("grid")) if "grid" in lab else cfg.grid
        labels = merge(cfg.labels, lab)
        gen = merge(cfg.gen, section("generation"), skip=("seed",))
        arch = section("architecture")
        stages = _parse_stages(arch.pop("stages")) if "stages" in arch else cfg.stages
        tail = arch.pop("tail", cfg.tail)
        if arch:
            raise ValueError(f"unknown keys in [architecture]: {sorted(arch)}")
        tr = section("training")
        beta = float(tr.pop("loss_beta", cfg.loss_beta))
        d_near = float(tr.pop("loss_d_near", cfg.loss_d_near))
        train = merge(cfg.train, tr, skip=("seed",))
        met = section("metrics")
        window = (int(met.pop("window_lo", cfg.window[0])), int(met.pop("window_hi", cfg.window[1])))
        if met:
            raise ValueError(f"unknown keys in [metrics]: {sorted(met)}")
        return cls(camera=camera, labels=labels, mode=mode, grid=grid, gen=gen, n=n, stages=stages,
                   tail=tail, train=train, loss_beta=beta, loss_d_near=d_near, window=window, seed=seed)

    @classmethod
    def load(cls, source: Optional[str]) -> "RunConfig":
        """A preset name, a path to an INI file, or ``None`` for the full-size defaults."""
        if source is None:
            return cls()
        if source in PRESETS:
            return cls.preset(source)
        return cls.from_ini(Path(source).read_text())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
