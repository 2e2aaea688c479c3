"""Plain-text run configuration: ``[section]`` headers and ``key = value`` lines.

Every key has a default, unknown sections and keys are rejected, and
command-line overrides of the form ``section.key=value`` take precedence
over the file. :meth:`RunConfig.to_text` renders the fully resolved
configuration; commands write it next to their outputs.
"""

from __future__ import annotations

import configparser
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable

from dealias.data import AugmentSpec
from dealias.errors import InvalidArgument
from dealias.losses import LossWeights
from dealias.training import MaskSpec, ModelConfig, TrainConfig


@dataclass
class DataSection:
    source: str = "phantom"  # "phantom" or a directory of PNG / raw images
    count: int = 200  # number of phantoms when source = phantom
    size: int = 64  # side length; images are resized to size x size
    seed: int = 0  # phantom generation seed


@dataclass
class MaskSection:
    kind: str = "gaussian2d"
    ratio: float = 0.2
    sigma_fraction: float = 0.3
    seed: int | None = None  # maskgen / simulate; defaults to train.seed
    per_image: bool = False
    file: str = ""  # existing CSM1 mask for simulate / eval


@dataclass
class ModelSection:
    gen_depth: int = 4
    gen_base: int = 64
    disc_depth: int = 4
    disc_base: int = 64
    perc_blocks: int = 4
    perc_base: int = 32
    perc_weights: str = "seeded"
    perc_seed: int = 1234


@dataclass
class TrainSection:
    variant: str = "PPGR"
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-4
    lr_halve_every: int = 30
    early_stop_patience: int | None = None
    seed: int = 0
    val_fraction: float = 0.2
    d_steps_per_g_step: int = 1
    alpha: float = 15.0
    beta: float = 0.0025
    adversarial: str = "non-saturating"
    augment: bool = False


@dataclass
class EvalSection:
    diff_gain: float = 10.0
    profile_row: int | None = None  # defaults to the centre row
    batch_size: int = 16
    max_images: int | None = None  # cap on images receiving diff PNGs


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    mask: MaskSection = field(default_factory=MaskSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    # -- parsing -------------------------------------------------------------------
    @classmethod
    def load(cls, path: str | Path | None = None, overrides: Iterable[str] = ()) -> "RunConfig":
        cfg = cls()
        if path is not None:
            text = Path(path).read_text()
            cfg.apply_text(text, source=str(path))
        for item in overrides:
            cfg.apply_override(item)
        return cfg

    def apply_text(self, text: str, source: str = "<config>") -> None:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str  # keep key case so typos are reported verbatim
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise InvalidArgument(f"{source}: {exc}") from exc
        for section in parser.sections():
            for key, value in parser.items(section):
                self.set(section, key, value)

    def apply_override(self, item: str) -> None:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise InvalidArgument(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        self.set(section, key.strip(), value.strip())

    def set(self, section: str, key: str, value: str) -> None:
        sec = getattr(self, section, None) if section in _SECTIONS else None
        if sec is None:
            raise InvalidArgument(f"unknown config section [{section}]; known: {', '.join(_SECTIONS)}")
        types_ = _field_types(type(sec))
        if key not in types_:
            raise InvalidArgument(f"unknown key {key!r} in [{section}]; known: {', '.join(types_)}")
        setattr(sec, key, _convert(value, types_[key], f"{section}.{key}"))

    # -- rendering -------------------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for name in _SECTIONS:
            sec = getattr(self, name)
            lines.append(f"[{name}]")
            for f in fields(sec):
                lines.append(f"{f.name} = {_render(getattr(sec, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path

    # -- conversion -------------------------------------------------------------------
    def to_train_config(self) -> TrainConfig:
        t, m = self.train, self.mask
        return TrainConfig(
            variant=t.variant, epochs=t.epochs, batch_size=t.batch_size, lr=t.lr, lr_halve_every=t.lr_halve_every,
            early_stop_patience=t.early_stop_patience, seed=t.seed, image_size=(self.data.size, self.data.size),
            val_fraction=t.val_fraction, d_steps_per_g_step=t.d_steps_per_g_step,
            mask=MaskSpec(m.kind, m.ratio, m.sigma_fraction, m.per_image),
            weights=LossWeights(t.alpha, t.beta, t.adversarial),
            model=ModelConfig(**{f.name: getattr(self.model, f.name) for f in fields(self.model)}),
            augment=AugmentSpec() if t.augment else None,
        )

    @property
    def mask_seed(self) -> int:
        return self.train.seed if self.mask.seed is None else self.mask.seed


_SECTIONS = tuple(f.name for f in fields(RunConfig))


def _field_types(cls) -> dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


def _convert(text: str, tp, where: str):
    optional = False
    if isinstance(tp, types.UnionType) or typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        optional, tp = True, args[0]
    raw = text.strip()
    if optional and raw.lower() in ("", "none"):
        return None
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw
    except ValueError:
        raise InvalidArgument(f"{where}: cannot parse {raw!r} as {tp.__name__}") from None


def _render(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)
