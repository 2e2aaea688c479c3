"""Adversarial training of the de-aliasing generator.

Each step updates the discriminator on ground truth versus detached
generator output, then updates the generator on the weighted pixel,
perceptual and adversarial objective. Randomness is keyed by the run seed
(model init, mask, per-epoch batch order, per-sample augmentation), so a
run is a pure function of its config and data.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from dealias import kspace, nn
from dealias.data import AugmentSpec, Dataset, augment, augment_rng
from dealias.errors import InvalidArgument, NumericFault
from dealias.losses import AdversarialVariant, LossWeights, discriminator_loss, generator_total_loss, pixel_loss
from dealias.metrics import nmse, psnr, ssim
from dealias.models import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    PerceptualEncoder,
    PerceptualEncoderConfig,
)
from dealias.persistence import Checkpoint, canonical_json

logger = logging.getLogger(__name__)

VARIANTS = ("PG", "PPG", "PPGR")
STEP_LOG_HEADER = ("step", "epoch", "lr", "d_loss", "g_adv", "g_pixel", "g_perceptual", "g_total",
                   "d_real_mean", "d_fake_mean")
EPOCH_LOG_HEADER = ("epoch", "nmse", "psnr", "ssim")


# -- configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class MaskSpec:
    kind: str = "gaussian2d"
    ratio: float = 0.2
    sigma_fraction: float = 0.3
    per_image: bool = False  # one fixed mask per image instead of one per run

    def __post_init__(self):
        kspace.MaskKind.parse(self.kind)
        if not 0 < self.ratio <= 1:
            raise InvalidArgument(f"mask ratio must be in (0, 1], got {self.ratio}")
        if self.sigma_fraction <= 0:
            raise InvalidArgument("sigma_fraction must be positive")


@dataclass(frozen=True)
class ModelConfig:
    gen_depth: int = 4
    gen_base: int = 64
    disc_depth: int = 4
    disc_base: int = 64
    perc_blocks: int = 4
    perc_base: int = 32
    perc_weights: str = "seeded"
    perc_seed: int = 1234


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "PPGR"
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-4
    lr_halve_every: int = 30
    early_stop_patience: int | None = None
    seed: int = 0
    image_size: tuple[int, int] = (64, 64)
    val_fraction: float = 0.2
    d_steps_per_g_step: int = 1
    mask: MaskSpec = field(default_factory=MaskSpec)
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentSpec | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidArgument(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0 or self.lr_halve_every < 1:
            raise InvalidArgument("epochs >= 0, batch_size >= 1, lr >= 0 and lr_halve_every >= 1 are required")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise InvalidArgument("early_stop_patience must be positive or None")
        if self.d_steps_per_g_step < 1:
            raise InvalidArgument("d_steps_per_g_step must be at least 1")
        if not 0 <= self.val_fraction < 1:
            raise InvalidArgument("val_fraction must be in [0, 1)")
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))

    @property
    def use_refinement(self) -> bool:
        return self.variant == "PPGR"

    @property
    def effective_weights(self) -> LossWeights:
        """PG has no perceptual term; PPG and PPGR use the configured beta."""
        return replace(self.weights, beta=0.0) if self.variant == "PG" else self.weights

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(self.model.gen_depth, self.model.gen_base, self.image_size, self.use_refinement)

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(self.model.disc_depth, self.model.disc_base, self.image_size)

    def encoder_config(self) -> PerceptualEncoderConfig:
        m = self.model
        return PerceptualEncoderConfig(m.perc_blocks, m.perc_base, self.image_size, m.perc_weights, m.perc_seed)

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, Enum):
                return v.value
            if isinstance(v, tuple):
                return [plain(x) for x in v]
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            return v

        d = plain(asdict(self))
        d["weights"]["beta"] = self.effective_weights.beta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"unknown train config keys: {sorted(unknown)}")
        if "mask" in d:
            d["mask"] = MaskSpec(**d["mask"])
        if "weights" in d:
            d["weights"] = LossWeights(**d["weights"])
        if "model" in d:
            d["model"] = ModelConfig(**d["model"])
        if d.get("augment") is not None:
            a = dict(d["augment"])
            a["zoom_range"] = tuple(a["zoom_range"])
            d["augment"] = AugmentSpec(**a)
        if "image_size" in d:
            d["image_size"] = tuple(d["image_size"])
        return cls(**d)

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict())).hexdigest()


def desk_config(variant: str = "PPGR", epochs: int = 30, ratio: float = 0.2, base: int = 16,
                seed: int = 0) -> TrainConfig:
    """Scaled-down preset for 64x64 phantom runs on one CPU.

    The pixel term here is normalised by ||x_t||^2, so it is orders of
    magnitude smaller than an unnormalised squared error; alpha=1000 and
    lr=1e-3 keep the adversarial term from dominating at this scale.
    """
    return TrainConfig(variant=variant, epochs=epochs, batch_size=8, lr=1e-3, lr_halve_every=10, seed=seed,
                       mask=MaskSpec("gaussian2d", ratio), weights=LossWeights(1000.0, 0.0025),
                       model=ModelConfig(4, base, 4, base, 4, 8))


def zf_loss_threshold(cfg: TrainConfig, images: np.ndarray) -> float:
    """Weighted pixel loss of the zero-filled input itself: what an identity generator would score."""
    x_u, x_t = make_pairs(images, cfg)
    return cfg.weights.alpha * pixel_loss(x_u, x_t).item()


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Step-halving schedule; ``epoch`` is 0-based."""
    return cfg.lr * 0.5 ** (epoch // cfg.lr_halve_every)


@dataclass
class TrainState:
    epoch: int = 0  # completed epochs
    global_step: int = 0
    current_lr: float = 0.0
    best_val_metric: float | None = None
    best_epoch: int | None = None
    epochs_since_improvement: int = 0
    rng_state: dict = field(default_factory=dict)


# -- networks ------------------------------------------------------------------------

def _derived_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class Networks:
    generator: Generator
    discriminator: Discriminator
    encoder: PerceptualEncoder | None
    opt_g: nn.Adam
    opt_d: nn.Adam

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, module in (("generator", self.generator), ("discriminator", self.discriminator),
                               ("encoder", self.encoder)):
            if module is not None:
                out.update({f"{prefix}.{k}": v for k, v in module.state_dict().items()})
        out.update(self.opt_g.state_arrays("opt_g"))
        out.update(self.opt_d.state_arrays("opt_d"))
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        ckpt = Checkpoint({}, arrays)
        self.generator.load_state_dict(ckpt.group("generator"))
        self.discriminator.load_state_dict(ckpt.group("discriminator"))
        if self.encoder is not None and ckpt.group("encoder"):
            self.encoder.load_state_dict(ckpt.group("encoder"))
        self.opt_g.load_state_arrays("opt_g", arrays)
        self.opt_d.load_state_arrays("opt_d", arrays)

    def train(self, mode: bool = True) -> None:
        self.generator.train(mode)
        self.discriminator.train(mode)


def build_networks(cfg: TrainConfig) -> Networks:
    g = Generator(cfg.generator_config(), seed=_derived_seed(cfg.seed, 0, 0))
    d = Discriminator(cfg.discriminator_config(), seed=_derived_seed(cfg.seed, 0, 1))
    enc = PerceptualEncoder(cfg.encoder_config()) if cfg.effective_weights.beta > 0 else None
    lr = lr_at(cfg, 0)
    return Networks(g, d, enc, nn.Adam(g.parameters(), lr=lr), nn.Adam(d.parameters(), lr=lr))


# -- data ------------------------------------------------------------------------------

def run_mask(cfg: TrainConfig, index: int | None = None) -> kspace.SamplingMask:
    """The run's shared mask, or image ``index``'s own mask in per-image mode."""
    kind = kspace.MaskKind.parse(cfg.mask.kind)
    seed = cfg.seed if index is None or not cfg.mask.per_image else _derived_seed(cfg.seed, 2, index)
    return kspace.make_mask(kind, cfg.image_size, cfg.mask.ratio, cfg.mask.sigma_fraction, seed)


def make_pairs(images: np.ndarray, cfg: TrainConfig, indices: Sequence[int] | None = None,
               mask: kspace.SamplingMask | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(x_u, x_t)`` as float32 ``N×1×H×W`` arrays; ``mask`` overrides the config's masks."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[1:] != cfg.image_size:
        raise InvalidArgument(f"images are {images.shape[1:]}, config expects {cfg.image_size}")
    if mask is not None:
        x_u = kspace.simulate_zero_filled(images, mask)
    elif cfg.mask.per_image:
        idx = range(len(images)) if indices is None else indices
        x_u = np.stack([kspace.simulate_zero_filled(img, run_mask(cfg, int(i))) for img, i in zip(images, idx)])
    else:
        x_u = kspace.simulate_zero_filled(images, run_mask(cfg))
    return x_u[:, None].astype(np.float32), images[:, None].astype(np.float32)


def train_val_split(dataset: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    n = len(dataset)
    n_val = int(round(val_fraction * n))
    if n_val >= n:
        raise InvalidArgument("validation split would leave no training images")
    order = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(4,))).permutation(n)
    return dataset.subset(np.sort(order[n_val:])), dataset.subset(np.sort(order[:n_val]))


def kfold_split(ids: Sequence[str], k: int, seed: int) -> list[tuple[list[int], list[int]]]:
    """``k`` (train, val) index partitions; val folds are disjoint, exhaustive and differ in size by at most 1."""
    n = len(ids)
    if k < 2:
        raise InvalidArgument("k must be at least 2")
    if k > n:
        raise InvalidArgument(f"k={k} exceeds dataset size {n}")
    order = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(3,))).permutation(n)
    folds = [np.sort(f).tolist() for f in np.array_split(order, k)]
    out = []
    for i, val in enumerate(folds):
        train = sorted(j for m, f in enumerate(folds) if m != i for j in f)
        out.append((train, val))
    return out


# -- single step ------------------------------------------------------------------------

@dataclass
class StepMetrics:
    d_loss: float
    g_adv: float
    g_pixel: float
    g_perceptual: float
    g_total: float
    d_real_mean: float
    d_fake_mean: float


def discriminator_update(nets: Networks, x_t: nn.Tensor, fake: nn.Tensor) -> tuple[float, float, float]:
    nets.discriminator.zero_grad()
    d_real = nets.discriminator(x_t)
    d_fake = nets.discriminator(fake.detach())
    loss = discriminator_loss(d_real, d_fake)
    loss.backward()
    nets.opt_d.step()
    nets.discriminator.zero_grad()
    return loss.item(), float(d_real.data.mean()), float(d_fake.data.mean())


def generator_update(nets: Networks, x_t: nn.Tensor, fake: nn.Tensor, weights: LossWeights):
    nets.generator.zero_grad()
    nets.discriminator.set_requires_grad(False)
    try:
        out = generator_total_loss(fake, x_t, nets.discriminator(fake), weights, nets.encoder)
        out.total.backward()
    finally:
        nets.discriminator.set_requires_grad(True)
    nets.opt_g.step()
    nets.generator.zero_grad()
    return out


def train_step(nets: Networks, x_u: np.ndarray, x_t: np.ndarray, cfg: TrainConfig) -> StepMetrics:
    if len(x_u) == 0:
        raise InvalidArgument("empty batch")
    xu, xt = nn.Tensor(x_u), nn.Tensor(x_t)
    fake = nets.generator(xu)
    for _ in range(cfg.d_steps_per_g_step):
        d_loss, d_real_mean, d_fake_mean = discriminator_update(nets, xt, fake)
    out = generator_update(nets, xt, fake, cfg.effective_weights)
    metrics = StepMetrics(d_loss, out.adversarial, out.pixel, out.perceptual, out.total.item(), d_real_mean,
                          d_fake_mean)
    if not all(math.isfinite(v) for v in asdict(metrics).values()):
        raise NumericFault(f"non-finite loss: {metrics}")
    return metrics


# -- evaluation helpers ---------------------------------------------------------------

def reconstruct(generator: Generator, x_u: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Eval-mode forward in batches; restores the previous mode afterwards."""
    was_training = generator.training
    generator.eval()
    try:
        with nn.no_grad():
            outs = [generator(nn.Tensor(x_u[i:i + batch_size])).data for i in range(0, len(x_u), batch_size)]
    finally:
        generator.train(was_training)
    return np.concatenate(outs) if outs else np.zeros_like(x_u)


def mean_metrics(x_hat: np.ndarray, x_t: np.ndarray) -> dict[str, float]:
    rows = [(nmse(a[0], b[0]), psnr(a[0], b[0]), ssim(a[0], b[0])) for a, b in zip(x_hat, x_t)]
    arr = np.array(rows, dtype=np.float64)
    return {"nmse": float(arr[:, 0].mean()), "psnr": float(arr[:, 1].mean()), "ssim": float(arr[:, 2].mean())}


# -- fit -----------------------------------------------------------------------------------

@dataclass
class FitResult:
    checkpoint: Checkpoint
    step_log: list[dict]
    epoch_log: list[dict]
    state: TrainState
    networks: Networks
    stopped_early: bool = False


def make_checkpoint(nets: Networks, cfg: TrainConfig, state: TrainState) -> Checkpoint:
    st = asdict(state)
    if st["best_val_metric"] is not None and not math.isfinite(st["best_val_metric"]):
        st["best_val_metric"] = None  # JSON has no inf
    meta = {
        "variant": cfg.variant,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "epoch": state.epoch,
        "val_psnr": st["best_val_metric"],
        "train_state": st,
    }
    return Checkpoint(meta, nets.state_arrays())


def restore(ckpt: Checkpoint, cfg: TrainConfig | None = None, force: bool = False
            ) -> tuple[Networks, TrainConfig, TrainState]:
    """Rebuild networks, config and state from a checkpoint.

    When ``cfg`` is given its hash must match the stored one unless ``force``.
    """
    stored = TrainConfig.from_dict(ckpt.metadata["config"])
    if cfg is None:
        cfg = stored
    elif cfg.config_hash() != ckpt.metadata.get("config_hash") and not force:
        raise InvalidArgument("config hash differs from the checkpoint's; pass force to resume anyway")
    nets = build_networks(cfg)
    nets.load_arrays(ckpt.arrays)
    state = TrainState(**ckpt.metadata["train_state"])
    return nets, cfg, state


class _CsvLog:
    def __init__(self, path: Path | None, header: Sequence[str], append: bool = False):
        self._f = None
        if path is not None:
            fresh = not (append and path.exists())
            self._f = open(path, "a" if not fresh else "w", newline="")
            self._w = csv.writer(self._f)
            if fresh:
                self._w.writerow(header)
        self._header = header

    def write(self, row: dict) -> None:
        if self._f is not None:
            self._w.writerow([_fmt(row[k]) for k in self._header])
            self._f.flush()

    def close(self) -> None:
        if self._f is not None:
            self._f.close()


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def fit(dataset: Dataset, cfg: TrainConfig, *, val: Dataset | None = None, log_dir: str | Path | None = None,
        resume: Checkpoint | None = None, resume_best: Checkpoint | None = None, force: bool = False,
        on_epoch: Callable[[int, dict], None] | None = None) -> FitResult:
    """Train ``cfg`` on ``dataset``.

    Without an explicit ``val`` set the dataset is split by
    ``cfg.val_fraction``. With ``log_dir`` the step and epoch CSVs plus
    ``last.ckpt`` (every epoch) and ``best.ckpt`` are written there. With
    ``early_stop_patience`` the returned networks and checkpoint are those
    of the best validation epoch.
    """
    from dealias.persistence import save_checkpoint

    if len(dataset) == 0:
        raise InvalidArgument("training dataset is empty")
    if val is None and cfg.val_fraction > 0:
        dataset, val = train_val_split(dataset, cfg.val_fraction, cfg.seed)
    if val is not None and len(val) == 0:
        val = None

    if resume is not None:
        nets, cfg, state = restore(resume, cfg, force)
    else:
        nets, state = build_networks(cfg), TrainState(current_lr=lr_at(cfg, 0))
    state.rng_state = {"seed": cfg.seed, "next_epoch": state.epoch}

    log_dir = Path(log_dir) if log_dir is not None else None
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
    step_csv = _CsvLog(log_dir / "train_log.csv" if log_dir else None, STEP_LOG_HEADER, append=resume is not None)
    epoch_csv = _CsvLog(log_dir / "val_log.csv" if log_dir else None, EPOCH_LOG_HEADER, append=resume is not None)

    x_u_all, x_t_all = (None, None)
    if cfg.augment is None:
        x_u_all, x_t_all = make_pairs(dataset.images, cfg)
    if val is not None:
        val_x_u, val_x_t = make_pairs(val.images, cfg)

    best = None
    if resume_best is not None:
        best = (copy.deepcopy(resume_best.arrays), TrainState(**resume_best.metadata["train_state"]))
    elif resume is not None and cfg.early_stop_patience is not None:
        best = (nets.state_arrays(), copy.deepcopy(state))

    step_log: list[dict] = []
    epoch_log: list[dict] = []
    stopped = False
    n = len(dataset)
    try:
        for epoch in range(state.epoch, cfg.epochs):
            lr = lr_at(cfg, epoch)
            state.current_lr = lr
            nets.opt_g.set_lr(lr)
            nets.opt_d.set_lr(lr)
            nets.train(True)
            order = np.random.default_rng(np.random.SeedSequence(int(cfg.seed), spawn_key=(1, epoch))).permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                if cfg.augment is None:
                    x_u, x_t = x_u_all[idx], x_t_all[idx]
                else:
                    imgs = np.stack([augment(dataset.images[i], cfg.augment, augment_rng(cfg.seed, epoch, int(i)))
                                     for i in idx])
                    x_u, x_t = make_pairs(imgs, cfg, idx)
                try:
                    m = train_step(nets, x_u, x_t, cfg)
                except NumericFault as exc:
                    raise NumericFault(f"training aborted at step {state.global_step} (epoch {epoch}): {exc}") from exc
                row = {"step": state.global_step, "epoch": epoch, "lr": lr, **asdict(m)}
                step_log.append(row)
                step_csv.write(row)
                state.global_step += 1
            state.epoch = epoch + 1
            state.rng_state = {"seed": cfg.seed, "next_epoch": state.epoch}

            improved = False
            if val is not None:
                vm = mean_metrics(reconstruct(nets.generator, val_x_u), val_x_t)
                erow = {"epoch": epoch, **vm}
                epoch_log.append(erow)
                epoch_csv.write(erow)
                if state.best_val_metric is None or vm["psnr"] > state.best_val_metric:
                    state.best_val_metric, state.best_epoch = vm["psnr"], epoch
                    state.epochs_since_improvement = 0
                    improved = True
                else:
                    state.epochs_since_improvement += 1
                if on_epoch is not None:
                    on_epoch(epoch, vm)
            if improved and cfg.early_stop_patience is not None:
                best = (nets.state_arrays(), copy.deepcopy(state))
            if log_dir is not None:
                ck = make_checkpoint(nets, cfg, state)
                save_checkpoint(log_dir / "last.ckpt", ck)
                if improved:
                    save_checkpoint(log_dir / "best.ckpt", ck)
            if (cfg.early_stop_patience is not None and val is not None
                    and state.epochs_since_improvement >= cfg.early_stop_patience):
                logger.info("early stop after epoch %d (best epoch %s)", epoch, state.best_epoch)
                stopped = True
                break
    finally:
        step_csv.close()
        epoch_csv.close()

    if cfg.early_stop_patience is not None and best is not None:
        arrays, best_state = best
        nets.load_arrays(arrays)
        state = best_state
    return FitResult(make_checkpoint(nets, cfg, state), step_log, epoch_log, state, nets, stopped)


# -- convergence comparison -----------------------------------------------------------

@dataclass
class ComparisonResult:
    variants: tuple[str, str]
    steps: dict[int, dict[str, list[float]]]  # seed -> variant -> g_total per step
    psnr: dict[int, dict[str, list[float]]]  # seed -> variant -> val psnr per epoch


def _strip_variant(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d.pop("variant")
    d.pop("seed")
    d["weights"] = asdict(cfg.weights)
    return d


def convergence_comparison(cfg_a: TrainConfig, cfg_b: TrainConfig, seeds: Iterable[int], dataset: Dataset,
                           val: Dataset, out_dir: str | Path | None = None) -> ComparisonResult:
    """Train both variants per seed on identical data and masks; emit aligned curves.

    ``steps.csv`` has columns seed,step,<a>_g_total,<b>_g_total and
    ``psnr.csv`` has seed,epoch,<a>_psnr,<b>_psnr.
    """
    if _strip_variant(cfg_a) != _strip_variant(cfg_b):
        raise InvalidArgument("configs may differ only in variant")
    if cfg_a.variant == cfg_b.variant:
        raise InvalidArgument("the two configs must name different variants")
    names = (cfg_a.variant, cfg_b.variant)
    steps: dict[int, dict[str, list[float]]] = {}
    curves: dict[int, dict[str, list[float]]] = {}
    for seed in seeds:
        steps[seed], curves[seed] = {}, {}
        for cfg in (cfg_a, cfg_b):
            r = fit(dataset, replace(cfg, seed=seed, early_stop_patience=None), val=val)
            steps[seed][cfg.variant] = [row["g_total"] for row in r.step_log]
            curves[seed][cfg.variant] = [row["psnr"] for row in r.epoch_log]
    result = ComparisonResult(names, steps, curves)
    if out_dir is not None:
        write_comparison_csvs(result, out_dir)
    return result


def write_comparison_csvs(result: ComparisonResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    a, b = result.variants
    with open(out / "steps.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seed", "step", f"{a}_g_total", f"{b}_g_total"])
        for seed, series in result.steps.items():
            for i, (va, vb) in enumerate(zip(series[a], series[b], strict=True)):
                w.writerow([seed, i, repr(va), repr(vb)])
    with open(out / "psnr.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seed", "epoch", f"{a}_psnr", f"{b}_psnr"])
        for seed, series in result.psnr.items():
            for i, (va, vb) in enumerate(zip(series[a], series[b], strict=True)):
                w.writerow([seed, i, repr(va), repr(vb)])


def steps_to_threshold(series: Sequence[float], threshold: float, window: int = 1) -> int | None:
    """First step whose trailing ``window``-step mean is at or below ``threshold``."""
    s = np.asarray(series, dtype=np.float64)
    if window > 1:
        c = np.cumsum(np.concatenate([[0.0], s]))
        means = np.full_like(s, np.inf)
        means[window - 1:] = (c[window:] - c[:-window]) / window
    else:
        means = s
    hit = np.nonzero(means <= threshold)[0]
    return int(hit[0]) if hit.size else None


def late_variance(series: Sequence[float], last: int = 10) -> float:
    s = np.asarray(series[-last:], dtype=np.float64)
    return float(s.var())
