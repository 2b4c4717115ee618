"""The WGAN loop: critic updates, generator update, evaluation, checkpoints.

Sign convention: the critic ascends ``mean f(real) - mean f(fake)`` (we
descend its negation, logged as ``critic_loss``) and the generator descends
``-mean f(fake)`` (logged as ``gen_loss``).
"""

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import optim
from .config import TrainConfig
from .data import gaussian_noise, swiss_roll
from .errors import NumericError, ShapeError
from .networks import (MlpParams, apply_constraint, cap_generator_norm, check_constraint, forward,
                       init_params, sample)
from .ot import W1Report, exact_w1, sliced_w1, tail_prob_diagnostic
from .rng import make_rng

LOG_FIELDS = ("iter", "critic_loss", "gen_loss", "sliced_w1", "exact_w1", "tail_frac", "elapsed_s")


@dataclass
class EvalRecord:
    iteration: int
    critic_loss: float
    gen_loss: float
    sliced_w1: float
    exact_w1: float
    tail_frac: float
    elapsed_s: float

    def values(self) -> tuple:
        return (self.iteration, self.critic_loss, self.gen_loss, self.sliced_w1, self.exact_w1,
                self.tail_frac, self.elapsed_s)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, rec: EvalRecord) -> None:
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError("log iterations must be strictly increasing")
        self.records.append(rec)

    def deterministic_rows(self) -> list[tuple]:
        """Every column except wall time, as exact float reprs."""
        return [tuple(repr(v) for v in r.values()[:-1]) for r in self.records]

    def column(self, name: str) -> np.ndarray:
        idx = LOG_FIELDS.index(name)
        return np.array([r.values()[idx] for r in self.records], dtype=float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_FIELDS)
            for r in self.records:
                w.writerow([r.iteration] + [repr(float(v)) for v in r.values()[1:-1]]
                           + [f"{r.elapsed_s:.6f}"])

    @classmethod
    def read_csv(cls, path) -> "TrainLog":
        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.append(EvalRecord(int(row["iter"]), *(float(row[k]) for k in LOG_FIELDS[1:])))
        return log


@dataclass
class TrainResult:
    generator: MlpParams
    discriminator: MlpParams
    log: TrainLog
    checkpoints: list
    final: W1Report | None = None

    def __iter__(self):
        # allows `g, log, checkpoints = train(...)`
        return iter((self.generator, self.log, self.checkpoints))


def _finite(value: float, what: str, iteration: int, last_checkpoint):
    if not math.isfinite(value):
        raise NumericError(f"non-finite {what} at iteration {iteration}", iteration, last_checkpoint)


def critic_loss(d: MlpParams, fake: np.ndarray, real: np.ndarray, leaves=None) -> ad.Tensor:
    """``mean f(fake) - mean f(real)`` from a single stacked forward pass."""
    mf, mr = fake.shape[0], real.shape[0]
    out = forward(d, np.concatenate([fake, real]), leaves)
    return ad.sub(ad.reduce_mean(ad.take_rows(out, 0, mf)), ad.reduce_mean(ad.take_rows(out, mf, mf + mr)))


def critic_step(d: MlpParams, g: MlpParams, real, noise, opt: optim.OptimizerState) -> float:
    """One critic update followed by the constraint projection; returns the loss before the step."""
    real = getattr(real, "values", real)
    noise = getattr(noise, "values", noise)
    if real.shape[1] != d.spec.input_dim or noise.shape[1] != g.spec.input_dim:
        raise ShapeError("batch dimensions do not match the networks")
    fake = sample(g, noise)
    tape = ad.Tape()
    leaves = d.watch(tape)
    loss = critic_loss(d, fake, real, leaves)
    value = loss.item()
    if not math.isfinite(value):
        raise NumericError("non-finite critic loss")
    ad.backward(loss)
    optim.step(opt, d, [t.grad for t in leaves])
    apply_constraint(d)
    return value


def generator_loss(g: MlpParams, d: MlpParams, noise, leaves=None) -> ad.Tensor:
    return ad.scale(ad.reduce_mean(forward(d, forward(g, noise, leaves))), -1.0)


def generator_grads(g: MlpParams, d: MlpParams, noise) -> tuple[float, list[np.ndarray]]:
    noise = getattr(noise, "values", noise)
    tape = ad.Tape()
    leaves = g.watch(tape)
    loss = generator_loss(g, d, noise, leaves)
    ad.backward(loss)
    return loss.item(), [t.grad for t in leaves]


def generator_step(g: MlpParams, d: MlpParams, noise, opt: optim.OptimizerState,
                   norm_cap: float | None = None) -> float:
    """One generator update; returns the loss before the step."""
    noise = getattr(noise, "values", noise)
    if noise.shape[1] != g.spec.input_dim:
        raise ShapeError("noise dimension does not match the generator")
    value, grads = generator_grads(g, d, noise)
    if not math.isfinite(value):
        raise NumericError("non-finite generator loss")
    optim.step(opt, g, grads)
    if norm_cap is not None:
        cap_generator_norm(g, norm_cap)
    return value


def _checkpoint(g, d, iteration, seed):
    return {"iteration": iteration, "generator": g.to_dict(iteration, seed),
            "discriminator": d.to_dict(iteration, seed)}


def write_checkpoint(ckpt: dict, out_dir) -> None:
    it = ckpt["iteration"]
    for name in ("generator", "discriminator"):
        with open(os.path.join(out_dir, f"{name}_{it:07d}.json"), "w") as fh:
            json.dump(ckpt[name], fh)


def train(config: TrainConfig, real_data, reference=None, transform=None, out_dir=None,
          progress=None) -> TrainResult:
    """Run the adversarial loop.

    ``real_data`` must hold at least ``n_train`` rows; only the first
    ``n_train`` are ever sampled. ``reference`` is the held-out target sample
    for evaluation (a fresh Swiss-roll draw from the eval stream when
    omitted). ``transform`` maps generated/reference samples into the
    evaluation space (PCA for MNIST).
    """
    cfg = config
    pool = np.asarray(getattr(real_data, "values", real_data), dtype=np.float64)
    if pool.shape[0] < cfg.n_train or pool.shape[1] != cfg.data_dim:
        raise ShapeError(f"real data is {pool.shape}, need >= {cfg.n_train} rows of dim {cfg.data_dim}")
    pool = pool[:cfg.n_train]

    init_rng = make_rng(cfg.seed, "init")
    noise_rng = make_rng(cfg.seed, "noise")
    batch_rng = make_rng(cfg.seed, "batch")
    eval_rng = make_rng(cfg.seed, "eval")

    g = init_params(cfg.generator_spec(), init_rng)
    d = init_params(cfg.discriminator_spec(), init_rng)
    norm_cap = cfg.generator.norm_cap
    if norm_cap is not None:
        cap_generator_norm(g, norm_cap)
    g_opt = optim.make_optimizer(vars(cfg.generator_optimizer))
    d_opt = optim.make_optimizer(vars(cfg.discriminator_optimizer))

    ev = cfg.eval
    if reference is None:
        if cfg.dataset != "swiss_roll":
            raise ValueError("an evaluation reference sample is required for this dataset")
        reference = swiss_roll(ev.samples, eval_rng).values
    reference = np.asarray(getattr(reference, "values", reference), dtype=np.float64)
    ref_eval = transform(reference) if transform else reference
    ref_eval = np.asarray(getattr(ref_eval, "values", ref_eval))

    log = TrainLog()
    checkpoints = []
    last_good = None
    t0 = time.perf_counter()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    def evaluate(it, c_loss, g_loss, exact):
        z = gaussian_noise(ref_eval.shape[0], cfg.noise_dim, eval_rng).values
        gen = sample(g, z)
        if not np.all(np.isfinite(gen)):
            raise NumericError(f"non-finite generator output at iteration {it}", it, last_good)
        gen_eval = transform(gen) if transform else gen
        gen_eval = np.asarray(getattr(gen_eval, "values", gen_eval))
        sw = sliced_w1(gen_eval, ref_eval, ev.sliced_projections, eval_rng)
        w1 = exact_w1(gen_eval, ref_eval) if exact else math.nan
        tail = tail_prob_diagnostic(gen, ev.tail_threshold)
        rec = EvalRecord(it, c_loss, g_loss, sw, w1, tail, time.perf_counter() - t0)
        log.append(rec)
        if progress is not None:
            progress(rec)
        return rec

    def snapshot(it):
        nonlocal last_good
        ck = _checkpoint(g, d, it, cfg.seed)
        last_good = ck
        if ev.keep_checkpoints or it == cfg.total_iterations:
            checkpoints.append(ck)
        if out_dir is not None:
            write_checkpoint(ck, out_dir)

    evaluate(0, math.nan, math.nan, True)
    snapshot(0)

    c_loss = g_loss = math.nan
    bs = cfg.batch_size
    for it in range(1, cfg.total_iterations + 1):
        try:
            for _ in range(cfg.critic_steps):
                idx = batch_rng.integers(0, cfg.n_train, size=bs)
                z = gaussian_noise(bs, cfg.noise_dim, noise_rng).values
                c_loss = critic_step(d, g, pool[idx], z, d_opt)
            z = gaussian_noise(bs, cfg.noise_dim, noise_rng).values
            g_loss = generator_step(g, d, z, g_opt, norm_cap)
        except NumericError as exc:
            raise NumericError(f"{exc} (iteration {it})", it, last_good) from exc
        _finite(c_loss, "critic loss", it, last_good)
        _finite(g_loss, "generator loss", it, last_good)
        final = it == cfg.total_iterations
        if it % ev.every == 0 or final:
            if ad.DEBUG and not check_constraint(d):
                raise NumericError(f"critic constraint violated at iteration {it}", it, last_good)
            exact = final or (ev.exact_every > 0 and it % ev.exact_every == 0)
            evaluate(it, c_loss, g_loss, exact)
            snapshot(it)

    last = log.records[-1]
    report = W1Report(last.exact_w1, ref_eval.shape[0], ref_eval.shape[0], cfg.seed,
                      elapsed=last.elapsed_s)
    if out_dir is not None:
        log.write_csv(os.path.join(out_dir, "log.csv"))
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            fh.write(cfg.to_json())
    return TrainResult(g, d, log, checkpoints, report)


def load_training_data(config: TrainConfig, data_dir=None):
    """Real training pool, evaluation reference and evaluation transform for a config."""
    if config.dataset == "swiss_roll":
        pool = swiss_roll(config.n_train, make_rng(config.seed, "data")).values
        return pool, None, None
    from .data import default_data_dir, mnist_load, pca_fit, pca_transform

    base = data_dir or default_data_dir()
    mc = config.mnist

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    images = mnist_load(resolve(mc.images), resolve(mc.labels)).values
    if images.shape[0] < config.n_train + mc.holdout:
        raise ShapeError(f"MNIST has {images.shape[0]} rows, need n_train + holdout = "
                         f"{config.n_train + mc.holdout}")
    train_pool = images[:images.shape[0] - mc.holdout]
    held = images[images.shape[0] - mc.holdout:]
    pick = make_rng(config.seed, "eval").choice(held.shape[0], size=min(config.eval.samples, held.shape[0]),
                                                replace=False)
    model = pca_fit(train_pool, mc.pca_dim)
    return train_pool, held[np.sort(pick)], lambda x: pca_transform(model, x).values


def train_from_config(config: TrainConfig, data_dir=None, out_dir=None, progress=None) -> TrainResult:
    pool, reference, transform = load_training_data(config, data_dir)
    return train(config, pool, reference, transform, out_dir, progress)
