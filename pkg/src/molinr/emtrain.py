"""Expectation-maximization denoising: latent inference, the joint network
update, the training loop and reverse-diffusion sampling.

Batches are flat: every node and pair evaluation of every molecule in the batch
is one row, and ``index`` maps rows to molecules. Each molecule owns one latent
per diffusion step, shared by all of its rows.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .checkpoint import Checkpoint
from .config import RunConfig
from .diffusion import DiffusionSchedule, posterior_params, posterior_sample, q_sample
from .molgraph import MolecularGraph
from .nn import AdamState, ConditionalINR, adam_step, inr_backward, inr_forward, init_network, sgd_latent_step
from .signal import Kind, decode_sample, encode_molecule, topology_coordinates, topology_kinds
from .spectral import node_coordinates

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossRecord:
    L_e: float
    L_denoise: float  # ||theta(phi, z_t) - y_0||^2, the per-step denoising loss
    L_out: float  # ||psi(phi, z_t) - y_t||^2

    @property
    def L_m(self) -> float:
        return self.L_denoise + self.L_out


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    L_e: float
    L_out: float
    L_denoise: float
    L_m: float
    wall_ms: float

    def csv_row(self) -> str:
        return f"{self.epoch},{self.L_e!r},{self.L_out!r},{self.L_denoise!r},{self.L_m!r},{self.wall_ms:.3f}"


CSV_HEADER = "epoch,L_e,L_out,L_denoise,L_m,wall_ms"


@dataclass(frozen=True)
class Batch:
    coords: np.ndarray  # (B, d)
    index: np.ndarray  # (B,) molecule id per row
    counts: np.ndarray  # (M,) rows per molecule

    @property
    def n_molecules(self) -> int:
        return len(self.counts)

    @classmethod
    def stack(cls, coord_blocks: Sequence[np.ndarray]) -> "Batch":
        counts = np.array([len(c) for c in coord_blocks], dtype=np.intp)
        index = np.repeat(np.arange(len(counts)), counts)
        return cls(np.vstack(coord_blocks), index, counts)


def new_latents(m: int, k: int) -> np.ndarray:
    """Latents start at the origin before every E-step."""
    return np.zeros((m, k))


def _per_molecule_mse(diff: np.ndarray, batch: Batch) -> np.ndarray:
    sq = np.einsum("ij,ij->i", diff, diff)
    return np.bincount(batch.index, weights=sq, minlength=batch.n_molecules) / batch.counts


def _row_weights(batch: Batch) -> np.ndarray:
    return (1.0 / batch.counts)[batch.index][:, None]


def infer_latents(psi: ConditionalINR, batch: Batch, y_t: np.ndarray, iters: int, lr: float):
    """E-step on a batch: ``iters`` gradient-descent steps on each molecule's own
    reconstruction loss, all latents starting at zero. ``psi`` is read only.

    Returns (z, L_e) where L_e[m] is molecule m's loss at its returned latent.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if y_t.shape != (len(batch.coords), psi.dims.f):
        raise ValueError(f"y_t shape {y_t.shape} does not match the batch")
    z = new_latents(batch.n_molecules, psi.dims.k)
    weights = _row_weights(batch)
    for _ in range(iters):
        y_hat, tape = inr_forward(psi, z, batch.coords, batch.index)
        grads = inr_backward(psi, tape, 2.0 * (y_hat - y_t) * weights, params=False)
        z = sgd_latent_step(z, grads.z, lr)
    return z, _per_molecule_mse(psi(z, batch.coords, batch.index) - y_t, batch)


def e_step(psi: ConditionalINR, coords, y_t, iters: int = 3, lr: float = 0.1):
    """E-step for one molecule: returns its latent (k,) and final L_e."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    y_t = np.atleast_2d(np.asarray(y_t, dtype=np.float64))
    z, loss = infer_latents(psi, Batch.stack([coords]), y_t, iters, lr)
    return z[0], float(loss[0])


def latent_loss(psi: ConditionalINR, z, coords, y) -> float:
    """Mean squared-norm reconstruction error of one molecule at latent ``z``."""
    diff = psi(z, coords) - y
    return float(np.mean(np.einsum("ij,ij->i", diff, diff)))


def m_step(theta: ConditionalINR, psi: ConditionalINR, z: np.ndarray, batch: Batch,
           y0: np.ndarray, y_t: np.ndarray, adam_theta: AdamState, adam_psi: AdamState,
           L_e: float = 0.0) -> LossRecord:
    """One Adam update of theta (towards y_0) and psi (towards y_t) at fixed z.

    Losses are per-molecule means over evaluations, then means over the batch.
    """
    z = np.atleast_2d(z)
    weights = _row_weights(batch) / batch.n_molecules

    y0_hat, tape_theta = inr_forward(theta, z, batch.coords, batch.index)
    d0 = y0_hat - y0
    yt_hat, tape_psi = inr_forward(psi, z, batch.coords, batch.index)
    dt = yt_hat - y_t
    L_denoise = float(np.mean(_per_molecule_mse(d0, batch)))
    L_out = float(np.mean(_per_molecule_mse(dt, batch)))

    g_theta = inr_backward(theta, tape_theta, 2.0 * d0 * weights)
    g_psi = inr_backward(psi, tape_psi, 2.0 * dt * weights)
    adam_step(adam_theta, theta.parameters(), g_theta.parameters())
    adam_step(adam_psi, psi.parameters(), g_psi.parameters())
    return LossRecord(float(L_e), L_denoise, L_out)


@dataclass(frozen=True)
class Prepared:
    graph: MolecularGraph
    coords: np.ndarray
    targets: np.ndarray


def prepare_dataset(dataset: Sequence[MolecularGraph], cfg: RunConfig) -> list[Prepared]:
    if not dataset:
        raise ValueError("dataset is empty")
    out = []
    for n, g in enumerate(dataset):
        if g.alphabet.symbols != cfg.alphabet.symbols:
            raise ValueError(f"molecule {n} uses alphabet {g.alphabet.symbols}, config has {cfg.alphabet.symbols}")
        g.validate()
        mf = encode_molecule(g, cfg.model.d)
        out.append(Prepared(g, mf.coords, mf.targets))
    return out


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def initial_checkpoint(cfg: RunConfig) -> Checkpoint:
    seed_theta, seed_psi = np.random.SeedSequence(cfg.train.seed).generate_state(2)
    m = cfg.model
    theta = init_network(cfg.dims, m.activation, int(seed_theta), m.omega0)
    psi = init_network(cfg.dims, m.activation, int(seed_psi), m.omega0)
    return Checkpoint(cfg, theta, psi)


StepCallback = Callable[[int, int, LossRecord], None]


def train(dataset: Sequence[MolecularGraph], cfg: RunConfig, on_step: StepCallback | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> Checkpoint:
    """Run the EM denoising training loop and return the final checkpoint.

    Shuffling uses the stream keyed by (epoch,); each molecule's diffusion step
    and noise come from the stream keyed by (epoch, molecule index), so results
    do not depend on batch composition order.
    """
    cfg.validate()
    data = prepare_dataset(dataset, cfg)
    ckpt = initial_checkpoint(cfg)
    theta, psi = ckpt.theta, ckpt.psi
    tc = cfg.train
    schedule = ckpt.schedule
    adam_theta = AdamState.for_params(theta.parameters(), tc.outer_lr)
    adam_psi = AdamState.for_params(psi.parameters(), tc.outer_lr)

    for epoch in range(tc.epochs):
        start = time.perf_counter()
        order = _stream(tc.seed, epoch).permutation(len(data))
        records, sizes = [], []
        for b0 in range(0, len(order), tc.batch_size):
            members = order[b0:b0 + tc.batch_size]
            y0_blocks, yt_blocks = [], []
            for mol in members:
                rng = _stream(tc.seed, epoch, int(mol))
                t = int(rng.integers(1, schedule.T + 1))
                y0 = data[mol].targets
                y0_blocks.append(y0)
                yt_blocks.append(q_sample(schedule, y0, t, rng.standard_normal(y0.shape)))
            batch = Batch.stack([data[mol].coords for mol in members])
            y0 = np.vstack(y0_blocks)
            y_t = np.vstack(yt_blocks)

            z, L_e = infer_latents(psi, batch, y_t, tc.inner_iters, tc.inner_lr)
            rec = m_step(theta, psi, z, batch, y0, y_t, adam_theta, adam_psi, float(np.mean(L_e)))
            if not all(np.isfinite([rec.L_e, rec.L_denoise, rec.L_out])):
                raise NumericalError(f"non-finite loss at epoch {epoch + 1}: {rec}")
            if on_step is not None:
                on_step(epoch + 1, b0 // tc.batch_size, rec)
            records.append(rec)
            sizes.append(len(members))

        w = np.asarray(sizes, dtype=np.float64) / sum(sizes)
        L_e = float(sum(wi * r.L_e for wi, r in zip(w, records)))
        L_out = float(sum(wi * r.L_out for wi, r in zip(w, records)))
        L_den = float(sum(wi * r.L_denoise for wi, r in zip(w, records)))
        rec = EpochRecord(epoch + 1, L_e, L_out, L_den, L_den + L_out, 1e3 * (time.perf_counter() - start))
        ckpt.history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.debug("epoch %d: L_e=%.4g L_out=%.4g L_denoise=%.4g", rec.epoch, rec.L_e, rec.L_out, rec.L_denoise)
    return ckpt


@dataclass
class SampleTrace:
    """Final signals per topology plus the mean sampling-time latent fit loss per step."""

    signals: list[np.ndarray]
    kinds: list[tuple[Kind, ...]]
    L_out: list[float]


def sample_signals(ckpt: Checkpoint, topologies: Sequence[MolecularGraph], seed: int,
                   stochastic: bool = True) -> SampleTrace:
    """Reverse diffusion from y_T ~ N(0, I) over each topology's evaluations.

    Topology ``n`` draws all of its noise from the stream keyed by (n,). With
    ``stochastic=False`` the posterior std is forced to zero at every step.
    """
    cfg = ckpt.config
    schedule: DiffusionSchedule = ckpt.schedule
    theta, psi = ckpt.theta, ckpt.psi
    f = cfg.f
    coord_blocks, kinds, noise = [], [], []
    for n, g in enumerate(topologies):
        cs = node_coordinates(g, cfg.model.d)
        rows = topology_coordinates(cs)
        coord_blocks.append(rows)
        kinds.append(topology_kinds(g.n_atoms))
        noise.append(_stream(seed, n).standard_normal((schedule.T + 1, len(rows), f)))
    if not coord_blocks:
        return SampleTrace([], [], [])
    batch = Batch.stack(coord_blocks)
    # noise[:, 0] seeds y_T; noise[:, t] drives the step t -> t-1.
    noise_all = np.concatenate(noise, axis=1)
    y = noise_all[0].copy()
    fit_losses = []
    for t in range(schedule.T, 0, -1):
        z, fit = infer_latents(psi, batch, y, cfg.train.inner_iters, cfg.train.inner_lr)
        fit_losses.append(float(np.mean(fit)))
        y0_hat = theta(z, batch.coords, batch.index)
        mu, sigma = posterior_params(schedule, y0_hat, y, t)
        y = posterior_sample(mu, sigma if stochastic else 0.0, noise_all[t], final=(t == 1))
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite signal during sampling at step {t}")
    bounds = np.cumsum(batch.counts)[:-1]
    return SampleTrace(np.split(y, bounds), kinds, fit_losses)


def sample(ckpt: Checkpoint, topologies: Sequence[MolecularGraph], seed: int,
           stochastic: bool = True) -> list[MolecularGraph]:
    trace = sample_signals(ckpt, topologies, seed, stochastic)
    return [decode_sample(k, s, ckpt.config.alphabet) for k, s in zip(trace.kinds, trace.signals)]


def draw_topologies(pool: Sequence[MolecularGraph], count: int, seed: int) -> list[MolecularGraph]:
    """Uniform draws with replacement from a pool of training molecules."""
    picks = _stream(seed, 2**31 - 1).integers(0, len(pool), size=count)
    return [pool[int(i)] for i in picks]
