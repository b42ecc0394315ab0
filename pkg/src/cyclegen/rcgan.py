"""Recurrent conditional GAN: LSTM generator conditioned on smoothed capacity,
unconditioned LSTM discriminator, and the alternating 2:1 training loop."""
from __future__ import annotations

import copy
import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from cyclegen.errors import MissingArtifactError, NumericalError

N_CHANNELS = 3


@dataclass(frozen=True)
class GanSpec:
    l: int = 128
    d: int = 8
    g_hidden: int = 64
    d_hidden: int = 64
    g_head: str = "final_state"  # or "per_step"
    d_head: str = "per_step"  # or "final_state"

    def __post_init__(self):
        for name in ("g_head", "d_head"):
            if getattr(self, name) not in ("final_state", "per_step"):
                raise ValueError(f"{name} must be 'final_state' or 'per_step'")
        # l=1 is accepted for hand-checked single-step cases; preprocessing enforces l >= 2
        if self.l < 1:
            raise ValueError(f"l must be >= 1, got {self.l}")
        if self.d < 1 or self.g_hidden < 1 or self.d_hidden < 1:
            raise ValueError("d and hidden widths must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 16
    learning_rate_g: float = 2e-4
    learning_rate_d: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    prob_clamp: float = 1e-7
    seed: int = 0
    checkpoint_every: int = 0  # 0: final checkpoint only

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.prob_clamp <= 1e-3:
            raise ValueError("prob_clamp must lie in (0, 1e-3]")
        if self.learning_rate_g < 0 or self.learning_rate_d < 0:
            raise ValueError("learning rates must be non-negative")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


class Generator(nn.Module):
    def __init__(self, spec: GanSpec):
        super().__init__()
        self.spec = spec
        self.lstm = nn.LSTM(spec.d + 1, spec.g_hidden, num_layers=2, batch_first=True)
        if spec.g_head == "final_state":
            # whole 3 x l cycle emitted at once from the last hidden state
            self.head = nn.Linear(spec.g_hidden, N_CHANNELS * spec.l)
        else:
            self.head = nn.Linear(spec.g_hidden, N_CHANNELS)

    def forward(self, z: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        """z: (B, l, d), cond: (B,) already rescaled. Returns (B, l, 3)."""
        c = cond.reshape(-1, 1, 1).expand(-1, z.shape[1], 1)
        h, _ = self.lstm(torch.cat([z, c], dim=-1))
        if self.spec.g_head == "per_step":
            return torch.tanh(self.head(h))
        out = self.head(h[:, -1]).reshape(-1, N_CHANNELS, self.spec.l)
        return torch.tanh(out).transpose(1, 2)


class Discriminator(nn.Module):
    def __init__(self, spec: GanSpec):
        super().__init__()
        self.spec = spec
        self.lstm = nn.LSTM(N_CHANNELS, spec.d_hidden, num_layers=2, batch_first=True)
        self.head = nn.Linear(spec.d_hidden, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (B, l, 3). Returns probabilities of shape (B, l) per step, or (B, 1)
        when only the final hidden state is read."""
        h, _ = self.lstm(x)
        if self.spec.d_head == "final_state":
            h = h[:, -1:]
        return torch.sigmoid(self.head(h)).squeeze(-1)


@dataclass
class GanParams:
    """Generator and discriminator weights plus the conditioning range used for rescaling."""
    spec: GanSpec
    generator: Generator
    discriminator: Discriminator
    cond_lo: float = 0.0
    cond_hi: float = 1.0

    @classmethod
    def initialize(cls, spec: GanSpec, seed: int = 0, cond_lo: float = 0.0,
                   cond_hi: float = 1.0, dtype=torch.float32) -> "GanParams":
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            g = Generator(spec).to(dtype)
            d = Discriminator(spec).to(dtype)
        return cls(spec, g, d, float(cond_lo), float(cond_hi))

    @classmethod
    def zeros(cls, spec: GanSpec, **kw) -> "GanParams":
        p = cls.initialize(spec, **kw)
        with torch.no_grad():
            for t in list(p.generator.parameters()) + list(p.discriminator.parameters()):
                t.zero_()
        return p

    @property
    def dtype(self) -> torch.dtype:
        return next(self.generator.parameters()).dtype

    def scale_cond(self, c) -> torch.Tensor:
        """Map capacities linearly so the training range becomes [-1, 1]."""
        c = torch.as_tensor(np.asarray(c, dtype=float), dtype=self.dtype)
        if self.cond_hi == self.cond_lo:
            return c - self.cond_lo
        return 2.0 * (c - self.cond_lo) / (self.cond_hi - self.cond_lo) - 1.0

    def snapshot(self) -> "GanParams":
        return copy.deepcopy(self)

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, net in (("g", self.generator), ("d", self.discriminator)):
            for name, t in net.state_dict().items():
                out[f"{prefix}.{name}"] = t.detach().cpu().numpy().copy()
        return out

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.named_arrays().values())


def _check_matrix(name, a, shape):
    a = np.asarray(a, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def generator_forward(params: GanParams, noise, cond: float) -> np.ndarray:
    """One synthetic cycle as a 3 x l array from an l x d noise matrix."""
    spec = params.spec
    z = _check_matrix("noise", noise, (spec.l, spec.d))
    if not np.isfinite(cond):
        raise ValueError("conditioning capacity must be finite")
    with torch.no_grad():
        zt = torch.as_tensor(z, dtype=params.dtype).unsqueeze(0)
        out = params.generator(zt, params.scale_cond([cond]))
    return out[0].T.cpu().numpy().astype(float)


def discriminator_forward(params: GanParams, x) -> float:
    spec = params.spec
    x = _check_matrix("x", x, (N_CHANNELS, spec.l))
    with torch.no_grad():
        p = params.discriminator(torch.as_tensor(x.T, dtype=params.dtype).unsqueeze(0))
    return float(p[0].mean())


def _clamp(p: torch.Tensor, eps: float) -> torch.Tensor:
    return torch.clamp(p, eps, 1.0 - eps)


def disc_value(p_real: torch.Tensor, p_fake: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    """Batch mean of log D(x) + log(1 - D(x_hat)), probabilities clamped to [eps, 1-eps]."""
    if p_real.numel() == 0 or p_fake.numel() == 0:
        raise ValueError("batches must be non-empty")
    if p_real.shape != p_fake.shape:
        raise ValueError("real and fake batches must have equal size")
    return (torch.log(_clamp(p_real, eps)) + torch.log(1.0 - _clamp(p_fake, eps))).mean()


def gen_value(p_fake: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    """Batch mean of log(1 - D(G(z|c))); the generator minimises this."""
    if p_fake.numel() == 0:
        raise ValueError("batch must be non-empty")
    return torch.log(1.0 - _clamp(p_fake, eps)).mean()


def _as_batch(params: GanParams, xs) -> torch.Tensor:
    """(s, 3, l) array-like -> (s, l, 3) tensor."""
    a = np.asarray(xs, dtype=float)
    if a.ndim != 3 or a.shape[1:] != (N_CHANNELS, params.spec.l):
        raise ValueError(f"expected batch of shape (s, 3, {params.spec.l}), got {a.shape}")
    return torch.as_tensor(a, dtype=params.dtype).transpose(1, 2)


def disc_objective(params: GanParams, real_batch, fake_batch, eps: float = 1e-7) -> float:
    real, fake = _as_batch(params, real_batch), _as_batch(params, fake_batch)
    if real.shape[0] == 0 or real.shape[0] != fake.shape[0]:
        raise ValueError("batches must be non-empty and of equal size")
    with torch.no_grad():
        return disc_value(params.discriminator(real).double(),
                          params.discriminator(fake).double(), eps).item()


def gen_objective(params: GanParams, noise_batch, cond_batch, eps: float = 1e-7) -> float:
    z = np.asarray(noise_batch, dtype=float)
    c = np.asarray(cond_batch, dtype=float).reshape(-1)
    if z.ndim != 3 or z.shape[1:] != (params.spec.l, params.spec.d):
        raise ValueError(f"noise batch must be (s, {params.spec.l}, {params.spec.d})")
    if z.shape[0] == 0 or z.shape[0] != c.shape[0]:
        raise ValueError("noise and conditioning batches must be non-empty and equal size")
    with torch.no_grad():
        fake = params.generator(torch.as_tensor(z, dtype=params.dtype), params.scale_cond(c))
        return gen_value(params.discriminator(fake).double(), eps).item()


@dataclass
class TrainHistory:
    iteration: list[int] = field(default_factory=list)
    net_updated: list[str] = field(default_factory=list)
    v_d: list[float] = field(default_factory=list)
    v_g: list[float] = field(default_factory=list)
    d_real: list[float] = field(default_factory=list)
    d_fake: list[float] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.iteration)

    def counts(self) -> dict[str, int]:
        return {"D": self.net_updated.count("D"), "G": self.net_updated.count("G")}

    def epoch_means(self, iters_per_epoch: int) -> list[dict]:
        rows = []
        for start in range(0, len(self), iters_per_epoch):
            sl = slice(start, start + iters_per_epoch)
            rows.append({"epoch": start // iters_per_epoch + 1,
                         "v_d": float(np.mean(self.v_d[sl])),
                         "v_g": float(np.mean(self.v_g[sl]))})
        return rows

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "net_updated", "v_d", "v_g"])
            for row in zip(self.iteration, self.net_updated, self.v_d, self.v_g):
                w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])

    @classmethod
    def read_csv(cls, path) -> "TrainHistory":
        h = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                h.iteration.append(int(row["iter"]))
                h.net_updated.append(row["net_updated"])
                h.v_d.append(float(row["v_d"]))
                h.v_g.append(float(row["v_g"]))
        return h

    def state(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    """Everything needed to resume training bit-for-bit."""
    params: GanParams
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    rng: np.random.Generator
    noise_gen: torch.Generator
    iteration: int
    history: TrainHistory
    cfg: TrainConfig


def _make_optimizers(params: GanParams, cfg: TrainConfig):
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    opt_g = torch.optim.Adam(params.generator.parameters(), lr=cfg.learning_rate_g,
                             betas=betas, eps=cfg.adam_eps)
    opt_d = torch.optim.Adam(params.discriminator.parameters(), lr=cfg.learning_rate_d,
                             betas=betas, eps=cfg.adam_eps)
    return opt_g, opt_d


def save_checkpoint(state: TrainState, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    p = state.params
    blob = {
        "format": "cyclegen-gan-checkpoint/1",
        "spec": asdict(p.spec),
        "train_config": asdict(state.cfg),
        "cond_range": [p.cond_lo, p.cond_hi],
        "dtype": str(p.dtype).removeprefix("torch."),
        "parameters": {k: torch.as_tensor(v) for k, v in p.named_arrays().items()},
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "iteration": state.iteration,
        "rng_state": state.rng.bit_generator.state,
        "noise_state": state.noise_gen.get_state(),
        "history": state.history.state(),
    }
    torch.save(blob, path)


def load_checkpoint(path) -> TrainState:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    blob = torch.load(path, weights_only=False)
    spec = GanSpec(**blob["spec"])
    cfg = TrainConfig(**blob["train_config"])
    dtype = getattr(torch, blob["dtype"])
    params = GanParams.initialize(spec, seed=0, cond_lo=blob["cond_range"][0],
                                  cond_hi=blob["cond_range"][1], dtype=dtype)
    for prefix, net in (("g", params.generator), ("d", params.discriminator)):
        net.load_state_dict({k[2:]: v for k, v in blob["parameters"].items()
                             if k.startswith(prefix + ".")})
    opt_g, opt_d = _make_optimizers(params, cfg)
    opt_g.load_state_dict(blob["opt_g"])
    opt_d.load_state_dict(blob["opt_d"])
    rng = np.random.default_rng()
    rng.bit_generator.state = blob["rng_state"]
    noise_gen = torch.Generator()
    noise_gen.set_state(blob["noise_state"])
    history = TrainHistory(**blob["history"])
    return TrainState(params, opt_g, opt_d, rng, noise_gen, blob["iteration"], history, cfg)


def load_params(path) -> GanParams:
    return load_checkpoint(path).params


def _profiles(cycles) -> np.ndarray:
    return np.stack([c.profile for c in cycles])


def start_training(cycles, spec: GanSpec, cfg: TrainConfig,
                   init: GanParams | None = None) -> TrainState:
    """Fresh training state; the conditioning range is taken from ``cycles``."""
    real = _profiles(cycles)
    if real.shape[1:] != (N_CHANNELS, spec.l):
        raise ValueError(f"cycles must be 3 x {spec.l}, got {real.shape[1:]}")
    if len(cycles) < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} cycles, got {len(cycles)}")
    conds = np.array([c.c_smooth for c in cycles])
    if init is None:
        params = GanParams.initialize(spec, cfg.seed, conds.min(), conds.max())
    else:
        params = init.snapshot()
        params.cond_lo, params.cond_hi = float(conds.min()), float(conds.max())
    opt_g, opt_d = _make_optimizers(params, cfg)
    return TrainState(params, opt_g, opt_d, np.random.default_rng(cfg.seed),
                      torch.Generator().manual_seed(cfg.seed), 0, TrainHistory(), cfg)


def run_training(state: TrainState, cycles, iterations: int | None = None,
                 checkpoint_dir=None, callback=None) -> TrainState:
    """Advance ``state`` in place until ``iterations`` (default ``state.cfg.iterations``).

    Iterations are numbered from 1. When ``i % 3 == 0`` the discriminator
    ascends its objective on the real cycles whose smoothed capacities were
    sampled, against fresh fakes; otherwise the generator descends its
    objective.
    """
    cfg = state.cfg
    total = cfg.iterations if iterations is None else iterations
    params = state.params
    spec = params.spec
    G, D = params.generator, params.discriminator
    real_t = torch.as_tensor(_profiles(cycles), dtype=params.dtype).transpose(1, 2)
    if real_t.shape[1:] != (spec.l, N_CHANNELS):
        raise ValueError(f"cycles must be 3 x {spec.l}")
    cond_t = params.scale_cond([c.c_smooth for c in cycles])
    eps = cfg.prob_clamp
    s = cfg.batch_size
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    h = state.history

    for i in range(state.iteration + 1, total + 1):
        idx = torch.as_tensor(state.rng.choice(len(real_t), size=s, replace=False))
        z = torch.randn(s, spec.l, spec.d, generator=state.noise_gen, dtype=params.dtype)
        c = cond_t[idx]
        if i % 3 == 0:
            with torch.no_grad():
                fake = G(z, c)
            p_real, p_fake = D(real_t[idx]), D(fake)
            v_d = disc_value(p_real, p_fake, eps)
            state.opt_d.zero_grad()
            (-v_d).backward()
            state.opt_d.step()
            v_g = gen_value(p_fake.detach(), eps)
            net = "D"
        else:
            p_fake = D(G(z, c))
            v_g = gen_value(p_fake, eps)
            state.opt_g.zero_grad()
            v_g.backward()
            state.opt_g.step()
            with torch.no_grad():
                p_real = D(real_t[idx])
            v_d = disc_value(p_real, p_fake.detach(), eps)
            net = "G"
        v_d, v_g = v_d.item(), v_g.item()
        if not (np.isfinite(v_d) and np.isfinite(v_g)):
            raise NumericalError(f"non-finite loss at iteration {i}: v_d={v_d}, v_g={v_g}")

        h.iteration.append(i)
        h.net_updated.append(net)
        h.v_d.append(v_d)
        h.v_g.append(v_g)
        h.d_real.append(float(p_real.detach().mean()))
        h.d_fake.append(float(p_fake.detach().mean()))
        state.iteration = i

        if cfg.checkpoint_every and i % cfg.checkpoint_every == 0:
            ckpt_id = f"iter-{i:06d}"
            h.checkpoints.append(ckpt_id)
            if ckpt_dir is not None:
                save_checkpoint(state, ckpt_dir / f"{ckpt_id}.pt")
        if callback is not None:
            callback(state)

    final_id = f"iter-{state.iteration:06d}"
    if not h.checkpoints or h.checkpoints[-1] != final_id:
        h.checkpoints.append(final_id)
    if ckpt_dir is not None:
        save_checkpoint(state, ckpt_dir / "checkpoint.pt")
    return state


def train(cycles, spec: GanSpec, cfg: TrainConfig, *, init: GanParams | None = None,
          checkpoint_dir=None) -> tuple[GanParams, TrainHistory]:
    state = run_training(start_training(cycles, spec, cfg, init), cycles,
                         checkpoint_dir=checkpoint_dir)
    return state.params, state.history


def mean_discriminator_output(params: GanParams, cycles) -> float:
    with torch.no_grad():
        x = torch.as_tensor(_profiles(cycles), dtype=params.dtype).transpose(1, 2)
        return float(params.discriminator(x).mean())


def gradient_check(spec: GanSpec, seed: int = 0, *, params: GanParams | None = None,
                   batch: int = 2, step: float = 1e-5, eps: float = 1e-7,
                   floor: float = 1e-6) -> float:
    """Max relative error between autograd and central finite differences.

    Covers d V_d / d theta_d and d V_g / d theta_g over every parameter
    entry, in float64, with a fixed random batch. ``floor`` bounds the
    denominator from below: central differences at ``step`` carry roundoff
    near 1e-11, which would swamp the relative error of near-zero entries.
    """
    if params is None:
        params = GanParams.initialize(spec, seed=seed, cond_lo=1.0, cond_hi=2.0,
                                      dtype=torch.float64)
    else:
        params = params.snapshot()
        params.generator.double()
        params.discriminator.double()
    rng = np.random.default_rng(seed)
    real = torch.as_tensor(rng.uniform(-1, 1, (batch, spec.l, N_CHANNELS)), dtype=torch.float64)
    z = torch.as_tensor(rng.standard_normal((batch, spec.l, spec.d)), dtype=torch.float64)
    c = params.scale_cond(rng.uniform(1.0, 2.0, batch))
    G, D = params.generator, params.discriminator

    def v_d():
        with torch.no_grad():
            fake = G(z, c)
        return disc_value(D(real), D(fake), eps)

    def v_g():
        return gen_value(D(G(z, c)), eps)

    worst = 0.0
    for fn, net in ((v_d, D), (v_g, G)):
        for q in list(G.parameters()) + list(D.parameters()):
            q.grad = None
        fn().backward()
        for q in net.parameters():
            analytic = q.grad.detach().clone().reshape(-1)
            flat = q.data.view(-1)
            for j in range(flat.numel()):
                orig = flat[j].item()
                with torch.no_grad():
                    flat[j] = orig + step
                    up = fn().item()
                    flat[j] = orig - step
                    down = fn().item()
                    flat[j] = orig
                numeric = (up - down) / (2 * step)
                a = analytic[j].item()
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                worst = max(worst, err)
    return worst
