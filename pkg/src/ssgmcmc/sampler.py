"""Base SGMCMC updates (SGLD, pSGLD, SGHMC) and the chain driver.

``run_chain`` plugs one of three gradient estimators into a base update:

* ``baseline``   -- the plain minibatch energy (1 model evaluation per step)
* ``structured`` -- the sum over M one-hot composites (M evaluations)
* ``dropout``    -- K random-mask composites (K evaluations)

Randomness is split into independent streams spawned from the seed: one for
minibatches and injected noise, one for store draws and masks, one for
reservoir replacement. A baseline run and a structured run with a single
group therefore consume the sampler stream identically and produce the same
chain bit for bit.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _accel
from .chainstore import ChainStore
from .data import Dataset
from .estimator import MaskDistribution, dropout_energy, structured_energy
from .model import DivergenceError, Model
from .partition import PartitionSpec, partition_modulo

SAMPLERS = ("sgld", "psgld", "sghmc")
VARIANTS = ("baseline", "structured", "dropout")
SGHMC_NOISE = "m <- (1 - gamma*eps) m - eps*grad + N(0, (2*gamma - eps*Vhat)*eps); theta <- theta + eps*m"


@dataclass
class SamplerState:
    theta: np.ndarray
    t: int = 0
    v: np.ndarray | None = None
    m: np.ndarray | None = None

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=np.float64)
        if self.v is None:
            self.v = np.zeros_like(self.theta)
        if self.m is None:
            self.m = np.zeros_like(self.theta)


@dataclass(frozen=True)
class StepSchedule:
    """Constant ``eps0``, or ``eps0 * (1 + t / t0) ** -power``."""

    eps0: float = 1e-3
    kind: str = "constant"
    t0: float = 1000.0
    power: float = 0.55

    def __post_init__(self):
        if self.eps0 <= 0:
            raise ValueError("step size must be positive")
        if self.kind not in ("constant", "polynomial-decay"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.kind == "polynomial-decay" and (self.t0 <= 0 or self.power < 0):
            raise ValueError("decay needs t0 > 0 and power >= 0")

    def __call__(self, t: int) -> float:
        if self.kind == "constant":
            return self.eps0
        return self.eps0 * (1.0 + t / self.t0) ** (-self.power)


def _checked(state, step):
    if not np.all(np.isfinite(state.theta)):
        i = int(np.flatnonzero(~np.isfinite(state.theta))[0])
        raise DivergenceError(f"non-finite parameter {i} after step {step}", index=i, step=step)
    return state


def sgld_step(state: SamplerState, grad, eps: float, noise) -> SamplerState:
    """``theta <- theta - eps/2 * grad + sqrt(eps) * noise``; ``noise`` is standard normal."""
    state.theta = state.theta - 0.5 * eps * grad + math.sqrt(eps) * noise
    state.t += 1
    return _checked(state, state.t)


def psgld_step(state: SamplerState, grad, eps: float, noise, beta: float = 0.99,
               lam: float = 1e-5, gamma=None) -> SamplerState:
    """RMSprop-preconditioned SGLD.

    ``v <- beta v + (1 - beta) grad^2``, ``R = 1 / (lam + sqrt(v))``,
    ``theta <- theta - eps/2 (R grad - gamma) + sqrt(eps R) noise``.
    ``gamma`` is the divergence-of-R drift correction; None drops it.
    """
    state.v = beta * state.v + (1.0 - beta) * grad * grad
    R = 1.0 / (lam + np.sqrt(state.v))
    drift = R * grad
    if gamma is not None:
        drift = drift - gamma
    state.theta = state.theta - 0.5 * eps * drift + np.sqrt(eps * R) * noise
    state.t += 1
    return _checked(state, state.t)


def psgld_gamma(state: SamplerState, grad_fn, grad, beta: float, lam: float,
                rng, h: float = 1e-4) -> np.ndarray:
    """Simultaneous-perturbation estimate of ``d R_i / d theta_i``.

    R depends on theta through the fresh squared gradient entering ``v``.
    Two extra gradient calls along a Rademacher direction ``d`` give
    ``d * (R(theta + h d) - R(theta - h d)) / 2h``, whose expectation is the
    diagonal derivative.
    """
    d = rng.choice((-1.0, 1.0), size=state.theta.size)

    def precond(g):
        return 1.0 / (lam + np.sqrt(beta * state.v + (1.0 - beta) * g * g))

    plus = precond(grad_fn(state.theta + h * d))
    minus = precond(grad_fn(state.theta - h * d))
    return d * (plus - minus) / (2.0 * h)


def sghmc_step(state: SamplerState, grad, eps: float, noise, friction: float = 0.1,
               v_hat: float = 0.0) -> SamplerState:
    """SGHMC with identity mass; see ``SGHMC_NOISE`` for the discretization."""
    var = (2.0 * friction - eps * v_hat) * eps
    if var < 0:
        raise ValueError(f"noise variance {var} < 0: need 2*friction >= eps*v_hat")
    state.m = (1.0 - friction * eps) * state.m - eps * grad + math.sqrt(var) * noise
    state.theta = state.theta + eps * state.m
    state.t += 1
    return _checked(state, state.t)


def init_theta(model: Model, seed: int = 0, mode: str = "zeros", steps: int = 0,
               lr: float = 1e-3, data: Dataset | None = None) -> np.ndarray:
    """Initial parameters: zeros, a prior draw, or full-batch gradient descent.

    Gradient descent starts from a small seeded prior draw (0.1 of the prior
    scale) rather than zero, which is a saddle point for tanh networks.
    """
    P = model.n_params
    if mode == "zeros":
        return np.zeros(P)
    if mode == "prior-draw":
        return model.prior_scale * np.random.default_rng(seed).standard_normal(P)
    if mode == "map-warmstart":
        theta = 0.1 * model.prior_scale * np.random.default_rng(seed).standard_normal(P)
        for _ in range(steps):
            theta = theta - lr * model.grad_energy(theta, None, data)
        return theta
    raise ValueError(f"unknown init mode {mode!r}")


@dataclass
class RunConfig:
    model: Model
    data: Dataset | None = None
    sampler: str = "sgld"
    variant: str = "baseline"
    partition: PartitionSpec | None = None
    mask: MaskDistribution = field(default_factory=MaskDistribution)
    K: int = 4
    schedule: StepSchedule = field(default_factory=StepSchedule)
    batch_size: int | None = None
    steps: int = 1000
    burn_in: int = 0
    thinning: int = 1
    capacity: int | None = 20_000
    retention: str = "window"
    seed: int = 0
    friction: float = 0.1
    v_hat: float = 0.0
    beta: float = 0.99
    lam: float = 1e-5
    psgld_gamma: bool = False
    theta0: np.ndarray | None = None
    qhat_capacity: int | None = None

    def validate(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.steps and not 0 <= self.burn_in < self.steps:
            raise ValueError("need 0 <= burn_in < steps")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.model.needs_data:
            if self.data is None:
                raise ValueError(f"{self.model.kind} needs a dataset")
            if self.batch_size is not None and not 1 <= self.batch_size <= self.data.n:
                raise ValueError("need 1 <= batch_size <= N")
        if self.partition is not None and self.partition.P != self.model.n_params:
            raise ValueError("partition size does not match the model")
        if self.theta0 is not None and np.shape(self.theta0) != (self.model.n_params,):
            raise ValueError("theta0 has the wrong length")
        if self.qhat_capacity is not None and self.qhat_capacity < 1:
            raise ValueError("qhat_capacity must be >= 1")


@dataclass
class RunReport:
    sampler: str
    variant: str
    M: int
    K: int
    steps_requested: int
    steps_completed: int
    energy_evals: int
    evals_per_step: float
    wall_clock: float
    wall_clock_per_step: float
    final_energy: float | None
    diverged: bool
    divergence_step: int | None
    divergence_message: str | None
    burn_in: int
    backend: str
    sghmc_noise: str = SGHMC_NOISE
    energies: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("energies")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def run_chain(config: RunConfig):
    """Run T steps of the configured sampler; returns ``(store, report)``.

    On divergence the run stops, the store keeps every finite sample so far
    and the report carries ``diverged=True``.
    """
    config.validate()
    model, data = config.model, config.data
    P = model.n_params
    partition = config.partition or partition_modulo(P, 1)
    seq = np.random.SeedSequence(config.seed)
    rng_step, rng_est, rng_store = (np.random.default_rng(s) for s in seq.spawn(3))

    theta0 = np.zeros(P) if config.theta0 is None else np.asarray(config.theta0, dtype=np.float64)
    store = ChainStore(theta0, capacity=config.capacity, stride=config.thinning,
                       mode=config.retention, rng=rng_store)
    # the estimator draws from ``qstore``; a separate sliding window only when requested
    qstore = store if config.qhat_capacity is None else ChainStore(theta0, capacity=config.qhat_capacity)
    state = SamplerState(theta0)
    N = data.n if data is not None else 0
    B = config.batch_size
    full_batch = not model.needs_data or B is None or B == N

    def estimate(theta, batch):
        if config.variant == "baseline":
            return model.energy_and_grad(theta, batch, data)
        if config.variant == "structured":
            return structured_energy(theta, qstore, partition, model, batch, data, rng_est)
        return dropout_energy(theta, qstore, partition, model, batch, data,
                              config.mask, config.K, rng_est)

    energies = np.empty(config.steps)
    evals0 = model.n_evals
    diverged, div_step, div_msg = False, None, None
    start = time.perf_counter()
    t = 0
    try:
        for t in range(config.steps):
            batch = None if full_batch else rng_step.choice(N, size=B, replace=False)
            value, grad = estimate(state.theta, batch)
            energies[t] = value
            eps = config.schedule(t)
            noise = rng_step.standard_normal(P)
            if config.sampler == "sgld":
                sgld_step(state, grad, eps, noise)
            elif config.sampler == "psgld":
                gamma = None
                if config.psgld_gamma:
                    gamma = psgld_gamma(state, lambda th: estimate(th, batch)[1], grad,
                                        config.beta, config.lam, rng_est)
                psgld_step(state, grad, eps, noise, config.beta, config.lam, gamma)
            else:
                sghmc_step(state, grad, eps, noise, config.friction, config.v_hat)
            store.append(state.theta, step=t + 1)
            if qstore is not store:
                qstore.append(state.theta, step=t + 1)
        t = config.steps
    except DivergenceError as exc:
        diverged, div_step, div_msg = True, t, str(exc)
    wall = time.perf_counter() - start
    evals = model.n_evals - evals0
    done = t
    return store, RunReport(
        sampler=config.sampler,
        variant=config.variant,
        M=partition.M,
        K=config.K if config.variant == "dropout" else 0,
        steps_requested=config.steps,
        steps_completed=done,
        energy_evals=evals,
        evals_per_step=evals / done if done else 0.0,
        wall_clock=wall,
        wall_clock_per_step=wall / done if done else 0.0,
        final_energy=float(energies[done - 1]) if done else None,
        diverged=diverged,
        divergence_step=div_step,
        divergence_message=div_msg,
        burn_in=config.burn_in,
        backend=_accel.backend(),
        energies=energies[:done],
    )
