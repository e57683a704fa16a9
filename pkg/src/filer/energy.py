"""Local energy per orientation and the noise-compensated total energy map."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyStack, InvalidConfig
from .filterbank import ResponseStack

EPSILON = 1e-4


@dataclass(frozen=True)
class EnergyConfig:
    k_noise: float = 2.0
    spread_cutoff: float = 0.5
    spread_gain: float = 10.0
    epsilon: float = EPSILON
    rectify: str = "clip"  # "clip" -> max(E - T0, 0); "abs" -> |E - T0|
    noise_threshold: float | None = None  # fixed T0 for every orientation; None estimates it
    scale_mult: float = 2.1

    def __post_init__(self):
        if self.rectify not in ("clip", "abs"):
            raise InvalidConfig(f"rectify must be 'clip' or 'abs', got {self.rectify!r}")
        if self.epsilon <= 0:
            raise InvalidConfig("epsilon must be > 0")
        if self.noise_threshold is not None and self.noise_threshold < 0:
            raise InvalidConfig("noise_threshold must be >= 0")


@dataclass(frozen=True)
class OrientedEnergy:
    energy: np.ndarray  # (n_orients, H, W)
    sum_amplitude: np.ndarray  # (H, W)
    per_orient_amp: np.ndarray  # (n_orients, H, W)

    @property
    def n_orients(self) -> int:
        return self.energy.shape[0]


@dataclass(frozen=True)
class EnergyMaps:
    et: np.ndarray
    weights: np.ndarray  # (n_orients, H, W)
    noise_thresholds: np.ndarray  # (n_orients,)
    epsilon: float


def _amplitudes(stack: ResponseStack) -> np.ndarray:
    return np.sqrt(stack.even ** 2 + stack.odd ** 2)


def local_energy(stack: ResponseStack) -> OrientedEnergy:
    if stack.even.size == 0:
        raise EmptyStack("response stack has no filters")
    sum_e = stack.even.sum(axis=0)
    sum_o = stack.odd.sum(axis=0)
    energy = np.sqrt(sum_e ** 2 + sum_o ** 2)
    per_orient = _amplitudes(stack).sum(axis=0)
    return OrientedEnergy(energy=energy, sum_amplitude=per_orient.sum(axis=0),
                          per_orient_amp=per_orient)


def estimate_noise_threshold(stack: ResponseStack, o: int, k_noise: float = 2.0,
                             scale_mult: float = 2.1) -> float:
    """Noise energy threshold for orientation ``o``.

    The smallest-scale amplitude is modelled as Rayleigh distributed; its
    median fixes the Rayleigh parameter, which is propagated across scales
    (each coarser filter passes ``1/scale_mult`` as much noise amplitude).
    The threshold is the mean plus ``k_noise`` standard deviations of the
    resulting Rayleigh noise-energy distribution.
    """
    if not 0 <= o < stack.n_orients:
        raise IndexError(f"orientation {o} outside [0, {stack.n_orients})")
    amp = np.sqrt(stack.even[0, o] ** 2 + stack.odd[0, o] ** 2)
    tau = float(np.median(amp)) / math.sqrt(math.log(4.0))
    inv = 1.0 / scale_mult
    total_tau = tau * (1.0 - inv ** stack.n_scales) / (1.0 - inv)
    mean = total_tau * math.sqrt(math.pi / 2.0)
    sigma = total_tau * math.sqrt((4.0 - math.pi) / 2.0)
    return mean + k_noise * sigma


def frequency_spread_weight(stack: ResponseStack, cutoff: float = 0.5, gain: float = 10.0,
                            epsilon: float = EPSILON) -> np.ndarray:
    """Sigmoid weight per orientation penalising narrow frequency spread."""
    amps = _amplitudes(stack)
    spread = amps.sum(axis=0) / (stack.n_scales * (amps.max(axis=0) + epsilon))
    return 1.0 / (1.0 + np.exp(gain * (cutoff - spread)))


def total_energy(oe: OrientedEnergy, weights, thresholds, epsilon: float = EPSILON,
                 rectify: str = "clip") -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    thresholds = np.broadcast_to(np.asarray(thresholds, dtype=np.float64), (oe.n_orients,))
    if weights.shape != oe.energy.shape:
        raise DimensionMismatch(f"weights {weights.shape} vs energy {oe.energy.shape}")
    excess = oe.energy - thresholds[:, None, None]
    if rectify == "clip":
        excess = np.maximum(excess, 0.0)
    elif rectify == "abs":
        excess = np.abs(excess)
    else:
        raise InvalidConfig(f"unknown rectify mode {rectify!r}")
    return (weights * excess).sum(axis=0) / (oe.sum_amplitude + epsilon)


def energy_maps(stack: ResponseStack, config: EnergyConfig = EnergyConfig()):
    """Run the whole energy stage; returns ``(OrientedEnergy, EnergyMaps)``."""
    oe = local_energy(stack)
    if config.noise_threshold is None:
        t0 = np.array([estimate_noise_threshold(stack, o, config.k_noise, config.scale_mult)
                       for o in range(stack.n_orients)])
    else:
        t0 = np.full(stack.n_orients, float(config.noise_threshold))
    weights = frequency_spread_weight(stack, config.spread_cutoff, config.spread_gain, config.epsilon)
    et = total_energy(oe, weights, t0, config.epsilon, config.rectify)
    return oe, EnergyMaps(et=et, weights=weights, noise_thresholds=t0, epsilon=config.epsilon)
