"""Stochastic radar/clutter multipath channel on the chip grid.

A realization superposes one optional target tap (complex Gaussian amplitude
at the known target delay) and N_c clutter taps whose amplitudes have uniform
phase and Weibull magnitude, at delays quantized to whole chips.  Received
samples are the causal tap convolution of the chip sequence plus circularly
symmetric complex Gaussian noise, and are framed per slot as stacked
real/imaginary parts for the receiver network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .modem import ChipSequence


def unit_second_moment_scale(shape: float) -> float:
    """Weibull scale that makes E[magnitude^2] = 1 for the given shape."""
    return 1.0 / math.sqrt(math.gamma(1.0 + 2.0 / shape))


@dataclass
class ChannelConfig:
    """Channel statistics and the SNR operating point.

    weibull_scale=None (the default) renormalizes the clutter scale so each
    clutter amplitude has unit second moment; at weibull_shape=2 the clutter
    amplitudes are then exactly CN(0,1).  Delays are in chips.
    """

    num_clutter: int = 5
    weibull_shape: float = 2.0
    weibull_scale: float | None = None
    target_power: float = 1.0
    target_delay: int = 0
    max_clutter_delay: int = 4
    tap_count: int = 5
    snr_db: float = 10.0
    target_prior: float = 0.5

    def __post_init__(self):
        if self.num_clutter < 0:
            raise ValueError("num_clutter must be >= 0")
        if not 0.25 <= self.weibull_shape <= 2.0:
            raise ValueError(f"weibull_shape must lie in [0.25, 2], got {self.weibull_shape}")
        if self.weibull_scale is None:
            self.weibull_scale = unit_second_moment_scale(self.weibull_shape)
        if self.weibull_scale <= 0:
            raise ValueError("weibull_scale must be positive")
        if self.target_power <= 0:
            raise ValueError("target_power must be positive")
        if self.target_delay < 0 or self.max_clutter_delay < 0:
            raise ValueError("delays must be >= 0")
        if self.tap_count < max(self.target_delay, self.max_clutter_delay) + 1:
            raise ValueError(
                f"tap_count {self.tap_count} cannot hold delays up to "
                f"{max(self.target_delay, self.max_clutter_delay)}"
            )
        if not 0.0 <= self.target_prior <= 1.0:
            raise ValueError("target_prior must lie in [0, 1]")


@dataclass
class ChannelRealization:
    """One draw of the tap vector plus the latent quantities that built it."""

    taps: np.ndarray
    target_present: int
    target_amp: complex
    clutter_amps: np.ndarray
    clutter_delays: np.ndarray


@dataclass
class ReceivedFrame:
    """Per-slot receiver inputs: [Re(y_slot); Im(y_slot)], length 4*L_b each."""

    slot_inputs: np.ndarray  # shape (L, 4*L_b)
    noise_variance: float = 0.0


def clutter_second_moment(cfg: ChannelConfig) -> float:
    """E[|clutter amplitude|^2] = scale^2 * Gamma(1 + 2/shape)."""
    return cfg.weibull_scale**2 * math.gamma(1.0 + 2.0 / cfg.weibull_shape)


def expected_channel_energy(cfg: ChannelConfig) -> float:
    """Mean squared tap norm, averaged over clutter, target amplitude and the
    target prior.  Used to calibrate the noise level for a requested SNR."""
    return cfg.num_clutter * clutter_second_moment(cfg) + cfg.target_prior * cfg.target_power


def noise_variance_from_snr(cfg: ChannelConfig) -> float:
    """Per-sample complex noise variance that realizes cfg.snr_db (unit pulse energy)."""
    return expected_channel_energy(cfg) / 10.0 ** (cfg.snr_db / 10.0)


def draw_channel(cfg: ChannelConfig, v: int, rng: np.random.Generator) -> ChannelRealization:
    """Draw one channel realization for target indicator v.

    Draw order is fixed (target amplitude, clutter magnitudes, phases, delays)
    so a given rng state always yields the same realization; the target
    amplitude is drawn even when v=0 to keep the stream aligned across
    hypotheses.
    """
    if v not in (0, 1):
        raise ValueError("target indicator must be 0 or 1")
    sigma = math.sqrt(cfg.target_power / 2.0)
    target_amp = complex(rng.normal(scale=sigma), rng.normal(scale=sigma))
    mags = cfg.weibull_scale * rng.weibull(cfg.weibull_shape, size=cfg.num_clutter)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=cfg.num_clutter)
    clutter_amps = mags * np.exp(1j * phases)
    clutter_delays = rng.integers(0, cfg.max_clutter_delay + 1, size=cfg.num_clutter)

    taps = np.zeros(cfg.tap_count, dtype=np.complex128)
    taps[cfg.target_delay] += v * target_amp
    np.add.at(taps, clutter_delays, clutter_amps)
    return ChannelRealization(
        taps=taps,
        target_present=int(v),
        target_amp=target_amp,
        clutter_amps=clutter_amps,
        clutter_delays=clutter_delays,
    )


def apply_channel(
    chips,
    realization: ChannelRealization,
    noise_var: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Causal tap convolution plus complex Gaussian noise.

    y_i = sum_m h[m] * s_{i-m} with s_i = 0 before the sequence starts; the
    output has the same length as the input, so tails past the last chip are
    dropped.  Noise variance is split equally between real and imaginary parts.
    """
    if noise_var < 0:
        raise ValueError("noise variance must be >= 0")
    s = chips.chips if isinstance(chips, ChipSequence) else np.asarray(chips, dtype=np.float64)
    y = np.convolve(s, realization.taps)[: s.size]
    scale = math.sqrt(noise_var / 2.0)
    noise = scale * (rng.standard_normal(s.size) + 1j * rng.standard_normal(s.size))
    return y + noise


def frame_received(samples, L_b: int, noise_variance: float = 0.0) -> ReceivedFrame:
    """Split chip-rate samples into slots of 2*L_b and stack [Re; Im] per slot."""
    y = np.asarray(samples, dtype=np.complex128).ravel()
    width = 2 * L_b
    if y.size % width != 0:
        raise ValueError(f"sample count {y.size} is not a multiple of 2*L_b={width}")
    per_slot = y.reshape(-1, width)
    slot_inputs = np.concatenate([per_slot.real, per_slot.imag], axis=1)
    return ReceivedFrame(slot_inputs=slot_inputs, noise_variance=noise_variance)
