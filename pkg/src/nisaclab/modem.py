"""Pulse-position modulation on the chip grid.

A frame carries L bits, one per slot of 2*L_b chips.  Bit 0 puts the unit
pulse on the first chip of the slot, bit 1 on chip L_b+1.  Everything here
works on the discrete chip-rate model; no continuous waveform is built, so
pulse energy is fixed at 1 per slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _as_bit_array(bits) -> np.ndarray:
    arr = np.asarray(bits.bits if isinstance(bits, BitFrame) else bits)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("bit sequence must be non-empty and one-dimensional")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    return arr.astype(np.uint8)


@dataclass(frozen=True, eq=False)
class BitFrame:
    """L slot bits plus the number of leading slots that carry information.

    A pure ISAC frame has data_slot_count == L.  An SSAC frame fixes every
    slot past data_slot_count to 1; those slots exist only to keep the radar
    illuminated and carry no data.
    """

    bits: np.ndarray
    data_slot_count: int

    def __post_init__(self):
        arr = _as_bit_array(self.bits)
        if not 0 <= self.data_slot_count <= arr.size:
            raise ValueError(
                f"data_slot_count {self.data_slot_count} outside [0, {arr.size}]"
            )
        if not (arr[self.data_slot_count:] == 1).all():
            raise ValueError("sensing slots of an SSAC frame must all be 1")
        object.__setattr__(self, "bits", arr)

    def __len__(self) -> int:
        return int(self.bits.size)

    @property
    def data_bits(self) -> np.ndarray:
        return self.bits[: self.data_slot_count]

    @classmethod
    def isac(cls, bits) -> "BitFrame":
        """Frame in which every slot carries data."""
        arr = _as_bit_array(bits)
        return cls(bits=arr, data_slot_count=arr.size)


@dataclass(frozen=True, eq=False)
class ChipSequence:
    """Chip-rate transmit sequence: one unit pulse per slot of 2*L_b chips."""

    chips: np.ndarray
    bandwidth_expansion: int

    def __post_init__(self):
        object.__setattr__(self, "chips", np.asarray(self.chips, dtype=np.float64))

    @property
    def slot_count(self) -> int:
        return self.chips.size // (2 * self.bandwidth_expansion)


def ppm_modulate(bits, L_b: int) -> ChipSequence:
    """Map a bit frame onto the chip grid.

    Slot l (0-based) gets its unit pulse at chip 2*l*L_b when the bit is 0
    and at chip 2*l*L_b + L_b when the bit is 1.
    """
    if L_b < 1:
        raise ValueError(f"bandwidth expansion factor must be >= 1, got {L_b}")
    arr = _as_bit_array(bits)
    chips = np.zeros(2 * L_b * arr.size)
    chips[2 * L_b * np.arange(arr.size) + L_b * arr.astype(np.int64)] = 1.0
    return ChipSequence(chips=chips, bandwidth_expansion=L_b)


def ppm_demodulate(chips: ChipSequence) -> np.ndarray:
    """Intra-slot argmax detector; exact inverse of ppm_modulate on a clean sequence."""
    L_b = chips.bandwidth_expansion
    per_slot = chips.chips.reshape(-1, 2 * L_b)
    return (per_slot.argmax(axis=1) >= L_b).astype(np.uint8)


def make_ssac_frame(data_bits, alpha: float, L: int) -> BitFrame:
    """Build an SSAC frame: ceil(alpha*L) data slots, then all-one sensing slots."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if L < 1:
        raise ValueError("frame must have at least one slot")
    n_data = math.ceil(alpha * L)
    data = np.asarray(data_bits, dtype=np.uint8).ravel()
    if data.size != n_data:
        raise ValueError(f"expected {n_data} data bits for alpha={alpha}, L={L}, got {data.size}")
    bits = np.ones(L, dtype=np.uint8)
    bits[:n_data] = data
    return BitFrame(bits=bits, data_slot_count=n_data)
