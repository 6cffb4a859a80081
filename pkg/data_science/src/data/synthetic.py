"""
Synthetic multichannel activity recordings.

Every class c oscillates at its own frequency f_c; channel j of class c carries

    x_j(t) = g_{s,j} * a_{c,j} * sin(2*pi*f_c*t + phi_{c,j}) + noise

so the channels of a window share temporal structure and are coupled through
class-specific amplitudes and phases. g_{s,j} is a per-subject gain around 1.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from data_science.src.data.recordings import RawRecording, DEFAULT_SAMPLE_RATE_HZ

BASE_FREQUENCY_HZ = 1.0
FREQUENCY_STEP_HZ = 0.75


@dataclass(frozen=True)
class SyntheticConfig:
    num_subjects: int = 6
    classes: int = 4
    length: int = 600
    channels: int = 6
    seed: int = 0
    noise_std: float = 0.1
    amplitude_jitter: float = 0.1
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ


def class_signal_parameters(c: int, channels: int) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Closed-form signal parameters of class c.

    Returns:
        Tuple[float, np.ndarray, np.ndarray]: (frequency in Hz, per-channel amplitudes,
                                              per-channel phases)
    """
    j = np.arange(channels)
    frequency = BASE_FREQUENCY_HZ + FREQUENCY_STEP_HZ * c
    amplitudes = 1.0 + 0.5 * np.cos(2.0 * np.pi * (j + c) / channels)
    phases = np.pi * j * (c + 1) / channels
    return frequency, amplitudes, phases


def synth_generate(num_subjects: int, classes: int, length: int, channels: int, seed: int,
                   noise_std: float = 0.1, amplitude_jitter: float = 0.1,
                   sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> List[RawRecording]:
    """
    Generate one recording per (subject, class), subjects outermost.

    Args:
        num_subjects (int): Number of subjects, ids "1".."num_subjects"
        classes (int): Class count A (>= 2)
        length (int): Samples per recording
        channels (int): Channel count K (>= 2)
        seed (int): Generator seed; output is bit-identical for equal arguments
        noise_std (float): Std of additive Gaussian noise
        amplitude_jitter (float): Std of the per-subject channel gain around 1
        sample_rate_hz (float): Sample rate

    Returns:
        List[RawRecording]: num_subjects * classes recordings
    """
    if classes < 2 or channels < 2:
        raise ValueError(f"Need at least 2 classes and 2 channels, got A={classes}, K={channels}")
    if num_subjects < 1 or length < 1:
        raise ValueError("num_subjects and length must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(length)[:, None] / sample_rate_hz
    recordings = []
    for s in range(1, num_subjects + 1):
        gains = 1.0 + amplitude_jitter * rng.standard_normal(channels)
        for c in range(classes):
            frequency, amplitudes, phases = class_signal_parameters(c, channels)
            clean = gains * amplitudes * np.sin(2.0 * np.pi * frequency * t + phases)
            noise = noise_std * rng.standard_normal((length, channels))
            recordings.append(RawRecording(subject_id=str(s), activity_label=c, samples=clean + noise,
                                           sample_rate_hz=sample_rate_hz))
    return recordings


def generate_from_config(cfg: SyntheticConfig) -> List[RawRecording]:
    return synth_generate(cfg.num_subjects, cfg.classes, cfg.length, cfg.channels, cfg.seed,
                          noise_std=cfg.noise_std, amplitude_jitter=cfg.amplitude_jitter,
                          sample_rate_hz=cfg.sample_rate_hz)
