from typing import Tuple, Union

import numpy as np


class RunningMoments:
    """
    One-pass mean / variance (Welford) over arrays of a fixed shape.

    Samples must be added in a fixed order for bit-identical results.
    """

    def __init__(self, shape: Union[int, Tuple[int, ...]] = ()):
        self.count = 0
        self.mean = np.zeros(shape)
        self._m2 = np.zeros(shape)

    def add(self, sample) -> None:
        sample = np.asarray(sample, dtype=float)
        self.count += 1
        delta = sample - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + delta * (sample - self.mean)

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.maximum(self._m2, 0.0) / (self.count - 1)

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.variance / self.count)
