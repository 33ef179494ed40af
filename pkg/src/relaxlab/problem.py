from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import FlowConfig, Potential, default_dt
from .spaces import Discrete, Whole


@dataclass(frozen=True)
class ScatterProblem:
    """A full problem instance: dimension, jump rate, potential, velocity space, kernel.

    ``kernel`` is None for the relaxation kernel p(v, v') = nu_v(v); for
    discrete velocity spaces it may be a column-stochastic matrix with
    ``kernel[j, k]`` the probability of jumping to velocity j from velocity k.
    """

    d: int
    sigma: object
    potential: Potential
    space: object
    kernel: np.ndarray | None = None

    def __post_init__(self):
        for name, part in (("sigma", self.sigma), ("potential", self.potential),
                           ("velocity space", self.space)):
            if part.d != self.d:
                raise ConfigError(f"{name} dimension {part.d} != d = {self.d}")
        if not self.potential.is_zero and not isinstance(self.space, Whole):
            raise ConfigError("a nonzero potential requires the whole velocity space R^d")
        if self.kernel is not None:
            if not isinstance(self.space, Discrete):
                raise ConfigError("kernel matrices are supported on discrete velocity spaces only")
            K = np.asarray(self.kernel, dtype=float)
            n = len(self.space.weights)
            w = np.asarray(self.space.weights)
            if K.shape != (n, n) or np.any(K < 0) or not np.allclose(K.sum(axis=0), 1, atol=1e-12):
                raise ConfigError("kernel must be a nonnegative column-stochastic matrix")
            if not np.allclose(K @ w, w, atol=1e-12):
                raise ConfigError("velocity weights must be stationary for the kernel")
            object.__setattr__(self, "kernel", K)

    def flow_config(self, dt=None):
        return FlowConfig.for_potential(self.potential, dt)

    @property
    def default_flow_dt(self):
        return default_dt(self.potential)
