"""Noisy discrete-time Van der Pol benchmark and i.i.d. dataset sampling.

The continuous-time plant is

    x1' = x2
    x2' = (1 - x1^2) x2 - x1 - 2 + 2 u

discretized by one classical fourth-order Runge-Kutta step of length
``ts`` under a zero-order hold on u, plus additive Gaussian process noise
N(0, sigma_noise^2 I_2) on the next state.

Randomness is organized in named Philox streams derived from a single
64-bit seed, so the greedy candidate cloud, the training set, the
validation set, and the planner provably use independent draws:

    candidates=0, training=1, validation=2, planning=3

Each stream is further split into an inputs substream and a noise
substream.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .validation import as_vector

STREAMS = {"candidates": 0, "training": 1, "validation": 2, "planning": 3}

_SUB_INPUTS = 0
_SUB_NOISE = 1


def stream_rng(seed, stream, substream=0):
    """Counter-based generator for one (seed, stream, substream) triple."""
    if isinstance(stream, str):
        stream = STREAMS[stream]
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(substream)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class SimConfig:
    """Simulation setup: step length, noise level, sampling box, seed."""

    ts: float = 0.1
    sigma_noise: float = 0.02
    domain_lo: tuple = (-5.0, -5.0, -5.0)
    domain_hi: tuple = (5.0, 5.0, 5.0)
    seed: int = 0

    def __post_init__(self):
        if not (self.ts > 0):
            raise ValueError(f"ts must be positive, got {self.ts}")
        if self.sigma_noise < 0:
            raise ValueError(f"sigma_noise must be nonnegative, got {self.sigma_noise}")
        self.domain_lo = tuple(float(v) for v in self.domain_lo)
        self.domain_hi = tuple(float(v) for v in self.domain_hi)
        if len(self.domain_lo) != 3 or len(self.domain_hi) != 3:
            raise ValueError("domain bounds must have 3 components (x1, x2, u)")
        for lo, hi in zip(self.domain_lo, self.domain_hi):
            if not (lo < hi):
                raise ValueError(f"domain lower bound {lo} must be below upper bound {hi}")

    def to_dict(self):
        return {
            "ts": self.ts,
            "sigma_noise": self.sigma_noise,
            "domain_lo": list(self.domain_lo),
            "domain_hi": list(self.domain_hi),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            ts=data.get("ts", 0.1),
            sigma_noise=data.get("sigma_noise", 0.02),
            domain_lo=tuple(data.get("domain_lo", (-5.0, -5.0, -5.0))),
            domain_hi=tuple(data.get("domain_hi", (5.0, 5.0, 5.0))),
            seed=data.get("seed", 0),
        )


def vdp_rhs(x, u):
    """Van der Pol right-hand side; broadcasts over leading axes.

    x has shape (..., 2) and u shape (...) or scalar.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    x1 = x[..., 0]
    x2 = x[..., 1]
    return np.stack([x2, (1.0 - x1**2) * x2 - x1 - 2.0 + 2.0 * u], axis=-1)


def step(x, u, config, rng=None):
    """One RK4 step of the plant with zero-order-hold input, plus noise.

    Noise is drawn from ``rng`` only when it is given and
    ``config.sigma_noise > 0``; with ``rng=None`` the step is the exact
    noiseless map.  Broadcasts over leading axes of x and u.
    """
    x = np.asarray(x, dtype=float)
    h = config.ts
    k1 = vdp_rhs(x, u)
    k2 = vdp_rhs(x + 0.5 * h * k1, u)
    k3 = vdp_rhs(x + 0.5 * h * k2, u)
    k4 = vdp_rhs(x + h * k3, u)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if rng is not None and config.sigma_noise > 0:
        out = out + config.sigma_noise * rng.normal(size=out.shape)
    return out


@dataclass
class Dataset:
    """I.i.d. one-step samples (z_i, y_i) with generation provenance."""

    inputs: np.ndarray  # (N, 3): rows [x1, x2, u]
    outputs: np.ndarray  # (N, 2): next state
    seed: int
    stream: str
    config: SimConfig = field(repr=False)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ValueError("inputs and outputs disagree on the row count")
        if self.inputs.shape[1] != 3 or self.outputs.shape[1] != 2:
            raise ValueError("inputs must be (N, 3) and outputs (N, 2)")

    def __len__(self):
        return self.inputs.shape[0]

    def save(self, path):
        """Write data as CSV (header x1,x2,u,y1,y2) plus a metadata sidecar."""
        path = str(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x1", "x2", "u", "y1", "y2"])
            for z, y in zip(self.inputs, self.outputs):
                writer.writerow([repr(float(v)) for v in (*z, *y)])
        meta = {
            "seed": self.seed,
            "stream": self.stream,
            "config": self.config.to_dict(),
            "rows": len(self),
        }
        with open(_sidecar(path), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        path = str(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["x1", "x2", "u", "y1", "y2"]:
                raise ValueError(f"unexpected CSV header {header}")
            rows = np.array([[float(v) for v in row] for row in reader])
        with open(_sidecar(path)) as fh:
            meta = json.load(fh)
        return cls(
            inputs=rows[:, :3],
            outputs=rows[:, 3:],
            seed=meta["seed"],
            stream=meta["stream"],
            config=SimConfig.from_dict(meta["config"]),
        )


def _sidecar(path):
    return path[: -len(".csv")] + ".meta.json" if path.endswith(".csv") else path + ".meta.json"


def sample_inputs(N, config, rng):
    """N points uniform on the sampling box (x1, x2, u)."""
    lo = np.asarray(config.domain_lo)
    hi = np.asarray(config.domain_hi)
    return lo + (hi - lo) * rng.uniform(size=(int(N), 3))


def sample_dataset(N, config, stream="training", seed=None):
    """Draw an i.i.d. dataset of N one-step samples from the named stream.

    Inputs are uniform on the box; outputs apply one noisy step per row.
    Inputs and noise come from separate substreams of (seed, stream).
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if seed is None:
        seed = config.seed
    rng_in = stream_rng(seed, stream, _SUB_INPUTS)
    rng_noise = stream_rng(seed, stream, _SUB_NOISE)
    Z = sample_inputs(N, config, rng_in)
    Y = step(Z[:, :2], Z[:, 2], config, rng=rng_noise)
    return Dataset(inputs=Z, outputs=Y, seed=int(seed), stream=str(stream), config=config)


def rollout(x0, u_seq, config, rng=None):
    """Simulate the plant from x0 under the control sequence; returns (H+1, 2) states."""
    x0 = as_vector(x0, "x0")
    states = [x0]
    x = x0
    for u in np.asarray(u_seq, dtype=float).ravel():
        x = step(x, u, config, rng=rng)
        states.append(x)
    return np.array(states)
