"""Sampling-based shooting planner steering the tube model around an obstacle.

A cross-entropy-method search over control sequences minimizes terminal
distance to the goal plus a path-length regularizer, with a hard penalty
whenever a tube rectangle (propagated through the model corners) touches
the obstacle.  ``rollout_replanned`` wraps the search in a
shrinking-horizon receding loop against the true noisy plant, replanning
after every applied control; ``rollout_replanned_batch`` runs many such
rollouts in lockstep so the kernel evaluations batch across rollouts and
population.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .pipeline import propagate_corners
from .simulator import rollout as _true_rollout
from .simulator import step as _sim_step
from .validation import as_vector


@dataclass
class PlanConfig:
    """Planner setup: boundary conditions, obstacle, and CEM hyperparameters."""

    x0: tuple = (4.0, 0.0)
    xf: tuple = (-2.0, 0.0)
    horizon: int = 30
    obstacle_center: tuple = (0.0, -4.0)
    obstacle_radius: float = 1.5
    obstacle_shape: str = "disk"  # "disk" or "star"
    star_circumradius: float = 2.0
    star_inradius: float = 0.9
    u_bounds: tuple = (-5.0, 5.0)
    population: int = 160
    elite_frac: float = 0.125
    iters: int = 30
    n_rollouts: int = 20
    init_std: float = 2.5
    min_std: float = 0.05
    noise_rho: float = 0.7  # AR(1) correlation of exploration noise over time
    mean_momentum: float = 0.25
    path_weight: float = 0.02
    collision_penalty: float = 1e4
    collision_horizon: int = 6
    x0_perturb_std: float = 0.05
    replan_population: int = 20
    replan_iters: int = 4
    replan_std: float = 0.4
    rollout_steps: int = 40  # closed-loop length; plans preview at most `horizon`

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.population < 10:
            raise ValueError(f"population must be >= 10, got {self.population}")
        if not (self.obstacle_radius > 0):
            raise ValueError(f"obstacle_radius must be positive, got {self.obstacle_radius}")
        if self.obstacle_shape not in ("disk", "star"):
            raise ValueError(f"obstacle_shape must be 'disk' or 'star', got {self.obstacle_shape!r}")
        if not (0 < self.elite_frac <= 1):
            raise ValueError(f"elite_frac must lie in (0, 1], got {self.elite_frac}")

    def to_dict(self):
        out = {}
        for key, value in self.__dict__.items():
            out[key] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data):
        kwargs = dict(data)
        for key in ("x0", "xf", "obstacle_center", "u_bounds"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


# -- obstacle geometry ----------------------------------------------------


def star_polygon(center, circumradius=2.0, inradius=0.9, points=5):
    """Vertices of a regular star polygon (2 * points vertices, CCW)."""
    center = np.asarray(center, dtype=float)
    angles = np.pi / 2 + np.arange(2 * points) * np.pi / points
    radii = np.where(np.arange(2 * points) % 2 == 0, circumradius, inradius)
    return center + np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])


def rect_disk_intersects(lo, hi, center, radius):
    """Rectangle [lo, hi] intersects the disk iff the rectangle point
    closest to the center lies within the radius."""
    closest = np.clip(np.asarray(center, dtype=float), lo, hi)
    return float(np.sum((closest - center) ** 2)) <= radius * radius


def rects_disk_intersect(lo, hi, center, radius):
    """Vectorized rect-disk test over leading axes of lo and hi."""
    closest = np.clip(center, lo, hi)
    return np.sum((closest - center) ** 2, axis=-1) <= radius * radius


def _rect_triangle_intersects(lo, hi, tri):
    """Separating-axis test between an axis-aligned rectangle and a triangle."""
    for axis in range(2):
        if tri[:, axis].max() < lo[axis] or tri[:, axis].min() > hi[axis]:
            return False
    corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    for i in range(3):
        edge = tri[(i + 1) % 3] - tri[i]
        normal = np.array([-edge[1], edge[0]])
        pr = corners @ normal
        pt = tri @ normal
        if pr.max() < pt.min() or pr.min() > pt.max():
            return False
    return True


def rect_star_intersects(lo, hi, center, circumradius=2.0, inradius=0.9, points=5):
    """Rectangle versus star polygon; the star is star-shaped about its
    center, so its triangle fan covers it exactly."""
    verts = star_polygon(center, circumradius, inradius, points)
    center = np.asarray(center, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = len(verts)
    for i in range(n):
        tri = np.array([center, verts[i], verts[(i + 1) % n]])
        if _rect_triangle_intersects(lo, hi, tri):
            return True
    return False


def collision_mask(lo, hi, config):
    """Boolean mask over leading axes of rectangles hitting the obstacle."""
    center = np.asarray(config.obstacle_center, dtype=float)
    if config.obstacle_shape == "disk":
        return rects_disk_intersect(lo, hi, center, config.obstacle_radius)
    flat_lo = lo.reshape(-1, 2)
    flat_hi = hi.reshape(-1, 2)
    out = np.fromiter(
        (
            rect_star_intersects(
                l, h, center, config.star_circumradius, config.star_inradius
            )
            for l, h in zip(flat_lo, flat_hi)
        ),
        dtype=bool,
        count=len(flat_lo),
    )
    return out.reshape(lo.shape[:-1])


# -- cross-entropy planning -------------------------------------------------


@dataclass
class PlanResult:
    u_seq: np.ndarray  # (H,)
    rects: np.ndarray  # (H + 1, 2, 2) tube rectangles of the best plan
    nominal: np.ndarray  # (H + 1, 2) nominal model rollout
    cost: float
    feasible: bool  # no tube rectangle touches the obstacle
    best_costs: np.ndarray = field(repr=False, default=None)  # per CEM iteration


def _evaluate(model, config, x0s, U):
    """Cost of control candidates U (R, P, H) from starts x0s (R, 2).

    Batches all kernel evaluations over rollouts, population, and the
    four tube corners plus the nominal point.  Tube rectangles are only
    propagated over the near-term ``collision_horizon`` (where they are
    tight enough to be informative; the recursion inflates them beyond
    that); the nominal rollout carries the cost over the rest of the
    horizon.  Returns (cost, collisions) of shape (R, P).
    """
    R, P, H = U.shape
    gam = model.gammas
    xf = np.asarray(config.xf, dtype=float)
    window = min(H, config.collision_horizon)
    lo = np.broadcast_to(x0s[:, None, :], (R, P, 2)).copy()
    hi = lo.copy()
    nominal = lo.copy()
    collisions = np.zeros((R, P), dtype=int)
    path = np.zeros((R, P))
    for k in range(H):
        track_tube = k < window
        m = 5 if track_tube else 1
        pts = np.empty((R, P, m, 2))
        if track_tube:
            pts[:, :, 0, 0] = lo[..., 0]
            pts[:, :, 0, 1] = lo[..., 1]
            pts[:, :, 1, 0] = lo[..., 0]
            pts[:, :, 1, 1] = hi[..., 1]
            pts[:, :, 2, 0] = hi[..., 0]
            pts[:, :, 2, 1] = lo[..., 1]
            pts[:, :, 3, 0] = hi[..., 0]
            pts[:, :, 3, 1] = hi[..., 1]
        pts[:, :, m - 1, :] = nominal
        u = np.broadcast_to(U[:, :, k, None], (R, P, m))
        inputs = np.concatenate([pts.reshape(-1, 2), u.reshape(-1, 1)], axis=1)
        preds = model.predict(inputs).reshape(R, P, m, 2)
        new_nominal = preds[:, :, m - 1, :]
        if track_tube:
            rect = preds[:, :, :4, :]
            lo = rect.min(axis=2) - gam
            hi = rect.max(axis=2) + gam
        else:
            # beyond the recursion window: the certified one-step tube
            # around the nominal path keeps the router obstacle-aware
            lo = new_nominal - gam
            hi = new_nominal + gam
        collisions += collision_mask(lo, hi, config).astype(int)
        path += np.sum((new_nominal - nominal) ** 2, axis=-1)
        nominal = new_nominal
    terminal = np.sum((nominal - xf) ** 2, axis=-1)
    cost = terminal + config.path_weight * path + config.collision_penalty * collisions
    return cost, collisions


def _cem_search(model, config, x0s, rng, horizon, iters, population, init_mean=None):
    """Batched CEM over R independent starts; returns (best_u, best_cost, history)."""
    R = x0s.shape[0]
    H = int(horizon)
    lo_u, hi_u = config.u_bounds
    warm = init_mean is not None
    mean = (
        np.zeros((R, H)) if not warm else np.array(init_mean, dtype=float).reshape(R, H)
    )
    std = np.full((R, H), config.replan_std if warm else config.init_std)
    n_elite = max(2, int(round(config.elite_frac * population)))
    rho = config.noise_rho
    smooth = math.sqrt(max(1.0 - rho * rho, 0.0))
    best_u = None
    best_cost = np.full(R, np.inf)
    history = []
    for it in range(int(iters)):
        # AR(1)-correlated exploration noise favors smooth control profiles
        w = rng.standard_normal((R, population, H))
        noise = np.empty_like(w)
        noise[:, :, 0] = w[:, :, 0]
        for t in range(1, H):
            noise[:, :, t] = rho * noise[:, :, t - 1] + smooth * w[:, :, t]
        U = np.clip(mean[:, None, :] + std[:, None, :] * noise, lo_u, hi_u)
        # slot 0 carries the incumbent: the warm-start mean on the first
        # iteration, the best-ever sequence afterwards (monotone best cost)
        U[:, 0, :] = np.clip(mean, lo_u, hi_u) if best_u is None else best_u
        if it == 0 and not warm:
            # structured seeds: constant control levels across the range
            levels = np.linspace(lo_u, hi_u, min(9, population - 1))
            U[:, 1 : 1 + levels.size, :] = levels[None, :, None]
        cost, _ = _evaluate(model, config, x0s, U)
        order = np.argsort(cost, axis=1, kind="stable")
        top = order[:, 0]
        rows = np.arange(R)
        improved = cost[rows, top] < best_cost
        if best_u is None:
            best_u = U[rows, top].copy()
            best_cost = cost[rows, top].copy()
        else:
            best_u[improved] = U[rows[improved], top[improved]]
            best_cost = np.minimum(best_cost, cost[rows, top])
        history.append(best_cost.copy())
        elite_idx = order[:, :n_elite]
        elites = U[rows[:, None], elite_idx]  # (R, n_elite, H)
        m = config.mean_momentum
        mean = (1.0 - m) * elites.mean(axis=1) + m * mean
        std = np.maximum((1.0 - m) * elites.std(axis=1) + m * std, config.min_std)
    return best_u, best_cost, np.array(history)


def safety_tube(model, config, x0, u_seq):
    """The tube the planner enforces against the obstacle.

    Corner-recursed rectangles over the near-term collision window
    (where the recursion is still tight), then the certified one-step
    tube (nominal prediction +/- gamma) over the rest of the horizon.
    Returns rectangles of shape (H + 1, 2, 2).
    """
    u_seq = np.asarray(u_seq, dtype=float).ravel()
    H = u_seq.size
    window = min(H, config.collision_horizon)
    rects = np.empty((H + 1, 2, 2))
    rects[: window + 1] = propagate_corners(model, x0, u_seq[:window])
    if H > window:
        nominal = _nominal_rollout(model, x0, u_seq)
        rects[window + 1 :, 0, :] = nominal[window + 1 :] - model.gammas
        rects[window + 1 :, 1, :] = nominal[window + 1 :] + model.gammas
    return rects


def plan(model, config, rng, x0=None, horizon=None, iters=None, init_mean=None):
    """Cross-entropy search for a control sequence from x0 to the goal.

    The best-ever sequence is re-injected into every population, so the
    best cost is non-increasing over iterations.  ``feasible`` is False
    when the returned safety tube touches the obstacle; ``rects`` holds
    that tube (see :func:`safety_tube`).
    """
    x0 = np.asarray(config.x0 if x0 is None else x0, dtype=float)
    horizon = config.horizon if horizon is None else int(horizon)
    iters = config.iters if iters is None else int(iters)
    init = None if init_mean is None else np.asarray(init_mean, dtype=float)[None, :]
    best_u, best_cost, history = _cem_search(
        model, config, x0[None, :], rng, horizon, iters, config.population, init
    )
    u_seq = best_u[0]
    rects = safety_tube(model, config, x0, u_seq)
    nominal = _nominal_rollout(model, x0, u_seq)
    collided = bool(np.any(collision_mask(rects[:, 0, :], rects[:, 1, :], config)))
    return PlanResult(
        u_seq=u_seq,
        rects=rects,
        nominal=nominal,
        cost=float(best_cost[0]),
        feasible=not collided,
        best_costs=history[:, 0],
    )


def _nominal_rollout(model, x0, u_seq):
    states = [np.asarray(x0, dtype=float)]
    for u in u_seq:
        z = np.concatenate([states[-1], [u]])
        states.append(model.predict(z.reshape(1, -1))[0])
    return np.array(states)


def rollout_true(sim_config, x0, u_seq, rng=None):
    """Open-loop rollout of the true noisy plant; returns (H + 1, 2) states."""
    x0 = as_vector(x0, "x0")
    return _true_rollout(x0, u_seq, sim_config, rng=rng)


def rollout_replanned(model, sim_config, config, rng, x0=None, n_steps=None):
    """Receding-horizon rollout against the true plant.

    Runs ``n_steps`` (default ``config.rollout_steps``) closed-loop
    steps; each step plans at most ``config.horizon`` ahead (shrinking
    near the end), applies the first control to the noisy plant, and
    replans warm-started.  Returns a dict with the closed-loop states,
    applied controls, per-step plan feasibility, the number of executed
    one-step tubes that touched the obstacle, and the terminal error.
    """
    out = rollout_replanned_batch(
        model, sim_config, config, rng, x0s=None if x0 is None else np.atleast_2d(x0), n_steps=n_steps
    )
    return {
        "states": out["states"][0],
        "controls": out["controls"][0],
        "collisions": int(out["collisions"][0]),
        "feasible_steps": [bool(v) for v in out["feasible_steps"][:, 0]],
        "terminal_error": float(out["terminal_errors"][0]),
    }


def rollout_replanned_batch(
    model, sim_config, config, rng, x0s=None, n_steps=None, init_mean=None
):
    """Receding-horizon rollouts for several starts in lockstep.

    With ``x0s=None``, draws ``config.n_rollouts`` starts perturbed
    around ``config.x0`` by N(0, x0_perturb_std^2 I).  All rollouts share
    the CEM iterations so kernel evaluations batch across rollouts.
    ``init_mean`` warm-starts the first step (typically the nominal plan
    from the unperturbed start), in which case every step runs on the
    cheaper replanning budget.

    ``collisions`` counts executed one-step tubes (the rectangles the
    per-step guarantee actually certifies) that touched the obstacle;
    ``feasible_steps`` additionally checks each step's plan over the
    collision window.
    """
    x0_nom = np.asarray(config.x0, dtype=float)
    if x0s is None:
        x0s = x0_nom[None, :] + config.x0_perturb_std * rng.standard_normal(
            (config.n_rollouts, 2)
        )
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    R = x0s.shape[0]
    n_steps = config.rollout_steps if n_steps is None else int(n_steps)
    states = np.empty((n_steps + 1, R, 2))
    states[0] = x0s
    controls = np.empty((n_steps, R))
    collisions = np.zeros(R, dtype=int)
    feasible_steps = np.empty((n_steps, R), dtype=bool)

    def fit_horizon(seq, horizon):
        """Pad (with the last control) or truncate warm sequences."""
        if seq.shape[1] >= horizon:
            return seq[:, :horizon]
        pad = np.repeat(seq[:, -1:], horizon - seq.shape[1], axis=1)
        return np.concatenate([seq, pad], axis=1)

    warm = None
    if init_mean is not None:
        warm = np.tile(np.asarray(init_mean, dtype=float), (R, 1))
    x = x0s.copy()
    for step_idx in range(n_steps):
        horizon = min(n_steps - step_idx, config.horizon)
        cold = step_idx == 0 and warm is None
        iters = config.iters if cold else config.replan_iters
        population = config.population if cold else config.replan_population
        if warm is not None:
            warm = fit_horizon(warm, horizon)
        best_u, _, _ = _cem_search(
            model, config, x, rng, horizon, iters, population, init_mean=warm
        )
        for r in range(R):
            rects = safety_tube(model, config, x[r], best_u[r])
            hits = collision_mask(rects[:, 0, :], rects[:, 1, :], config)
            feasible_steps[step_idx, r] = not np.any(hits)
            # executed one-step tube: prediction from the measured state +/- gamma
            collisions[r] += int(hits[1])
        u_now = best_u[:, 0]
        controls[step_idx] = u_now
        x = _sim_step(x, u_now, sim_config, rng=rng)
        states[step_idx + 1] = x
        warm = best_u[:, 1:] if horizon > 1 else best_u
    terminal_errors = np.linalg.norm(states[-1] - np.asarray(config.xf), axis=1)
    return {
        "states": np.swapaxes(states, 0, 1),  # (R, n_steps + 1, 2)
        "controls": controls.T,
        "collisions": collisions,
        "feasible_steps": feasible_steps,
        "terminal_errors": terminal_errors,
    }
