"""Hybrid particle swarm optimization of shape model parameters.

Every particle is a t + 7 vector (shape weights, translation, rotation,
scale). The velocity update blends the attraction of the swarm-wide best
and of the best particle in a ring neighbourhood:

    V <- w V + c1 r1 (P_i - X) + c2 r2 [alpha (P_g - X) + (1 - alpha) (P_l - X)]
    X <- X + V

The fitness of a particle is the Dice loss between the voxelized model
instance and the target segmentation.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, asdict
from typing import Callable, Optional

import numpy as np

from shapefit.exceptions import EmptyMaskError, GridMismatchError, ShapeFitError
from shapefit.mesh import enclosed_volume
from shapefit.metrics import dsc
from shapefit.shape_model import FitParams, ShapeModel, instantiate
from shapefit.volume import BinaryVolume, GridSpec, voxelize

logging.basicConfig(format='%(levelname)s - %(message)s', level=logging.INFO)
logger = logging.getLogger(__name__)

RANDOM_MODES = ('vector', 'scalar')


def _default_pose_bounds():
    return {"translation": 15.0, "rotation": 0.35, "scale": [0.8, 1.25]}


@dataclass(frozen=True)
class SwarmConfig:
    swarm_size: int = 40
    max_iterations: int = 200
    w: float = 0.7298
    c1: float = 1.49618
    c2: float = 1.49618
    alpha: float = 0.5
    neighborhood_radius: int = 2
    bound_k: float = 3.0
    pose_bounds: dict = field(default_factory=_default_pose_bounds)
    velocity_clamp_fraction: float = 0.2
    seed: int = 0
    stall_iterations: int = 30
    stall_tolerance: float = 1e-4
    random_mode: str = 'vector'
    workers: int = 1
    log_every: int = 10
    seed_particle: bool = True

    def __post_init__(self):
        checks = {
            'swarm_size': self.swarm_size >= 2,
            'max_iterations': self.max_iterations >= 0,
            'w': 0.0 <= self.w <= 1.0,
            'c1': self.c1 >= 0,
            'c2': self.c2 >= 0,
            'alpha': 0.0 <= self.alpha <= 1.0,
            'neighborhood_radius': self.neighborhood_radius >= 1,
            'bound_k': self.bound_k > 0,
            'velocity_clamp_fraction': self.velocity_clamp_fraction > 0,
            'seed': 0 <= self.seed < 2 ** 64,
            'stall_iterations': self.stall_iterations >= 0,
            'stall_tolerance': self.stall_tolerance >= 0,
            'random_mode': self.random_mode in RANDOM_MODES,
            'workers': self.workers >= 1,
            'log_every': self.log_every >= 1,
        }
        for key, ok in checks.items():
            if not ok:
                raise ValueError(f"invalid swarm config value {key}={getattr(self, key)!r}")
        bounds = dict(_default_pose_bounds(), **self.pose_bounds)
        unknown = set(bounds) - set(_default_pose_bounds())
        if unknown:
            raise ValueError(f"unknown pose_bounds keys {sorted(unknown)}")
        low, high = (float(s) for s in bounds['scale'])
        if bounds['translation'] < 0 or bounds['rotation'] < 0 or not 0 < low <= high:
            raise ValueError(f"invalid swarm config value pose_bounds={bounds}")
        bounds['scale'] = [low, high]
        object.__setattr__(self, 'pose_bounds', bounds)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> 'SwarmConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown swarm config keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_fitness: float


@dataclass(eq=False)
class SwarmState:
    """
    positions, velocities, personal bests: (S, D) arrays, one row per particle.
    lbest_positions holds the best personal best inside each particle's ring neighbourhood.
    rng is consumed by pso_step.
    """
    positions: np.ndarray
    velocities: np.ndarray
    fitness: np.ndarray
    pbest_positions: np.ndarray
    pbest_fitness: np.ndarray
    gbest_position: np.ndarray
    gbest_fitness: float
    lbest_positions: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rng: np.random.Generator
    iteration: int = 0

    @property
    def particles(self):
        return [Particle(self.positions[i], self.velocities[i], self.pbest_positions[i], float(self.pbest_fitness[i]))
                for i in range(len(self.positions))]


@dataclass(frozen=True, eq=False)
class SwarmResult:
    position: np.ndarray
    fitness: float
    fitness_trace: list
    iterations_run: int


@dataclass(frozen=True, eq=False)
class FitResult:
    params: FitParams
    fitness: float
    dsc: float
    iterations_run: int
    fitness_trace: list
    seed: int

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "fitness": self.fitness,
            "dsc": self.dsc,
            "iterations_run": self.iterations_run,
            "fitness_trace": list(self.fitness_trace),
            "seed": self.seed,
        }


def _evaluate(fitness: Callable, positions: np.ndarray, pool: Optional[ThreadPoolExecutor]) -> np.ndarray:
    if pool is None:
        values = [fitness(x) for x in positions]
    else:
        values = list(pool.map(fitness, positions))
    return np.asarray(values, dtype=np.float64)


def _ring_best(pbest_fitness: np.ndarray, radius: int) -> np.ndarray:
    """index of the best personal best inside each particle's ring neighbourhood"""
    size = len(pbest_fitness)
    if 2 * radius + 1 >= size:
        return np.full(size, int(np.argmin(pbest_fitness)))
    windows = (np.arange(size)[:, None] + np.arange(-radius, radius + 1)[None, :]) % size
    return windows[np.arange(size), np.argmin(pbest_fitness[windows], axis=1)]


def _with_bests(state: SwarmState, radius: int) -> SwarmState:
    best = int(np.argmin(state.pbest_fitness))
    state.gbest_position = state.pbest_positions[best].copy()
    state.gbest_fitness = float(state.pbest_fitness[best])
    state.lbest_positions = state.pbest_positions[_ring_best(state.pbest_fitness, radius)].copy()
    return state


def initialize_swarm(fitness: Callable, lower, upper, config: SwarmConfig, initial=None,
                     pool: Optional[ThreadPoolExecutor] = None) -> SwarmState:
    """
    positions uniform inside the bounds, velocities uniform in +- the velocity clamp.
    @param initial: optional position given to particle 0
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError("lower bounds must not exceed upper bounds")
    rng = np.random.default_rng(config.seed)
    shape = (config.swarm_size, len(lower))
    vmax = config.velocity_clamp_fraction * (upper - lower)
    positions = rng.uniform(lower, upper, size=shape)
    velocities = rng.uniform(-vmax, vmax, size=shape)
    if initial is not None:
        positions[0] = np.clip(initial, lower, upper)
    values = _evaluate(fitness, positions, pool)
    state = SwarmState(
        positions=positions,
        velocities=velocities,
        fitness=values,
        pbest_positions=positions.copy(),
        pbest_fitness=values.copy(),
        gbest_position=positions[0].copy(),
        gbest_fitness=float(values[0]),
        lbest_positions=positions.copy(),
        lower=lower,
        upper=upper,
        rng=rng,
    )
    return _with_bests(state, config.neighborhood_radius)


def pso_step(swarm: SwarmState, config: SwarmConfig, fitness: Callable,
             pool: Optional[ThreadPoolExecutor] = None) -> SwarmState:
    """
    move every particle once and update personal, global and local bests synchronously.
    Random numbers are drawn before any fitness is evaluated, in particle order.
    """
    size, dims = swarm.positions.shape
    draw_shape = (size, dims) if config.random_mode == 'vector' else (size, 1)
    r1 = swarm.rng.random(draw_shape)
    r2 = swarm.rng.random(draw_shape)

    x = swarm.positions
    social = config.alpha * (swarm.gbest_position - x) + (1.0 - config.alpha) * (swarm.lbest_positions - x)
    velocities = config.w * swarm.velocities + config.c1 * r1 * (swarm.pbest_positions - x) + config.c2 * r2 * social
    vmax = config.velocity_clamp_fraction * (swarm.upper - swarm.lower)
    velocities = np.clip(velocities, -vmax, vmax)
    positions = x + velocities
    out_of_bounds = (positions < swarm.lower) | (positions > swarm.upper)
    positions = np.clip(positions, swarm.lower, swarm.upper)
    velocities[out_of_bounds] = 0.0

    values = _evaluate(fitness, positions, pool)
    improved = values < swarm.pbest_fitness
    pbest_positions = swarm.pbest_positions.copy()
    pbest_fitness = swarm.pbest_fitness.copy()
    pbest_positions[improved] = positions[improved]
    pbest_fitness[improved] = values[improved]

    state = SwarmState(
        positions=positions,
        velocities=velocities,
        fitness=values,
        pbest_positions=pbest_positions,
        pbest_fitness=pbest_fitness,
        gbest_position=swarm.gbest_position,
        gbest_fitness=swarm.gbest_fitness,
        lbest_positions=swarm.lbest_positions,
        lower=swarm.lower,
        upper=swarm.upper,
        rng=swarm.rng,
        iteration=swarm.iteration + 1,
    )
    return _with_bests(state, config.neighborhood_radius)


def minimize(fitness: Callable, lower, upper, config: SwarmConfig, initial=None, label: str = "swarm") -> SwarmResult:
    """
    run the hybrid swarm until max_iterations, or until the global best improved by less than
    stall_tolerance for stall_iterations consecutive iterations (stall_iterations = 0 disables that)
    """
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        state = initialize_swarm(fitness, lower, upper, config, initial=initial, pool=pool)
        trace = [state.gbest_fitness]
        stalled = 0
        for _ in range(config.max_iterations):
            state = pso_step(state, config, fitness, pool=pool)
            trace.append(state.gbest_fitness)
            stalled = stalled + 1 if trace[-2] - trace[-1] < config.stall_tolerance else 0
            if state.iteration % config.log_every == 0:
                logger.info(f"{label} iteration {state.iteration}: best fitness {state.gbest_fitness:.6f}")
            if config.stall_iterations and stalled >= config.stall_iterations:
                logger.info(f"{label} stalled for {stalled} iterations, stopping at iteration {state.iteration}")
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return SwarmResult(state.gbest_position.copy(), state.gbest_fitness, trace, state.iteration)


def optimize_test_function(f: Callable, dims: int, bounds, config: SwarmConfig) -> np.ndarray:
    """
    hybrid swarm on an arbitrary objective over a box
    @param bounds: (low, high), scalars or length-dims sequences
    @return: best position found
    """
    low, high = bounds
    lower = np.broadcast_to(np.asarray(low, dtype=np.float64), (dims,)).copy()
    upper = np.broadcast_to(np.asarray(high, dtype=np.float64), (dims,)).copy()
    return minimize(f, lower, upper, config, label="benchmark").position


def dice_loss(params: FitParams, model: ShapeModel, target: BinaryVolume, grid: Optional[GridSpec] = None) -> float:
    """
    1 - DSC between the voxelized model instance and the target. A candidate that cannot be
    voxelized scores the worst loss 1 and so does an empty candidate against an empty target.
    """
    grid = target.grid if grid is None else grid
    if grid != target.grid:
        raise GridMismatchError(f"fitness grid {grid} differs from the target grid {target.grid}")
    try:
        candidate = voxelize(instantiate(model, params), grid)
    except ShapeFitError as e:
        logger.warning(f"particle could not be voxelized, scoring it 1.0: {e}")
        return 1.0
    if candidate.count + target.count == 0:
        return 1.0
    return 1.0 - dsc(candidate, target)


def parameter_bounds(model: ShapeModel, target: BinaryVolume, config: SwarmConfig):
    """
    lower and upper bounds of the t + 7 search space and the centroid-aligned start position:
    b = 0, the mean centroid moved onto the mask centroid and the scale matching the mask volume
    """
    spread = config.bound_k * np.sqrt(model.eigenvalues)
    pose_bounds = config.pose_bounds
    scale_low, scale_high = pose_bounds['scale']

    translation = target.centroid() - model.centroid
    mean_volume = abs(enclosed_volume(model.mean_mesh()))
    target_volume = target.count * target.grid.voxel_volume
    scale = np.cbrt(target_volume / mean_volume) if mean_volume > 0 else 1.0
    scale = float(np.clip(scale, scale_low, scale_high))

    lower = np.concatenate([-spread, translation - pose_bounds['translation'],
                            np.full(3, -pose_bounds['rotation']), [scale_low]])
    upper = np.concatenate([spread, translation + pose_bounds['translation'],
                            np.full(3, pose_bounds['rotation']), [scale_high]])
    start = np.concatenate([np.zeros(model.t), translation, np.zeros(3), [scale]])
    return lower, upper, start


def fit(model: ShapeModel, target: BinaryVolume, config: SwarmConfig) -> FitResult:
    """search the shape weights and pose whose voxelized surface best overlaps the target mask"""
    if not target.count:
        raise EmptyMaskError("cannot fit a shape model to an empty target mask")
    lower, upper, start = parameter_bounds(model, target, config)
    logger.info(f"fitting {model.t} shape modes + 7 pose parameters with {config.swarm_size} particles, "
                f"up to {config.max_iterations} iterations, seed {config.seed}")

    def fitness(x):
        return dice_loss(FitParams.from_vector(x, model.t), model, target)

    result = minimize(fitness, lower, upper, config, initial=start if config.seed_particle else None, label="fit")
    params = FitParams.from_vector(result.position, model.t)
    logger.info(f"fit finished after {result.iterations_run} iterations with DSC {1.0 - result.fitness:.4f}")
    return FitResult(params=params, fitness=result.fitness, dsc=1.0 - result.fitness,
                     iterations_run=result.iterations_run, fitness_trace=result.fitness_trace, seed=config.seed)


def sphere(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x ** 2))


def rosenbrock(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


benchmark_functions = {
    "sphere": sphere,
    "rosenbrock": rosenbrock,
}
