"""Four-phase simulated-annealing MCMC over parse graphs.

Phase 1 optimizes geometry with physics and likelihood only, Phase 2
matches humans to the objects they interact with, Phase 3 anneals the
full energy and Phase 4 adds objects implied by unmatched interactions.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.errors import InferenceAbort, InvalidParameterError, SceneMCError
from ..energy.terms import EnergyBreakdown, EnergyModel, EnergyWeights
from ..hoi.prior import (
    DEFAULT_TOPDOWN_CLASS,
    HoiPriorSet,
    interaction_nll,
    match_interactions,
    sample_object_given_pose,
    unmatched_interactions,
)
from ..scene.model import LAYOUT_ID, Cuboid, Observations, ParseGraph
from .init import CONTAINER_CLASSES, DEFAULT_CLASS_SIZES, DEFAULT_OBJECT_SIZE, SupportPriorTable, choose_supporter

logger = logging.getLogger(__name__)

OBJECT_DYNAMICS = ("q1o", "q2o", "q3o")
HUMAN_DYNAMICS = ("q1h", "q2h", "q3h")
LAYOUT_DYNAMICS = ("q1l", "q2l")
TRANSLATION_AXES = ("x", "y", "z", "depth")
MIN_ROOM_EXTENT = 0.5


class PhaseSchedule(BaseModel):
    """Annealing parameters of one sampling phase."""

    model_config = ConfigDict(extra="forbid")

    iters: int = Field(default=3000, ge=0, description="Iterations in the phase")
    t0: float = Field(default=1.0, gt=0.0, description="Initial temperature")
    gamma: float = Field(default=0.999, gt=0.0, lt=1.0, description="Geometric cooling factor per iteration")
    step_translation: float = Field(default=0.05, gt=0.0, description="Translation step in meters")
    step_rotation: float = Field(default=0.1, gt=0.0, description="Rotation step in radians")
    step_scale: float = Field(default=1.05, gt=1.0, description="Multiplicative scale step")
    p_desc: float = Field(default=0.95, ge=0.5, le=1.0, description="Probability of the descent direction")
    step_decay: float = Field(default=1.0, gt=0.0, le=1.0, description="Per-iteration step shrink factor")
    min_step_fraction: float = Field(default=0.25, gt=0.0, le=1.0, description="Floor of the step shrink")
    stagnation_limit: int = Field(default=0, ge=0, description="Stop after this many rejections in a row (0 = off)")

    def temperature(self, t: int) -> float:
        return self.t0 * self.gamma ** t

    def step_fraction(self, t: int) -> float:
        if self.step_decay >= 1.0:
            return 1.0
        return max(self.min_step_fraction, self.step_decay ** t)


class Schedule(BaseModel):
    model_config = ConfigDict(extra="forbid")

    phase1: PhaseSchedule = Field(default_factory=PhaseSchedule)
    phase3: PhaseSchedule = Field(default_factory=PhaseSchedule)

    @classmethod
    def zero(cls) -> "Schedule":
        return cls(phase1=PhaseSchedule(iters=0), phase3=PhaseSchedule(iters=0))


@dataclass(frozen=True)
class Proposal:
    target: str
    dynamic: str
    axis: str
    sign: int
    magnitude: float
    descent: bool
    log_q_ratio: float
    energy_delta: float


@dataclass
class TraceRecord:
    iteration: int
    phase: int
    accepted: bool
    temperature: float
    energy: Dict[str, float]
    best_total: float
    dynamic: str = ""
    target: str = ""

    def as_dict(self) -> Dict:
        return {
            "iteration": self.iteration, "phase": self.phase, "accepted": self.accepted,
            "T": self.temperature, "dynamic": self.dynamic, "target": self.target,
            "best_total": self.best_total, **self.energy,
        }


@dataclass
class EnergyTrace:
    records: List[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord):
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def acceptance_rate(self, phase: Optional[int] = None) -> float:
        rows = [r for r in self.records if phase is None or r.phase == phase]
        return sum(r.accepted for r in rows) / len(rows) if rows else 0.0

    def write_jsonl(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for record in self.records:
                f.write(json.dumps(record.as_dict()) + "\n")


@dataclass
class BestSoFar:
    """Lowest full-model energy seen over the whole run and the graph holding it."""

    graph: ParseGraph
    total: float
    phase: int = 0

    def offer(self, pg: ParseGraph, total: float, phase: int) -> bool:
        if total < self.total:
            self.graph, self.total, self.phase = pg, total, phase
            return True
        return False


@dataclass
class InferenceResult:
    graph: ParseGraph
    trace: EnergyTrace
    breakdown: EnergyBreakdown
    initial_breakdown: EnergyBreakdown

    def __str__(self) -> str:
        return (f"{len(self.graph.objects)} objects, {len(self.graph.humans)} humans, "
                f"{len(self.trace)} iterations, final {self.breakdown}")


# -- dynamics ---------------------------------------------------------------

def _depth_direction(cam_position: np.ndarray, point: np.ndarray) -> np.ndarray:
    ray = np.asarray(point, dtype=float) - cam_position
    norm = float(np.linalg.norm(ray))
    if norm <= 1e-12:
        return np.zeros(3)
    return ray / norm


def _translation(pg: ParseGraph, point: np.ndarray, axis: str, amount: float) -> np.ndarray:
    if axis == "depth":
        return amount * _depth_direction(pg.camera.position, point)
    delta = np.zeros(3)
    delta["xyz".index(axis)] = amount
    return delta


def apply_dynamic(pg: ParseGraph, target: str, dynamic: str, axis: str, amount: float) -> Optional[ParseGraph]:
    """Apply one signed move; None when the move would collapse the room.

    Translations and rotations take `amount` in meters and radians, scale
    moves take log(factor) so that negating `amount` inverts the move.
    """
    if dynamic in ("q1o", "q1h"):
        node = pg.node(target)
        point = node.center
        return pg.with_node(node.translated(_translation(pg, point, axis, amount)))
    if dynamic in ("q2o", "q2h"):
        return pg.with_node(pg.node(target).rotated(amount))
    if dynamic in ("q3o", "q3h"):
        return pg.with_node(pg.node(target).scaled(math.exp(amount)))

    layout = pg.layout
    if dynamic == "q1l":
        # wall index in axis; move outward by amount
        index = int(axis)
        local_axis = index % 2
        outward = 1.0 if index < 2 else -1.0
        size = layout.size.copy()
        size[local_axis] += amount
        if size[local_axis] < MIN_ROOM_EXTENT:
            return None
        offset = np.zeros(3)
        offset[local_axis] = outward * 0.5 * amount
        return replace(pg, layout=replace(layout, size=size, center=layout.center + layout.rotation @ offset))
    if dynamic == "q2l":
        # floor moves up by amount, the ceiling stays
        size = layout.size.copy()
        size[2] -= amount
        if size[2] < MIN_ROOM_EXTENT:
            return None
        return replace(pg, layout=replace(layout, size=size, center=layout.center + np.array([0.0, 0.0, 0.5 * amount])))
    raise InvalidParameterError(f"unknown dynamic '{dynamic}'")


def _step(dynamic: str, schedule: PhaseSchedule, fraction: float) -> float:
    if dynamic in ("q2o", "q2h"):
        return schedule.step_rotation * fraction
    if dynamic in ("q3o", "q3h"):
        return math.log(schedule.step_scale) * fraction
    return schedule.step_translation * fraction


def _choose_move(pg: ParseGraph, rng: np.random.Generator) -> Tuple[str, str, str]:
    kinds = ["layout"]
    if pg.objects:
        kinds.append("object")
    if pg.humans:
        kinds.append("human")
    kind = kinds[rng.integers(len(kinds))]
    if kind == "object":
        target = pg.objects[rng.integers(len(pg.objects))].node_id
        dynamic = OBJECT_DYNAMICS[rng.integers(3)]
    elif kind == "human":
        target = pg.humans[rng.integers(len(pg.humans))].node_id
        dynamic = HUMAN_DYNAMICS[rng.integers(3)]
    else:
        target = LAYOUT_ID
        dynamic = LAYOUT_DYNAMICS[rng.integers(2)]
    if dynamic in ("q1o", "q1h"):
        axis = TRANSLATION_AXES[rng.integers(4)]
    elif dynamic == "q1l":
        axis = str(int(rng.integers(4)))
    else:
        axis = ""
    return target, dynamic, axis


def _energy_change(model: EnergyModel, pg: ParseGraph, cand: Optional[ParseGraph], target: str,
                   current_total: float) -> float:
    if cand is None:
        return math.inf
    if target == LAYOUT_ID:
        return model.total(cand) - current_total
    return model.delta(pg, cand, target)


def _direction_probability(chosen_delta: float, other_delta: float, p_desc: float) -> float:
    if chosen_delta == other_delta:
        return 0.5
    return p_desc if chosen_delta < other_delta else 1.0 - p_desc


def propose(pg: ParseGraph, model: EnergyModel, schedule: PhaseSchedule, rng: np.random.Generator,
            step_fraction: float = 1.0, current_total: Optional[float] = None
            ) -> Tuple[Optional[Proposal], Optional[ParseGraph]]:
    """Draw a node and dynamic, then pick the descent direction with probability p_desc.

    Both directions are evaluated; when they are equally good the move is
    skipped and (None, None) is returned.
    """
    if current_total is None:
        current_total = model.total(pg)
    target, dynamic, axis = _choose_move(pg, rng)
    magnitude = _step(dynamic, schedule, step_fraction)

    plus = apply_dynamic(pg, target, dynamic, axis, magnitude)
    minus = apply_dynamic(pg, target, dynamic, axis, -magnitude)
    d_plus = _energy_change(model, pg, plus, target, current_total)
    d_minus = _energy_change(model, pg, minus, target, current_total)
    if d_plus == d_minus:
        return None, None

    descent_sign = 1 if d_plus < d_minus else -1
    descent = bool(rng.random() < schedule.p_desc)
    sign = descent_sign if descent else -descent_sign
    cand, delta = (plus, d_plus) if sign > 0 else (minus, d_minus)
    if cand is None:
        return None, None

    forward = _direction_probability(delta, d_minus if sign > 0 else d_plus, schedule.p_desc)
    # reverse move from cand: stepping back returns to pg, stepping on goes further
    further = apply_dynamic(cand, target, dynamic, axis, sign * magnitude)
    d_back = -delta
    d_further = _energy_change(model, cand, further, target, current_total + delta)
    backward = _direction_probability(d_back, d_further, schedule.p_desc)
    # a reverse move that can never be drawn makes the proposal unacceptable
    if backward <= 0.0 or forward <= 0.0:
        log_q_ratio = -math.inf
    else:
        log_q_ratio = math.log(backward) - math.log(forward)

    proposal = Proposal(target=target, dynamic=dynamic, axis=axis, sign=sign, magnitude=magnitude,
                        descent=descent, log_q_ratio=log_q_ratio, energy_delta=delta)
    return proposal, cand


def mh_accept(total_e_old: float, total_e_new: float, log_q_ratio: float, T: float,
              rng: np.random.Generator) -> bool:
    """Metropolis-Hastings test at temperature T."""
    if not T > 0:
        raise InvalidParameterError(f"temperature must be positive, got {T}")
    u = rng.random()
    if not math.isfinite(total_e_new):
        return False
    log_alpha = (total_e_old - total_e_new) / T + log_q_ratio
    return u < math.exp(min(0.0, log_alpha))


# -- phases -----------------------------------------------------------------

def _anneal(pg: ParseGraph, model: EnergyModel, schedule: PhaseSchedule, phase: int,
            rng: np.random.Generator, trace: EnergyTrace, start_iteration: int,
            tracker: BestSoFar, full_model: EnergyModel) -> Tuple[ParseGraph, EnergyBreakdown]:
    """Anneal one phase under `model`.

    Returns the phase's own lowest-energy graph. Every accepted state is also
    scored under `full_model` and offered to `tracker`, whose total is what the
    trace records as `best_total`.
    """
    current = pg
    current_bd = model.breakdown(current)
    best, best_bd = current, current_bd
    scored_by_full = model is full_model
    rejected_run = 0
    logger.info(f"Phase {phase}: {schedule.iters} iterations from {current_bd}")

    for t in range(schedule.iters):
        T = schedule.temperature(t)
        proposal, cand = propose(current, model, schedule, rng, schedule.step_fraction(t), current_bd.total)
        accepted = False
        if proposal is not None:
            accepted = mh_accept(current_bd.total, current_bd.total + proposal.energy_delta,
                                 proposal.log_q_ratio, T, rng)
        if accepted:
            current = cand
            current_bd = model.breakdown(current)
            rejected_run = 0
            if current_bd.total < best_bd.total:
                best, best_bd = current, current_bd
            tracker.offer(current, current_bd.total if scored_by_full else full_model.total(current), phase)
        else:
            rejected_run += 1

        trace.append(TraceRecord(
            iteration=start_iteration + t, phase=phase, accepted=accepted, temperature=T,
            energy=current_bd.as_dict(), best_total=tracker.total,
            dynamic=proposal.dynamic if proposal else "", target=proposal.target if proposal else "",
        ))
        if logger.isEnabledFor(logging.DEBUG) and t % 500 == 0:
            logger.debug(f"phase {phase} iter {t}: T={T:.4f} current={current_bd.total:.4f} best={tracker.total:.4f}")
        if schedule.stagnation_limit and rejected_run >= schedule.stagnation_limit:
            logger.info(f"Phase {phase} stagnated after {t + 1} iterations")
            break

    logger.info(f"Phase {phase} done: best {best_bd}")
    return best, best_bd


def topdown_sample(pg: ParseGraph, obs: Optional[Observations], priors: HoiPriorSet, conf_threshold: float = 0.5,
                   support_priors: Optional[SupportPriorTable] = None,
                   class_sizes: Optional[Dict[str, Tuple[float, float, float]]] = None,
                   **margins) -> ParseGraph:
    """Insert an object at the prior mode for every confident interaction left unmatched."""
    support_priors = support_priors or SupportPriorTable()
    class_sizes = {**DEFAULT_CLASS_SIZES, **(class_sizes or {})}
    pending = unmatched_interactions(pg, conf_threshold, obs)
    existing = set(pg.object_ids) | set(pg.human_ids)
    counter = 0
    for human, action in pending:
        prior = priors.get(action)
        label = DEFAULT_TOPDOWN_CLASS.get(action)
        if label not in prior.object_classes:
            label = sorted(prior.object_classes)[0]
        while f"topdown_{counter}" in existing:
            counter += 1
        node_id = f"topdown_{counter}"
        existing.add(node_id)
        center = sample_object_given_pose(prior, human)
        obj = Cuboid(center=center, size=class_sizes.get(label, DEFAULT_OBJECT_SIZE), yaw=human.yaw,
                     class_label=label, is_container=label in CONTAINER_CLASSES, node_id=node_id, synthesized=True)
        pg = replace(pg, objects=pg.objects + (obj,), hoi_edges=pg.hoi_edges + ((human.node_id, node_id, action),))
        supporter = choose_supporter(pg, node_id, support_priors, **margins)
        pg = replace(pg, support_edges=pg.support_edges + ((node_id, supporter),))
        logger.info(f"Top-down sampled {label} '{node_id}' for {human.node_id} ({action}), supported by {supporter}")
    return pg


def _warn_implausible(pg: ParseGraph, priors: HoiPriorSet, bound: float):
    for human_id, object_id, action in pg.hoi_edges:
        value = interaction_nll(priors.get(action), pg.get_human(human_id), pg.get_object(object_id))
        if value > bound:
            logger.warning(f"HOI {human_id} -{action}-> {object_id} has nll {value:.2f} above {bound}")


def run_inference(pg_init: ParseGraph, obs: Observations, priors: HoiPriorSet,
                  weights: Optional[EnergyWeights] = None, schedule: Optional[Schedule] = None,
                  rng_seed: int = 0, phases: Sequence[int] = (1, 2, 3, 4),
                  conf_threshold: float = 0.5, topdown_threshold: float = 0.5,
                  support_priors: Optional[SupportPriorTable] = None,
                  class_sizes: Optional[Dict[str, Tuple[float, float, float]]] = None,
                  hoi_sanity_nll: float = 25.0, **energy_options) -> InferenceResult:
    """Run the phases in order and return the best graph with its trace.

    Deterministic for a given rng_seed. Component errors abort with the
    partial trace attached to the InferenceAbort.
    """
    weights = weights or EnergyWeights()
    schedule = schedule or Schedule()
    rng = np.random.default_rng(rng_seed)
    trace = EnergyTrace()
    model = EnergyModel(obs, priors, weights, **energy_options)
    margins = {k: energy_options[k] for k in ("human_margin", "wall_contact_margin") if k in energy_options}

    try:
        initial_bd = model.breakdown(pg_init)
        best = BestSoFar(graph=pg_init, total=initial_bd.total)
        pg = pg_init

        if 1 in phases:
            phy_model = model.with_weights(weights.model_copy(update={"w_hoi": 0.0}))
            pg, _ = _anneal(pg, phy_model, schedule.phase1, 1, rng, trace, len(trace), best, model)

        if 2 in phases:
            edges = tuple(match_interactions(pg, obs, priors, conf_threshold))
            pg = replace(pg, hoi_edges=edges)
            best.offer(pg, model.total(pg), 2)
            logger.info(f"Phase 2: matched {len(edges)} interactions")

        # start the full-energy phase from the better of the annealed and initial graphs
        start = pg
        if pg is not pg_init:
            rematched = replace(pg_init, hoi_edges=pg.hoi_edges)
            rematched_total = model.total(rematched)
            if rematched_total < model.total(pg):
                start = rematched
                best.offer(rematched, rematched_total, 2)
        pg = start

        if 3 in phases:
            _anneal(pg, model, schedule.phase3, 3, rng, trace, len(trace), best, model)

        pg = best.graph
        if 2 in phases and best.phase < 2:
            # the best graph predates matching; keep the matches unless they raise its energy
            rematched = replace(pg, hoi_edges=tuple(match_interactions(pg, obs, priors, conf_threshold)))
            if model.total(rematched) <= best.total:
                pg = rematched
                logger.info(f"Best graph from phase {best.phase} re-matched to {len(pg.hoi_edges)} interactions")
        if 3 in phases:
            _warn_implausible(pg, priors, hoi_sanity_nll)

        if 4 in phases and weights.w_hoi == 0.0:
            logger.info("Phase 4 skipped: HOI term is disabled")
        elif 4 in phases:
            pg = topdown_sample(pg, obs, priors, topdown_threshold, support_priors, class_sizes, **margins)

        final_bd = model.breakdown(pg)
    except InferenceAbort:
        raise
    except SceneMCError as e:
        logger.error(f"Inference aborted after {len(trace)} iterations: {e}")
        raise InferenceAbort(f"inference aborted: {e}", trace=trace, cause=e) from e

    return InferenceResult(graph=pg, trace=trace, breakdown=final_bd, initial_breakdown=initial_bd)
