"""The aggregation-free message-passing protocol.

An organizer starts N chains, each a factor pair random-walking across
participants. Every hop applies one local masked update and forwards the
factors (never the data) to a next participant that is not the sender;
a chain returns to the organizer only when it converges or exhausts its
iteration budget. The organizer averages the returned pairs and multiplies
them to recover the field window.

Chains are logically parallel but simulated sequentially: participants are
stateless with respect to chains (factors live in the message, observations
are read-only), and each chain draws from its own stream derived from
(seed, chain_id), so any interleaving yields the identical result.

Every transfer is recorded as a transcript entry. The transcript is the
organizer-visible data flow, and :func:`audit_transcript` checks it against
the architecture's privacy rules: no immediate back-transfer between
participants, no organizer contact before a chain finishes, factor-sized
payloads only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, ShapeError
from .factorization import init_factors, sgd_step
from .model import FactorPair, Hyperparams, LocalObservations
from .rng import substream

ORGANIZER = "organizer"

PAYLOAD_FACTORS = "factors-only"
PAYLOAD_FINAL = "final-factors"


@dataclass(frozen=True)
class ChainMessage:
    """What travels between participants: the factors, the update count so
    far, and the sender's index (None when the organizer originated it).

    Deliberately has no field that could carry observations or locations.
    """

    factors: FactorPair
    iteration: int
    prev_participant: int | None

    def __post_init__(self):
        if self.iteration < 0:
            raise ParameterError(f"iteration must be non-negative, got {self.iteration}")
        if self.prev_participant is not None and self.prev_participant < 1:
            raise ParameterError(
                f"prev_participant must be a participant index, got {self.prev_participant!r}")


@dataclass(frozen=True)
class TranscriptEntry:
    """One recorded transfer. ``sender``/``receiver`` are participant ids
    (1-based) or the string ``"organizer"``."""

    chain_id: int
    sender: int | str
    receiver: int | str
    payload_kind: str
    scalar_count: int

    def to_jsonable(self) -> dict:
        return {
            "chain_id": self.chain_id,
            "from": self.sender,
            "to": self.receiver,
            "payload_kind": self.payload_kind,
            "scalar_count": self.scalar_count,
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "TranscriptEntry":
        return cls(int(data["chain_id"]), data["from"], data["to"],
                   data["payload_kind"], int(data["scalar_count"]))


@dataclass(frozen=True)
class Continue:
    """A participant step that forwards the chain."""

    next_participant: int
    message: ChainMessage


@dataclass(frozen=True)
class Finished:
    """A participant step that ends the chain and reports to the organizer.

    ``converged`` distinguishes a gradient-tolerance stop from hitting the
    iteration cap.
    """

    factors: FactorPair
    iterations: int
    converged: bool


@dataclass(frozen=True)
class AuditViolation:
    index: int      # position in the transcript
    rule: str       # "back-transfer" | "early-organizer-contact" | "payload"
    detail: str


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    violations: tuple[AuditViolation, ...]


@dataclass(frozen=True)
class RunResult:
    """Everything a full protocol run produces.

    ``recovered`` is exactly ``p_bar @ q_bar``. ``config`` echoes the
    hyperparameters and behavior flags so the run can be reproduced
    bit-for-bit from this object alone (plus the observations).
    """

    recovered: np.ndarray
    p_bar: np.ndarray
    q_bar: np.ndarray
    per_chain_iters: tuple[int, ...]
    transcript: tuple[TranscriptEntry, ...]
    converged_chains: int
    config: dict

    def scalars_transferred(self, include_init: bool = True) -> int:
        """Total real values moved over the network in this run.

        ``include_init=False`` drops the organizer's N initial sends,
        leaving only participant-originated transfers (the quantity the
        worst-case bound covers).
        """
        return sum(e.scalar_count for e in self.transcript
                   if include_init or e.sender != ORGANIZER)

    def to_jsonable(self) -> dict:
        return {
            "config": self.config,
            "recovered": self.recovered.tolist(),
            "p_bar": self.p_bar.tolist(),
            "q_bar": self.q_bar.tolist(),
            "per_chain_iters": list(self.per_chain_iters),
            "converged_chains": self.converged_chains,
            "transcript": [e.to_jsonable() for e in self.transcript],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), sort_keys=True, separators=(",", ":"))


def _factor_scalars(num_subareas: int, latent: int, window: int) -> int:
    return num_subareas * latent + latent * window


def init_batch(params: Hyperparams, num_subareas: int, obs_scale: float,
               rng: np.random.Generator,
               transcript: list[TranscriptEntry] | None = None,
               ) -> list[tuple[int, ChainMessage]]:
    """Organizer-side batch initialization.

    Draws N distinct starting participants uniformly without replacement
    and pairs each with a fresh scaled Gaussian factor pair (iteration 0, no
    previous participant). If a transcript list is given, the N
    organizer-to-participant sends are appended to it.

    ``obs_scale`` sets the initial factor magnitude (see
    :func:`cswa.factorization.init_factors`); inside a simulation the
    equivalent scale is computed locally by each starting participant so
    the organizer never touches data.
    """
    if params.batch_size > params.num_participants:
        raise ParameterError(
            f"cannot draw {params.batch_size} distinct participants from "
            f"{params.num_participants}")
    starters = rng.choice(params.num_participants, size=params.batch_size,
                          replace=False)
    batch = []
    payload = _factor_scalars(num_subareas, params.latent, params.window)
    for chain_id, start in enumerate((int(j) + 1 for j in starters), start=1):
        factors = init_factors(num_subareas, params.window, params.latent,
                               obs_scale, rng)
        batch.append((start, ChainMessage(factors, 0, None)))
        if transcript is not None:
            transcript.append(TranscriptEntry(chain_id, ORGANIZER, start,
                                              PAYLOAD_FACTORS, payload))
    return batch


def _draw_next(rng: np.random.Generator, num_participants: int,
               prev: int | None, current: int, exclude_self: bool) -> int:
    """Uniform next-hop draw excluding the previous sender (and, by default,
    the current participant). When both exclusions would empty the candidate
    set (m=2 with exclude_self), only the previous sender is excluded; this
    degenerate fallback keeps tiny networks runnable."""
    excluded = {prev} if prev is not None else set()
    if exclude_self:
        excluded = excluded | {current}
    candidates = [j for j in range(1, num_participants + 1) if j not in excluded]
    if not candidates:
        candidates = [j for j in range(1, num_participants + 1) if j != prev]
    if not candidates:  # m == 1 and prev is the lone participant
        candidates = [current]
    return int(candidates[rng.integers(0, len(candidates))])


def participant_step(msg: ChainMessage, obs: LocalObservations,
                     params: Hyperparams, rng: np.random.Generator, *,
                     exclude_self: bool = True,
                     literal_update: bool = False) -> Continue | Finished:
    """One participant's handling of an incoming chain message.

    Applies a single local update, then either forwards the chain to a
    next participant drawn uniformly from everyone except the sender (and
    itself, unless ``exclude_self`` is off), or, when the perturbation
    max(|g_p|_inf, |g_q|_inf) has dropped to grad_tol or the budget is
    spent, finishes and addresses the factors to the organizer.
    """
    if msg.iteration >= params.max_iters:
        raise ParameterError(
            f"message iteration {msg.iteration} already at the cap "
            f"{params.max_iters}; the scheduler must not deliver it")
    try:
        new_factors, grads = sgd_step(obs, msg.factors, params.step_size,
                                      params.reg_p, params.reg_q,
                                      literal_update=literal_update)
    except NumericError as err:
        err.iteration = msg.iteration + 1
        raise
    iteration = msg.iteration + 1
    delta = grads.max_abs()
    if delta > params.grad_tol and iteration < params.max_iters:
        next_participant = _draw_next(rng, params.num_participants,
                                      msg.prev_participant,
                                      obs.participant_id, exclude_self)
        return Continue(next_participant,
                        ChainMessage(new_factors, iteration, obs.participant_id))
    return Finished(new_factors, iteration, converged=delta <= params.grad_tol)


def recover(finished: list[FactorPair]) -> tuple[np.ndarray, FactorPair]:
    """Organizer-side recovery: arithmetic mean of the returned factor
    pairs, then their product. Returns (recovered matrix, averaged pair)."""
    if not finished:
        raise ParameterError("recovery needs at least one returned factor pair")
    shapes = {(f.p.shape, f.q.shape) for f in finished}
    if len(shapes) != 1:
        raise ShapeError(f"returned factor pairs disagree in shape: {shapes}")
    p_bar = np.mean([f.p for f in finished], axis=0)
    q_bar = np.mean([f.q for f in finished], axis=0)
    averaged = FactorPair(p_bar, q_bar)
    return averaged.product(), averaged


def run_simulation(all_obs: list[LocalObservations], params: Hyperparams, *,
                   exclude_self: bool = True, literal_update: bool = False,
                   require_convergence: bool = False) -> RunResult:
    """Execute a full run: batch initialization, every chain to completion,
    and recovery, recording each hop in the transcript.

    ``all_obs`` must hold participant 1..m in order. Each chain's random
    stream is derived from (seed, chain_id) and its starting factors are
    scaled by the starting participant's own observed mean, so results are
    a pure function of (observations, params) regardless of how chains
    would be interleaved.

    ``require_convergence`` drops chains that hit the iteration budget from
    the recovery average (they still appear in iterations/transcript).
    """
    if len(all_obs) != params.num_participants:
        raise ParameterError(
            f"expected {params.num_participants} observation sets, got {len(all_obs)}")
    for idx, obs in enumerate(all_obs, start=1):
        if obs.participant_id != idx:
            raise ParameterError(
                f"observations must be ordered by participant id; position "
                f"{idx} holds participant {obs.participant_id}")
    shapes = {(obs.num_subareas, obs.window) for obs in all_obs}
    if len(shapes) != 1:
        raise ShapeError(f"observation windows disagree in shape: {shapes}")
    num_subareas, window = shapes.pop()
    if window != params.window:
        raise ShapeError(
            f"observation window ({window}) does not match params.window "
            f"({params.window})")
    params.check_against(num_subareas)

    payload = _factor_scalars(num_subareas, params.latent, params.window)
    organizer_rng = substream(params.seed, "organizer")
    starters = [int(j) + 1 for j in
                organizer_rng.choice(params.num_participants,
                                     size=params.batch_size, replace=False)]

    transcript: list[TranscriptEntry] = []
    finishes: list[Finished] = []
    for chain_id, start in enumerate(starters, start=1):
        chain_rng = substream(params.seed, "chain", chain_id)
        local_mean = all_obs[start - 1].observed_mean()
        scale = local_mean if local_mean > 0 else 1.0
        factors = init_factors(num_subareas, params.window, params.latent,
                               scale, chain_rng)
        msg = ChainMessage(factors, 0, None)
        transcript.append(TranscriptEntry(chain_id, ORGANIZER, start,
                                          PAYLOAD_FACTORS, payload))
        current = start
        while True:
            try:
                step = participant_step(msg, all_obs[current - 1], params,
                                        chain_rng, exclude_self=exclude_self,
                                        literal_update=literal_update)
            except NumericError as err:
                err.chain_id = chain_id
                raise
            if isinstance(step, Continue):
                transcript.append(TranscriptEntry(chain_id, current,
                                                  step.next_participant,
                                                  PAYLOAD_FACTORS, payload))
                current = step.next_participant
                msg = step.message
            else:
                transcript.append(TranscriptEntry(chain_id, current, ORGANIZER,
                                                  PAYLOAD_FINAL, payload))
                finishes.append(step)
                break

    kept = [f.factors for f in finishes
            if f.converged or not require_convergence]
    if not kept:
        raise ParameterError(
            "require_convergence dropped every chain; raise max_iters or "
            "grad_tol")
    recovered, averaged = recover(kept)
    config = dict(params.to_dict(),
                  exclude_self=exclude_self,
                  literal_update=literal_update,
                  require_convergence=require_convergence)
    return RunResult(
        recovered=recovered,
        p_bar=averaged.p,
        q_bar=averaged.q,
        per_chain_iters=tuple(f.iterations for f in finishes),
        transcript=tuple(transcript),
        converged_chains=sum(1 for f in finishes if f.converged),
        config=config,
    )


def audit_transcript(transcript: list[TranscriptEntry]) -> AuditReport:
    """Check a transcript against the architecture's privacy rules.

    (a) back-transfer: within a chain, no participant may send to the
        participant it just received from;
    (b) early organizer contact: a chain talks to the organizer exactly
        once, as its final entry;
    (c) payload: every entry is a factor payload of the run's uniform
        factor size (a larger payload would indicate observation leakage).

    Revisiting a participant later in the chain is allowed; only the
    immediate sender is off-limits.
    """
    violations: list[AuditViolation] = []
    last_in_chain: dict[int, int] = {}
    for index, entry in enumerate(transcript):
        last_in_chain[entry.chain_id] = index

    expected_payload = transcript[0].scalar_count if transcript else 0
    prev_entry_in_chain: dict[int, TranscriptEntry] = {}
    for index, entry in enumerate(transcript):
        prev = prev_entry_in_chain.get(entry.chain_id)
        if (prev is not None
                and isinstance(prev.sender, int) and isinstance(prev.receiver, int)
                and entry.sender == prev.receiver and entry.receiver == prev.sender):
            violations.append(AuditViolation(
                index, "back-transfer",
                f"chain {entry.chain_id}: participant {entry.sender} returned "
                f"the factors to its sender {entry.receiver}"))
        if entry.receiver == ORGANIZER and index != last_in_chain[entry.chain_id]:
            violations.append(AuditViolation(
                index, "early-organizer-contact",
                f"chain {entry.chain_id}: organizer contacted before the "
                f"chain finished"))
        if entry.payload_kind not in (PAYLOAD_FACTORS, PAYLOAD_FINAL):
            violations.append(AuditViolation(
                index, "payload",
                f"unknown payload kind {entry.payload_kind!r}"))
        elif entry.scalar_count != expected_payload:
            violations.append(AuditViolation(
                index, "payload",
                f"payload of {entry.scalar_count} scalars does not match the "
                f"run's factor size {expected_payload}"))
        prev_entry_in_chain[entry.chain_id] = entry
    return AuditReport(passed=not violations, violations=tuple(violations))


def aggregate_for_baseline(all_obs: list[LocalObservations]) -> LocalObservations:
    """Organizer-style aggregation used ONLY by the centralized baselines:
    each cell covered by at least one participant gets the mean of the
    covering participants' values; uncovered cells stay masked out.

    The returned observations carry ``participant_id=0`` (the organizer).
    """
    if not all_obs:
        raise ParameterError("aggregation needs at least one participant")
    shapes = {(obs.num_subareas, obs.window) for obs in all_obs}
    if len(shapes) != 1:
        raise ShapeError(f"observation windows disagree in shape: {shapes}")
    counts = sum(obs.f_mask for obs in all_obs)
    sums = sum(obs.r_local for obs in all_obs)
    covered = counts > 0
    mean = np.zeros_like(sums)
    np.divide(sums, counts, out=mean, where=covered)
    return LocalObservations(0, mean, covered.astype(np.float64))
