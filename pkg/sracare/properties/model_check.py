"""
Bounded explicit-state model checker for the authentication handshake.

The composition of verifier, prover and a network adversary is explored
breadth first up to a depth bound. MAC values are symbolic: a MAC is its
preimage term, so two MACs are equal iff key and message terms are equal, and
the adversary can only produce a MAC it has seen or, with the key leaked,
compute one. Nonces are reduced to small session numbers.

Checked safety property: whenever the verifier accepts a ProverAuth, its
authenticator hmac(K, n1) was emitted by an honest prover holding the same
key. The n2 half is not authenticated at this step; tampering with it is
caught later when the prover checks B.
"""
import logging
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Iterator, List, NamedTuple, Optional, Tuple

from ..errors import DepthExceeded

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 12
MAX_SESSIONS = 2

POWERS = ("drop", "replay", "tamper_1bit")

Term = Tuple
Message = Tuple  # (kind, *body terms)
Wire = Optional[Tuple[str, Message]]  # (recipient, message)

KEY = ("key", "K")


class KeyMode(Enum):
    HONEST = "honest"
    LEAKED = "leaked"


def mac(key: Term, msg: Term) -> Term:
    return ("mac", key, msg)


def n2_term(key: Term, n1: Term) -> Term:
    return ("n2", key, n1)


def k1_term(key: Term, n1: Term, n2: Term) -> Term:
    return ("k1", key, n1, n2)


def tampered(term: Term) -> Term:
    return ("flip", term)


@dataclass(frozen=True)
class State:
    session: int = 1
    v_phase: str = "Idle"
    v_n1: Optional[Term] = None
    v_n2: Optional[Term] = None
    v_accepted: Optional[Message] = None
    p_phase: str = "Idle"
    p_n1: Optional[Term] = None
    p_n2: Optional[Term] = None
    wire: Wire = None
    recorded: FrozenSet[Tuple[str, Message]] = frozenset()
    emitted: FrozenSet[Term] = frozenset()
    tampered_wire: bool = False


class TransitionSystem:
    """Verifier x prover x adversary. ``successors`` yields (label, state) in a fixed order."""

    def __init__(self, powers: Iterable[str], keys: KeyMode = KeyMode.HONEST):
        self.powers = frozenset(powers)
        unknown = self.powers - set(POWERS)
        if unknown:
            raise ValueError(f"unknown adversary powers: {sorted(unknown)}")
        self.keys = keys

    def initial(self) -> State:
        return State()

    def violates(self, state: State) -> bool:
        return state.v_accepted is not None and state.v_accepted[1] not in state.emitted

    def _send(self, state: State, recipient: str, msg: Message, **changes) -> State:
        return replace(
            state,
            wire=(recipient, msg),
            recorded=state.recorded | {(recipient, msg)},
            tampered_wire=False,
            **changes,
        )

    def successors(self, state: State) -> Iterator[Tuple[str, State]]:
        yield from self._honest_steps(state)
        yield from self._adversary_steps(state)
        if state.session < MAX_SESSIONS and state.v_phase in ("Closed", "Done"):
            yield "new_session", State(
                session=state.session + 1,
                recorded=state.recorded,
                emitted=state.emitted,
            )

    def _honest_steps(self, s: State) -> Iterator[Tuple[str, State]]:
        if s.v_phase == "Idle" and s.wire is None:
            n1 = ("n1", s.session)
            yield "vr.challenge", self._send(s, "prover", ("Challenge", n1), v_phase="Challenged", v_n1=n1)
        if s.v_phase == "ProverVerified" and s.wire is None:
            b = mac(k1_term(KEY, s.v_n1, s.v_n2), s.v_n2)
            yield "vr.auth", self._send(s, "prover", ("VerifierAuth", b), v_phase="AwaitingResult")
        if s.wire is None:
            return
        recipient, msg = s.wire
        kind = msg[0]
        if recipient == "prover":
            yield f"pr.recv.{kind}", self._prover_receive(s, msg)
        else:
            yield f"vr.recv.{kind}", self._verifier_receive(s, msg)

    def _prover_receive(self, s: State, msg: Message) -> State:
        cleared = replace(s, wire=None, tampered_wire=False)
        if s.p_phase == "Idle" and msg[0] == "Challenge":
            n1 = msg[1]
            n2 = n2_term(KEY, n1)
            auth = ("ProverAuth", mac(KEY, n1), n2)
            return self._send(cleared, "verifier", auth, p_phase="Responded", p_n1=n1, p_n2=n2,
                              emitted=s.emitted | {auth[1]})
        if s.p_phase == "Responded" and msg[0] == "VerifierAuth":
            ok = msg[1] == mac(k1_term(KEY, s.p_n1, s.p_n2), s.p_n2)
            phase = "Authenticated" if ok else "Rejected"
            return self._send(cleared, "verifier", ("AuthResult", ok), p_phase=phase)
        if s.p_phase in ("Rejected", "Authenticated"):
            return cleared
        return replace(cleared, p_phase="Rejected")

    def _verifier_receive(self, s: State, msg: Message) -> State:
        cleared = replace(s, wire=None, tampered_wire=False)
        if s.v_phase == "Challenged" and msg[0] == "ProverAuth":
            if msg[1] == mac(KEY, s.v_n1):
                return replace(cleared, v_phase="ProverVerified", v_n2=msg[2], v_accepted=msg)
            return replace(cleared, v_phase="Closed")
        if s.v_phase == "AwaitingResult" and msg[0] == "AuthResult":
            return replace(cleared, v_phase="Done" if msg[1] is True else "Closed")
        if s.v_phase in ("Closed", "Done"):
            return cleared
        return replace(cleared, v_phase="Closed")

    def _adversary_steps(self, s: State) -> Iterator[Tuple[str, State]]:
        if "drop" in self.powers and s.wire is not None:
            yield "adv.drop", replace(s, wire=None, tampered_wire=False)
        if "tamper_1bit" in self.powers and s.wire is not None and not s.tampered_wire:
            recipient, msg = s.wire
            for i in range(1, len(msg)):
                body = list(msg)
                body[i] = (not body[i]) if isinstance(body[i], bool) else tampered(body[i])
                yield f"adv.tamper.{msg[0]}.{i}", replace(s, wire=(recipient, tuple(body)), tampered_wire=True)
        if "replay" in self.powers and s.wire is None:
            for recipient, msg in sorted(s.recorded, key=repr):
                yield f"adv.replay.{msg[0]}->{recipient}", replace(s, wire=(recipient, msg))
        if self.keys is KeyMode.LEAKED:
            # with K the adversary answers any observed challenge itself, replacing the wire
            challenges = sorted({m[1] for _, m in s.recorded if m[0] == "Challenge"}, key=repr)
            for n1 in challenges:
                forged = ("ProverAuth", mac(KEY, n1), ("forged", n1))
                yield "adv.forge.ProverAuth", replace(s, wire=("verifier", forged))


class ModelCheckResult(NamedTuple):
    counterexample: Optional[List[str]]
    states: int
    depth: int

    @property
    def holds(self) -> bool:
        return self.counterexample is None


def model_check(
    max_depth: int = DEFAULT_MAX_DEPTH,
    adversary_powers: Iterable[str] = POWERS,
    keys: KeyMode = KeyMode.HONEST,
    ceiling: int = DEFAULT_MAX_DEPTH,
) -> ModelCheckResult:
    """Breadth-first search for the shortest action sequence reaching a violation."""
    if max_depth > ceiling:
        raise DepthExceeded(f"depth {max_depth} exceeds the configured ceiling {ceiling}")
    if max_depth < 0:
        raise DepthExceeded(f"depth must not be negative, got {max_depth}")
    system = TransitionSystem(adversary_powers, KeyMode(keys))
    start = system.initial()
    parents: Dict[State, Optional[Tuple[State, str]]] = {start: None}
    frontier = deque([(start, 0)])
    while frontier:
        state, depth = frontier.popleft()
        if system.violates(state):
            path = _path(parents, state)
            logger.info("counterexample after %d states: %s", len(parents), " ".join(path))
            return ModelCheckResult(path, len(parents), max_depth)
        if depth == max_depth:
            continue
        for label, succ in system.successors(state):
            if succ not in parents:
                parents[succ] = (state, label)
                frontier.append((succ, depth + 1))
    logger.info("no counterexample up to depth %d, %d states explored", max_depth, len(parents))
    return ModelCheckResult(None, len(parents), max_depth)


def _path(parents: Dict[State, Optional[Tuple[State, str]]], state: State) -> List[str]:
    labels = []
    while parents[state] is not None:
        state, label = parents[state]
        labels.append(label)
    return labels[::-1]
