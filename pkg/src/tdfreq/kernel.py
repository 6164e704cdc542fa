"""Deterministic, conservative time-stepped co-simulation federation.

Federates run in one process. Time is kept internally as integer nanoseconds so
that cadence comparisons (0.5 s, 1 s, 4 s marks) are exact. A federate asking
for time ``t`` is granted ``min(t, min over peers of (peer_last + peer_interval))``
and receives every subscribed message whose delivery time has been reached,
exactly once, ordered by ``(deliver_time, topic)``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Protocol, Sequence

import numpy as np

log = logging.getLogger(__name__)

NS_PER_S = 1_000_000_000


def to_ns(t: float) -> int:
    return int(round(float(t) * NS_PER_S))


def to_s(ns: int) -> float:
    return ns / NS_PER_S


class CosimError(Exception):
    pass


class DuplicateName(CosimError):
    pass


class DuplicatePublication(CosimError):
    pass


class UnboundSubscription(CosimError):
    pass


class NonMonotoneRequest(CosimError):
    pass


class UnknownTopic(CosimError):
    pass


class TimeMismatch(CosimError):
    pass


class PayloadTypeError(CosimError):
    pass


class FederationStarted(CosimError):
    pass


class Blocked(CosimError):
    """Raised by a direct ``request_time`` call that cannot advance yet."""


class Deadlock(CosimError):
    def __init__(self, pending: dict[str, str]):
        self.pending = pending
        lines = "; ".join(f"{k}: {v}" for k, v in pending.items())
        super().__init__(f"federation deadlocked, pending requests -> {lines}")


class FederateFailure(CosimError):
    def __init__(self, federate: str, time: float, cause: BaseException):
        self.federate = federate
        self.time = time
        self.cause = cause
        super().__init__(f"federate {federate!r} failed at t={time:g} s: {cause!r}")


@dataclass(frozen=True)
class FederateDecl:
    name: str
    exchange_interval: float
    publications: tuple[str, ...] = ()
    subscriptions: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ValueError("federate name must be non-empty")
        if not self.exchange_interval > 0:
            raise ValueError(f"{self.name}: exchange_interval must be > 0")
        object.__setattr__(self, "publications", tuple(self.publications))
        object.__setattr__(self, "subscriptions", tuple(self.subscriptions))
        for kind, topics in (("publication", self.publications), ("subscription", self.subscriptions)):
            if len(set(topics)) != len(topics):
                raise ValueError(f"{self.name}: duplicate {kind} topic")


@dataclass(frozen=True)
class Message:
    topic: str
    value: Any
    publish_time: float
    deliver_time: float


@dataclass(frozen=True)
class TimeGrant:
    federate: str
    granted_time: float
    inputs: tuple[Message, ...] = ()

    def latest(self, topic: str, default: Any = None) -> Any:
        """Most recently delivered value on ``topic`` in this grant."""
        for msg in reversed(self.inputs):
            if msg.topic == topic:
                return msg.value
        return default

    def values(self, topic: str) -> list[Any]:
        return [m.value for m in self.inputs if m.topic == topic]


@dataclass(frozen=True)
class TimeRequest:
    """A request that additionally blocks until a message on ``wait_for`` is deliverable."""

    time: float
    wait_for: tuple[str, ...] = ()


@dataclass
class TopicConfig:
    latency: float = 0.0
    drop: float = 0.0

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        if not 0.0 <= self.drop <= 1.0:
            raise ValueError("drop probability must be within [0, 1]")


def payload_kind(value: Any) -> str:
    if isinstance(value, (bool, int, float, np.integer, np.floating)):
        return "scalar"
    if isinstance(value, (complex, np.complexfloating)):
        return "complex"
    if isinstance(value, (tuple, list, np.ndarray)) and len(value) == 3:
        if all(isinstance(v, (int, float, complex, np.number)) for v in value):
            return "triple"
    raise PayloadTypeError(f"unsupported payload {value!r}")


def _normalize(value: Any, kind: str) -> Any:
    if kind == "scalar":
        return float(value)
    if kind == "complex":
        return complex(value)
    return tuple(complex(v) for v in value)


@dataclass
class FederationLog:
    """Ordered record of grants and message traffic."""

    entries: list[tuple] = field(default_factory=list)

    def grants(self, federate: str) -> list[float]:
        return [e[2] for e in self.entries if e[0] == "grant" and e[1] == federate]

    def publications(self, topic: str) -> list[tuple[float, Any]]:
        return [(e[3], e[5]) for e in self.entries if e[0] == "publish" and e[2] == topic]

    def topics(self) -> list[str]:
        return sorted({e[2] for e in self.entries if e[0] in ("publish", "drop")})

    def to_text(self) -> str:
        lines = []
        for e in self.entries:
            lines.append("\t".join(repr(x) for x in e))
        return "\n".join(lines) + "\n"


@dataclass
class _Pending:
    msg: Message
    publish_ns: int
    deliver_ns: int


@dataclass
class _FedState:
    decl: FederateDecl
    interval_ns: int
    last_ns: int = 0
    inbox: list[_Pending] = field(default_factory=list)


class Federation:
    """In-process broker: registration, time grants and message routing."""

    def __init__(
        self,
        seed: int = 0,
        topics: dict[str, TopicConfig] | None = None,
        consume_same_time: bool = True,
    ):
        self.seed = seed
        self.topic_config = dict(topics or {})
        self.consume_same_time = consume_same_time
        self.rng = np.random.default_rng(seed)
        self.log = FederationLog()
        self._feds: list[_FedState] = []
        self._names: dict[str, int] = {}
        self._publisher: dict[str, int] = {}
        self._subscribers: dict[str, list[int]] = {}
        self._kinds: dict[str, str] = {}
        self.started = False

    # -- registration -----------------------------------------------------
    def register_federate(self, decl: FederateDecl) -> int:
        if self.started:
            raise FederationStarted("cannot register after start")
        if decl.name in self._names:
            raise DuplicateName(decl.name)
        for topic in decl.publications:
            if topic in self._publisher:
                other = self._feds[self._publisher[topic]].decl.name
                raise DuplicatePublication(f"{topic!r} already published by {other!r}")
        handle = len(self._feds)
        self._feds.append(_FedState(decl, to_ns(decl.exchange_interval)))
        self._names[decl.name] = handle
        for topic in decl.publications:
            self._publisher[topic] = handle
        return handle

    def handle(self, name: str) -> int:
        return self._names[name]

    def start(self) -> None:
        if self.started:
            return
        for h, st in enumerate(self._feds):
            for topic in st.decl.subscriptions:
                if topic not in self._publisher:
                    raise UnboundSubscription(f"{st.decl.name!r} subscribes to unpublished topic {topic!r}")
                self._subscribers.setdefault(topic, []).append(h)
        unknown = set(self.topic_config) - set(self._publisher)
        if unknown:
            raise UnknownTopic(f"topic configuration for unpublished topics: {sorted(unknown)}")
        self.started = True

    # -- time -------------------------------------------------------------
    def last_granted(self, handle: int) -> float:
        return to_s(self._feds[handle].last_ns)

    def _bound_ns(self, handle: int, done: set[int] | frozenset = frozenset()) -> int | None:
        bounds = [
            st.last_ns + st.interval_ns
            for h, st in enumerate(self._feds)
            if h != handle and h not in done
        ]
        return min(bounds) if bounds else None

    def _candidate_ns(self, handle: int, requested_ns: int, done=frozenset()) -> int:
        bound = self._bound_ns(handle, done)
        return requested_ns if bound is None else min(requested_ns, bound)

    def _deliverable(self, p: _Pending, grant_ns: int) -> bool:
        if p.deliver_ns < grant_ns:
            return True
        return p.deliver_ns == grant_ns and self.consume_same_time

    def _grant(self, handle: int, grant_ns: int) -> TimeGrant:
        st = self._feds[handle]
        ready = [p for p in st.inbox if self._deliverable(p, grant_ns)]
        st.inbox = [p for p in st.inbox if not self._deliverable(p, grant_ns)]
        ready.sort(key=lambda p: (p.deliver_ns, p.msg.topic, p.publish_ns))
        st.last_ns = grant_ns
        return TimeGrant(st.decl.name, to_s(grant_ns), tuple(p.msg for p in ready))

    def request_time(self, handle: int, requested: float) -> TimeGrant:
        if not self.started:
            self.start()
        st = self._feds[handle]
        req_ns = to_ns(requested)
        if req_ns <= st.last_ns:
            raise NonMonotoneRequest(
                f"{st.decl.name}: requested {requested} <= last grant {to_s(st.last_ns)}"
            )
        grant_ns = self._candidate_ns(handle, req_ns)
        if grant_ns <= st.last_ns:
            raise Blocked(f"{st.decl.name}: peers must advance before {requested}")
        grant = self._grant(handle, grant_ns)
        self.log.entries.append(("grant", st.decl.name, grant.granted_time, len(grant.inputs)))
        return grant

    # -- messages -----------------------------------------------------------
    def publish(self, handle: int, topic: str, value: Any, time: float) -> None:
        st = self._feds[handle]
        if to_ns(time) != st.last_ns:
            raise TimeMismatch(
                f"{st.decl.name}: publish at {time} but current grant is {to_s(st.last_ns)}"
            )
        self._route(handle, topic, value, self.log.entries)

    def _route(self, handle: int, topic: str, value: Any, sink: list) -> None:
        st = self._feds[handle]
        if topic not in st.decl.publications:
            raise UnknownTopic(f"{st.decl.name} does not publish {topic!r}")
        kind = payload_kind(value)
        expected = self._kinds.setdefault(topic, kind)
        if expected != kind:
            raise PayloadTypeError(f"{topic!r} carries {expected} payloads, got {kind}")
        value = _normalize(value, kind)
        cfg = self.topic_config.get(topic)
        pub_ns = st.last_ns
        deliver_ns = pub_ns + (to_ns(cfg.latency) if cfg else 0)
        if cfg and cfg.drop > 0.0 and self.rng.random() < cfg.drop:
            sink.append(("drop", st.decl.name, topic, to_s(pub_ns), to_s(deliver_ns), value))
            return
        msg = Message(topic, value, to_s(pub_ns), to_s(deliver_ns))
        sink.append(("publish", st.decl.name, topic, msg.publish_time, msg.deliver_time, value))
        for sub in self._subscribers.get(topic, ()):
            self._feds[sub].inbox.append(_Pending(msg, pub_ns, deliver_ns))

    def has_deliverable(self, handle: int, topics: Iterable[str], grant_ns: int) -> bool:
        wanted = set(topics)
        return any(
            p.msg.topic in wanted and self._deliverable(p, grant_ns) for p in self._feds[handle].inbox
        )

    @property
    def declarations(self) -> list[FederateDecl]:
        return [st.decl for st in self._feds]


class Federate(Protocol):
    decl: FederateDecl

    def initialize(self, ctx: "FederateContext") -> Any: ...

    def on_grant(self, ctx: "FederateContext") -> Any: ...


class FederateContext:
    """What a federate callback sees: its grant and a buffered publish()."""

    def __init__(self, decl: FederateDecl, grant: TimeGrant):
        self.decl = decl
        self.grant = grant
        self.time = grant.granted_time
        self._outbox: list[tuple[str, Any]] = []

    @property
    def inputs(self) -> tuple[Message, ...]:
        return self.grant.inputs

    def latest(self, topic: str, default: Any = None) -> Any:
        return self.grant.latest(topic, default)

    def publish(self, topic: str, value: Any) -> None:
        if topic not in self.decl.publications:
            raise UnknownTopic(f"{self.decl.name} does not publish {topic!r}")
        self._outbox.append((topic, value))


def _as_request(ret: Any, last_ns: int, interval_ns: int) -> tuple[int, tuple[str, ...]]:
    if ret is None:
        return last_ns + interval_ns, ()
    if isinstance(ret, TimeRequest):
        return to_ns(ret.time), tuple(ret.wait_for)
    return to_ns(ret), ()


def run_federation(
    federation: Federation,
    federates: Sequence[Federate],
    stop_time: float,
    workers: int = 1,
) -> FederationLog:
    """Drive all federates to ``stop_time`` in global earliest-first order.

    Federates must be passed in registration order (``federates[i]`` owns
    handle ``i``). With ``workers > 1`` federates granted the same time whose
    subscriptions do not depend on each other's publications run concurrently;
    routing still happens afterwards in registration order so the log is
    identical to the single-threaded run.
    """
    if stop_time <= 0:
        raise ValueError("stop_time must be > 0")
    decls = federation.declarations
    if len(decls) != len(federates) or any(f.decl != d for f, d in zip(federates, decls)):
        raise ValueError("federates must match the federation's registrations, in order")
    federation.start()
    stop_ns = to_ns(stop_time)
    n = len(federates)
    sink = federation.log.entries

    requests: list[tuple[int, tuple[str, ...]]] = []
    for h, fed in enumerate(federates):
        st = federation._feds[h]
        grant = federation._grant(h, st.last_ns)
        ctx = FederateContext(fed.decl, grant)
        try:
            ret = fed.initialize(ctx)
        except Exception as exc:
            raise FederateFailure(fed.decl.name, 0.0, exc) from exc
        sink.append(("init", fed.decl.name, grant.granted_time, len(grant.inputs)))
        for topic, value in ctx._outbox:
            federation._route(h, topic, value, sink)
        req_ns, wait = _as_request(ret, st.last_ns, st.interval_ns)
        requests.append((min(req_ns, stop_ns), wait))

    done: set[int] = {h for h in range(n) if federation._feds[h].last_ns >= stop_ns}
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while len(done) < n:
            order = sorted((h for h in range(n) if h not in done), key=lambda h: (requests[h][0], h))
            first = None
            for h in order:
                st = federation._feds[h]
                req_ns, wait = requests[h]
                if req_ns <= st.last_ns:
                    raise NonMonotoneRequest(f"{st.decl.name}: request {to_s(req_ns)} not after last grant")
                grant_ns = federation._candidate_ns(h, req_ns, done)
                if grant_ns <= st.last_ns:
                    continue
                if wait and not federation.has_deliverable(h, wait, grant_ns):
                    continue
                first = (h, grant_ns)
                break
            if first is None:
                pending = {
                    federation._feds[h].decl.name: (
                        f"last={to_s(federation._feds[h].last_ns)} requested={to_s(requests[h][0])}"
                        + (f" waiting_for={list(requests[h][1])}" if requests[h][1] else "")
                    )
                    for h in order
                }
                raise Deadlock(pending)

            batch = [first]
            if pool is not None:
                h0, t0 = first
                published = set(decls[h0].publications)
                for h in order[order.index(h0) + 1:]:
                    req_ns, wait = requests[h]
                    if req_ns != t0 or wait or set(decls[h].subscriptions) & published:
                        break
                    if federation._candidate_ns(h, req_ns, done) != req_ns:
                        break
                    batch.append((h, req_ns))
                    published |= set(decls[h].publications)

            contexts = []
            for h, grant_ns in batch:
                grant = federation._grant(h, grant_ns)
                contexts.append((h, FederateContext(decls[h], grant)))

            def call(item):
                h, ctx = item
                try:
                    return federates[h].on_grant(ctx)
                except Exception as exc:
                    raise FederateFailure(decls[h].name, ctx.time, exc) from exc

            if pool is not None and len(contexts) > 1:
                results = list(pool.map(call, contexts))
            else:
                results = [call(item) for item in contexts]

            for (h, ctx), ret in zip(contexts, results):
                sink.append(("grant", decls[h].name, ctx.time, len(ctx.inputs)))
                for topic, value in ctx._outbox:
                    federation._route(h, topic, value, sink)
                st = federation._feds[h]
                if st.last_ns >= stop_ns:
                    done.add(h)
                    continue
                req_ns, wait = _as_request(ret, st.last_ns, st.interval_ns)
                requests[h] = (min(req_ns, stop_ns), wait)
    finally:
        if pool is not None:
            pool.shutdown()
    return federation.log
