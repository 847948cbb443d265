"""Declarative finite-state machines for laboratory jigs.

A jig is described in a small text DSL::

    jig bottle_mounter
    states: locked, unlocked
    initial: unlocked
    commands: toggle
    on toggle: unlocked -> locked
    on toggle: locked -> unlocked

Besides ``on`` (command) and ``after <delay>s`` (timer) transitions, a
``cycle`` line lets one command walk a loop that revisits a state, e.g. the
pipette plunger's ``released -> pressed_1st -> released -> pressed_2nd ->
released``.  Internally every state occurrence in a cycle becomes its own
node (phase), so the machine stays deterministic while observers only ever
see the visible state names.
"""

from __future__ import annotations

import logging
import re
from collections import deque
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .errors import FormatError, JigDefinitionError

log = logging.getLogger(__name__)

_NAME = r"[a-z0-9_]+"
_NAME_RE = re.compile(rf"^{_NAME}$")


@dataclass(frozen=True)
class Command:
    name: str


@dataclass(frozen=True)
class Timer:
    delay: float

    def __post_init__(self) -> None:
        if not self.delay > 0:
            raise JigDefinitionError(f"timer delay must be > 0, got {self.delay}")


@dataclass(frozen=True)
class TransitionRule:
    source: str
    trigger: Union[Command, Timer]
    target: str
    cycle: Optional[int] = None
    """Group number for edges generated by one ``cycle`` line, in walk order."""

    @property
    def cyclic(self) -> bool:
        return self.cycle is not None


@dataclass(frozen=True)
class JigDefinition:
    """Validated jig FSM.

    Construction compiles the rules into a node graph; invalid or
    nondeterministic definitions raise :class:`JigDefinitionError`.
    """

    id: str
    states: tuple[str, ...]
    initial: str
    commands: tuple[str, ...]
    transitions: tuple[TransitionRule, ...]

    nodes: tuple[str, ...] = field(init=False, repr=False, compare=False)
    _cmd_edges: dict = field(init=False, repr=False, compare=False)
    _timer_edges: dict = field(init=False, repr=False, compare=False)
    _advance: dict = field(init=False, repr=False, compare=False)
    _first_node: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "commands", tuple(self.commands))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        self._validate()
        self._compile()

    # -- validation -----------------------------------------------------

    def _validate(self) -> None:
        where = f"jig {self.id!r}"
        if not _NAME_RE.match(self.id):
            raise JigDefinitionError(f"invalid jig id {self.id!r}")
        if not self.states:
            raise JigDefinitionError(f"{where}: no states declared")
        for names, kind in ((self.states, "state"), (self.commands, "command")):
            seen = set()
            for n in names:
                if not _NAME_RE.match(n):
                    raise JigDefinitionError(f"{where}: invalid {kind} name {n!r}")
                if n in seen:
                    raise JigDefinitionError(f"{where}: duplicate {kind} {n!r}")
                seen.add(n)
        if self.initial not in self.states:
            raise JigDefinitionError(f"{where}: unknown initial state {self.initial!r}")
        plain: set[tuple[str, str]] = set()
        timed: set[str] = set()
        for rule in self.transitions:
            for s in (rule.source, rule.target):
                if s not in self.states:
                    raise JigDefinitionError(f"{where}: unknown state {s!r}")
            if isinstance(rule.trigger, Command):
                if rule.trigger.name not in self.commands:
                    raise JigDefinitionError(f"{where}: unknown command {rule.trigger.name!r}")
                if not rule.cyclic:
                    key = (rule.source, rule.trigger.name)
                    if key in plain:
                        raise JigDefinitionError(
                            f"{where}: nondeterministic transition on {key[1]!r} from {key[0]!r}"
                        )
                    plain.add(key)
            else:
                if rule.cyclic:
                    raise JigDefinitionError(f"{where}: timer edges cannot be cyclic")
                if rule.source in timed:
                    raise JigDefinitionError(f"{where}: duplicate timer on state {rule.source!r}")
                timed.add(rule.source)

    def _cycles(self) -> list[tuple[str, list[str]]]:
        groups: dict[int, list[TransitionRule]] = {}
        for rule in self.transitions:
            if rule.cyclic:
                groups.setdefault(rule.cycle, []).append(rule)
        cycles = []
        for rules in groups.values():
            cmd = rules[0].trigger.name  # type: ignore[union-attr]
            seq = [rules[0].source]
            for r in rules:
                if r.trigger.name != cmd or r.source != seq[-1]:  # type: ignore[union-attr]
                    raise JigDefinitionError(f"jig {self.id!r}: broken cycle on {cmd!r}")
                seq.append(r.target)
            if seq[-1] != seq[0]:
                raise JigDefinitionError(f"jig {self.id!r}: cycle on {cmd!r} does not close")
            cycles.append((cmd, seq[:-1]))
        return cycles

    def _compile(self) -> None:
        where = f"jig {self.id!r}"
        cycles = self._cycles()
        nodes: list[str] = []
        cmd_edges: dict[tuple[int, str], int] = {}
        in_cycle: set[str] = set()
        for cmd, seq in cycles:
            if in_cycle.intersection(seq):
                raise JigDefinitionError(f"{where}: a state may belong to one cycle only")
            in_cycle.update(seq)
            base = len(nodes)
            nodes.extend(seq)
            for i in range(len(seq)):
                cmd_edges[(base + i, cmd)] = base + (i + 1) % len(seq)
        for s in self.states:
            if s not in in_cycle:
                nodes.append(s)
        first: dict[str, int] = {}
        for i, s in enumerate(nodes):
            first.setdefault(s, i)
        timer_edges: dict[int, tuple[float, int]] = {}
        for rule in self.transitions:
            if rule.cyclic:
                continue
            for i, s in enumerate(nodes):
                if s != rule.source:
                    continue
                if isinstance(rule.trigger, Command):
                    key = (i, rule.trigger.name)
                    if key in cmd_edges:
                        raise JigDefinitionError(
                            f"{where}: nondeterministic transition on {rule.trigger.name!r} "
                            f"from {s!r}"
                        )
                    cmd_edges[key] = first[rule.target]
                else:
                    timer_edges[i] = (rule.trigger.delay, first[rule.target])
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "_cmd_edges", cmd_edges)
        object.__setattr__(self, "_timer_edges", timer_edges)
        object.__setattr__(self, "_first_node", first)
        object.__setattr__(self, "_advance", self._advancing_commands())

    def _advancing_commands(self) -> dict[tuple[str, str], str]:
        """Map (current, target) visible states to the single command to send.

        The command is the first step of a shortest command path; targets
        reachable only through timers are omitted.
        """
        table: dict[tuple[str, str], set[str]] = {}
        for start, visible in enumerate(self.nodes):
            dist = {start: 0}
            first_cmd: dict[int, set[str]] = {start: set()}
            queue = deque([start])
            while queue:
                node = queue.popleft()
                for cmd in self.commands:
                    nxt = self._cmd_edges.get((node, cmd))
                    if nxt is None:
                        continue
                    firsts = {cmd} if node == start else first_cmd[node]
                    if nxt not in dist:
                        dist[nxt] = dist[node] + 1
                        first_cmd[nxt] = set(firsts)
                        queue.append(nxt)
                    elif dist[nxt] == dist[node] + 1:
                        first_cmd[nxt] |= firsts
            best: dict[str, int] = {}
            for node, d in dist.items():
                tgt = self.nodes[node]
                if tgt != visible and d < best.get(tgt, d + 1):
                    best[tgt] = d
            for node, d in dist.items():
                tgt = self.nodes[node]
                if tgt in best and best[tgt] == d:
                    table.setdefault((visible, tgt), set()).update(first_cmd[node])
        out: dict[tuple[str, str], str] = {}
        for key, cmds in table.items():
            if len(cmds) > 1:
                raise JigDefinitionError(
                    f"jig {self.id!r}: state {key[1]!r} is reachable from {key[0]!r} "
                    f"by several commands ({', '.join(sorted(cmds))})"
                )
            out[key] = next(iter(cmds))
        return out

    # -- queries --------------------------------------------------------

    def command_rules(self) -> list[TransitionRule]:
        return [r for r in self.transitions if isinstance(r.trigger, Command)]

    def timer_rules(self) -> list[TransitionRule]:
        return [r for r in self.transitions if isinstance(r.trigger, Timer)]

    def timer_from(self, state: str) -> Optional[TransitionRule]:
        for r in self.timer_rules():
            if r.source == state:
                return r
        return None

    def advancing_command(self, current: str, target: str) -> Optional[str]:
        """Command that moves ``current`` toward ``target``; None when only a timer can."""
        if current == target:
            return None
        return self._advance.get((current, target))

    def is_command_transition(self, source: str, target: str) -> bool:
        return any(r.source == source and r.target == target for r in self.command_rules())

    def node_of(self, state: str) -> int:
        try:
            return self._first_node[state]
        except KeyError:
            raise FormatError(f"jig {self.id!r} has no state {state!r}") from None


# -- runtime -------------------------------------------------------------


@dataclass(frozen=True)
class JigRuntime:
    """Immutable snapshot of one jig: its node (phase) and pending timer."""

    definition: JigDefinition
    node: int
    timer_deadline: Optional[float] = None

    @classmethod
    def start(
        cls, definition: JigDefinition, state: Optional[str] = None, now: float = 0.0
    ) -> "JigRuntime":
        node = definition.node_of(state if state is not None else definition.initial)
        return cls(definition, node, _deadline(definition, node, now))

    @property
    def current(self) -> str:
        return self.definition.nodes[self.node]

    @property
    def id(self) -> str:
        return self.definition.id


def _deadline(defn: JigDefinition, node: int, now: float) -> Optional[float]:
    edge = defn._timer_edges.get(node)
    return None if edge is None else now + edge[0]


def step(rt: JigRuntime, command: str, now: float) -> JigRuntime:
    """Apply ``command``; commands without a transition from here are no-ops."""
    defn = rt.definition
    if command not in defn.commands:
        raise FormatError(f"jig {defn.id!r} has no command {command!r}")
    nxt = defn._cmd_edges.get((rt.node, command))
    if nxt is None:
        log.debug("jig %s ignored %r in state %s", defn.id, command, rt.current)
        return rt
    return JigRuntime(defn, nxt, _deadline(defn, nxt, now))


def tick(rt: JigRuntime, now: float) -> JigRuntime:
    """Fire the pending timer if ``now`` has reached its deadline.

    At most one timer fires per call; a follow-on timer is scheduled from
    the fired deadline.
    """
    if rt.timer_deadline is None or now < rt.timer_deadline:
        return rt
    defn = rt.definition
    _, nxt = defn._timer_edges[rt.node]
    return JigRuntime(defn, nxt, _deadline(defn, nxt, rt.timer_deadline))


# -- registry and state vectors -----------------------------------------


class JigRegistry(Mapping[str, JigDefinition]):
    """Ordered collection of jig definitions keyed by id.

    ``ref`` is what files record to find the registry again: ``"builtin"``
    or a path to a ``.dsl`` file.
    """

    def __init__(self, definitions: Iterable[JigDefinition], ref: str = "builtin"):
        self._defs: dict[str, JigDefinition] = {}
        for d in definitions:
            if d.id in self._defs:
                raise JigDefinitionError(f"duplicate jig id {d.id!r}")
            self._defs[d.id] = d
        self.ref = ref

    def __getitem__(self, key: str) -> JigDefinition:
        return self._defs[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._defs)

    def __len__(self) -> int:
        return len(self._defs)

    def __repr__(self) -> str:
        return f"JigRegistry({list(self._defs)}, ref={self.ref!r})"

    def initial_states(self) -> "JigStateVector":
        return JigStateVector((k, d.initial) for k, d in self._defs.items())

    def validate(self, vector: Mapping[str, str]) -> None:
        if set(vector) != set(self._defs):
            raise FormatError(
                f"jig ids {sorted(vector)} do not match registry {sorted(self._defs)}"
            )
        for jig, state in vector.items():
            if state not in self._defs[jig].states:
                raise FormatError(f"unknown state {state!r} for jig {jig!r}")


class JigStateVector(Mapping[str, str]):
    """Immutable ordered map jig-id -> visible state name."""

    __slots__ = ("_items", "_map")

    def __init__(self, entries: Union[Mapping[str, str], Iterable[tuple[str, str]]] = ()):
        items = tuple(entries.items() if isinstance(entries, Mapping) else entries)
        self._items: tuple[tuple[str, str], ...] = items
        self._map = dict(items)
        if len(self._map) != len(items):
            raise FormatError("duplicate jig id in state vector")

    def __getitem__(self, key: str) -> str:
        return self._map[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._map)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, JigStateVector):
            return self._map == other._map
        if isinstance(other, Mapping):
            return self._map == dict(other.items())
        return NotImplemented

    def __hash__(self) -> int:
        return hash(frozenset(self._items))

    def __repr__(self) -> str:
        return f"JigStateVector({dict(self._items)})"

    def replace(self, jig: str, state: str) -> "JigStateVector":
        if jig not in self._map:
            raise KeyError(jig)
        return JigStateVector((k, state if k == jig else v) for k, v in self._items)


JigCommandSet = tuple[tuple[str, str], ...]


def diff(
    demo_state: Mapping[str, str], current_state: Mapping[str, str], registry: Mapping[str, JigDefinition]
) -> JigCommandSet:
    """Commands that move each mismatched jig one step toward the demonstrated state.

    Jigs that already match, and jigs that can only get there through a
    timer, contribute nothing.  At most one command per jig.
    """
    if set(demo_state) != set(current_state):
        raise FormatError(
            f"jig id sets differ: {sorted(demo_state)} vs {sorted(current_state)}"
        )
    out = []
    for jig, want in demo_state.items():
        have = current_state[jig]
        if have == want:
            continue
        cmd = registry[jig].advancing_command(have, want)
        if cmd is not None:
            out.append((jig, cmd))
    return tuple(out)


# -- DSL -----------------------------------------------------------------

_LINE_PATTERNS = {
    "jig": re.compile(rf"^jig\s+(?P<id>{_NAME})$"),
    "states": re.compile(r"^states\s*:\s*(?P<names>.+)$"),
    "initial": re.compile(rf"^initial\s*:\s*(?P<name>{_NAME})$"),
    "commands": re.compile(r"^commands\s*:\s*(?P<names>.+)$"),
    "on": re.compile(rf"^on\s+(?P<cmd>{_NAME})\s*:\s*(?P<src>{_NAME})\s*->\s*(?P<dst>{_NAME})$"),
    "cycle": re.compile(rf"^cycle\s+(?P<cmd>{_NAME})\s*:\s*(?P<chain>.+)$"),
    "after": re.compile(
        rf"^after\s+(?P<delay>[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*s\s*:\s*"
        rf"(?P<src>{_NAME})\s*->\s*(?P<dst>{_NAME})$"
    ),
}


def _split_names(text: str, lineno: int) -> list[str]:
    names = [n.strip() for n in text.split(",")]
    for n in names:
        if not _NAME_RE.match(n):
            raise FormatError(f"line {lineno}: invalid name {n!r}")
    return names


def parse_jig_definitions(text: str) -> list[JigDefinition]:
    """Parse every ``jig`` block in ``text``."""
    blocks: list[dict] = []
    cur: Optional[dict] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, m = None, None
        for k, pat in _LINE_PATTERNS.items():
            m = pat.match(line)
            if m:
                kind = k
                break
        if m is None:
            raise FormatError(f"line {lineno}: syntax error: {raw.strip()!r}")
        if kind == "jig":
            cur = {"id": m["id"], "line": lineno, "states": None, "initial": None,
                   "commands": [], "rules": []}
            blocks.append(cur)
            continue
        if cur is None:
            raise FormatError(f"line {lineno}: {kind!r} outside a jig block")
        if kind == "states":
            cur["states"] = _split_names(m["names"], lineno)
        elif kind == "initial":
            cur["initial"] = m["name"]
        elif kind == "commands":
            cur["commands"] = _split_names(m["names"], lineno)
        elif kind == "on":
            cur["rules"].append(TransitionRule(m["src"], Command(m["cmd"]), m["dst"]))
        elif kind == "after":
            cur["rules"].append(TransitionRule(m["src"], Timer(float(m["delay"])), m["dst"]))
        elif kind == "cycle":
            chain = [s.strip() for s in m["chain"].split("->")]
            if len(chain) < 3 or any(not _NAME_RE.match(s) for s in chain):
                raise FormatError(f"line {lineno}: malformed cycle {m['chain']!r}")
            if chain[0] != chain[-1]:
                raise FormatError(f"line {lineno}: cycle must end where it starts")
            for a, b in zip(chain, chain[1:]):
                cur["rules"].append(TransitionRule(a, Command(m["cmd"]), b, cycle=lineno))
    defs = []
    for b in blocks:
        if b["states"] is None:
            raise FormatError(f"line {b['line']}: jig {b['id']!r} has no states line")
        defs.append(
            JigDefinition(
                id=b["id"],
                states=tuple(b["states"]),
                initial=b["initial"] if b["initial"] is not None else b["states"][0],
                commands=tuple(b["commands"]),
                transitions=tuple(b["rules"]),
            )
        )
    return defs


def parse_jig_definition(text: str) -> JigDefinition:
    """Parse text holding exactly one ``jig`` block."""
    defs = parse_jig_definitions(text)
    if len(defs) != 1:
        raise JigDefinitionError(f"expected one jig definition, found {len(defs)}")
    return defs[0]


def builtin_dsl() -> str:
    return resources.files("dualrep").joinpath("data/builtin.dsl").read_text()


def builtin_jigs() -> list[JigDefinition]:
    return parse_jig_definitions(builtin_dsl())


def builtin_registry() -> JigRegistry:
    return JigRegistry(builtin_jigs(), ref="builtin")


def load_registry(ref: Union[str, Path], base: Optional[Path] = None) -> JigRegistry:
    """Resolve a registry reference: ``"builtin"`` or a ``.dsl`` path."""
    if str(ref) == "builtin":
        return builtin_registry()
    path = Path(ref)
    if not path.is_absolute() and base is not None:
        path = base / path
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read jig registry {path}: {exc}") from exc
    return JigRegistry(parse_jig_definitions(text), ref=str(ref))

