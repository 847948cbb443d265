import pytest

from dualrep.errors import FormatError, JigDefinitionError
from dualrep.jigs import (
    JigRegistry,
    JigRuntime,
    JigStateVector,
    Timer,
    builtin_jigs,
    builtin_registry,
    diff,
    load_registry,
    parse_jig_definition,
    parse_jig_definitions,
    step,
    tick,
)

from oracles import fsm_shortest_commands

TOGGLE = """
# a minimal toggle
jig lamp
states: off, on
initial: off
commands: flip
on flip: off -> on
on flip: on -> off
"""


def test_builtin_set():
    defs = builtin_jigs()
    assert [d.id for d in defs] == ["pipette_plunger", "tip_ejector", "bottle_mounter", "flow_plumber"]
    by = {d.id: d for d in defs}
    assert by["pipette_plunger"].states == ("released", "pressed_1st", "pressed_2nd")
    assert set(by["flow_plumber"].states) == {"sampling", "disposal"}
    assert set(by["bottle_mounter"].states) == {"locked", "unlocked"}
    assert {d.id: d.initial for d in defs} == {
        "pipette_plunger": "released", "tip_ejector": "button_released",
        "bottle_mounter": "unlocked", "flow_plumber": "disposal",
    }
    assert len(by["pipette_plunger"].command_rules()) == 4
    assert by["pipette_plunger"].commands == ("advance",)


def test_tip_ejector_timer_is_three_seconds():
    d = builtin_registry()["tip_ejector"]
    (rule,) = d.timer_rules()
    assert isinstance(rule.trigger, Timer)
    assert rule.trigger.delay == 3.0
    assert (rule.source, rule.target) == ("button_pressed", "button_released")


def test_parse_toggle():
    d = parse_jig_definition(TOGGLE)
    assert d.id == "lamp"
    assert d.states == ("off", "on")
    assert len(d.command_rules()) == 2
    assert not d.timer_rules()


def test_parse_is_whitespace_insensitive():
    text = "jig   lamp\n  states :off ,on\ninitial:off\ncommands:flip\non flip:off->on\n on  flip : on  ->  off \n"
    assert parse_jig_definition(text).states == parse_jig_definition(TOGGLE).states


def test_unknown_state_is_named():
    bad = TOGGLE.replace("on flip: on -> off", "on flip: on -> dim")
    with pytest.raises(JigDefinitionError, match="'dim'"):
        parse_jig_definition(bad)


def test_nondeterministic_pair_rejected():
    bad = TOGGLE + "on flip: off -> off\n"
    with pytest.raises(JigDefinitionError, match="nondeterministic"):
        parse_jig_definition(bad)


def test_duplicate_timer_rejected():
    text = TOGGLE + "after 1.0s: on -> off\nafter 2.0s: on -> off\n"
    with pytest.raises(JigDefinitionError, match="timer"):
        parse_jig_definition(text)


def test_syntax_error_has_line_number():
    with pytest.raises(FormatError, match="line 4"):
        parse_jig_definitions("jig lamp\nstates: off, on\ninitial: off\nwhat is this\n")


def test_invalid_names():
    with pytest.raises(FormatError):
        parse_jig_definitions("jig Lamp\nstates: off, on\ninitial: off\n")


def test_unknown_initial():
    with pytest.raises(JigDefinitionError, match="initial"):
        parse_jig_definition("jig lamp\nstates: off, on\ninitial: dim\n")


def test_undeclared_trigger_rejected():
    with pytest.raises(JigDefinitionError, match="push"):
        parse_jig_definition(TOGGLE + "on push: off -> on\n")


def test_nonpositive_timer_rejected():
    with pytest.raises((JigDefinitionError, FormatError)):
        parse_jig_definition(TOGGLE.replace("on flip: on -> off", "after 0s: on -> off"))


def test_ambiguous_multi_command_jig_rejected():
    text = """
jig valve
states: shut, open
initial: shut
commands: a, b
on a: shut -> open
on b: shut -> open
on a: open -> shut
"""
    with pytest.raises(JigDefinitionError, match="several commands"):
        parse_jig_definition(text)


def test_multi_command_jig_unique_targets():
    text = """
jig valve
states: shut, left, right
initial: shut
commands: l, r, c
on l: shut -> left
on r: shut -> right
on c: left -> shut
on c: right -> shut
"""
    d = parse_jig_definition(text)
    assert d.advancing_command("shut", "left") == "l"
    assert d.advancing_command("shut", "right") == "r"
    assert d.advancing_command("left", "right") == "c"


def test_cycle_must_close():
    with pytest.raises(FormatError):
        parse_jig_definition(
            "jig p\nstates: a, b\ninitial: a\ncommands: go\ncycle go: a -> b -> a -> b\n")


def test_duplicate_jig_id():
    with pytest.raises(JigDefinitionError, match="duplicate"):
        JigRegistry(parse_jig_definitions(TOGGLE + TOGGLE))


# -- runtime ---------------------------------------------------------------


def visible_sequence(defn, commands, now=0.0):
    rt = JigRuntime.start(defn)
    seq = [rt.current]
    for c in commands:
        rt = step(rt, c, now)
        seq.append(rt.current)
    return seq, rt


def test_plunger_four_cycle(registry):
    seq, rt = visible_sequence(registry["pipette_plunger"], ["advance"] * 4)
    assert seq == ["released", "pressed_1st", "released", "pressed_2nd", "released"]
    assert rt == JigRuntime.start(registry["pipette_plunger"])


@pytest.mark.parametrize("jig", ["bottle_mounter", "flow_plumber"])
def test_toggle_is_involution(registry, jig):
    d = registry[jig]
    for s in d.states:
        rt = JigRuntime.start(d, s)
        assert step(step(rt, "toggle", 0.0), "toggle", 0.0).current == s
        assert step(rt, "toggle", 0.0).current != s


def test_tip_press_sets_deadline_and_timer_returns(registry):
    rt = JigRuntime.start(registry["tip_ejector"])
    assert rt.timer_deadline is None
    rt = step(rt, "press", 5.0)
    assert rt.current == "button_pressed"
    assert rt.timer_deadline == 8.0
    assert tick(rt, 7.99) is rt
    fired = tick(rt, 8.0)
    assert fired.current == "button_released"
    assert fired.timer_deadline is None


def test_tick_without_deadline_is_identity(registry):
    rt = JigRuntime.start(registry["bottle_mounter"])
    assert tick(rt, 1e9) is rt


def test_press_while_pressed_is_noop(registry):
    rt = step(JigRuntime.start(registry["tip_ejector"]), "press", 1.0)
    assert step(rt, "press", 2.0) is rt


def test_undeclared_command_raises(registry):
    rt = JigRuntime.start(registry["bottle_mounter"])
    with pytest.raises(FormatError, match="advance"):
        step(rt, "advance", 0.0)


def test_runtime_is_deterministic(registry):
    d = registry["pipette_plunger"]
    cmds = ["advance"] * 11
    assert visible_sequence(d, cmds) == visible_sequence(d, cmds)


# -- state vectors and diff ----------------------------------------------------


def test_state_vector_value_semantics(registry):
    a = registry.initial_states()
    b = JigStateVector(dict(a))
    assert a == b and hash(a) == hash(b)
    c = a.replace("bottle_mounter", "locked")
    assert c["bottle_mounter"] == "locked" and a["bottle_mounter"] == "unlocked"
    assert list(c) == list(a)
    with pytest.raises(TypeError):
        a["bottle_mounter"] = "locked"  # type: ignore[index]


def test_registry_validate(registry):
    s = dict(registry.initial_states())
    registry.validate(s)
    with pytest.raises(FormatError, match="melted"):
        registry.validate({**s, "bottle_mounter": "melted"})
    with pytest.raises(FormatError):
        registry.validate({**s, "centrifuge": "idle"})


def test_diff_equal_is_empty(registry):
    for jig, d in registry.items():
        for s in d.states:
            v = registry.initial_states().replace(jig, s)
            assert diff(v, v, registry) == ()


def test_diff_plunger(registry):
    cur = registry.initial_states()
    want = cur.replace("pipette_plunger", "pressed_1st")
    assert diff(want, cur, registry) == (("pipette_plunger", "advance"),)


def test_diff_one_command_per_jig(registry):
    cur = registry.initial_states()
    want = cur.replace("bottle_mounter", "locked").replace("flow_plumber", "sampling")
    out = diff(want, cur, registry)
    assert sorted(out) == [("bottle_mounter", "toggle"), ("flow_plumber", "toggle")]


def test_diff_waits_for_timer(registry):
    cur = registry.initial_states().replace("tip_ejector", "button_pressed")
    want = cur.replace("tip_ejector", "button_released")
    assert diff(want, cur, registry) == ()


def test_diff_mismatched_ids(registry):
    cur = registry.initial_states()
    with pytest.raises(FormatError):
        diff({"bottle_mounter": "locked"}, cur, registry)


def test_diff_pressed_2nd_converges_over_ticks(registry):
    d = registry["pipette_plunger"]
    rt = JigRuntime.start(d)
    want = {"pipette_plunger": "pressed_2nd"}
    issued = 0
    while rt.current != "pressed_2nd":
        cmds = diff(want, {"pipette_plunger": rt.current}, registry)
        assert cmds == (("pipette_plunger", "advance"),)
        rt = step(rt, "advance", 0.0)
        issued += 1
    assert issued == 3


def test_diff_then_step_converges_within_bruteforce_bound(registry):
    for jig, d in registry.items():
        for start in range(len(d.nodes)):
            reach = fsm_shortest_commands(d, start)
            bound = len(d.nodes)
            for target, shortest in reach.items():
                rt = JigRuntime(d, start, None)
                n = 0
                while rt.current != target:
                    cmds = diff({jig: target}, {jig: rt.current}, registry)
                    assert len(cmds) == 1
                    rt = step(rt, cmds[0][1], 0.0)
                    n += 1
                    assert n <= bound
                assert n == shortest


def test_load_registry_from_file(tmp_path):
    p = tmp_path / "lamp.dsl"
    p.write_text(TOGGLE)
    reg = load_registry(str(p))
    assert list(reg) == ["lamp"]
    assert reg.initial_states() == {"lamp": "off"}
    assert load_registry("builtin").ref == "builtin"
