import math
import warnings

import pytest

from dualrep import quat
from dualrep.demo import save_demonstration
from dualrep.errors import FormatError
from dualrep.metrics import demo_transitions
from dualrep.scenarios import (
    BUILTIN_SCENARIOS,
    Dwell,
    JigCmd,
    MoveTo,
    Relocate,
    load_scenario,
    parse_scenario,
    synthesize,
)

HEAD = "scenario t\nstart pos 0 0 0 grip 40\n"


def script(body, head=HEAD):
    return parse_scenario(head + body).script


def visible_transitions(demo):
    """Every jig state change in sample order, timer returns included."""
    out = []
    pts = demo.points
    for n in range(1, len(pts)):
        a, b = pts[n - 1].jig_state, pts[n].jig_state
        for j in demo.registry:
            if a[j] != b[j]:
                out.append((j, a[j], b[j]))
    return out


# -- grammar ---------------------------------------------------------------


def test_parse_events():
    s = script("move 1 pos 0.1 0 0 rot 0 0 1 90 grip 20\ndwell 0.5\njig bottle_mounter toggle\n"
               "relocate ws2 pos 1 1 1\nmove 0.5 by 0 0 0.1 turn 0 0 1 -90\n")
    kinds = [type(e) for e in s.events]
    assert kinds == [MoveTo, Dwell, JigCmd, Relocate, MoveTo]
    m = s.events[0]
    assert m.pose.position == (0.1, 0.0, 0.0) and m.gripper.width == 20.0
    assert quat.angle_between(m.pose.orientation, quat.from_axis_angle((0, 0, 1), math.pi / 2)) < 1e-12
    last = s.events[-1]
    assert last.pose.position == pytest.approx((1, 1, 1.1))
    assert quat.angle_between(last.pose.orientation, quat.IDENTITY) < 1e-12
    assert last.gripper.width == 20.0
    assert s.duration == 2.0


def test_header_fields():
    sc = parse_scenario("scenario demo1\ndescription two words\nrate 60\ntrials 4\nworkspace a\n"
                        "start pos 0 0 0 grip 1\nexpect bottle_mounter=locked\n"
                        "set controller.alpha 2\nset plant.v_max 0.1\n")
    assert (sc.name, sc.description, sc.trials) == ("demo1", "two words", 4)
    assert sc.script.sample_rate_hz == 60 and sc.script.start_workspace == "a"
    assert sc.expected_final == {"bottle_mounter": "locked"}
    assert sc.overrides == {"controller": {"alpha": 2.0}, "plant": {"v_max": 0.1}}


@pytest.mark.parametrize("body, pattern", [
    ("move 0 pos 0 0 0\n", "duration"),
    ("move 1 to 0 0 0\n", "line 3"),
    ("jig centrifuge spin\n", "centrifuge"),
    ("jig bottle_mounter advance\n", "advance"),
    ("wobble 3\n", "unknown directive"),
    ("dwell x\n", "line 3"),
    ("dwell 1 2\n", "unexpected"),
    ("set plant.colour 3\n", "colour"),
    ("expect bottle_mounter=ajar\n", "ajar"),
])
def test_grammar_errors(body, pattern):
    with pytest.raises(FormatError, match=pattern):
        script(body)


def test_missing_header_lines():
    with pytest.raises(FormatError, match="scenario"):
        parse_scenario("start pos 0 0 0 grip 1\n")
    with pytest.raises(FormatError, match="start"):
        parse_scenario("scenario x\n")
    with pytest.raises(FormatError, match="before 'start'"):
        parse_scenario("scenario x\ndwell 1\n")


def test_unknown_scenario_lists_builtins():
    with pytest.raises(FormatError) as exc:
        load_scenario("centrifuge")
    for name in BUILTIN_SCENARIOS:
        assert name in str(exc.value)


def test_scenario_from_file(tmp_path):
    p = tmp_path / "mine.scn"
    p.write_text("start pos 0 0 0 grip 1\ndwell 1\n")
    assert load_scenario(p).name == "mine"  # file stem when unnamed
    p.write_text("scenario mine\nstart pos 0 0 0 grip 1\ndwell 1\n")
    assert load_scenario(p).name == "mine"


def test_custom_registry_path(tmp_path):
    (tmp_path / "lamp.dsl").write_text(
        "jig lamp\nstates: off, on\ninitial: off\ncommands: flip\non flip: off -> on\non flip: on -> off\n")
    p = tmp_path / "lamp.scn"
    p.write_text("scenario lamp\nregistry lamp.dsl\nstart pos 0 0 0 grip 1\ndwell 0.5\n"
                 "jig lamp flip\ndwell 0.5\nexpect lamp=on\n")
    demo = synthesize(load_scenario(p).script)
    assert demo.points[-1].jig_state == {"lamp": "on"}


# -- synthesis ---------------------------------------------------------------


def test_two_waypoints_one_second_at_120hz():
    demo = synthesize(script("move 1 pos 1 0 0\n"))
    assert len(demo.points) == 121
    assert demo.points[0].pose.position == (0.0, 0.0, 0.0)
    assert demo.points[-1].pose.position == (1.0, 0.0, 0.0)
    assert demo.points[60].pose.position == pytest.approx((0.5, 0, 0), abs=1e-15)


def test_jig_flip_is_stamped_from_the_event_on():
    demo = synthesize(script("move 1 pos 0.1 0 0\njig bottle_mounter toggle\nmove 1 pos 0 0 0\n"))
    first = next(k for k, p in enumerate(demo.points) if p.jig_state["bottle_mounter"] == "locked")
    assert demo.points[first - 1].t < 1.0 <= demo.points[first].t
    assert all(p.jig_state["bottle_mounter"] == "locked" for p in demo.points[first:])


def test_non_integral_length_keeps_final_instant():
    demo = synthesize(script("move 0.013 pos 1 0 0\n"))
    assert demo.points[-1].t == pytest.approx(0.013)
    assert demo.points[-1].pose.position == (1.0, 0.0, 0.0)


def test_ineffective_command_warns_and_is_noop():
    with pytest.warns(UserWarning, match="no effect"):
        demo = synthesize(script("dwell 0.5\njig tip_ejector press\ndwell 0.5\njig tip_ejector press\n"
                                 "dwell 4\n"))
    assert [t[2] for t in visible_transitions(demo)] == ["button_pressed", "button_released"]


def test_demo_timer_runs_on_demo_clock():
    demo = synthesize(script("dwell 1\njig tip_ejector press\ndwell 5\n"))
    changes = [(p.t, p.jig_state["tip_ejector"]) for a, p in zip(demo.points, demo.points[1:])
               if a.jig_state != p.jig_state]
    assert changes == [(1.0, "button_pressed"), (pytest.approx(4.0), "button_released")]


def test_relocation_metadata():
    demo = synthesize(script("dwell 1\nrelocate ws2 pos 1 0 0\ndwell 1\n"))
    (r,) = demo.relocations
    assert r["workspace"] == "ws2"
    assert demo.points[r["index"]].pose.position == (1.0, 0.0, 0.0)
    assert demo.points[r["index"] - 1].pose.position == (0.0, 0.0, 0.0)
    assert [s["workspace"] for s in demo.metadata["segments"]] == ["ws1", "ws2"]


@pytest.mark.parametrize("name", BUILTIN_SCENARIOS)
def test_synthesis_is_bit_identical(tmp_path, name):
    sc = load_scenario(name)
    a, b = tmp_path / "a.dr", tmp_path / "b.dr"
    save_demonstration(synthesize(sc.script), a)
    save_demonstration(synthesize(load_scenario(name).script), b)
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("name", BUILTIN_SCENARIOS)
def test_builtin_scripts_are_clean(name):
    sc = load_scenario(name)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        demo = synthesize(sc.script)
    final = demo.points[-1].jig_state
    assert {j: final[j] for j in sc.expected_final} == sc.expected_final
    lo = min(min(p.pose.position) for p in demo.points)
    hi = max(max(p.pose.position) for p in demo.points)
    assert -1.0 <= lo and hi <= 1.0


def test_default_trial_counts():
    assert [load_scenario(n).trials for n in BUILTIN_SCENARIOS] == [10, 10, 3]


def test_bottle_plunger_idle_mounter_twice(bottle_demo):
    tr = demo_transitions(bottle_demo)
    assert tr["pipette_plunger"] == []
    assert [(a, b) for _, a, b in tr["bottle_mounter"]] == [("unlocked", "locked"), ("locked", "unlocked")]


def test_pipetting_uses_plunger_cycle_and_tip_press(pipetting_demo):
    seq = [s for j, _, s in visible_transitions(pipetting_demo) if j == "pipette_plunger"]
    assert len(seq) % 4 == 0 and seq
    assert seq[:4] == ["pressed_1st", "released", "pressed_2nd", "released"]
    assert any(j == "tip_ejector" for j, _, _ in visible_transitions(pipetting_demo))


LOCK = [("bottle_mounter", "unlocked", "locked"), ("bottle_mounter", "locked", "unlocked")]
PLUNGER = [("pipette_plunger", "released", "pressed_1st"), ("pipette_plunger", "pressed_1st", "released"),
           ("pipette_plunger", "released", "pressed_2nd"), ("pipette_plunger", "pressed_2nd", "released")]
TIP = [("tip_ejector", "button_released", "button_pressed"),
       ("tip_ejector", "button_pressed", "button_released")]


def test_polymer_transition_sequence():
    demo = synthesize(load_scenario("polymer-e2e").script)
    ws1 = [LOCK[0], ("flow_plumber", "disposal", "sampling"), ("flow_plumber", "sampling", "disposal"),
           LOCK[1]]
    ws2 = LOCK * 2
    ws3 = PLUNGER + TIP + PLUNGER + TIP + LOCK * 2
    assert visible_transitions(demo) == ws1 + ws2 + ws3
    assert [r["workspace"] for r in demo.relocations] == ["ws2", "ws3"]
