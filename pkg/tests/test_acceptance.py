"""Acceptance criteria AC-1 to AC-7.

Each test checks its criterion at the stated tolerance and runtime budget
and prints one ``AC-n PASS`` or ``AC-n FAIL`` line (visible under
``pytest -v``; run this file directly for the summary alone).
"""

import math
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from dualrep.cli import main
from dualrep.controller import ControllerConfig, run_replay
from dualrep.demo import resample, time_scaled
from dualrep.jigs import JigRuntime, builtin_registry, diff, step, tick
from dualrep.metrics import directed_distance, dtw_mapping, hausdorff, jig_sync_error, positions
from dualrep.plant import PlantConfig, PlantSim
from dualrep.runner import scenario_run
from dualrep.scenarios import load_scenario, synthesize

import oracles


@contextmanager
def criterion(capsys, tag, budget_s, detail):
    """Time the block, enforce the budget and print one PASS/FAIL line."""
    t0 = time.perf_counter()
    try:
        yield detail
        elapsed = time.perf_counter() - t0
        assert elapsed < budget_s, f"took {elapsed:.2f} s, budget {budget_s} s"
    except BaseException as exc:
        elapsed = time.perf_counter() - t0
        with capsys.disabled():
            print(f"\n{tag} FAIL ({elapsed:.2f} s / {budget_s} s): {exc}".rstrip())
        raise
    with capsys.disabled():
        info = ", ".join(f"{k}={v}" for k, v in detail.items())
        print(f"\n{tag} PASS ({elapsed:.2f} s / {budget_s} s): {info}")


def test_ac1_success_rate(capsys):
    with criterion(capsys, "AC-1", 10.0, {}) as info:
        for name in ("bottle", "pipetting"):
            res = scenario_run(load_scenario(name))
            ev = res.evaluation
            assert res.controller == ControllerConfig()
            assert (res.controller.alpha, res.controller.epsilon, res.controller.loop_rate_hz) == (4.0, 1e-3, 20.0)
            assert res.plant.noise_stddev_pos == 0.0 and res.plant.command_latency_ticks == 0
            assert len(ev.trials) == 10
            for tr, t in zip(res.trajectories, ev.trials):
                assert t.success, f"{name} trial {t.trial}: {t.reason}"
                assert tr.metadata["outcome"] == "completed"
                assert tr.samples[-1].jig_state == res.demo.points[-1].jig_state
            info[name] = f"{ev.execution.success_count}/10"


def test_ac2_determinism(capsys, tmp_path):
    with criterion(capsys, "AC-2", 10.0, {}) as info:
        dirs = [tmp_path / "a", tmp_path / "b"]
        for d in dirs:
            main(["scenario", "run", "pipetting", "--out", str(d), "--no-plots",
                  "--seed", "42", "--noise-pos", "1e-4"])
        names = sorted(p.name for p in dirs[0].iterdir())
        assert names == sorted(p.name for p in dirs[1].iterdir())
        assert "report.json" in names and "trial_10.dr" in names
        for n in names:
            assert (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes(), n
        info["files"] = len(names)


def test_ac3_jig_sync(capsys):
    cfg = ControllerConfig()
    with criterion(capsys, "AC-3", 5.0, {}) as info:
        demos = {n: synthesize(load_scenario(n).script) for n in ("bottle", "pipetting")}
        for v_max, bound in ((0.25, 0.0135), (0.02, 2e-3)):
            pcfg = PlantConfig(v_max=v_max)
            assert cfg.epsilon + v_max * pcfg.dt == pytest.approx(bound)
            worst = 0.0
            for name, demo in demos.items():
                tr = run_replay(demo, PlantSim.for_demo(demo, pcfg), cfg)
                recs = jig_sync_error(demo, tr)
                assert recs
                worst = max(worst, max(r.distance for r in recs))
            assert worst <= bound, f"v_max={v_max}: {worst} > {bound}"
            info[f"max@{v_max}"] = f"{worst:.3g} m"


def test_ac4_hausdorff_oracle(capsys):
    rng = np.random.default_rng(20261015)
    with criterion(capsys, "AC-4", 30.0, {}) as info:
        sets = [rng.normal(scale=rng.uniform(0.01, 1.0), size=(rng.integers(1, 201), 3))
                for _ in range(1001)]
        # a share of near-duplicate sets exercises ties and zero distances
        for k in range(0, 1001, 10):
            sets[k] = np.vstack([sets[k - 1][: len(sets[k - 1]) // 2], sets[k][:5]]) if k else sets[k]
        worst = 0.0
        for k in range(1000):
            A, B, C = sets[k], sets[k + 1], sets[(k + 2) % 1001]
            got = hausdorff(A, B)
            want = oracles.hausdorff_dense(A, B)
            worst = max(worst, abs(got - want))
            assert abs(got - want) <= 1e-12, f"pair {k}: {got} vs {want}"
            assert hausdorff(A, A) == 0.0
            assert got == hausdorff(B, A)
            assert got <= hausdorff(A, C) + hausdorff(C, B) + 1e-12
        info["pairs"] = 1000
        info["max_abs_err"] = f"{worst:.1e}"


def test_ac5_dtw(capsys):
    rng = np.random.default_rng(7)
    with criterion(capsys, "AC-5", 20.0, {}) as info:
        for _ in range(200):
            X = rng.integers(-3, 4, size=(rng.integers(1, 8), 2)).astype(float).tolist()
            Y = rng.integers(-3, 4, size=(rng.integers(1, 8), 2)).astype(float).tolist()
            assert dtw_mapping(X, Y).total_cost == pytest.approx(oracles.dtw_bruteforce(X, Y), abs=1e-12)
        demo = synthesize(load_scenario("bottle").script)
        dilated = resample(time_scaled(demo, 2.8), demo.sample_rate_hz)
        fit = dtw_mapping(positions(demo), positions(dilated)).linear_fit
        assert fit[2] >= 0.99
        assert fit[0] == pytest.approx(2.8, rel=0.01)
        replay = run_replay(dilated, PlantSim.for_demo(dilated, PlantConfig()))
        fit2 = dtw_mapping(positions(demo), positions(replay)).linear_fit
        assert fit2[2] >= 0.99
        info["bruteforce_pairs"] = 200
        info["r2_dilated"] = f"{fit[2]:.4f}"
        info["slope"] = f"{fit[0]:.3f}"
        info["r2_replay_of_dilated"] = f"{fit2[2]:.4f}"


def test_ac6_fsm_conformance(capsys):
    reg = builtin_registry()
    with criterion(capsys, "AC-6", 1.0, {}) as info:
        plunger = reg["pipette_plunger"]
        rt = JigRuntime.start(plunger)
        seq = [rt.current]
        for _ in range(4):
            rt = step(rt, "advance", 0.0)
            seq.append(rt.current)
        assert seq == ["released", "pressed_1st", "released", "pressed_2nd", "released"]
        assert rt == JigRuntime.start(plunger)

        tip = step(JigRuntime.start(reg["tip_ejector"]), "press", 1.25)
        assert tick(tip, math.nextafter(4.25, 0.0)).current == "button_pressed"
        assert tick(tip, 4.25).current == "button_released"

        for jig in ("bottle_mounter", "flow_plumber"):
            d = reg[jig]
            for s in d.states:
                r0 = JigRuntime.start(d, s)
                assert step(step(r0, "toggle", 0.0), "toggle", 0.0).current == s

        checked = 0
        for jig, d in reg.items():
            for start in range(len(d.nodes)):
                for target, bound in oracles.fsm_shortest_commands(d, start).items():
                    r = JigRuntime(d, start, None)
                    n = 0
                    while r.current != target:
                        (cmd,) = diff({jig: target}, {jig: r.current}, reg)
                        r = step(r, cmd[1], 0.0)
                        n += 1
                        assert n <= bound
                    checked += 1
        info["diff_cases"] = checked


def test_ac7_noise_robustness(capsys):
    sigma = 1e-4
    with criterion(capsys, "AC-7", 20.0, {}) as info:
        res = scenario_run(load_scenario("bottle"), seed=0, dtw="none",
                           overrides={"plant": {"noise_stddev_pos": sigma},
                                      "controller": {"epsilon": 1e-3}})
        ok = [t.success for t in res.evaluation.trials]
        assert sum(ok) >= 9, f"{sum(ok)}/10 succeeded"
        bound = res.controller.epsilon + 6 * sigma + res.plant.v_max * res.plant.dt
        demo_pos = positions(res.demo)
        worst = 0.0
        for tr, good in zip(res.trajectories, ok):
            if good:
                d = directed_distance(demo_pos, positions(tr))
                worst = max(worst, d)
                assert d <= bound, f"{d} > {bound}"
        info["success"] = f"{sum(ok)}/10"
        info["directed_max"] = f"{worst:.4g} m (bound {bound:.4g})"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "--no-header", "-p", "no:cacheprovider"]))
