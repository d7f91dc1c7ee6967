"""Acceptance suite: one group of tests per criterion, summarised at the end of the run."""

import json
import math

import numpy as np
import pytest

from oracles import brute_force_assignment

from aapa.alignment import FORBIDDEN, assignment_cost, solve_assignment
from aapa.anchoring import Status
from aapa.attachment import (
    ActionEvent,
    AttachDetachRegistry,
    AttachmentError,
    EMPTY,
    apply_action,
    hierarchy_timeline,
)
from aapa.cli import main
from aapa.evaluation import CATEGORIES, EvalReport, evaluate
from aapa.geometry import BoundingBox, ObjectClass, iou, l2_center
from aapa.guidance import build_tracking_vector, build_weight_matrix, column_mapping
from aapa.runner import make_config, run_scenario
from aapa.simulator import (
    CARRIED,
    PROFILES,
    SNITCH_CLASS,
    TEMPLATES,
    GeneratorParams,
    Keyframe,
    ObjectSpec,
    ScenarioScript,
    degrade,
    generate_scenario,
    render_ground_truth,
)


def criterion(n, title):
    return pytest.mark.criterion(n, title)


# --------------------------------------------------------------------------- 1


@criterion(1, "assignment optimality vs exhaustive oracle, 1000 matrices up to 6x6")
def test_assignment_matches_exhaustive_oracle():
    rng = np.random.default_rng(20240601)
    forbidden_seen = 0
    for _ in range(1000):
        r, c = rng.integers(1, 7, size=2)
        cost = rng.integers(0, 50, size=(r, c)).astype(float)
        cost[rng.random((r, c)) < rng.uniform(0, 0.6)] = FORBIDDEN
        forbidden_seen += int(np.isinf(cost).sum())
        pairs = solve_assignment(cost)
        card, best = brute_force_assignment(cost)
        assert len(pairs) == card
        assert assignment_cost(cost, pairs) == best
        assert all(np.isfinite(cost[i, j]) for i, j in pairs)
        assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == len(pairs)
    assert forbidden_seen > 0


# --------------------------------------------------------------------------- 2

GEARBOX = AttachDetachRegistry([("attach", "detach"), ("pick-up", "put-down")])


@criterion(2, "attachment hierarchy construction and hold interval")
def test_assembly_sequence_edges():
    h = EMPTY
    for i, (c, p, verb) in enumerate([("hubcover", "case", "attach"), ("subassembly", "case", "attach"),
                                      ("plug", "case", "attach"), ("case", "hand", "pick-up")]):
        h = apply_action(h, ActionEvent(i, verb, c, p), GEARBOX)
    assert h.edges == {("hubcover", "case"), ("subassembly", "case"), ("plug", "case"), ("case", "hand")}


@criterion(2, "attachment hierarchy construction and hold interval")
def test_pick_up_put_down_interval():
    acts = [ActionEvent(0, "pick-up", "obj", "hand"), ActionEvent(9, "put-down", "obj", "hand")]
    timeline = hierarchy_timeline(acts, GEARBOX, 12)
    held = [t for t, h in enumerate(timeline) if ("obj", "hand") in h.edges]
    assert held == list(range(9))
    assert all(len(h) == 0 for h in timeline[9:])


# --------------------------------------------------------------------------- 3


def _check_forest(edges):
    parent = {}
    for c, p in edges:
        assert c not in parent, f"{c} has two parents"
        parent[c] = p
    for start in parent:
        seen, node = {start}, parent[start]
        while node in parent:
            assert node not in seen, "cycle"
            seen.add(node)
            node = parent[node]
        assert node not in seen


@criterion(3, "hierarchy stays a forest under 10000 fuzzed action sequences")
def test_hierarchy_fuzz():
    rng = np.random.default_rng(7)
    nodes = [f"n{i}" for i in range(6)]
    accepted = rejected = 0
    for _ in range(10_000):
        h = EMPTY
        for t in range(int(rng.integers(1, 16))):
            c, p = rng.choice(len(nodes), size=2, replace=False)
            verb = "attach" if rng.random() < 0.65 else "detach"
            try:
                h = apply_action(h, ActionEvent(t, verb, nodes[c], nodes[p]), GEARBOX)
                accepted += 1
            except AttachmentError:
                rejected += 1
            _check_forest(h.edges)
    assert accepted > 10_000 and rejected > 1_000


# --------------------------------------------------------------------------- 4


def _final_identity(run):
    """Final anchor set as symbol -> denoted object, plus the number of symbols ever created."""
    final = run.states[-1]
    bound = {}
    for state in run.states:
        for a in state.anchors.values():
            bound.setdefault(a.id, set()).add(a.object_class.label)
    assert all(len(v) == 1 for v in bound.values()), "an anchor changed the object it denotes"
    return {a.object_class.label for a in final.anchors.values()}, len(final.anchors), final.next_id


@criterion(4, "flicker shorter than the disappear threshold leaves final anchors unchanged")
def test_flicker_robustness():
    cfg = make_config("aapa")
    profile = PROFILES["flicker"]
    assert profile.burst_max < cfg.disappear_threshold
    agree = 0
    for s in range(50):
        script = generate_scenario(GeneratorParams(template=TEMPLATES[s % 4]), seed=1000 + s)
        anns = render_ground_truth(script)
        clean = run_scenario(script, anns, degrade(anns), cfg, keep_states=True)
        noisy_stream = degrade(anns, type(profile)(**{**profile.__dict__, "seed": s}))
        assert noisy_stream != degrade(anns)
        noisy = run_scenario(script, anns, noisy_stream, cfg, keep_states=True)
        agree += _final_identity(clean) == _final_identity(noisy)
    print(f"flicker: {agree}/50 scenarios with identical final anchors")
    assert agree == 50


# --------------------------------------------------------------------------- 5


@criterion(5, "AAPA beats PA on carried frames of a zero-noise carried corpus")
def test_action_awareness_effect():
    reports = {m: EvalReport(model=m) for m in ("aapa", "pa")}
    for s in range(100):
        script = generate_scenario(GeneratorParams(template=CARRIED), seed=2000 + s)
        anns = render_ground_truth(script)
        stream = degrade(anns)
        for m in reports:
            reports[m] = reports[m].merge(run_scenario(script, anns, stream, make_config(m)).report)
    aapa, pa = reports["aapa"]["carried"], reports["pa"]["carried"]
    print(f"carried frames={aapa.frame_count} AAPA mIoU={aapa.mean_iou:.4f} mL2={aapa.mean_l2:.4f} "
          f"PA mIoU={pa.mean_iou:.4f}")
    assert aapa.frame_count > 1000
    assert aapa.mean_iou >= 0.90
    assert aapa.mean_l2 <= 2.0
    assert aapa.mean_iou - pa.mean_iou >= 0.20


# --------------------------------------------------------------------------- 6


@criterion(6, "raising tau never reduces per-frame matched pairs")
def test_tau_monotonic():
    for s in range(30):
        script = generate_scenario(GeneratorParams(template=TEMPLATES[s % 4]), seed=3000 + s)
        anns = render_ground_truth(script)
        stream = degrade(anns)
        counts = [run_scenario(script, anns, stream, make_config("aapa", tau)).matched_counts
                  for tau in (3000, 6500, 10000)]
        for low, high in zip(counts, counts[1:]):
            assert len(low) == len(high) == script.n_frames
            assert all(a <= b for a, b in zip(low, high))


# --------------------------------------------------------------------------- 7


@criterion(7, "metric oracles")
def test_geometry_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert abs(iou(a, BoundingBox(5, 5, 10, 10)) - 25 / 175) <= 1e-9
    assert abs(iou(a, a) - 1.0) <= 1e-9 and iou(a, BoundingBox(20, 20, 5, 5)) == 0.0
    assert abs(l2_center(a, BoundingBox(3, 4, 10, 10)) - 5.0) <= 1e-9
    assert abs(l2_center(BoundingBox(0, 0, 2, 2), BoundingBox(0, 0, 4, 4)) - math.sqrt(2)) <= 1e-9


@criterion(7, "metric oracles")
def test_evaluate_three_frame_oracle():
    truth = BoundingBox(0, 0, 10, 10)
    preds = [BoundingBox(0, 0, 10, 10), BoundingBox(0, 0, 10, 5), BoundingBox(20, 20, 10, 10)]
    s = evaluate(preds, [truth] * 3, ["visible"] * 3)["overall"]
    assert s.iou == [1.0, 0.5, 0.0]
    assert s.mean_iou == 0.5
    assert s.sem_iou == 0.5 / math.sqrt(3)


@criterion(7, "metric oracles")
def test_overall_is_weighted_category_mean():
    script = generate_scenario(GeneratorParams(template=CARRIED), seed=5)
    anns = render_ground_truth(script)
    rep = run_scenario(script, anns, degrade(anns, PROFILES["od"]), make_config("pa")).report
    parts = [rep[c] for c in CATEGORIES[:-1] if rep[c].frame_count]
    assert len(parts) >= 2
    weighted = sum(p.mean_iou * p.frame_count for p in parts) / sum(p.frame_count for p in parts)
    assert abs(rep["overall"].mean_iou - weighted) <= 1e-12


# --------------------------------------------------------------------------- 8


@criterion(8, "guidance matrix structure for 100 scripts")
def test_guidance_matrix():
    K = 15
    for s in range(100):
        script = generate_scenario(GeneratorParams(n_frames=120, template=TEMPLATES[s % 4]), seed=4000 + s)
        anns = render_ground_truth(script)
        timeline = hierarchy_timeline(script.actions, script.registry, script.n_frames)
        v = build_tracking_vector(anns, timeline, script.target)
        cols = column_mapping(anns)
        expected = np.array([cols[o] for o in v.entries])
        for w in (2.0, 10.0, 100.0):
            m = build_weight_matrix(v, K, w, columns=cols).values
            off = m != 1.0
            assert (off.sum(axis=1) == 1).all()
            assert (m[off] == w).all()
            assert (m.argmax(axis=1) == expected).all()
            n = build_weight_matrix(v, K, w, normalize=True, columns=cols).values
            assert np.abs(n.sum(axis=1) - 1.0).max() <= 1e-9


# --------------------------------------------------------------------------- 9

OCCLUDER = ObjectClass("cylinder", "xlarge", "metal", "red")


def _occlusion_script(reappear: bool) -> ScenarioScript:
    """Snitch slides behind a wall at 2 px per frame and either stops there or comes out."""
    keys = [Keyframe(0, 60, 120, 16, 16), Keyframe(50, 160, 120, 16, 16)]
    if reappear:
        keys.append(Keyframe(70, 200, 120, 16, 16))
    snitch = ObjectSpec("snitch", SNITCH_CLASS, keys, 1.0)
    wall = ObjectSpec("wall", OCCLUDER, [Keyframe(0, 160, 120, 50, 50)], 3.0)
    return ScenarioScript([snitch, wall], [], "snitch", n_frames=90)


def _run_occlusion(reappear):
    script = _occlusion_script(reappear)
    anns = render_ground_truth(script)
    stream = degrade(anns, PROFILES["occlusion"])
    seen = [t for t, dets in enumerate(stream) if any(d.object_class == SNITCH_CLASS for d in dets)]
    run = run_scenario(script, anns, stream, make_config("aapa"), keep_states=True)
    return anns, seen, run


@criterion(9, "move-under-occlusion failure and re-anchoring are reproduced")
def test_moving_under_occlusion_freezes():
    anns, seen, run = _run_occlusion(reappear=False)
    last = max(seen)
    assert last == 39 and anns[last].boxes["snitch"] == BoundingBox.from_center(138, 120, 16, 16)
    frozen = anns[last].boxes["snitch"]
    sym = run.target_ids[last]
    for t in range(last + 1, 90):
        assert run.target_ids[t] == sym
        assert run.target_boxes[t] == frozen
        assert run.states[t].anchors[sym].status is Status.OCCLUDED
    assert anns[89].boxes["snitch"].center == (160.0, 120.0)


@criterion(9, "move-under-occlusion failure and re-anchoring are reproduced")
def test_reappearing_target_keeps_symbol():
    anns, seen, run = _run_occlusion(reappear=True)
    gap = [t for t in range(min(seen), 90) if t not in seen]
    back = max(gap) + 1
    assert gap == list(range(40, back)) and back == 61
    sym = run.target_ids[39]
    assert sym is not None
    assert run.target_ids[39:] == [sym] * (90 - 39)
    assert all(run.target_boxes[t] == anns[39].boxes["snitch"] for t in gap)
    for t in range(back, 90):
        assert run.target_boxes[t] == anns[t].boxes["snitch"]
        assert run.states[t].anchors[sym].status is Status.VISIBLE
    assert len(run.states[-1].anchors) == 2


# --------------------------------------------------------------------------- 10


@criterion(10, "cmd_run is byte-for-byte reproducible")
def test_run_is_deterministic(tmp_path):
    corpus = tmp_path / "corpus"
    assert main(["generate", "--corpus", str(corpus), "--n", "4", "--frames", "150", "--seed", "3",
                 "--noise", "pp,od"]) == 0
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["run", "--corpus", str(corpus), "--out", str(out), "--noise", "od", "--seed", "9",
                     "--tau", "3000,6500"]) == 0
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert len(files) == 2 * (4 + 2)
    assert files == sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file())
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    json.loads((outs[0] / "AAPA-6k5" / "report.json").read_text())
