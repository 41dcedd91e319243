import math

import pytest

import genret


def instance(cands, pos, anchor="cat", image="s0"):
    return {"image_id": image, "anchor": anchor, "anchor_kind": "object", "candidates": cands, "positives": pos}


@pytest.fixture(scope="module")
def small_world():
    world = {
        "objects": ["cat", "table"],
        "attributes": ["furry", "orange", "wooden"],
        "compatibility": {"cat": ["furry", "orange"], "table": ["wooden"]},
        "attribute_prior": [
            {"object": "cat", "attribute": "furry", "p": 0.5},
            {"object": "cat", "attribute": "orange", "p": 0.5},
            {"object": "table", "attribute": "wooden", "p": 0.5},
        ],
        "rng_seed": 1,
    }
    scene = {
        "scene_id": "s0",
        "entities": [
            {"object": "cat", "attributes": ["orange"], "box": {"x": 0, "y": 0, "w": 10, "h": 10}},
            {"object": "table", "attributes": ["wooden"], "box": {"x": 5, "y": 5, "w": 10, "h": 10}},
        ],
    }
    return world, [scene]


def test_template():
    t = genret.Template("{A} {O} is {A}")
    assert t.render("orange", "cat") == ["orange", "cat", "is", "orange"]
    assert t.name == "{A} {O} is {A}"
    with pytest.raises(genret.Error) as info:
        genret.Template("no slots")
    assert info.value.kind == "template-syntax"


def test_oracle_ranks_true_attribute_first(small_world):
    world, scenes = small_world
    oracle = genret.Oracle(world, scenes)
    probs, terminal = oracle.next_token_distribution("s0", [])
    assert math.isclose(sum(probs.values()) + terminal, 1.0, abs_tol=1e-9)

    scored = oracle.rank([instance(["wooden", "orange", "furry"], [1])], "{O} is {A}")
    assert scored[0]["ranks"][1] == 1
    assert genret.mean_rank(scored) == 1.0

    a = oracle.contrastive_loss("s0", "orange cat")
    b = oracle.contrastive_loss("s0", "cat orange")
    assert a == b
    ga, _ = oracle.generative_loss("s0", "orange cat")
    gb, _ = oracle.generative_loss("s0", "cat orange")
    assert gb - ga > 0.1


def test_metric_hand_cases():
    assert genret.average_precision([True, False, True]) == 5 / 6
    scored = [
        {"instance": instance(["a", "b", "c", "d", "e", "f"], [0, 2, 3, 4]), "scores": [0, 1, 2, 3, 4, 5]},
    ]
    assert genret.overall_f1_at_k(scored, 2) == pytest.approx(1 / 3)
    assert genret.mean_recall_at_k(scored, 6) == 1.0


def test_calibration_roundtrip():
    assert genret.calibrated_prob(-18, -15, 0.5) == pytest.approx(1 / (1 + math.exp(-6)))
    assert genret.calibrated_prob(-15, -15, 0.5) == 0.5
    scored = [
        {"instance": instance(["red", "blue"], [i % 2]), "scores": [-14.0 if i % 2 == 0 else -10.0,
                                                                    -14.0 if i % 2 else -10.0]}
        for i in range(20)
    ]
    table = genret.fit_calibration(scored, learning_rate=0.05, steps=500)
    assert set(table) == {"red", "blue"}
    probs = genret.apply_calibration(table, scored)
    assert len(probs) == 20 and all(0 <= p <= 1 for row in probs for p in row)


def test_world_and_cli(tmp_path):
    world = genret.make_world(7)
    assert len(world["objects"]) == 20
    scenes = genret.sample_scenes(world, 5)
    assert len(scenes) == 5

    code, out, _ = genret.run("gen-world", "--out", tmp_path, "--train-scenes", 20, "--test-scenes", 5,
                              "--candidates", 12)
    assert code == 0
    assert (tmp_path / "instances.jsonl").exists()
    code, _, err = genret.run("score", "--instances", tmp_path / "missing.jsonl", "--template", "{A}",
                              "--out", tmp_path / "s.jsonl")
    assert code == 3
    assert "io error" in err
