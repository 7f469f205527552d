"""Shared fixtures: small but schema-complete input files for every build task."""

import json

import pytest

from rsvl.cli import main


def write_json(path, payload) -> str:
    path.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
    return str(path)


# Three annotated images shared by detection, caption and classification.
# img-003 carries a similarity_score below any sane benchmark so caption
# validation has something to reject.
ANNOTATIONS = [
    {
        "image_id": "img-001",
        "width": 1000,
        "height": 1000,
        "modality": "opt",
        "scene_label": "harbor",
        "similarity_score": 0.9,
        "objects": [
            {"category": "ship", "box": [0, 0, 100, 100], "shape": "small"},
            {"category": "ship", "box": [400, 400, 500, 500], "shape": "small"},
            {"category": "plane", "box": [200, 200, 300, 300]},
        ],
    },
    {
        "image_id": "img-002",
        "width": 800,
        "height": 600,
        "scene_label": "industrial area",
        "similarity_score": 0.95,
        "objects": [
            {"category": "storage tank", "box": [10, 10, 200, 200], "shape": "round"},
        ],
    },
    {
        "image_id": "img-003",
        "width": 640,
        "height": 640,
        "scene_label": "parking lot",
        "similarity_score": 0.1,
        "objects": [
            {"category": "car", "box": [100, 100, 160, 180], "shape": "small"},
            {"category": "car", "box": [300, 100, 360, 180], "shape": "small"},
        ],
    },
]

VQA_ITEMS = [
    {"image_id": "img-001", "question": "Is there a ship in the image?", "answer": "yes"},
    {
        "image_id": "img-002",
        "question": "How many storage tanks are visible?",
        "answer": "one",
        "modality": "sar",
    },
]

RELATION_ITEMS = [
    {
        "image_id": "img-003",
        "width": 1000,
        "height": 1000,
        "subject": {"category": "car", "box": [100, 500, 160, 800]},
        "object": {"category": "road", "box": [0, 400, 999, 900]},
        "relation": "driving on",
    },
]

DECOMPOSITION_ITEMS = [
    {
        "image": {
            "image_id": "img-004",
            "width": 1000,
            "height": 1000,
            "objects": [
                {"category": "car", "box": [100, 100, 200, 200]},
                {"category": "road", "box": [50, 50, 450, 450]},
            ],
        },
        "region": [0, 0, 500, 500],
        "relations": [{"subject": 0, "object": 1, "relation": "driving on"}],
    },
]

DECISION_ITEMS = [
    {
        "start": [0, 0, 10, 0, 0, 0],
        "goal": [50, 50, 10, 0, 0, 0],
        "steps": ["lift off", "turn left", "land"],
        "image_ids": ["img-005"],
    },
]

SCENE_ITEMS = [
    {
        "image_id": "img-006",
        "description": "a tall tower north of the river bend",
        "landmark_name": "bridge",
        "landmark_pos": [12, 34, 5],
        "target_name": "tower",
        "target_pos": [56, 78, 9],
        "surroundings": ["river", "park"],
        "trajectory": [[0, 0, 10, 0, 0, 0], [10, 10, 10, 0, 0, 0], [56, 78, 9, 0, 0, 0]],
    },
]


@pytest.fixture
def task_inputs(tmp_path):
    """Map of task name to a valid input file for ``rsvl build``."""
    annotations = write_json(tmp_path / "annotations.json", ANNOTATIONS)
    return {
        "detection": annotations,
        "caption": annotations,
        "classification": annotations,
        "vqa": write_json(tmp_path / "vqa.json", VQA_ITEMS),
        "relation": write_json(tmp_path / "relation.json", RELATION_ITEMS),
        "decomposition": write_json(tmp_path / "decomposition.json", DECOMPOSITION_ITEMS),
        "decision": write_json(tmp_path / "decision.json", DECISION_ITEMS),
        "scheduling": write_json(tmp_path / "scene.json", SCENE_ITEMS),
    }


@pytest.fixture
def run_cli(capsys):
    """Run the CLI in-process; returns (exit code, stdout, stderr)."""

    def run(*argv):
        code = main([str(a) for a in argv])
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return run
