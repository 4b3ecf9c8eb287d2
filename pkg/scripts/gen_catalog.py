#!/usr/bin/env python3
"""Regenerate the packaged task catalog, scenes, and randomization suites.

Run from the repo root:  python scripts/gen_catalog.py
Writes src/robridge/data/. Keep edits here, not in the JSON, so the data
stays consistent.
"""

import json
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "src" / "robridge" / "data"

WORKSPACE = {"x": [0.0, 0.64], "y": [0.0, 0.64], "z": [0.0, 0.32]}
GRIPPER = {"pose": [0.32, 0.14, 0.12, 0.0], "aperture": 1.0}

# nominal (training) palette; unseen_color draws from a disjoint one
C = {
    "yellow": [0.90, 0.80, 0.12],
    "red": [0.85, 0.13, 0.10],
    "blue": [0.15, 0.25, 0.85],
    "green": [0.12, 0.70, 0.25],
    "white": [0.88, 0.88, 0.85],
    "gray": [0.45, 0.45, 0.50],
    "dark": [0.25, 0.25, 0.30],
}


def ent(name, kind, dims, color, place, graspable=False, solid=True, articulation=None):
    e = {"name": name, "color": color, "place": place,
         "graspable": graspable, "solid": solid}
    if kind == "box":
        e["shape"] = {"kind": "box", "dims": list(dims)}
    else:
        e["shape"] = {"kind": "cylinder", "radius": dims[0], "height": dims[1]}
    if articulation:
        e["articulation"] = articulation
    return e


def scene(name, entities):
    return {"schema_version": 1, "name": name, "workspace": WORKSPACE,
            "gripper": GRIPPER, "entities": entities}


SCENES = {
    "pick_place": scene("pick_place", [
        ent("yellow cylinder", "cyl", [0.022, 0.036], C["yellow"],
            {"region": [[0.14, 0.26], [0.22, 0.38]], "z": 0.0}, graspable=True),
        ent("round slot", "cyl", [0.045, 0.004], C["dark"],
            {"region": [[0.40, 0.52], [0.26, 0.42]], "z": 0.0}),
    ]),
    "press_button": scene("press_button", [
        ent("red button", "cyl", [0.025, 0.030], C["red"],
            {"region": [[0.24, 0.40], [0.30, 0.44]], "z": 0.0},
            articulation={"mode": "linear", "axis": [0, 0, -1], "range": [0.0, 0.012],
                          "handle": [0.0, 0.0, 0.030], "engage": "press"}),
    ]),
    "drawer_closed": scene("drawer_closed", [
        ent("drawer", "box", [0.12, 0.14, 0.05], C["gray"],
            {"region": [[0.44, 0.50], [0.26, 0.42]], "z": 0.0},
            articulation={"mode": "linear", "axis": [-1, 0, 0], "range": [0.0, 0.104],
                          "handle": [-0.065, 0.0, 0.025], "engage": "grasp"}),
    ]),
    "drawer_open": scene("drawer_open", [
        ent("drawer", "box", [0.12, 0.14, 0.05], C["gray"],
            {"region": [[0.44, 0.50], [0.26, 0.42]], "z": 0.0},
            articulation={"mode": "linear", "axis": [-1, 0, 0], "range": [0.0, 0.104],
                          "coordinate": 0.104, "handle": [-0.065, 0.0, 0.025],
                          "engage": "grasp"}),
    ]),
    "push_block": scene("push_block", [
        ent("blue block", "box", [0.040, 0.040, 0.040], C["blue"],
            {"region": [[0.20, 0.30], [0.24, 0.36]], "z": 0.0}, graspable=True),
        ent("green zone", "box", [0.080, 0.080, 0.002], C["green"],
            {"region": [[0.40, 0.50], [0.36, 0.46]], "z": 0.0}, solid=False),
    ]),
    "pull_handle": scene("pull_handle", [
        ent("handle", "box", [0.050, 0.030, 0.035], C["gray"],
            {"region": [[0.28, 0.40], [0.40, 0.48]], "z": 0.0},
            articulation={"mode": "linear", "axis": [0, -1, 0], "range": [0.0, 0.10],
                          "handle": [0.0, 0.0, 0.035], "engage": "grasp"}),
    ]),
    "turn_dial": scene("turn_dial", [
        ent("dial", "cyl", [0.035, 0.030], C["gray"],
            {"region": [[0.26, 0.40], [0.28, 0.42]], "z": 0.0},
            articulation={"mode": "rotary", "axis": [0, 0, 1], "range": [0.0, 1.5708],
                          "handle": [0.030, 0.0, 0.030], "engage": "grasp"}),
    ]),
    "sweep_into": scene("sweep_into", [
        ent("red block", "box", [0.038, 0.038, 0.038], C["red"],
            {"region": [[0.20, 0.30], [0.24, 0.36]], "z": 0.0}, graspable=True),
        ent("blue zone", "box", [0.090, 0.090, 0.002], C["blue"],
            {"region": [[0.40, 0.50], [0.36, 0.46]], "z": 0.0}, solid=False),
    ]),
    "place_in_slot": scene("place_in_slot", [
        ent("red cube", "box", [0.038, 0.038, 0.038], C["red"],
            {"region": [[0.14, 0.26], [0.22, 0.38]], "z": 0.0}, graspable=True),
        ent("square slot", "box", [0.070, 0.070, 0.004], C["dark"],
            {"region": [[0.40, 0.52], [0.26, 0.42]], "z": 0.0}),
    ]),
    "reach_target": scene("reach_target", [
        ent("white marker", "cyl", [0.020, 0.002], C["white"],
            {"region": [[0.20, 0.46], [0.26, 0.46]], "z": 0.0}, solid=False),
    ]),
    "bin_pick": scene("bin_pick", [
        ent("green block", "box", [0.040, 0.040, 0.040], C["green"],
            {"region": [[0.14, 0.26], [0.22, 0.38]], "z": 0.0}, graspable=True),
        ent("tray", "box", [0.090, 0.090, 0.004], C["dark"],
            {"region": [[0.40, 0.52], [0.26, 0.42]], "z": 0.0}),
    ]),
    "plate_slide": scene("plate_slide", [
        ent("white plate", "cyl", [0.035, 0.012], C["white"],
            {"region": [[0.20, 0.30], [0.24, 0.36]], "z": 0.0}, graspable=True),
        ent("yellow zone", "box", [0.100, 0.100, 0.002], C["yellow"],
            {"region": [[0.42, 0.50], [0.36, 0.46]], "z": 0.0}, solid=False),
    ]),
    "press_handle": scene("press_handle", [
        ent("lever", "box", [0.060, 0.030, 0.030], C["gray"],
            {"region": [[0.26, 0.40], [0.30, 0.44]], "z": 0.0},
            articulation={"mode": "linear", "axis": [0, 0, -1], "range": [0.0, 0.030],
                          "handle": [0.0, 0.0, 0.030], "engage": "press"}),
    ]),
    "pick_insert": scene("pick_insert", [
        ent("yellow cylinder", "cyl", [0.022, 0.036], C["yellow"],
            {"region": [[0.14, 0.24], [0.20, 0.32]], "z": 0.0}, graspable=True),
        ent("red cube", "box", [0.038, 0.038, 0.038], C["red"],
            {"region": [[0.14, 0.24], [0.38, 0.50]], "z": 0.0}, graspable=True),
        ent("round slot", "cyl", [0.045, 0.004], C["dark"],
            {"region": [[0.42, 0.50], [0.22, 0.32]], "z": 0.0}),
        ent("square slot", "box", [0.070, 0.070, 0.004], C["dark"],
            {"region": [[0.42, 0.50], [0.40, 0.50]], "z": 0.0}),
    ]),
}


def fetch_place(obj, des):
    return [["reach", obj, None], ["grasp", obj, None], ["reach", des, None],
            ["place", obj, des]]


TASKS = [
    {"id": "pick-place", "family": "pick_place", "scene": "pick_place",
     "instruction_template": "put the {obj} in the {des}",
     "obj": "yellow cylinder", "des": "round slot", "held_out": False,
     "oracle_plan": fetch_place("yellow cylinder", "round slot")},
    {"id": "press-button", "family": "articulated", "scene": "press_button",
     "instruction_template": "press the {obj}",
     "obj": "red button", "des": None, "held_out": False,
     "goal_end": "hi", "success_coord": 0.0108,
     "oracle_plan": [["reach", "red button", None], ["press", "red button", None]]},
    {"id": "open-drawer", "family": "articulated", "scene": "drawer_closed",
     "instruction_template": "open the {obj}",
     "obj": "drawer", "des": None, "held_out": False,
     "goal_end": "hi", "success_coord": 0.10,
     "oracle_plan": [["reach", "drawer", None], ["open", "drawer", None]]},
    {"id": "close-drawer", "family": "articulated", "scene": "drawer_open",
     "instruction_template": "close the {obj}",
     "obj": "drawer", "des": None, "held_out": False,
     "goal_end": "lo", "success_coord": 0.004,
     "oracle_plan": [["reach", "drawer", None], ["close", "drawer", None]]},
    {"id": "push-block", "family": "push", "scene": "push_block",
     "instruction_template": "push the {obj} to the {des}",
     "obj": "blue block", "des": "green zone", "held_out": False,
     "oracle_plan": [["reach", "blue block", None], ["push", "blue block", "green zone"]]},
    {"id": "pull-handle", "family": "articulated", "scene": "pull_handle",
     "instruction_template": "pull the {obj}",
     "obj": "handle", "des": None, "held_out": False,
     "goal_end": "hi", "success_coord": 0.095,
     "oracle_plan": [["reach", "handle", None], ["pull", "handle", None]]},
    {"id": "turn-dial", "family": "articulated", "scene": "turn_dial",
     "instruction_template": "turn the {obj}",
     "obj": "dial", "des": None, "held_out": False,
     "goal_end": "hi", "success_coord": 1.40,
     "oracle_plan": [["reach", "dial", None], ["turn", "dial", None]]},
    {"id": "sweep-into", "family": "push", "scene": "sweep_into",
     "instruction_template": "sweep the {obj} into the {des}",
     "obj": "red block", "des": "blue zone", "held_out": False,
     "oracle_plan": [["reach", "red block", None], ["push", "red block", "blue zone"]]},
    {"id": "place-in-slot", "family": "pick_place", "scene": "place_in_slot",
     "instruction_template": "put the {obj} in the {des}",
     "obj": "red cube", "des": "square slot", "held_out": False,
     "oracle_plan": fetch_place("red cube", "square slot")},
    {"id": "reach-target", "family": "reach", "scene": "reach_target",
     "instruction_template": "reach the {obj}",
     "obj": "white marker", "des": None, "held_out": False,
     "oracle_plan": [["reach", "white marker", None]]},
    # held-out zero-shot tasks
    {"id": "bin-pick", "family": "pick_place", "scene": "bin_pick",
     "instruction_template": "put the {obj} in the {des}",
     "obj": "green block", "des": "tray", "held_out": True,
     "oracle_plan": fetch_place("green block", "tray")},
    {"id": "plate-slide", "family": "push", "scene": "plate_slide",
     "instruction_template": "push the {obj} to the {des}",
     "obj": "white plate", "des": "yellow zone", "held_out": True,
     "oracle_plan": [["reach", "white plate", None], ["push", "white plate", "yellow zone"]]},
    {"id": "press-handle", "family": "articulated", "scene": "press_handle",
     "instruction_template": "press the {obj}",
     "obj": "lever", "des": None, "held_out": True,
     "goal_end": "hi", "success_coord": 0.027,
     "oracle_plan": [["reach", "lever", None], ["press", "lever", None]]},
    # long-horizon multi-stage task
    {"id": "pick-insert", "family": "multi", "scene": "pick_insert",
     "instruction_template": "put the yellow cylinder in the round slot and the red cube in the square slot",
     "obj": "yellow cylinder", "des": "round slot", "held_out": True,
     "stages": [["hold", "yellow cylinder"], ["placed", "yellow cylinder", "round slot"],
                ["hold", "red cube"], ["placed", "red cube", "square slot"]],
     "oracle_plan": fetch_place("yellow cylinder", "round slot")
                    + fetch_place("red cube", "square slot")},
]

SUITES = {
    "schema_version": 1,
    "train_palette": {k: v for k, v in C.items()},
    "train_background": [[[0.36, 0.36, 0.38], [0.42, 0.42, 0.44]]],
    "suites": {
        "nominal": {},
        "unseen_background": {
            "background_palette": [
                [[0.55, 0.42, 0.28], [0.34, 0.24, 0.14]],
                [[0.18, 0.34, 0.22], [0.10, 0.20, 0.12]],
                [[0.60, 0.58, 0.34], [0.30, 0.14, 0.30]],
                [[0.08, 0.08, 0.10], [0.70, 0.68, 0.64]],
            ],
            "cells": [8, 12, 24, 32],
        },
        "unseen_light": {"gain_ranges": [[0.55, 0.80], [1.25, 1.60]]},
        "unseen_color": {
            "palette": [
                [0.58, 0.12, 0.62],
                [0.95, 0.50, 0.05],
                [0.05, 0.72, 0.70],
                [0.92, 0.18, 0.55],
                [0.55, 0.35, 0.10],
                [0.35, 0.85, 0.58],
                [0.62, 0.66, 0.94],
            ],
            "jitter": 0.03,
        },
        "unseen_camera": {"theta_deg": [5.0, 15.0], "shift_px": [6.0, 12.0]},
    },
}


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "scenes").mkdir(exist_ok=True)
    for name, doc in SCENES.items():
        p = DATA / "scenes" / f"{name}.json"
        p.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    (DATA / "tasks.json").write_text(
        json.dumps({"schema_version": 1, "tasks": TASKS}, indent=1, sort_keys=True) + "\n")
    (DATA / "suites.json").write_text(json.dumps(SUITES, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(SCENES)} scenes, {len(TASKS)} tasks -> {DATA}")


if __name__ == "__main__":
    main()
