"""Smoke test for the mixgrasp Python bindings.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/mixgrasp-*.whl
"""

import json
import math
import os
import sys

import mixgrasp as mg

HERE = os.path.dirname(os.path.abspath(__file__))
SPECS = os.path.join(HERE, "..", "crates", "core", "fixtures", "specs")


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def main():
    a = mg.RotatedBox2D(0, 0, 2, 2, 0)
    b = mg.RotatedBox2D(1, 0, 2, 2, 0)
    check(abs(mg.ariou(a, a) - 1.0) < 1e-12, "ariou of a box with itself is 1")
    check(abs(mg.ariou(a, b) - 1 / 3) < 1e-12, "shifted squares give 1/3")
    check(mg.ariou(a, mg.RotatedBox2D(0, 0, 2, 2, 90)) < 1e-12, "perpendicular boxes give 0")
    check(mg.RotatedBox2D(0, 0, 1, 1, 270).theta == 90.0, "angles normalize to [0, 180)")
    check(mg.normalize_angle(-10) == 170.0, "normalize_angle(-10) is 170")

    box = mg.decode_cell([0.0, 0.0, 0.0, 0.0], (3, 4), (10.0, 20.0, 50.0), 32.0)
    check((box.cx, box.cy, box.w, box.h, box.theta) == (112.0, 144.0, 10.0, 20.0, 50.0), "decode_cell")

    dets = [mg.Detection(0, "box", 0.9, a), mg.Detection(0, "box", 0.8, mg.RotatedBox2D(0.1, 0, 2, 2, 0))]
    check(len(mg.nms_ariou(dets, 0.45)) == 1, "nms suppresses the overlapping duplicate")

    pts = [(0.01 * i, 0.002 * (i % 7), 0.0) for i in range(100)]
    frame = mg.pca(mg.PointCloud(pts))
    check(abs(abs(frame.axes[0][0]) - 1) < 1e-2, "pca primary follows the long axis")

    grip = mg.GripperModel()
    pose = mg.GraspPose((0, 0, 0), (1, 0), 0.03)
    left, right = mg.finger_volumes(pose, grip)
    check(abs(left.center[0] + 0.02) < 1e-12 and abs(right.center[0] - 0.02) < 1e-12, "finger boxes")
    check(mg.collision_free(pose, grip, mg.PointCloud([left.center] * 60)), "60 points is still free")
    check(not mg.collision_free(pose, grip, mg.PointCloud([left.center] * 61)), "61 points collides")

    for name, mode, kind in [
        ("a_covered_objects", "towel", "grasp"),
        ("c_regrasp", "rigid", "grasp"),
        ("d_fully_hemmed", "rigid", "push"),
    ]:
        with open(os.path.join(SPECS, name + ".json")) as f:
            cloud, scene_dets = mg.generate_scene(f.read())
        plan = mg.plan_scene(cloud, scene_dets, grip)
        check(plan["mode"] == mode and kind in plan["result"], f"{name}: {mode} {kind}")

    try:
        mg.generate_scene(json.dumps({"seed": 1, "objects": [], "point_density": -1}))
    except mg.MixgraspError as e:
        check(e.args[0] == 31, "invalid spec raises MixgraspError with code 31")
    else:
        check(False, "invalid spec raises")

    lifted = mg.lift_box(cloud, scene_dets[0].bbox)
    push = mg.plan_push(cloud.crop(lifted), max(lifted.extents[:2]))
    check(math.isclose(push["start"][2], push["end"][2]), "push stays at centroid height")
    print("smoke test passed")


if __name__ == "__main__":
    main()
