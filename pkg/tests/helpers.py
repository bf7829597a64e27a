import numpy as np

from fidget.skeleton import PARTS, Part, PartSpec, PoseSequence, SkeletonTopology


def small_topology(n_joints: int, bones) -> SkeletonTopology:
    """Every joint and bone in LeftArm, the other parts empty."""
    parts = {p: PartSpec((), ()) for p in PARTS}
    parts[Part.LEFT_ARM] = PartSpec(tuple(range(n_joints)), tuple(range(len(bones))))
    return SkeletonTopology(tuple(f"j{i}" for i in range(n_joints)), tuple(bones), parts, tuple(bones[0]))


def random_small_sequence(rng: np.random.Generator, max_t: int = 10, max_j: int = 4):
    """Random float sequence with occasional coincident joints and repeated frames."""
    J = int(rng.integers(2, max_j + 1))
    T = int(rng.integers(2, max_t + 1))
    n_bones = int(rng.integers(1, J))
    pairs = [(i, j) for i in range(J) for j in range(J) if i != j]
    picks = rng.choice(len(pairs), size=n_bones, replace=False)
    bones = [pairs[k] for k in picks]
    frames = rng.uniform(-1.0, 1.0, (T, J, 2))
    if rng.random() < 0.3:
        t = int(rng.integers(0, T))
        i, j = bones[0]
        frames[t, j] = frames[t, i]  # zero-length bone
    if T > 1 and rng.random() < 0.3:
        t = int(rng.integers(1, T))
        frames[t] = frames[t - 1]  # stationary step
    topo = small_topology(J, bones)
    return PoseSequence("r", frames, topo)


def write_config(directory, **sections):
    """Copy of configs/default.json with paths inside ``directory`` and ``sections`` merged in."""
    import json
    from pathlib import Path

    directory = Path(directory)
    cfg = json.loads((Path(__file__).parents[1] / "configs" / "default.json").read_text())
    cfg["paths"] = {"data": "data", "features": "features", "models": "models", "out": "out"}
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    path = directory / "config.json"
    path.write_text(json.dumps(cfg))
    return path
