import math
import socket
import time

import numpy as np
import pytest

from agsim.config import bundled_config_path, load_scenario
from agsim.geometry import Quaternion, RigidTransform, Vec3
from agsim.tasks import run_scenario
from agsim.world import bundled_scene

BUNDLED = ("mapping", "planning", "tracking", "formation")


@pytest.fixture(scope="session")
def bridge_town():
    return bundled_scene("bridge_town")


@pytest.fixture(scope="session")
def open_field():
    return bundled_scene("open_field")


@pytest.fixture(scope="session")
def bundled_runs(tmp_path_factory):
    """One run of every bundled scenario, shared across the session."""
    base = tmp_path_factory.mktemp("runs")
    out = {}
    for name in BUNDLED:
        cfg = load_scenario(bundled_config_path(name))
        outdir = base / f"{name}_a"
        t0 = time.perf_counter()
        report = run_scenario(cfg, outdir)
        out[name] = {"cfg": cfg, "dir": outdir, "report": report, "wall": time.perf_counter() - t0}
    return out


def random_rigid(rng, max_angle_deg, max_trans):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(max_angle_deg) * rng.uniform(0.0, 1.0)
    q = Quaternion.from_axis_angle(Vec3(*axis), angle)
    return RigidTransform(q, Vec3(*rng.uniform(-max_trans, max_trans, size=3)))


def free_base_port():
    """Three consecutive free ports for an RPC endpoint trio."""
    for base in range(42000, 64000, 7):
        ok = True
        for off in range(3):
            s = socket.socket()
            try:
                s.bind(("127.0.0.1", base + off))
            except OSError:
                ok = False
            finally:
                s.close()
            if not ok:
                break
        if ok:
            return base
    raise RuntimeError("no free port trio")
