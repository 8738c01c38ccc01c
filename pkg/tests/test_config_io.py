import numpy as np
import pytest

from sedlab import __version__
from sedlab.cloud import ParticleCloud
from sedlab.config import ExperimentConfig, UsageError, load_config, parse_config, report_header, schema
from sedlab.dynamics import simulate
from sedlab.errors import DomainError
from sedlab.generators import generate_cloud
from sedlab.io import (
    read_cloud,
    read_density_snapshots,
    read_measure,
    read_trajectory,
    write_cloud,
    write_density_snapshots,
    write_measure,
    write_trajectory,
)
from sedlab.meanfield import Rho0Spec, init_blobs
from sedlab.ot import DiscreteMeasure

G = np.array([0.0, 0.0, -1.0])


# ---------------------------------------------------------------- config

def test_parse_config_values():
    cfg = parse_config("experiment = exp3\nN_list = 64, 125\ngravity = 0,0,-2  # down\nexact_M = yes\n")
    assert cfg.experiment == "exp3" and cfg.N_list == (64, 125)
    assert cfg.gravity == (0.0, 0.0, -2.0) and cfg.exact_M is True


def test_empty_config_dumps_schema():
    with pytest.raises(UsageError) as err:
        parse_config("# nothing here\n\n")
    assert schema() in str(err.value)


@pytest.mark.parametrize("text", ["solver = magic", "bogus = 1", "N_list = 0", "steps = x", "seed 3",
                                  "gravity = 1,2", "generator = file\ncloud = /nonexistent.csv"])
def test_invalid_config(text):
    with pytest.raises(UsageError):
        parse_config(text)


def test_schema_lists_every_field():
    s = schema()
    for k in ExperimentConfig().to_dict():
        assert f"\n{k} = " in s


def test_hash_ignores_output_directory():
    a = parse_config("seed = 3\nout = /tmp/a")
    b = parse_config("seed = 3\nout = /tmp/b")
    assert a.hash() == b.hash() and a.hash() != parse_config("seed = 4").hash()


def test_report_header(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("experiment = exp1\n")
    cfg = load_config(p)
    h = report_header(cfg)
    assert h["version"] == __version__ and h["config_hash"] == cfg.hash() and h["config"]["experiment"] == "exp1"


# ---------------------------------------------------------------- io

def test_cloud_round_trip(tmp_path):
    c = ParticleCloud(np.random.default_rng(0).standard_normal((13, 3)), 0.01, 0.5)
    write_cloud(tmp_path / "c.csv", c)
    d = read_cloud(tmp_path / "c.csv")
    assert np.array_equal(d.positions, c.positions) and d.r0 == c.r0 and d.time == c.time


def test_cloud_without_sidecar_needs_r0(tmp_path):
    c = generate_cloud("uniform", 5, 0)
    write_cloud(tmp_path / "c.csv", c)
    (tmp_path / "c.csv.meta").unlink()
    with pytest.raises(DomainError):
        read_cloud(tmp_path / "c.csv")
    assert read_cloud(tmp_path / "c.csv", r0=0.2).r0 == 0.2


def test_cloud_bad_header(tmp_path):
    (tmp_path / "c.csv").write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DomainError):
        read_cloud(tmp_path / "c.csv", r0=0.1)


def test_measure_round_trip(tmp_path):
    m = DiscreteMeasure.normalized(np.random.default_rng(1).standard_normal((6, 3)), np.arange(1.0, 7.0))
    write_measure(tmp_path / "m.csv", m)
    r = read_measure(tmp_path / "m.csv")
    assert np.array_equal(r.atoms, m.atoms) and np.array_equal(r.weights, m.weights)


def test_trajectory_round_trip(tmp_path):
    tr = simulate(generate_cloud("uniform", 6, 2), G, 0.2, 0.1)
    write_trajectory(tmp_path / "t.csv", tr)
    rows = read_trajectory(tmp_path / "t.csv")
    assert rows.shape == (18, 8)
    assert np.array_equal(rows[-6:, 2:5], tr.snapshots[-1].cloud.positions)


def test_density_snapshots_round_trip(tmp_path):
    d = init_blobs(Rho0Spec("bump"), 12)
    write_density_snapshots(tmp_path / "d.csv", [(0.0, d), (1.0, d)])
    rows = read_density_snapshots(tmp_path / "d.csv")
    assert rows.shape == (2 * d.weights.size, 6) and np.array_equal(rows[: d.weights.size, 5], d.weights)
