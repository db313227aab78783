import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dissonance.cli import main
from dissonance.config import (bundled_configs, config_hash, expand_sweep, load_config,
                               validate_config)
from dissonance.errors import ConfigInvalid
from dissonance.ifs import BoxCover, PointCloud, chaos_game, four_corner, refine_cover
from dissonance.io import (dumps, read_boxcover, read_gridmass, read_pointcloud, write_boxcover,
                           write_gridmass, write_pointcloud)
from dissonance.runner import run
from dissonance.scenery import discretize

PHI = (1 + math.sqrt(5)) / 2
SMALL_DIM = {"kind": "dim", "ifs": {"preset": "middle_thirds"}, "n": 20000, "seed": 3}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 40), st.integers(1, 3)),
              elements=st.floats(-1e6, 1e6, allow_subnormal=True)),
       st.integers(0, 2**63))
def test_pointcloud_roundtrip_bit_identical(tmp_path_factory, pts, seed):
    w = np.random.default_rng(seed % 1000).dirichlet(np.ones(len(pts)))
    w = w / math.fsum(w)
    cloud = PointCloud(pts, w, seed)
    path = tmp_path_factory.mktemp("pc") / "c.txt"
    write_pointcloud(path, cloud)
    back = read_pointcloud(path)
    assert back.points.tobytes() == cloud.points.tobytes()
    assert back.weights.tobytes() == cloud.weights.tobytes()
    assert back.seed == seed


def test_pointcloud_header(tmp_path):
    cloud = chaos_game(four_corner(0.3), 50, seed=9)
    write_pointcloud(tmp_path / "c.txt", cloud)
    lines = (tmp_path / "c.txt").read_text().splitlines()
    assert lines[0] == "# pointcloud v1 dim=2 n=50 seed=9"
    assert len(lines) == 51 and len(lines[1].split()) == 3 or len(lines[1].split(",")) == 3


def test_boxcover_roundtrip(tmp_path):
    cover = refine_cover(four_corner(0.3), 6)
    write_boxcover(tmp_path / "b.txt", cover)
    text = (tmp_path / "b.txt").read_text().splitlines()
    assert text[0].startswith("# boxcover v1 dim=2 depth=6")
    assert text[1].count(",") == 2 and text[1].startswith("6,")
    back = read_boxcover(tmp_path / "b.txt")
    assert back.depth == 6 and np.array_equal(back.boxes, cover.boxes)


def test_gridmass_roundtrip(tmp_path):
    cloud = chaos_game(four_corner(0.3), 5000, seed=1)
    dm = discretize(cloud.points, cloud.weights, 6)
    write_gridmass(tmp_path / "g.csv", dm)
    back = read_gridmass(tmp_path / "g.csv")
    assert np.array_equal(back.masses, dm.masses)


def test_wrong_header_rejected(tmp_path):
    (tmp_path / "x.txt").write_text("# boxcover v1 dim=1 depth=1 n=0\n")
    with pytest.raises(ValueError):
        read_pointcloud(tmp_path / "x.txt")


def test_dumps_canonical():
    assert dumps({"b": np.float64(1.5), "a": [np.int64(2), float("nan")]}) == '{"a":[2,"nan"],"b":1.5}'


def test_config_hash_ignores_layout(tmp_path):
    cfg = {"kind": "dim", "n": 1000, "ifs": {"preset": "cantor", "ratio": 0.25}, "seed": 1}
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps(cfg))
    reordered = {"seed": 1, "ifs": {"ratio": 0.25, "preset": "cantor"}, "n": 1000, "kind": "dim"}
    b.write_text(json.dumps(reordered, indent=7))
    assert config_hash(load_config(a)) == config_hash(load_config(b))
    assert config_hash(cfg) != config_hash({**cfg, "seed": 2})


def test_probs_must_sum_to_one():
    cfg = {"kind": "validate", "ifs": {"preset": "middle_thirds", "probs": [0.5, 0.4]}}
    with pytest.raises(ConfigInvalid) as exc:
        validate_config(cfg)
    assert exc.value.path == "$.ifs.probs"


@pytest.mark.parametrize("cfg,path", [
    ({"kind": "dim", "n": 10, "ifs": {"preset": "middle_thirds"}, "colour": 1}, "$"),
    ({"kind": "dim", "n": 10**9, "ifs": {"preset": "middle_thirds"}}, "$.n"),
    ({"kind": "validate", "ifs": {"preset": "middle_thirds"}, "depth": 21}, "$.depth"),
    ({"kind": "validate", "ifs": {"maps": [{"type": "similarity", "r": 0.5, "a": [0]},
                                           {"type": "similarity", "r": -1, "a": [0.5]}]}},
     "$.ifs.maps[1].r"),
    ({"kind": "project", "ifs": {"preset": "four_corner"}, "n": 10}, "$"),
    ({"kind": "explode"}, "$.kind"),
    ({"kind": "dim", "n": 10}, "$"),
])
def test_config_errors_carry_paths(cfg, path):
    with pytest.raises(ConfigInvalid) as exc:
        validate_config(cfg)
    assert exc.value.path == path


def test_invalid_ifs_surfaces_as_config_error():
    cfg = {"kind": "validate", "ifs": {"maps": [{"type": "similarity", "r": 0.5, "a": [0.9]},
                                               {"type": "similarity", "r": 0.5, "a": [0.0]}]}}
    with pytest.raises(ConfigInvalid) as exc:
        run(cfg)
    assert exc.value.path == "$.ifs"


def test_sweep_validation():
    with pytest.raises(ConfigInvalid):
        validate_config({"kind": "sweep", "configs": [SMALL_DIM, {"kind": "validate", "ifs": {"preset": "middle_thirds"}}]})
    with pytest.raises(ConfigInvalid):
        validate_config({"kind": "sweep", "configs": [{"kind": "sweep", "configs": []}]})
    rows = expand_sweep({"kind": "sweep", "base": SMALL_DIM, "grid": {"seed": [1, 2], "n": [100, 200]}})
    assert [(r["seed"], r["n"]) for r in rows] == [(1, 100), (1, 200), (2, 100), (2, 200)]


def test_bundled_configs_validate():
    cfgs = bundled_configs()
    assert len(cfgs) >= 10
    for cfg in cfgs.values():
        validate_config(cfg)


def test_run_dim_bundled(capsys):
    assert main(["dim", "--config", "bundled:dim_middle_thirds"]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    method, value = line.split(",")[:2]
    assert method == "BoxCounting" and abs(float(value) - math.log(2) / math.log(3)) < 0.03


def test_identical_runs_identical_payloads(tmp_path):
    for cfg in (SMALL_DIM, {"kind": "sample", "ifs": {"preset": "four_corner", "ratio": 0.3}, "n": 1000, "seed": 5},
                {"kind": "convolve", "ifs": {"preset": "cantor", "ratio": 0.25},
                 "psi": {"preset": "cantor", "ratio": 0.2}, "n": 20000, "seed": 1}):
        a, b = run(cfg, tmp_path / "a"), run(cfg, tmp_path / "b")
        assert a.payload_bytes() == b.payload_bytes()
        assert a.config_hash == b.config_hash


def test_result_record_contents(tmp_path):
    rec = run(SMALL_DIM, tmp_path)
    doc = json.loads((tmp_path / "result.json").read_text())
    assert doc["config_hash"] == rec.config_hash == config_hash(SMALL_DIM)
    assert {"id", "build", "wall_time", "payload", "format"} <= set(doc)


def test_seed_override(tmp_path):
    a = run(SMALL_DIM)
    b = run(SMALL_DIM, seed=4)
    assert a.config_hash != b.config_hash and b.payload["estimate"]["seed"] == 4


def test_sweep_with_failing_row(tmp_path):
    bases = [[[math.cos(a), math.sin(a)]] for a in np.linspace(0.1, 3.0, 19)] + [[[1.0, 1.0]]]
    cfg = {"kind": "sweep", "base": {"kind": "project", "ifs": {"preset": "four_corner", "ratio": 0.2},
                                     "n": 5000, "seed": 0, "projection": {"type": "orthogonal"}},
           "grid": {"projection.basis": bases}}
    rec = run(cfg, tmp_path)
    assert rec.payload["n_rows"] == 20 and rec.payload["n_ok"] == 19
    errors = [r for r in rec.payload["rows"] if r["status"] == "error"]
    assert len(errors) == 1 and "BadBasis" in errors[0]["error"]
    table = (tmp_path / "table.csv").read_text().splitlines()
    assert table[0] == "row,status,seed,params,error,config_hash,summary" and len(table) == 21


def test_empty_sweep(tmp_path, capsys):
    cfg = {"kind": "sweep", "base": SMALL_DIM, "grid": {"seed": []}}
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "table.csv").read_text().splitlines() == [
        "row,status,seed,params,error,config_hash,summary"]


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, {"kind": "validate", "ifs": {"preset": "middle_thirds", "probs": [0.5, 0.4]}}, "bad.json")
    assert main(["validate", "--config", bad]) == 2
    assert "$.ifs.probs" in capsys.readouterr().err
    assert main(["sample", "--config", bad]) == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["dim", "--config", str(tmp_path / "broken.json")]) == 2

    empty = write(tmp_path, {"kind": "scenery", "ifs": {"preset": "middle_thirds"}, "n": 5000, "seed": 0,
                             "scenery": {"x": [5.0], "T": 2}}, "empty.json")
    assert main(["scenery", "--config", empty]) == 3
    assert "scenery" in capsys.readouterr().err

    planar = {"kind": "check-conditions", "theorem": "T3", "ifs": {"maps": [
        {"type": "similarity", "r": 0.5, "turns": PHI, "a": [0.1, 0.1]},
        {"type": "similarity", "r": 1 / 3, "angle": 1.0, "a": [-0.5, -0.5]}]}}
    inconclusive = write(tmp_path, planar, "inc.json")
    assert main(["check-conditions", "--config", inconclusive]) == 0
    assert main(["check-conditions", "--config", inconclusive, "--strict"]) == 4
    ok = write(tmp_path, SMALL_DIM, "ok.json")
    assert main(["dim", "--config", ok, "--strict", "--verbose"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[-2] == "method,value,stderr,rmin,rmax,n,R2,seed"


def test_validate_kind(capsys):
    assert main(["validate", "--config", "bundled:validate_middle_thirds"]) == 0
    assert capsys.readouterr().out.strip()


def test_sample_writes_cloud(tmp_path):
    cfg = {"kind": "sample", "ifs": {"preset": "four_corner", "ratio": 0.3}, "n": 1000, "seed": 5}
    rec = run(cfg, tmp_path)
    clouds = [a for a in rec.artifacts if a.endswith(".txt") or "cloud" in a]
    assert clouds
    back = read_pointcloud(clouds[0])
    assert back.n == 1000 and back.seed == 5
    assert np.array_equal(back.points, chaos_game(four_corner(0.3), 1000, seed=5).points)
