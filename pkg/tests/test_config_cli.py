import json
from pathlib import Path

import numpy as np
import pytest

from phaseless_em import cli
from phaseless_em.config import build, config_hash, load_config, parse_config, with_overrides
from phaseless_em.errors import ConfigError

MIE_CFG = {
    "wavenumber": 1.0,
    "obstacles": [{"center": [0.5, 0, 0.2], "radius": 0.6}],
    "containment_ball": {"center": [0, 0, 0], "radius": 2.0},
    "incidents": {"generate": "superposition", "n_pairs": 3},
    "grid": {"n_theta": 16, "n_phi": 32},
    "solver": {"kind": "mie"},
    "inverse": {"init": {"center": [0.6, -0.1, 0.3], "radius": 0.7}, "max_evals": 400},
    "seed": 0,
}
EFIE_CFG = {
    "wavenumber": 1.0,
    "obstacles": [{"center": [0.5, 0, 0.2], "radius": 0.6}],
    "reference_ball": {"center": [6, 0, 0], "radius": 1.0},
    "containment_ball": {"center": [0, 0, 0], "radius": 2.0},
    "incidents": {"generate": "superposition", "n_pairs": 1},
    "grid": {"n_theta": 4, "n_phi": 8},
    "solver": {"kind": "efie", "subdivisions": 1},
    "seed": 3,
}

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, cfg, name="scene.json", indent=2):
    p = tmp_path / name
    p.write_text(json.dumps(cfg, indent=indent))
    return p


def data_rows(path):
    lines = path.read_text().splitlines()
    return [line for line in lines if not line.startswith("#")][1:]


# -- configuration ----------------------------------------------------------


def test_schema_error_reports_line():
    text = json.dumps({**MIE_CFG, "grid": {"n_theta": -4, "n_phi": 32}}, indent=2)
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "scene.json")
    line = next(i for i, t in enumerate(text.splitlines(), 1) if '"n_theta"' in t)
    assert f"scene.json:{line}" in str(exc.value)
    assert "grid/n_theta" in str(exc.value)


def test_invalid_json_reports_position():
    with pytest.raises(ConfigError, match=r"cfg:2:\d+: invalid JSON"):
        parse_config('{"wavenumber": 1,\n  "obstacles": [}', "cfg")


@pytest.mark.parametrize("patch", [
    {"wavenumber": 0},
    {"obstacles": []},
    {"solver": {"kind": "fem"}},
    {"unknown": 1},
    {"incidents": {"generate": "superposition", "n_pairs": 0}},
])
def test_schema_rejects(patch):
    with pytest.raises(ConfigError):
        parse_config(json.dumps({**MIE_CFG, **patch}))


def test_missing_bc_parameter():
    cfg = {**MIE_CFG, "obstacles": [{"center": [0, 0, 0], "radius": 1, "bc": {"kind": "impedance"}}]}
    with pytest.raises(ConfigError, match="lambda"):
        build(parse_config(json.dumps(cfg)))


def test_overlapping_geometry_is_config_error(tmp_path, capsys):
    cfg = {**EFIE_CFG, "reference_ball": {"center": [0.8, 0, 0.2], "radius": 1.0}}
    assert cli.main(["gen-data", str(write(tmp_path, cfg)), "-o", str(tmp_path / "d.csv")]) == 2
    assert "error" in capsys.readouterr().err


def test_hash_ignores_formatting_and_key_order(tmp_path):
    a = load_config(write(tmp_path, MIE_CFG, "a.json", indent=2))
    rev = dict(reversed(list(MIE_CFG.items())))
    b = load_config(write(tmp_path, rev, "b.json", indent=None))
    assert config_hash(a) == config_hash(b)
    assert config_hash(with_overrides(a, seed=1)) != config_hash(a)
    assert config_hash(with_overrides(a, grid=(8, 16))) != config_hash(a)
    assert config_hash(with_overrides(a, subdivisions=2)) != config_hash(a)


def test_build_objects():
    sc = build(parse_config(json.dumps(MIE_CFG)))
    assert len(sc.incidents) == 6 and len(sc.grid.directions()) == 512
    assert not sc.translation_ambiguous
    single = build(parse_config(json.dumps({**MIE_CFG, "incidents": {"generate": "single"}})))
    assert single.translation_ambiguous
    assert sc.inverse_settings()["init"].radius == 0.7


def test_explicit_incident_list():
    inc = [{"d1": [0, 0, 1], "d2": [1, 0, 0], "p1": [1, 0, 0], "p2": [0, 1, 0]}]
    sc = build(parse_config(json.dumps({**MIE_CFG, "incidents": inc})))
    assert len(sc.incidents) == 1
    bad = [{"d1": [0, 0, 2], "d2": [1, 0, 0], "p1": [1, 0, 0], "p2": [0, 1, 0]}]
    with pytest.raises(ConfigError):
        build(parse_config(json.dumps({**MIE_CFG, "incidents": bad})))


# -- gen-data ---------------------------------------------------------------


@pytest.fixture(scope="module")
def mie_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("mie")
    cfg = write(d, MIE_CFG)
    out = d / "data.csv"
    assert cli.main(["gen-data", str(cfg), "-o", str(out), "--threads", "1"]) == 0
    return cfg, out


def test_gen_data_layout(mie_data):
    cfg, out = mie_data
    text = out.read_text()
    assert f"# config_sha256={config_hash(load_config(cfg))}" in text
    rows = data_rows(out)
    assert len(rows) == 16 * 32 * 6 * 2
    header = [line for line in text.splitlines() if not line.startswith("#")][0]
    assert header.split(",") == cli.COLUMNS
    values = np.array([float(r.rsplit(",", 1)[1]) for r in rows])
    assert np.all(values >= 0)
    assert {r.split(",")[-2] for r in rows} == set(cli.COMPONENTS)


def test_gen_data_round_trip(mie_data):
    _, out = mie_data
    header, records = cli.read_data(out)
    assert len(records) == 6144 and "version" in header
    assert all(np.isclose(np.linalg.norm(r.xhat), 1.0) for r in records[:50])


def test_gen_data_deterministic(mie_data, tmp_path):
    cfg, out = mie_data
    again = tmp_path / "again.csv"
    assert cli.main(["gen-data", str(cfg), "-o", str(again), "--threads", "1"]) == 0
    assert again.read_bytes() == out.read_bytes()


def test_gen_data_efie_threads_agree(tmp_path):
    cfg = write(tmp_path, EFIE_CFG)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["gen-data", str(cfg), "-o", str(a), "--threads", "1"]) == 0
    assert cli.main(["gen-data", str(cfg), "-o", str(b), "--threads", "2"]) == 0
    # BLAS may split the factorization differently with more threads
    va = np.array([float(r.rsplit(",", 1)[1]) for r in data_rows(a)])
    vb = np.array([float(r.rsplit(",", 1)[1]) for r in data_rows(b)])
    assert len(va) == 32 * 2 * 2
    assert np.abs(va - vb).max() <= 1e-12 * np.abs(va).max()


def test_gen_data_inadmissible_ball(tmp_path, capsys):
    cfg = write(tmp_path, {**EFIE_CFG, "reference_ball": {"center": [6, 0, 0], "radius": np.pi}})
    assert cli.main(["gen-data", str(cfg), "-o", str(tmp_path / "d.csv")]) == 2
    assert "eigenvalue" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["verify", str(tmp_path / "nope.json")]) == 2
    assert "cannot read" in capsys.readouterr().err


# -- verify -----------------------------------------------------------------


def reports(out):
    return [json.loads(line) for line in out.splitlines() if line.strip()]


def test_verify_mie_demo_passes(capsys):
    assert cli.main(["verify", str(CONFIGS / "mie_demo.json"), "--threads", "1"]) == 0
    reps = reports(capsys.readouterr().out)
    assert len(reps) >= 6 and all(r["pass"] for r in reps)
    assert {"residual", "tolerance", "pass", "grid"} <= set(reps[0])


def test_verify_pi_ball_fails(capsys):
    assert cli.main(["verify", str(CONFIGS / "pi_ball.json"), "--threads", "1"]) == 1
    reps = reports(capsys.readouterr().out)
    assert reps[0]["name"] == "reference_ball_admissible" and not reps[0]["pass"]


def test_verify_identical_compare_obstacles(tmp_path, capsys):
    cfg = {**EFIE_CFG, "compare_obstacles": EFIE_CFG["obstacles"]}
    assert cli.main(["verify", str(write(tmp_path, cfg)), "--threads", "1"]) == 0
    dist = [r for r in reports(capsys.readouterr().out) if r["name"] == "distinguishability"]
    assert dist and dist[0]["residual"] == 0.0


# -- reconstruct ------------------------------------------------------------


def test_reconstruct_hash_mismatch(mie_data, capsys):
    cfg, out = mie_data
    argv = ["reconstruct", str(cfg), str(out), "--seed", "5", "--max-evals", "5"]
    assert cli.main(argv) == 2
    assert "different configuration" in capsys.readouterr().err
    assert cli.main(argv + ["--allow-mismatch"]) == 0


def test_reconstruct_mie(mie_data, capsys, tmp_path):
    cfg, out = mie_data
    trace = tmp_path / "trace.csv"
    assert cli.main(["reconstruct", str(cfg), str(out), "--trace", str(trace)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["center_error"] < 1e-3 and res["radius_error"] < 1e-3
    assert trace.read_text().startswith("eval,misfit,cx,cy,cz,radius\n")


def test_reconstruct_from_truth(mie_data, capsys):
    cfg, out = mie_data
    assert cli.main(["reconstruct", str(cfg), str(out), "--init", "0.5,0,0.2,0.6"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["center_error"] == 0 and res["radius_error"] == 0 and res["misfit"] < 1e-20


def test_reconstruct_single_wave_warns(tmp_path, capsys):
    cfg = write(tmp_path, {**MIE_CFG, "incidents": {"generate": "single", "n_pairs": 1},
                           "grid": {"n_theta": 4, "n_phi": 8}})
    data = tmp_path / "d.csv"
    assert cli.main(["gen-data", str(cfg), "-o", str(data)]) == 0
    capsys.readouterr()
    assert cli.main(["reconstruct", str(cfg), str(data), "--max-evals", "10"]) == 0
    err = capsys.readouterr().err
    assert "translation" in err.lower()


def test_reconstruct_needs_init(mie_data, tmp_path, capsys):
    cfg = {k: v for k, v in MIE_CFG.items() if k != "inverse"}
    p = write(tmp_path, cfg)
    _, out = mie_data
    assert cli.main(["reconstruct", str(p), str(out), "--allow-mismatch"]) == 2
    assert "initial guess" in capsys.readouterr().err


# -- admissible-ball and scan-ambiguity -------------------------------------


def test_admissible_ball_exit_codes(capsys):
    assert cli.main(["admissible-ball", "--k", "1", "--radius", "1.0"]) == 0
    assert cli.main(["admissible-ball", "--k", "1", "--radius", "1.0", str(np.pi)]) == 1
    lines = reports(capsys.readouterr().out)
    assert [d["admissible"] for d in lines] == [True, True, False]


def test_scan_ambiguity_output(tmp_path):
    cfg = write(tmp_path, {**MIE_CFG, "grid": {"n_theta": 8, "n_phi": 16}})
    out = tmp_path / "scan.csv"
    assert cli.main(["scan-ambiguity", str(cfg), "--points", "5", "-o", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[1] == "shift,misfit" and len(rows) == 7
    vals = [float(r.split(",")[1]) for r in rows[2:]]
    assert vals[2] < 1e-20 and min(vals[:2] + vals[3:]) > 0


def test_bad_vector_argument():
    with pytest.raises(SystemExit):
        cli.main(["scan-ambiguity", str(CONFIGS / "mie_demo.json"), "--direction", "1,0"])


def test_bad_threads():
    with pytest.raises(SystemExit):
        cli.main(["verify", str(CONFIGS / "mie_demo.json"), "--threads", "0"])
