import json

import numpy as np
import pytest

from weldfrac import tool
from weldfrac.bundle import save_bundle
from weldfrac.geometry import rectangle
from weldfrac.scenarios import WeldResult


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def bundle(tmpdir):
    mesh = rectangle(1.0, 1.0, 1, 1)
    shape = (1, 9)
    result = WeldResult(
        mesh=mesh,
        fractions=np.broadcast_to(np.eye(5)[1], shape + (5,)).copy(),
        D=np.full(shape, 20.0),
        cr700=np.full(shape, np.nan),
        hardness=np.full(shape, 200.0),
        stress=np.zeros(shape + (4,)),
        strain=np.zeros(shape + (4,)),
        eps_p=np.zeros(shape + (4,)),
        ep_eq=np.zeros(shape),
        etp_eq=np.zeros(shape),
        eps_inelastic=np.zeros(shape + (4,)),
        yield_stress=np.full(shape, 416e6),
        T=np.full(mesh.num_nodes, 20.0),
        u=np.zeros((mesh.num_nodes, 2)),
        time=60.0,
    )
    path = str(tmpdir.join("stage1.cbor"))
    save_bundle(result, path, config_hash="0123456789abcdef")
    return path


def test_ttt(tmpdir):
    assert tool.main(["ttt", "-q", "-o", str(tmpdir)]) == tool.EXIT_OK
    manifest = read_json(tmpdir.join("manifest.json"))
    assert manifest["command"] == "ttt"
    assert [entry["path"] for entry in manifest["files"]] == ["run_config.json", "ttt.csv"]
    header, units = tmpdir.join("ttt.csv").read().splitlines()[:2]
    assert len(header.split(",")) == len(units.split(","))
    config = read_json(tmpdir.join("run_config.json"))
    assert config["kinetics"]["Ae1"] == 690.0


def test_overrides(tmpdir):
    argv = ["ttt", "-q", "-o", str(tmpdir), "--dt-max", "2", "--threads", "3", "--seed", "7"]
    assert tool.main(argv) == tool.EXIT_OK
    config = read_json(tmpdir.join("run_config.json"))
    assert config["weld"]["dt_max"] == 2.0
    assert config["run"] == {"threads": 3, "seed": 7}


def test_outputs_disabled(tmpdir):
    path = tmpdir.join("quiet.toml")
    path.write("[output]\ncsv = false\n")
    assert tool.main(["ttt", "-q", "-c", str(path), "-o", str(tmpdir)]) == tool.EXIT_OK
    assert not tmpdir.join("ttt.csv").check()
    assert tmpdir.join("manifest.json").check()


def test_config_error(tmpdir):
    path = tmpdir.join("bad.toml")
    path.write("[kinetics]\nAe1 = 900.0\n")
    assert tool.main(["ttt", "-c", str(path), "-o", str(tmpdir)]) == tool.EXIT_CONFIG
    assert not tmpdir.join("manifest.json").check()


def test_unknown_key(tmpdir):
    path = tmpdir.join("typo.toml")
    path.write("[kinetics]\nAe5 = 900.0\n")
    argv = ["ttt", "-q", "-c", str(path), "-o", str(tmpdir)]
    assert tool.main(argv) == tool.EXIT_CONFIG
    assert tool.main(argv + ["--lenient"]) == tool.EXIT_OK


def test_invalid_thread_count(tmpdir):
    argv = ["ttt", "-q", "-o", str(tmpdir), "--threads", "0"]
    assert tool.main(argv) == tool.EXIT_CONFIG


def test_weld_missing_sets(tmpdir):
    path = tmpdir.join("strip.toml")
    path.write('[mesh]\ndemo = "strip"\n')
    argv = ["weld", "-q", "-c", str(path), "-o", str(tmpdir)]
    assert tool.main(argv) == tool.EXIT_CONFIG


def test_pressurize_missing_bundle(tmpdir):
    argv = ["pressurize", "-q", "-o", str(tmpdir), "--stage1", str(tmpdir.join("none.cbor"))]
    assert tool.main(argv) == tool.EXIT_SCENARIO


def test_inspect(tmpdir, bundle):
    outfile = tmpdir.join("summary.json")
    assert tool.main(["inspect", bundle, "-k", "-p", "-o", str(outfile)]) == tool.EXIT_OK
    text = outfile.read()
    assert text.startswith('{\n    "config_hash": "0123456789abcdef"')
    summary = json.loads(text)
    assert summary["mesh"]["elements"] == 1
    assert summary["fields"]["cr700"] == {"shape": [1, 9], "dtype": "float64"}
    assert summary["time"] == 60.0


def test_inspect_stdout(capsys, bundle):
    assert tool.main(["inspect", bundle]) == tool.EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["format"] == "weldfrac-stage1"


def test_inspect_invalid(tmpdir):
    path = tmpdir.join("broken.cbor")
    path.write_binary(b"\xa1\x61")
    assert tool.main(["inspect", str(path)]) == tool.EXIT_SCENARIO


def test_missing_command():
    with pytest.raises(SystemExit) as exc:
        tool.main([])
    assert exc.value.code == 2
