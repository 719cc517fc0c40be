import json

import pytest

from weldfrac.config import (
    build_composition,
    build_kinetics,
    build_material_db,
    build_mesh,
    build_pressurization,
    build_ssy,
    build_weld,
    config_hash,
    dump_config,
    from_mapping,
    load_config,
    threads,
)
from weldfrac.types import ConfigError


def violations(data, strict=True):
    with pytest.raises(ConfigError) as exc:
        from_mapping(data, strict)
    return dict(exc.value.violations)


def test_defaults():
    config = load_config()
    assert config["kinetics"]["Ae1"] == 690.0
    assert config["pressurization"]["medium"] == "hydrogen"
    assert config.get_path("material.base.C") == 0.176
    assert config.provenance["kinetics.Q_gg"] == "published-default"
    assert config.provenance["kinetics.Ae1"] == "tool-default"


def test_user_values():
    config = from_mapping({"kinetics": {"Ae1": 700}, "pressurization": {"increments": 10}})
    assert config["kinetics"]["Ae1"] == 700.0
    assert isinstance(config["kinetics"]["Ae1"], float)
    assert config["pressurization"]["increments"] == 10
    assert config.provenance["kinetics.Ae1"] == "user"
    assert config.provenance["kinetics.Ae3"] == "tool-default"


def test_config_immutable():
    config = load_config()
    with pytest.raises(TypeError):
        config["kinetics"]["Ae1"] = 700.0
    assert hash(config) == hash(load_config())


def test_critical_temperature_order():
    assert violations({"kinetics": {"Ae1": 830.0}}) == {"kinetics.Ae1": "must be below Ae3"}


def test_violations_collected():
    found = violations({"thermal": {"emissivity": 1.5, "h_c": -1.0}, "weld": {"dt_min": "small"}})
    assert found == {
        "thermal.emissivity": "must lie in [0, 1]",
        "thermal.h_c": "must be non-negative",
        "weld.dt_min": "expected number, got str",
    }


def test_error_message_lists_paths():
    with pytest.raises(ConfigError, match=r"2 configuration error\(s\)") as exc:
        from_mapping({"kinetics": {"D0": -1.0, "km_b": -1.0}})
    assert "kinetics.D0: must be positive" in str(exc.value)


def test_unknown_key_strict():
    assert violations({"kinetics": {"Ae5": 1.0}}) == {"kinetics.Ae5": "unknown key"}


def test_unknown_key_lenient():
    with pytest.warns(UserWarning, match="kinetics.Ae5"):
        config = from_mapping({"kinetics": {"Ae5": 1.0}}, strict=False)
    assert "Ae5" not in config["kinetics"]


def test_section_type():
    assert violations({"kinetics": 3}) == {"kinetics": "expected a table"}


@pytest.mark.parametrize(
    "data, path, message",
    [
        ({"weld": {"passes": [{"fusion": "f"}]}}, "weld.passes[0].bead", "is required"),
        (
            {"weld": {"passes": [{"bead": "b", "fusion": "f"}, {"bead": "b", "fusion": "g"}]}},
            "weld.passes",
            "bead 'b' is deposited twice",
        ),
        ({"weld": {"fixed": [["anchor", 2]]}}, "weld.fixed[0]",
         "expected [node set, component 0 or 1]"),
        ({"material": {"filler": {"Zr": 0.1}}}, "material.filler.Zr", "unknown alloying element"),
        ({"material": {"initial": {"ferrite": 0.5}}}, "material.initial",
         "phase fractions must sum to 1"),
        ({"material": {"phases": {"cementite": {}}}}, "material.phases.cementite",
         "unknown phase"),
        ({"material": {"phases": {"ferrite": {"sigma_y0": [[600, 1], [20, 2]]}}}},
         "material.phases.ferrite.sigma_y0", "table temperatures must be strictly increasing"),
        ({"material": {"fracture": {"ferrite": {"Gc0": 0}}}}, "material.fracture.ferrite.Gc0",
         "must be a positive number"),
        ({"dilatometry": {"schedule": [[900.0, -3.0]]}}, "dilatometry.schedule[0]",
         "expected [target °C, rate > 0 °C/s] or [target, rate, hold s]"),
        ({"ttt": {"levels": [0.5, 1.0]}}, "ttt.levels", "fraction levels must lie in (0, 1)"),
        ({"cct": {"rates": [-1.0, 3.0]}}, "cct.rates", "cooling rates must be negative"),
        ({"run": {"threads": 0}}, "run.threads", "must be positive"),
    ],
    ids=[
        "missing_bead",
        "duplicate_bead",
        "fixed_component",
        "filler_element",
        "fraction_sum",
        "phase_name",
        "table_order",
        "fracture_value",
        "schedule_rate",
        "ttt_levels",
        "cct_rates",
        "threads",
    ],
)  # fmt: skip
def test_invalid_values(data, path, message):
    assert violations(data)[path] == message


def test_dump_round_trip(tmp_path):
    config = from_mapping(
        {
            "kinetics": {"Ae1": 700.0},
            "defects": [{"start": [0.0, 372.8], "end": [0.0, 374.8], "name": "root"}],
            "material": {"filler": {"C": 0.05}},
        }
    )
    path = tmp_path / "config.json"
    path.write_text(dump_config(config), encoding="utf-8")
    loaded = load_config(path)
    assert loaded == config
    assert config_hash(loaded) == config_hash(config)
    assert config_hash(loaded) != config_hash(load_config())


def test_load_toml(tmp_path):
    path = tmp_path / "weld.toml"
    path.write_text(
        '[kinetics]\nAe1 = 700.0\n\n[pressurization]\npressure = 10\nmedium = "inert"\n',
        encoding="utf-8",
    )
    config = load_config(path)
    assert config["kinetics"]["Ae1"] == 700.0
    assert config["pressurization"]["pressure"] == 10.0
    assert config.provenance["pressurization.medium"] == "user"


@pytest.mark.parametrize(
    "name, content, message",
    [
        ("config.yaml", "kinetics: {}", "must end in .toml or .json"),
        ("config.json", "{kinetics", "parse error"),
        ("config.toml", "[kinetics\n", "parse error"),
    ],
    ids=["extension", "json", "toml"],
)
def test_load_errors(tmp_path, name, content, message):
    path = tmp_path / name
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError, match=message):
        load_config(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")


def test_json_file_content(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"thermal": {"h_c": 25}}), encoding="utf-8")
    assert load_config(path)["thermal"]["h_c"] == 25.0


def test_replace():
    config = load_config()
    changed = config.replace("kinetics.Ae1", 700.0)
    assert changed["kinetics"]["Ae1"] == 700.0
    assert changed.provenance["kinetics.Ae1"] == "user"
    assert config["kinetics"]["Ae1"] == 690.0
    with pytest.raises(ConfigError):
        config.replace("kinetics.Ae1", 900.0)
    with pytest.raises(ConfigError):
        config.replace("nowhere.key", 1.0)


def test_build_kinetics():
    kinetics = build_kinetics(from_mapping({"kinetics": {"km_enabled": True}}))
    assert kinetics.temps.Ae3 == 820.0
    assert kinetics.km_enabled
    assert kinetics.tau_LD == (1.0, 0.05)


def test_build_composition():
    config = load_config()
    base = build_composition(config)
    assert base.Mn == 1.37
    assert build_composition(config, "filler") is None
    filler = build_composition(config.replace("material.filler", {"C": 0.05}), "filler")
    assert filler.C == 0.05
    assert filler.Mn == 0.0
    with pytest.raises(ValueError):
        build_composition(config, "clad")


def test_build_material_db_overrides():
    config = from_mapping(
        {
            "material": {
                "phases": {"ferrite": {"sigma_y0": [[20, 400], [600, 200]], "k": 45.0}},
                "fracture": {"bainite": {"Gc0": 50.0, "ell": 0.3}},
            }
        }
    )
    db = build_material_db(config)
    assert db.phase("ferrite").sigma_y0(310.0) == pytest.approx(300e6)
    assert db.phase("ferrite").k(1000.0) == pytest.approx(45.0)
    assert db.fracture("bainite").Gc0 == pytest.approx(50e3)
    assert db.fracture("bainite").ell == pytest.approx(0.3e-3)


def test_build_pressurization_si_units():
    config = from_mapping(
        {
            "pressurization": {"pressure": 10.0, "beta": 0.0, "single_pass": True},
            "defects": [{"start": [0.0, 372.8], "end": [0.0, 374.8], "name": "root"}],
        }
    )
    program, settings, defects = build_pressurization(config)
    assert program.pressure == 10e6
    assert program.radius == pytest.approx(0.3769)
    assert program.thickness == pytest.approx(8.2e-3)
    assert settings.beta == 0.0
    assert settings.single_pass
    assert dict(settings.initial) == {"ferrite": 0.75, "pearlite": 0.25}
    assert defects[0].length == pytest.approx(2e-3)
    assert defects[0].name == "root"


def test_build_weld():
    passes, settings = build_weld(load_config())
    assert [p.bead for p in passes] == ["bead_1", "bead_2"]
    assert settings.fixed == (("anchor", 0), ("anchor", 1), ("roller", 1))
    assert settings.filler is None
    assert settings.bc.emissivity == 0.8


def test_build_ssy():
    arguments = build_ssy(load_config())
    assert arguments["K_max"] == 150e6
    assert arguments["C_uniform"] is None
    with_hydrogen = build_ssy(from_mapping({"ssy": {"hydrogen_concentration": 0.5}}))
    assert with_hydrogen["C_uniform"] == 0.5


def test_build_mesh_strip():
    config = from_mapping({"mesh": {"demo": "strip", "half_width": 10.0, "h": 2.0}})
    mesh = build_mesh(config)
    assert mesh.num_elements == 5


def test_threads(monkeypatch):
    config = load_config()
    monkeypatch.delenv("WELDFRAC_THREADS", raising=False)
    assert threads(config) == 1
    monkeypatch.setenv("WELDFRAC_THREADS", "4")
    assert threads(config) == 4
    assert threads(config.replace("run.threads", 2)) == 2
    monkeypatch.setenv("WELDFRAC_THREADS", "many")
    with pytest.raises(ConfigError, match="not an integer"):
        threads(config)
