import pytest

from qkd_audit.errors import SchemaViolation
from qkd_audit.scenario import KINDS, SCHEMAS, parse_scenario, parse_uint

from tests.conftest import SCENARIO_DIR


def test_comments_and_blank_lines_are_ignored(write_scenario):
    path = write_scenario(
        "# 注释行\n"
        "\n"
        "kind = table1\n"
        "eps = 1e-10   # 行尾注释\n"
        "   key_bits=64\n"
    )
    scenario = parse_scenario(path)
    assert scenario.kind == "table1"
    assert scenario.parameters == {"eps": 1e-10, "key_bits": 64}
    assert scenario.rng_seed == 0
    assert scenario.resolved()["rng_seed"] == 0


def test_subcommand_supplies_kind(write_scenario):
    path = write_scenario("eps = 0.1\nkey_bits = 4\n")
    assert parse_scenario(path, kind="table1").kind == "table1"
    with pytest.raises(SchemaViolation) as exc:
        parse_scenario(path)
    assert exc.value.key == "kind"


def test_missing_required_key_is_named(write_scenario):
    path = write_scenario("kind = table1\neps = 0.1\n")
    with pytest.raises(SchemaViolation) as exc:
        parse_scenario(path)
    assert exc.value.key == "key_bits"


def test_unknown_and_duplicate_keys(write_scenario):
    with pytest.raises(SchemaViolation) as exc:
        parse_scenario(write_scenario("kind = table1\neps = 0.1\nkey_bits = 4\ncolour = red\n"))
    assert exc.value.key == "colour"
    with pytest.raises(SchemaViolation) as exc:
        parse_scenario(write_scenario("kind = table1\neps = 0.1\neps = 0.2\nkey_bits = 4\n"))
    assert exc.value.key == "eps"


def test_kind_mismatch(write_scenario):
    path = write_scenario("kind = table1\neps = 0.1\nkey_bits = 4\n")
    with pytest.raises(SchemaViolation) as exc:
        parse_scenario(path, kind="bb84")
    assert exc.value.key == "kind"


def test_bad_values(write_scenario):
    with pytest.raises(SchemaViolation) as exc:
        parse_scenario(write_scenario("kind = table1\neps = tiny\nkey_bits = 4\n"))
    assert exc.value.key == "eps"
    with pytest.raises(SchemaViolation):
        parse_scenario(write_scenario("kind = coherent\nm = 4\nmean_photon = 1\nbob_key_known = maybe\n"))
    with pytest.raises(SchemaViolation):
        parse_scenario(write_scenario("kind = table1\neps 0.1\n"))


def test_seed_override(write_scenario):
    path = write_scenario("kind = coupling\np = 0.5, 0.5\nq = 1, 0\nrng_seed = 0x10\n")
    assert parse_scenario(path).rng_seed == 16
    assert parse_scenario(path, seed=99).rng_seed == 99
    assert parse_scenario(path).parameters["q"] == [1.0, 0.0]


def test_parse_uint_range():
    assert parse_uint(str(2 ** 64 - 1)) == 2 ** 64 - 1
    with pytest.raises(ValueError):
        parse_uint(str(2 ** 64))
    with pytest.raises(ValueError):
        parse_uint("-1")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_scenario(str(tmp_path / "absent.txt"))


def test_shipped_scenarios_parse():
    paths = sorted(SCENARIO_DIR.glob("*.txt"))
    assert paths
    seen = {parse_scenario(str(p)).kind for p in paths}
    assert seen == set(KINDS) == set(SCHEMAS)
