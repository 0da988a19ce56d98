from importlib import resources

import pytest

from rvspoof.catalog import (
    Feasibility,
    Status,
    coverage_report,
    format_catalog,
    load_catalog,
    parse_catalog,
    query_vectors,
)
from rvspoof.errors import DuplicateVector, ParseError, UnknownFlowReference
from rvspoof.flows import AttackPath, Sensor

from . import oracles

GOOD = "FP1|Obstacle Missing|LiDAR|laser_projection|known|ref-a|object|AtkPath4|$$$|S2|light|no|R2|active|car|outdoor|AF3"


@pytest.fixture(scope="module")
def catalog():
    return load_catalog()


def reference_text():
    return resources.files("rvspoof").joinpath("data/catalog_reference.txt").read_text()


def test_reference_totals(catalog):
    rep = coverage_report(catalog)
    assert (rep.total, rep.known, rep.unexplored) == (103, 26, 77)
    assert rep.by_class == {"C1": 7, "C2": 34, "C3": 36}
    assert rep.summary_line() == "total=103 known=26 unexplored=77"


def test_totals_agree_with_raw_line_oracle(catalog):
    total, known, classes, known_by_pattern = oracles.catalog_counts(reference_text())
    rep = coverage_report(catalog)
    assert (total, known, classes) == (rep.total, rep.known, rep.by_class)
    assert known_by_pattern["FP14"] == 3
    assert known_by_pattern["FP3"] == 2


def test_per_pattern_known_counts(catalog):
    rep = coverage_report(catalog)
    assert rep.by_pattern["FP3"][1] == 2
    assert rep.by_pattern["FP14"][1] == 3
    assert sum(t for t, _, _ in rep.by_pattern.values()) == 103


def test_reference_keys_iff_known(catalog):
    for r in catalog:
        if r.status is Status.KNOWN:
            assert r.references and r.feasibility is None
        else:
            assert not r.references and r.feasibility in set(Feasibility)


def test_every_record_joins_a_flow(catalog):
    assert all(flows for flows in catalog.flow_join.values())
    mic = query_vectors(catalog, sensor=Sensor.MICROPHONE)
    assert len(mic) == 1
    assert mic[0].flows == ("AF28", "AF29", "AF30")
    assert mic[0].patterns == ("FP11", "FP12", "FP13")


def test_query_examples(catalog):
    us = query_vectors(catalog, sensor="Ultrasonic")
    assert [(r.pattern, r.attack) for r in us] == [
        ("FP9", "Obstacle Distance Altering"),
        ("FP10", "Lateral Distance Altering"),
    ]
    fp14 = query_vectors(catalog, status="known", pattern="FP14")
    assert len(fp14) == 3
    assert {r.sensor for r in fp14} == {Sensor.GPS, Sensor.IMU}
    roi = query_vectors(catalog, attack_path=AttackPath.P7)
    assert roi and all(set(r.flows) <= {"AF35", "AF38", "AF41", "AF44"} for r in roi)
    assert len(query_vectors(catalog, feasibility="C3")) == 36


def test_query_order_is_catalog_order(catalog):
    recs = query_vectors(catalog, sensor="LiDAR")
    idx = [catalog.records.index(r) for r in recs]
    assert idx == sorted(idx)


def test_unknown_clause_rejected(catalog):
    with pytest.raises(ValueError):
        query_vectors(catalog, colour="red")


def test_query_everything_is_identity_for_coverage(catalog):
    assert coverage_report(query_vectors(catalog, lambda r: True)) == coverage_report(catalog)


def test_format_round_trip(catalog):
    again = parse_catalog(format_catalog(catalog))
    assert again.records == catalog.records


def test_empty_file():
    assert len(parse_catalog("")) == 0
    assert coverage_report(parse_catalog("# only a comment\n")).total == 0


def test_duplicate_vector():
    with pytest.raises(DuplicateVector) as err:
        parse_catalog(GOOD + "\n" + GOOD + "\n")
    assert err.value.line == 2


def test_malformed_line_reports_line_number():
    lines = [GOOD.replace("laser_projection", t) for t in ("laser_projection", "shape_manipulation", "object_placement")]
    text = "# header\n\n" + "\n".join(lines) + "\n#\nFP1|broken\n"
    with pytest.raises(ParseError) as err:
        parse_catalog(text)
    assert err.value.line == 7
    assert "line 7" in str(err.value)


@pytest.mark.parametrize(
    "field, value",
    [(2, "Sonar"), (3, "drilling"), (5, "C4"), (7, "AtkPath9"), (8, "$$$$"), (14, "boat")],
)
def test_bad_fields(field, value):
    cols = GOOD.split("|")
    cols[4], cols[5] = ("unexplored", "C1") if field == 5 else (cols[4], cols[5])
    cols[field] = value
    with pytest.raises(ParseError):
        parse_catalog("|".join(cols))


def test_unknown_flow_reference():
    with pytest.raises(UnknownFlowReference):
        parse_catalog(GOOD.replace("|AF3", "|AF99"))
