"""Digital twin: calibration, exactness on a clean plant, rehearsal."""

import dataclasses

import pytest

from lumenops.errors import CalibrationError, CommandError
from lumenops.field import init_field, make_command, service_to_payload
from lumenops.scenarios import case1_services, case2_services, case3_services
from lumenops.topology import default_topology, make_service
from lumenops.twin import (GSNR_CONVERGED_DB, STAGE_NAMES, DigitalTwin,
                           golden_section)


def test_golden_section_finds_parabola_minimum():
    x, value, iterations = golden_section(lambda v: (v - 0.3) ** 2,
                                          -1.0, 1.0, tol=1e-6)
    assert x == pytest.approx(0.3, abs=1e-5)
    assert value == pytest.approx(0.0, abs=1e-9)
    assert iterations > 0


def test_calibration_tightens_the_model():
    field = init_field(default_topology(), case1_services(), seed=2,
                       noise_sigma_db=0.1)
    twin = DigitalTwin(default_topology())
    snap = field.collect_snapshot(count=8)
    report = twin.calibrate(snap)
    assert twin.calibration_state == "Calibrated"
    assert report.final_max_gsnr_error_db < report.gsnr_error_before_db
    assert report.final_max_gsnr_error_db < 0.25
    names = {s.name for s in report.stages}
    assert names == set(STAGE_NAMES)


def test_calibration_on_clean_plant_is_exact_and_stops_early():
    field = init_field(default_topology(), case1_services(), seed=0,
                       noise_sigma_db=0.0, perturb=False)
    twin = DigitalTwin(default_topology())
    report = twin.calibrate(field.collect_snapshot(count=2))
    assert report.gsnr_error_before_db < 1e-9
    assert report.final_max_gsnr_error_db < 1e-9
    assert report.stopped_early


@pytest.mark.parametrize("roster", [case1_services, case2_services,
                                    case3_services])
def test_uncalibrated_twin_matches_clean_field_exactly(roster):
    services = roster()
    field = init_field(default_topology(), services, seed=0,
                       noise_sigma_db=0.0, perturb=False)
    twin = DigitalTwin(default_topology())
    frame = field.collect_performance()
    estimate = {c.service_id: c.gsnr_db
                for c in twin.estimate_qot(field.list_services()).channels}
    for ch in frame.channels:
        assert abs(estimate[ch.service_id] - ch.gsnr_db) <= 1e-9


def test_calibrate_rejects_empty_telemetry_and_bad_stage():
    field = init_field(default_topology(), [], seed=0)
    twin = DigitalTwin(default_topology())
    with pytest.raises(CalibrationError):
        twin.calibrate(field.collect_snapshot(count=1))
    field2 = init_field(default_topology(), case1_services(), seed=0)
    with pytest.raises(CalibrationError):
        twin.calibrate(field2.collect_snapshot(count=1),
                       stage_order=("warp",))


def test_prediction_error_statistics():
    field = init_field(default_topology(), case1_services(), seed=4,
                       noise_sigma_db=0.05)
    twin = DigitalTwin(default_topology())
    snap = field.collect_snapshot(count=6)
    twin.calibrate(snap)
    pred = twin.prediction_error(
        twin.estimate_qot(field.list_services()), snap)
    assert set(pred.per_channel_db) == {s.service_id
                                        for s in field.list_services()}
    assert pred.max_abs_db >= pred.mean_abs_db >= 0.0
    assert pred.max_abs_db < 0.5


def test_rehearse_drop_is_side_effect_free():
    twin = DigitalTwin(default_topology())
    services = [dataclasses.replace(s) for s in case2_services()]
    commands = [make_command("DropService", {"service_id": sid})
                for sid in ("pa-1", "pa-2", "pa-3")]
    result = twin.rehearse(commands, services, min_margin_db=1.0)
    assert result.feasible
    assert result.required_margin_db == 1.0
    before_ids = {c.service_id for c in result.before.channels}
    after_ids = {c.service_id for c in result.after.channels}
    assert before_ids - after_ids == {"pa-1", "pa-2", "pa-3"}
    # survivors improve or hold when channels leave the comb
    before = {c.service_id: c.gsnr_db for c in result.before.channels}
    for ch in result.after.channels:
        assert ch.gsnr_db >= before[ch.service_id] - 1e-12
    assert len(result.command_digests) == 3


def test_rehearse_add_judges_margins():
    twin = DigitalTwin(default_topology())
    services = case3_services()
    svc = make_service("svc-new", ("2", "1"), 193.75, 800)
    ok = twin.rehearse([make_command("AddService", service_to_payload(svc))],
                       services, min_margin_db=1.0)
    assert ok.feasible
    assert "svc-new" in {c.service_id for c in ok.after.channels}
    strict = twin.rehearse(
        [make_command("AddService", service_to_payload(svc))],
        services, min_margin_db=10.0)
    assert not strict.feasible


def test_rehearse_rejects_tampered_command():
    twin = DigitalTwin(default_topology())
    cmd = make_command("DropService", {"service_id": "pa-1"})
    forged = dataclasses.replace(cmd, payload={"service_id": "pb-1"})
    with pytest.raises(CommandError):
        twin.rehearse([forged], case2_services())


def test_export_import_round_trip():
    field = init_field(default_topology(), case1_services(), seed=1)
    twin = DigitalTwin(default_topology())
    twin.calibrate(field.collect_snapshot(count=4))
    clone = DigitalTwin.import_text(twin.export_text())
    assert clone.calibration_state == twin.calibration_state
    got = clone.estimate_qot(field.list_services())
    want = twin.estimate_qot(field.list_services())
    for a, b in zip(got.channels, want.channels):
        assert a.gsnr_db == pytest.approx(b.gsnr_db, abs=1e-12)


def test_calibration_hits_case1_bound_for_every_seed_is_cheap_spotcheck():
    # seed 1 was historically the hardest; keep it pinned here
    field = init_field(default_topology(), case1_services(), seed=1,
                       noise_sigma_db=0.1)
    twin = DigitalTwin(default_topology())
    report = twin.calibrate(field.collect_snapshot(count=8))
    truth = {c.service_id: c.gsnr_db
             for c in field.noise_free_report().channels}
    worst = max(abs(c.gsnr_db - truth[c.service_id])
                for c in twin.estimate_qot(field.list_services()).channels)
    assert worst <= 0.25
    assert report.final_max_gsnr_error_db < 1.0
    assert GSNR_CONVERGED_DB == 0.05
