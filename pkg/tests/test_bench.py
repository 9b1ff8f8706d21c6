"""Benchmark driver and report serialization tests."""

import json

import numpy as np
import pytest

from hmx.bench import (
    BenchConfig,
    BenchRecord,
    CSV_COLUMNS,
    emit_report,
    read_report,
    run_matvec_bench,
    run_solver_bench,
    scheme_labels,
)

FAST = dict(spheres=1, refinement=0, reps=2, sets=2)


def make_record(**overrides):
    kwargs = dict(scheme="m1-double", threads=1, mean_time_s=0.001234567891234,
                  stddev_s=1.5e-05, payload_bytes=4096, iterations=None,
                  true_residual=None, speedup=1.0)
    kwargs.update(overrides)
    return BenchRecord(**kwargs)


def test_record_quantizes_to_nine_digits():
    rec = make_record(mean_time_s=0.123456789123456)
    assert rec.mean_time_s == 0.123456789
    rec = make_record(true_residual=9.876543219876e-07)
    assert rec.true_residual == 9.87654322e-07


def test_scheme_labels_prepend_baseline():
    cfg = BenchConfig(schemes=("m2-mixed",), c_list=(3,), **FAST)
    assert scheme_labels(cfg) == ["m1-double", "m2-mixed", "m3:c=3"]


def test_scheme_labels_dedupe():
    cfg = BenchConfig(schemes=("m1-double", "m1-double", "m2-single"), **FAST)
    assert scheme_labels(cfg) == ["m1-double", "m2-single"]


def test_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(reps=0)
    with pytest.raises(ValueError):
        BenchConfig(sets=0)
    with pytest.raises(ValueError):
        BenchConfig(threads=())
    with pytest.raises(ValueError):
        BenchConfig(threads=(1, 0))
    with pytest.raises(ValueError):
        BenchConfig(schemes=(), c_list=())


def test_matvec_bench_records():
    cfg = BenchConfig(schemes=("m1-single",), threads=(1, 2), **FAST)
    records = run_matvec_bench(cfg)
    assert len(records) == 4  # (baseline + m1-single) x two thread counts
    assert [r.scheme for r in records[:2]] == ["m1-double", "m1-single"]
    for rec in records:
        assert rec.mean_time_s > 0.0
        assert rec.payload_bytes > 0
        assert rec.iterations is None
        assert rec.true_residual is None
        assert len(rec.set_times) == cfg.sets
    base = records[0]
    assert base.scheme == "m1-double"
    assert base.speedup == 1.0
    # halved payload for the pure FP32 copy of the same matrix
    assert records[1].payload_bytes * 2 == base.payload_bytes


def test_solver_bench_records():
    cfg = BenchConfig(schemes=("m2-double",), threads=(1,), **FAST)
    records = run_solver_bench(cfg)
    assert len(records) == 2
    for rec in records:
        assert rec.iterations is not None and rec.iterations >= 1
        assert rec.true_residual is not None
        assert rec.true_residual < 1e-6
        assert rec.speedup > 0.0


def test_bench_is_deterministic_apart_from_timing():
    cfg = BenchConfig(schemes=("m1-mixed",), **FAST)
    r1 = run_matvec_bench(cfg)
    r2 = run_matvec_bench(cfg)
    for a, b in zip(r1, r2):
        assert (a.scheme, a.threads, a.payload_bytes) == \
               (b.scheme, b.threads, b.payload_bytes)


def test_emit_csv_header_and_roundtrip(tmp_path):
    records = [
        make_record(),
        make_record(scheme="m3:c=-1", threads=4, iterations=17,
                    true_residual=3.21e-07, speedup=1.23456789),
    ]
    path = tmp_path / "report.csv"
    text = emit_report(records, "csv", path)
    lines = text.strip().splitlines()
    assert lines[0] == "scheme,threads,mean_time_s,stddev_s,payload_bytes," \
                       "iterations,true_residual,speedup"
    assert path.read_text() == text
    # blank cells for values that do not apply
    assert lines[1].endswith(",,,1")
    assert read_report(path) == records


def test_emit_json_roundtrip(tmp_path):
    records = [make_record(scheme="m2-mixed", true_residual=1.5e-08)]
    path = tmp_path / "report.json"
    text = emit_report(records, "json", path)
    parsed = json.loads(text)
    assert parsed[0]["scheme"] == "m2-mixed"
    assert parsed[0]["iterations"] is None
    assert list(parsed[0]) == list(CSV_COLUMNS)
    assert read_report(path) == records


def test_emit_without_path_returns_text_only(tmp_path):
    text = emit_report([make_record()], "csv")
    assert text.startswith("scheme,")


def test_emit_empty_is_an_error(tmp_path):
    path = tmp_path / "nothing.csv"
    with pytest.raises(ValueError):
        emit_report([], "csv", path)
    assert not path.exists()


def test_emit_unknown_format():
    with pytest.raises(ValueError):
        emit_report([make_record()], "xml")


def test_csv_floats_have_at_most_nine_significant_digits(tmp_path):
    rec = make_record(mean_time_s=1.0 / 3.0, speedup=2.0 / 3.0)
    text = emit_report([rec], "csv")
    cells = text.strip().splitlines()[1].split(",")
    for cell in (cells[2], cells[7]):
        digits = cell.replace(".", "").replace("-", "").lstrip("0")
        assert len(digits) <= 9


def test_read_report_rejects_foreign_header(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_report(path)


def test_matvec_bench_uses_seeded_source():
    # same seed, same payload results; different seed still works
    cfg_a = BenchConfig(schemes=("m1-double",), seed=7, **FAST)
    cfg_b = BenchConfig(schemes=("m1-double",), seed=8, **FAST)
    assert run_matvec_bench(cfg_a)[0].payload_bytes == \
           run_matvec_bench(cfg_b)[0].payload_bytes


def test_single_record_csv_is_two_lines():
    text = emit_report([make_record()], format="csv")
    lines = text.strip().splitlines()
    assert len(lines) == 2
    assert lines[1].startswith("m1-double,1,")


def test_scheme_token_all_expands_to_fixed_six():
    cfg = BenchConfig(schemes=("all",), c_list=(2,))
    labels = scheme_labels(cfg)
    assert labels == ["m1-double", "m1-single", "m1-mixed",
                      "m2-double", "m2-single", "m2-mixed", "m3:c=2"]
