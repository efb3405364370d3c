import gzip

import pytest

from src.constants import KIB, SECTOR_SIZE, TRACE_OP_READ, TRACE_OP_WRITE
from src.errors import AddressRangeError, InvalidParamsError, TraceFormatError
from src.modules.io_request import FillRequest, ReadRequest, UpdateRequest
from src.modules.trace import (
    SynthParams,
    TraceRecord,
    VolumeMapping,
    format_line,
    generate,
    map_to_updates,
    parse_line,
    profile_params,
    read_trace,
    write_trace,
)
from tests.conftest import small_config


def W(offset, size, volume="v", ts=0):
    return TraceRecord(ts, volume, offset, size, TRACE_OP_WRITE)


# --- parsing ---

def test_parse_valid_line():
    rec = parse_line("1200,vol7,4096,8192,W")
    assert rec == TraceRecord(1200, "vol7", 4096, 8192, "W")
    assert rec.end == 12288 and rec.is_write


def test_parse_accepts_lowercase_op_and_spaces():
    assert parse_line(" 5 , v , 0 , 512 , r ").op == TRACE_OP_READ


@pytest.mark.parametrize("line,field", [
    ("x,,,-1,Z", "timestamp_us"),
    ("-4,v,0,512,W", "timestamp_us"),
    ("1,,0,512,W", "volume_id"),
    ("1,v,100,512,W", "offset"),
    ("1,v,0,0,W", "size"),
    ("1,v,0,512,D", "op"),
    ("1,v,0,512", "line"),
    ("1,v,0,512,W,extra", "line"),
])
def test_parse_names_first_bad_field(line, field):
    with pytest.raises(TraceFormatError) as info:
        parse_line(line, line_no=9)
    assert info.value.field == field
    assert info.value.line_no == 9


def test_format_then_parse_is_identity():
    rec = TraceRecord(77, "vol", 1024, 4096, TRACE_OP_WRITE)
    assert parse_line(format_line(rec)) == rec


@pytest.mark.parametrize("name", ["t.csv", "t.csv.gz"])
def test_write_and_read_trace_file(tmp_path, name):
    records = [W(i * 4 * KIB, 4 * KIB, ts=i) for i in range(20)]
    path = tmp_path / "sub" / name
    assert write_trace(str(path), records) == 20
    assert list(read_trace(str(path))) == records


def test_read_skips_header_comments_and_blanks(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("timestamp_us,volume_id,offset,size,op\n# note\n\n1,v,0,512,W\n", encoding="utf-8")
    assert list(read_trace(str(path))) == [W(0, 512, ts=1)]


def test_read_reports_line_number(tmp_path):
    path = tmp_path / "t.csv.gz"
    with gzip.open(path, "wt", encoding="utf-8") as f:
        f.write("1,v,0,512,W\n2,v,0,512,Q\n")
    with pytest.raises(TraceFormatError) as info:
        list(read_trace(str(path)))
    assert info.value.line_no == 2 and info.value.field == "op"


# --- volume mapping ---

def test_volumes_take_slots_in_order():
    cfg = small_config()
    mapping = VolumeMapping(cfg)
    assert mapping.stripes_per_volume == 8
    assert mapping.locate("a", 0) == (0, 0, 0)
    assert mapping.locate("b", 0) == (8, 0, 0)
    assert mapping.locate("a", 256 * KIB + 70 * KIB) == (1, 1, 6 * KIB)
    with pytest.raises(AddressRangeError):
        mapping.slot_of("c")
    with pytest.raises(AddressRangeError):
        mapping.locate("a", cfg.volume_bytes)


def test_pieces_split_at_block_boundaries():
    mapping = VolumeMapping(small_config())
    pieces = list(mapping.pieces(W(60 * KIB, 72 * KIB)))
    assert pieces == [(0, 0, 60 * KIB, 4 * KIB), (0, 1, 0, 64 * KIB), (0, 2, 0, 4 * KIB)]
    with pytest.raises(AddressRangeError):
        list(mapping.pieces(W(2 * 1024 * KIB - 4 * KIB, 8 * KIB)))


# --- fill / update classification ---

def test_first_write_fills_then_overlap_updates():
    cfg = small_config()
    reqs = list(map_to_updates([W(0, 8 * KIB), W(4 * KIB, 8 * KIB)], cfg))
    assert [(type(r), r.offset, r.length) for r in reqs] == [
        (FillRequest, 0, 8 * KIB),
        (UpdateRequest, 4 * KIB, 4 * KIB),
        (FillRequest, 8 * KIB, 4 * KIB),
    ]


def test_reads_pass_through_and_do_not_mark():
    cfg = small_config()
    records = [TraceRecord(0, "v", 0, 4 * KIB, TRACE_OP_READ), W(0, 4 * KIB)]
    reqs = list(map_to_updates(records, cfg))
    assert isinstance(reqs[0], ReadRequest) and reqs[0].length == 4 * KIB
    assert isinstance(reqs[1], FillRequest)


def test_classification_matches_sector_set():
    cfg = small_config()
    params = profile_params("ali", 3000, seed=4, volume_bytes=cfg.volume_bytes)
    records = list(generate(params))
    seen = set()
    for req in map_to_updates(records, cfg, mapping=VolumeMapping(cfg)):
        assert req.offset + req.length <= cfg.ec.block_size
        sectors = {(req.stripe_id, req.block_index, s)
                   for s in range(req.offset // SECTOR_SIZE, (req.offset + req.length - 1) // SECTOR_SIZE + 1)}
        if isinstance(req, FillRequest):
            assert not sectors & seen
        else:
            assert sectors <= seen
        seen |= sectors
    assert seen


def test_payloads_follow_seed():
    cfg = small_config()
    records = [W(0, 8 * KIB)]
    a = list(map_to_updates(records, cfg, payload_seed=1))
    b = list(map_to_updates(records, cfg, payload_seed=1))
    c = list(map_to_updates(records, cfg, payload_seed=2))
    assert a[0].payload == b[0].payload != c[0].payload


# --- synthetic generation ---

def test_generate_is_deterministic():
    params = profile_params("ten", 500, seed=9)
    assert list(generate(params)) == list(generate(profile_params("ten", 500, seed=9)))
    assert list(generate(params)) != list(generate(profile_params("ten", 500, seed=10)))


def test_generated_size_mix():
    records = list(generate(profile_params("ali", 20_000, seed=1)))
    small = sum(r.size <= 4 * KIB for r in records) / len(records)
    medium = sum(r.size <= 16 * KIB for r in records) / len(records)
    assert small == pytest.approx(0.46, abs=0.02)
    assert medium == pytest.approx(0.60, abs=0.02)
    assert all(r.offset % (4 * KIB) == 0 for r in records)
    assert [r.timestamp_us for r in records] == sorted(r.timestamp_us for r in records)


def test_full_repeat_hits_one_extent():
    params = SynthParams(total_ops=200, frac_4k=1.0, frac_16k=1.0, repeat_ratio=1.0, seed=3)
    extents = {(r.offset, r.size) for r in generate(params)}
    assert len(extents) == 1


def test_full_adjacency_is_contiguous():
    params = SynthParams(total_ops=200, repeat_ratio=0.0, adjacency_ratio=1.0, seed=3)
    records = list(generate(params))
    contiguous = [cur.offset == prev.end for prev, cur in zip(records, records[1:])]
    # a write that would run past the volume end restarts at a random offset
    assert all(c or prev.end + cur.size > params.volume_bytes
               for c, prev, cur in zip(contiguous, records, records[1:]))
    assert sum(contiguous) >= len(contiguous) - 1


def test_read_ratio_produces_reads():
    records = list(generate(profile_params("msr", 2000, seed=2)))
    reads = sum(r.op == TRACE_OP_READ for r in records) / len(records)
    assert reads == pytest.approx(0.3, abs=0.05)


def test_empty_stream():
    assert list(generate(SynthParams(total_ops=0))) == []


def test_profile_and_params_validation():
    with pytest.raises(InvalidParamsError):
        profile_params("fiu", 10)
    bad = [
        dict(total_ops=-1),
        dict(total_ops=1, frac_4k=0.7, frac_16k=0.5),
        dict(total_ops=1, repeat_ratio=1.5),
        dict(total_ops=1, working_set_fraction=0.0),
        dict(total_ops=1, volume_bytes=64 * KIB),
    ]
    for values in bad:
        with pytest.raises(InvalidParamsError):
            SynthParams(**values).validate()
