import json
import logging

from comix.logs import RecordWriter, read_records, setup_logging


def test_record_writer_sorted_and_flushed(tmp_path):
    path = tmp_path / "m.ndjson"
    with RecordWriter(path) as w:
        w.write({"b": 1, "a": [0.5, 2]})
        assert path.read_text(encoding="utf-8") == '{"a":[0.5,2],"b":1}\n'
    with RecordWriter(path, append=True) as w:
        w.write({"c": 3})
    assert read_records(path) == [{"a": [0.5, 2], "b": 1}, {"c": 3}]


def test_truncated_tail_ignored(tmp_path):
    path = tmp_path / "m.ndjson"
    path.write_text('{"episode":0}\n{"episode":1}\n{"episo', encoding="utf-8")
    assert [r["episode"] for r in read_records(path)] == [0, 1]


def test_setup_logging_writes_ndjson(tmp_path):
    logger = setup_logging(tmp_path, "INFO")
    again = setup_logging(tmp_path, "INFO")
    assert logger is again
    assert len(logger.handlers) == 2
    logging.getLogger("comix.test").info("hello", extra={"episode": 7})
    for h in logger.handlers:
        h.flush()
    lines = (tmp_path / "comix.ndjson").read_text(encoding="utf-8").strip().splitlines()
    rec = json.loads(lines[-1])
    assert rec["message"] == "hello"
    assert rec["episode"] == 7
    assert rec["level"] == "INFO"
