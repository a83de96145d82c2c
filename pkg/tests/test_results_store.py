import pytest
from pydantic import ValidationError

from gclbench.results_store import RunRecord, RunStore, generate_cell_key


def record(cell_key="abc", value=0.5, **overrides):
    fields = dict(method="untrained", dataset="toy", train_size=10, fraction=1.0, seed=0,
                  metric="accuracy", value=value, config_hash="f" * 16, cell_key=cell_key)
    fields.update(overrides)
    return RunRecord(**fields)


class TestRunRecord:
    def test_value_must_be_a_probability(self):
        with pytest.raises(ValidationError, match="outside"):
            record(value=1.2)

    def test_ok_needs_value(self):
        with pytest.raises(ValidationError, match="needs a value"):
            record(value=None)

    def test_failed_without_value(self):
        failed = record(value=None, status="failed", error="ProbeError: one class")
        assert failed.value is None


class TestCellKey:
    def test_stable_and_order_independent(self):
        a = generate_cell_key("h", {"method": "random", "seed": 1, "fraction": 0.5})
        b = generate_cell_key("h", {"fraction": 0.5, "seed": 1, "method": "random"})
        assert a == b
        assert len(a) == 16

    def test_depends_on_hash_and_cell(self):
        base = generate_cell_key("h", {"seed": 1})
        assert base != generate_cell_key("g", {"seed": 1})
        assert base != generate_cell_key("h", {"seed": 2})


class TestRunStore:
    def test_miss_then_hit(self, tmp_path):
        store = RunStore(tmp_path)
        assert store.get("abc") is None
        store.put(record())
        assert store.get("abc") == record()

    def test_put_overwrites(self, tmp_path):
        store = RunStore(tmp_path)
        store.put(record(value=0.1))
        store.put(record(value=0.9))
        assert store.get("abc").value == 0.9
        assert len(store.load_all()) == 1

    def test_no_temp_files_left(self, tmp_path):
        store = RunStore(tmp_path)
        store.put(record())
        assert not list(store.records_dir.glob("*.tmp"))

    def test_unreadable_record_is_a_miss(self, tmp_path):
        store = RunStore(tmp_path)
        store.path_for("bad").write_text("{not json\n", encoding="utf-8")
        assert store.get("bad") is None

    def test_load_all_sorted_and_stats(self, tmp_path):
        store = RunStore(tmp_path)
        store.put(record("k1", method="random", seed=1))
        store.put(record("k2", method="random", seed=0))
        store.put(record("k3", method="handcrafted", value=None, status="failed", error="x"))
        assert [(r.method, r.seed) for r in store.load_all()] == [("handcrafted", 0), ("random", 0), ("random", 1)]
        assert store.stats()["total"] == 3
        assert store.stats()["failed"] == 1
