"""Configuration, derivations, and schema validation."""

import json

import pytest

from cbsnr.errors import ConfigError
from cbsnr.model import (
    derive_allowance,
    derive_clamps,
    load_config_dict,
    load_config_file,
    set_by_path,
)


def base_config(**extra):
    cfg = {
        "schema_version": 1,
        "name": "unit",
        "num_slots": 100,
        "rb_budget": 25,
        "grant_cap": 2,
        "gate": "DT",
        "scheduler": "RR",
        "classes": [
            {"id": "p1", "idle_slope_share": 0.75, "payload_bytes": 80},
            {"id": "p2", "idle_slope_share": 0.20, "payload_bytes": 160},
            {"id": "p3", "idle_slope_share": 0.05, "payload_bytes": 240},
        ],
        "ues": [
            {"class": "p1", "cqi": 3}, {"class": "p1", "cqi": 3},
            {"class": "p2", "cqi": 8}, {"class": "p2", "cqi": 8},
            {"class": "p3", "cqi": 14}, {"class": "p3", "cqi": 14},
        ],
    }
    cfg.update(extra)
    return cfg


class TestDeriveAllowance:
    def test_direct_product(self):
        assert derive_allowance(0.75, 400_000, 1.0) == 300

    def test_small_share(self):
        assert derive_allowance(0.05, 400_000, 1.0) == 20

    def test_floor_to_minimum(self):
        assert derive_allowance(0.000001, 1000, 1.0) == 1

    def test_bad_share(self):
        with pytest.raises(ConfigError):
            derive_allowance(0.0, 1000, 1.0)


class TestDeriveClamps:
    def test_default_burst_rule(self):
        lo, hi = derive_clamps(payload_bytes=80, allowance=60, max_tbs=500)
        assert hi == 2 * 2 * 60 == 240
        assert lo == -500

    def test_explicit_burst_slots(self):
        lo, hi = derive_clamps(80, 60, 500, burst_slots=5)
        assert hi == 300 and lo == -500

    def test_band_straddles_zero(self):
        lo, hi = derive_clamps(1, 1, 1)
        assert lo < 0 < hi


class TestConfigLoading:
    def test_roundtrip(self):
        cfg = load_config_dict(base_config())
        assert cfg.num_ues == 6
        assert cfg.harq["rtt_slots"] == 4  # default merged in
        assert cfg.phy_table[0] == 3

    def test_unknown_key_is_named(self):
        with pytest.raises(ConfigError, match="grant_cap"):
            load_config_dict(base_config(grant_cap=0))

    def test_unknown_class_ref(self):
        bad = base_config()
        bad["ues"][0]["class"] = "gold"
        with pytest.raises(ConfigError, match="gold"):
            load_config_dict(bad)

    def test_shares_must_sum_to_at_most_one(self):
        bad = base_config()
        bad["classes"][0]["idle_slope_share"] = 0.9
        with pytest.raises(ConfigError, match="sum"):
            load_config_dict(bad)

    def test_event_engine_needs_gated_rr(self):
        with pytest.raises(ConfigError, match="event"):
            load_config_dict(base_config(engine="event", gate="none"))
        with pytest.raises(ConfigError, match="event"):
            load_config_dict(base_config(engine="event", scheduler="PF", gate="none"))

    def test_gated_pf_requires_flag(self):
        with pytest.raises(ConfigError, match="allow_gated"):
            load_config_dict(base_config(scheduler="PF", gate="DT"))
        ok = base_config(scheduler="PF", gate="DT", pf={"allow_gated": True})
        assert load_config_dict(ok).scheduler == "PF"

    def test_template_expansion(self):
        cfg = base_config()
        del cfg["ues"]
        cfg["ue_template"] = {"per_class": [
            {"class": "p1", "count": 1, "cqi": 2},
            {"class": "p2", "count": 1, "cqi": 8},
            {"class": "p3", "count": 1, "cqi": 14},
        ], "num_ues": 10}
        loaded = load_config_dict(cfg)
        assert loaded.num_ues == 10
        per_class = {cid: sum(1 for ue in loaded.ues if ue.cls.id == cid)
                     for cid in ("p1", "p2", "p3")}
        assert sum(per_class.values()) == 10
        assert all(v >= 1 for v in per_class.values())

    def test_missing_phy_file_is_reported(self):
        with pytest.raises(ConfigError, match="no/such/table.txt"):
            load_config_dict(base_config(phy_table_file="no/such/table.txt"))

    def test_overrides(self):
        cfg = load_config_dict(base_config())
        out = cfg.with_overrides(**{"traffic.target_rho": 0.5, "gate": "PU"})
        assert out.traffic["target_rho"] == 0.5
        assert out.gate == "PU"
        assert cfg.traffic["target_rho"] is None  # original untouched

    def test_set_by_path(self):
        d = {}
        set_by_path(d, "a.b.c", 3)
        assert d == {"a": {"b": {"c": 3}}}

    def test_load_file_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config_file(str(tmp_path / "nope.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="valid JSON"):
            load_config_file(str(bad))

    def test_load_file_ok(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(base_config()))
        assert load_config_file(str(path)).name == "unit"

    def test_config_hash_stable(self):
        a = load_config_dict(base_config())
        b = load_config_dict(base_config())
        assert a.config_hash() == b.config_hash()
        c = load_config_dict(base_config(seed=99))
        assert a.config_hash() != c.config_hash()
