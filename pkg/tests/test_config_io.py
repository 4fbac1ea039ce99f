import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from menr_twin.config import (
    SCHEMA,
    build_run_config,
    canonical_json,
    config_from_run,
    config_hash,
    load_config,
    parse_config_text,
    with_overrides,
    with_rod_signs,
)
from menr_twin.errors import ConfigError
from menr_twin.experiment import RunConfig, simulate_run
from menr_twin.io import (
    SERIES_COLUMNS,
    errorbar_svg,
    load_schema,
    read_csv,
    read_json,
    write_csv,
    write_json,
    write_series_csv,
)

ROD = """[[rods]]
length_m = 0.2
sign_B = 1
sign_E = 1
"""


class TestParse:
    def test_empty_gives_defaults(self):
        config, resolved = load_config(None)
        assert config == RunConfig()
        assert set(resolved) == set(SCHEMA)
        assert len(resolved["rods"]) == 4

    def test_roundtrip_through_resolved(self):
        config = RunConfig()
        assert build_run_config(config_from_run(config)) == config

    def test_unknown_key_has_line(self):
        text = "[cavity]\nfinesse = 30000\nperimeter = 1.6\n"
        with pytest.raises(ConfigError) as info:
            parse_config_text(text)
        assert info.value.line == 3
        assert "line 3" in str(info.value)
        assert "perimeter_m" in str(info.value)

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as info:
            parse_config_text("[cavity]\nfinesse = 1e4\n\n[laser]\npower_W = 1\n")
        assert info.value.section == "laser" and info.value.line == 4

    def test_five_rods(self):
        with pytest.raises(ConfigError, match=r"\[rods\]"):
            parse_config_text(ROD * 5)

    def test_four_rods_accepted(self):
        resolved = parse_config_text(ROD * 4)
        assert [r["sign_E"] for r in resolved["rods"]] == [1, 1, 1, 1]

    def test_bad_sign(self):
        text = ROD * 3 + "[[rods]]\nsign_B = 2\n"
        with pytest.raises(ConfigError) as info:
            parse_config_text(text)
        assert info.value.key == "sign_B" and info.value.line == 14

    def test_wrong_type(self):
        with pytest.raises(ConfigError, match="expected a number"):
            parse_config_text('[lockin]\ntime_constant_s = "ten"\n')

    def test_domain_error_named(self):
        with pytest.raises(ConfigError, match=r"\[cavity\]"):
            parse_config_text("[cavity]\nfinesse = -1\n")

    def test_syntax_error(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("[cavity]\nfinesse = = 2\n")

    def test_shipped_configs_load(self):
        root = Path(__file__).resolve().parents[1] / "configs"
        for name in ("default.toml", "fig2.toml"):
            config, _ = load_config(root / name)
            assert config.cavity.finesse > 0


class TestHash:
    def test_pinned_default(self):
        # changes only when a default value or the canonical form changes
        assert config_hash(load_config(None)[1]) == DEFAULT_HASH

    def test_shipped_default_file_matches_builtin(self):
        root = Path(__file__).resolve().parents[1] / "configs"
        assert config_hash(load_config(root / "default.toml")[1]) == DEFAULT_HASH

    def test_int_and_float_agree(self):
        a = parse_config_text("[cavity]\nfinesse = 30000\n")
        b = parse_config_text("[cavity]\nfinesse = 30000.0\n")
        assert config_hash(a) == config_hash(b)

    def test_key_order_irrelevant(self):
        a = parse_config_text("[cavity]\nfinesse = 1e4\nperimeter_m = 1.6\n")
        b = parse_config_text("[cavity]\nperimeter_m = 1.6\nfinesse = 1e4\n")
        assert config_hash(a) == config_hash(b)

    def test_seed_excluded_but_physics_included(self):
        _, resolved = load_config(None)
        h = config_hash(resolved)
        assert config_hash(with_overrides(resolved, seed=99)) == h
        assert config_hash(with_overrides(resolved, duration=500.0)) != h
        assert config_hash(with_rod_signs(resolved, (-1, -1, -1, -1), (1, 1, 1, 1))) != h

    def test_overrides_do_not_mutate(self):
        _, resolved = load_config(None)
        before = canonical_json(resolved)
        with_overrides(resolved, no_noise=True, seed=3)
        assert canonical_json(resolved) == before


class TestCsv:
    def test_series_roundtrip(self, tmp_path, quiet_config):
        series = simulate_run(quiet_config, keep_series=True).series
        path = write_series_csv(tmp_path / "s.csv", series)
        raw = path.read_bytes()
        assert raw.startswith(b"time_s,e_field_V_per_m,detuning_ccw_Hz,error_signal_V\n")
        assert b"\r" not in raw
        back = read_csv(path)
        assert tuple(back) == SERIES_COLUMNS
        for name in SERIES_COLUMNS:
            assert np.array_equal(back[name], series[name])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1,
                    max_size=20))
    def test_full_precision(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("csv") / "v.csv"
        write_csv(path, {"v": values})
        assert read_csv(path)["v"].tolist() == [float(v) for v in values]


class TestJson:
    def test_sorted_and_finite(self, tmp_path):
        path = write_json(tmp_path / "r.json", {"b": np.float64(1.5), "a": float("nan"),
                                                "c": np.arange(2)})
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        assert read_json(path) == {"a": None, "b": 1.5, "c": [0, 1]}

    def test_schema_is_valid(self):
        jsonschema.Draft202012Validator.check_schema(load_schema())

    def test_schema_rejects_incomplete_run(self):
        record = {"schema_version": "1.0", "kind": "run",
                  "metadata": {"config_hash": "0" * 64, "seed": 0,
                               "timestamp": "2026-01-01T00:00:00+00:00",
                               "package_version": "0.1.0"}}
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(record, load_schema())

    def test_schema_rejects_unknown_kind(self):
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate({"schema_version": "1.0", "kind": "other", "metadata": {}},
                                load_schema())


class TestSvg:
    args = ([0.0, 1e5, 2e5], [0.0, -5.6e-4, -1.1e-3], [2e-4, 2e-4, 2e-4])

    def test_deterministic(self):
        a = errorbar_svg(*self.args, title="t", line=(-5.6e-9, 0.0))
        b = errorbar_svg(*self.args, title="t", line=(-5.6e-9, 0.0))
        assert a == b

    def test_golden(self):
        svg = errorbar_svg(*self.args, title="sweep", xlabel="E", ylabel="dnu",
                           line=(-5.6e-9, 0.0), hline=(-5e-4, 1e-4))
        assert hashlib.sha256(svg.encode()).hexdigest() == GOLDEN_SVG_SHA256

    def test_contents(self):
        svg = errorbar_svg(*self.args, line=(-5.6e-9, 0.0))
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert svg.count("<circle") == 3
        assert 'data-style-version="1"' in svg

    def test_single_point(self):
        assert errorbar_svg([1.0], [2.0], [0.0]).count("<circle") == 1


DEFAULT_HASH = "3d216a52e14b14ccbc8a120a0ef93e13b90ad8b687f8ebbdb5552df7137a046f"
GOLDEN_SVG_SHA256 = "a0f7a78cd7931269190c408622bc58e96336b99cc7ca0cde0155e774d55d062f"


def test_canonical_json_is_compact_and_sorted():
    text = canonical_json({"b": 1, "a": {"d": 2.5, "c": True}})
    assert text == '{"a":{"c":true,"d":"2.5"},"b":"1.0"}'
    assert json.loads(text)["b"] == "1.0"
