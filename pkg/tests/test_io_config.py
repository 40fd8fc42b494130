import math

import numpy as np
import pytest
import yaml

from reprocs.config import ConfigError, ExperimentConfig, dump_config, load_config
from reprocs.experiment import aggregate
from reprocs.io import MAGIC, fmt_float, load_matrix, read_csv, save_matrix, write_csv
from reprocs.model import make_dataset

CONFIGS = __import__("pathlib").Path(__file__).resolve().parents[1] / "configs"

# sha256 of (M, L, S, N) for seeds 0 and 1 of the shipped desk configurations
PINNED = {
    "desk_reprocs": (
        "7046a10b7e0a14c2a966422f3fba34b4e85f0808d810972763b2a9805828b697",
        "5ee0576eb0715742a2812abfe6729450b5b41f61823d5f6603bd2f305c75b3d9",
    ),
    "desk_static": (
        "47661d2757d3317d730e842d375524904531ca69635a143878674be6d8342dd6",
        "eee18170fb59f8fcb56ad7f4d9c021df8c76c85360b66189956310469b0196d6",
    ),
    "desk_cpca": (
        "7364780f3c323288bb24cfa612278c94f2c65a8189d26f8285fc311539e5ef38",
        "4f1afa59c279a9b6ac9a75615da79c85c6a25bc63fa0cbb0ca33c983157c4725",
    ),
}


def _raw(name="desk_reprocs"):
    with open(CONFIGS / f"{name}.yaml") as fh:
        return yaml.safe_load(fh)


@pytest.mark.parametrize("name", sorted(PINNED))
def test_shipped_dataset_checksums(name):
    cfg = load_config(CONFIGS / f"{name}.yaml")
    assert tuple(make_dataset(cfg.model, s).checksum() for s in (0, 1)) == PINNED[name]


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.params().alpha == cfg.algorithm.alpha


def test_missing_key_is_named():
    raw = _raw()
    del raw["model"]["s"]
    with pytest.raises(ConfigError, match="model.s"):
        ExperimentConfig.from_dict(raw)
    raw = _raw()
    del raw["algorithm"]
    with pytest.raises(ConfigError, match="algorithm"):
        ExperimentConfig.from_dict(raw)


def test_unknown_keys_rejected():
    raw = _raw()
    raw["model"]["colour"] = 1
    with pytest.raises(ConfigError, match="colour"):
        ExperimentConfig.from_dict(raw)
    raw = _raw()
    raw["extra"] = {}
    with pytest.raises(ConfigError, match="extra"):
        ExperimentConfig.from_dict(raw)


def test_cpca_cluster_sizes_checked():
    raw = _raw("desk_cpca")
    raw["algorithm"]["cluster_sizes"][0] = [2, 2, 5]
    with pytest.raises(ConfigError, match="r_1"):
        ExperimentConfig.from_dict(raw)


def test_resolved_config_round_trip(tmp_path):
    cfg = load_config(CONFIGS / "desk_cpca.yaml")
    dump_config(cfg, tmp_path / "resolved.yaml")
    again = load_config(tmp_path / "resolved.yaml")
    assert again.to_dict() == cfg.to_dict()
    # every default is written out
    raw = yaml.safe_load((tmp_path / "resolved.yaml").read_text())
    assert "noise_amp" in raw["model"] and "max_outer" in raw["algorithm"] and "quantiles" in raw["run"]


def test_seed_count_expands():
    raw = _raw()
    raw["run"]["seeds"] = 3
    assert ExperimentConfig.from_dict(raw).run.seeds == [0, 1, 2]


def test_matrix_container_round_trip(tmp_path):
    A = np.random.default_rng(0).standard_normal((5, 7))
    A[0, 0] = np.nan
    p = tmp_path / "A.bin"
    save_matrix(p, A)
    raw = p.read_bytes()
    assert raw[:8] == MAGIC and len(raw) == 16 + 8 * 35
    assert int.from_bytes(raw[8:12], "little") == 5
    B = load_matrix(p)
    assert np.array_equal(A, B, equal_nan=True)
    # row-major payload
    assert np.frombuffer(raw[24:32], "<f8")[0] == A[0, 1]


def test_matrix_container_rejects_garbage(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOTAMATRIX" + bytes(20))
    with pytest.raises(ValueError, match="magic"):
        load_matrix(p)
    save_matrix(p, np.ones((3, 3)))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError, match="expected"):
        load_matrix(p)


def test_csv_format(tmp_path):
    p = tmp_path / "a.csv"
    write_csv(p, ["t", "x", "flag", "name"], [(1, 0.1, True, 'he said "hi", ok'), (2, math.nan, False, "b")])
    raw = p.read_bytes()
    assert raw.startswith(b"t,x,flag,name\r\n")
    assert b'"he said ""hi"", ok"' in raw
    assert b"0.10000000000000001" in raw
    header, rows = read_csv(p)
    assert rows[1] == ["2", "nan", "0", "b"]
    assert float(rows[0][1]) == 0.1


def test_fmt_float_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, 123456789.123456789):
        assert float(fmt_float(x)) == x
    assert fmt_float(float("inf")) == "inf"


def _table(rng, frames=5):
    t = np.arange(101, 101 + frames)
    body = rng.random((frames, 6))
    body[:, 3] = body[:, 3] > 0.5
    return np.column_stack([t, body])


def test_aggregate_single_run_equals_run():
    tab = _table(np.random.default_rng(0))
    header, rows = aggregate([tab], (0.1, 0.5, 0.9))
    assert header[:5] == ["t", "se_t_mean", "se_t_q10", "se_t_q50", "se_t_q90"]
    for i, row in enumerate(rows[:-1]):
        vals = np.array(row[1:], dtype=float).reshape(6, 4)
        assert np.allclose(vals, np.repeat(tab[i, 1:, None], 4, axis=1))
    assert rows[-1][0] == "summary"


def test_aggregate_order_invariant():
    rng = np.random.default_rng(1)
    tabs = [_table(rng) for _ in range(6)]
    a = aggregate(tabs)
    b = aggregate(tabs[::-1])
    c = aggregate([tabs[i] for i in (3, 0, 5, 1, 4, 2)])
    assert a == b == c


def test_aggregate_rejects_misaligned():
    rng = np.random.default_rng(2)
    a, b = _table(rng), _table(rng)
    b[:, 0] += 1
    with pytest.raises(ValueError):
        aggregate([a, b])
