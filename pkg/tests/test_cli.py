import csv
import json

import numpy as np
import pytest

from hitgen import cli
from hitgen.bench import BENCH_HEADER, BenchRow, bench_cell, check_ratios, run_bench, wall_ratios
from hitgen.io import encode_ppm, read_ppm, to_bytes, write_csv
from hitgen.numerics import BACKWARD_RULES, ops
from hitgen.runconfig import RunConfig, RunConfigError
from hitgen.verify import SUITES, run_suite


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def header_of(stdout: str) -> dict:
    first = stdout.splitlines()[0]
    assert first.startswith("# ")
    return json.loads(first[2:])


# -- file formats -----------------------------------------------------------------------------

def test_pixel_mapping():
    assert list(to_bytes(np.array([-1.0, 1.0, 0.0, -3.0, 7.0]))) == [0, 255, 128, 0, 255]


def test_ppm_header_and_round_trip(tmp_path):
    img = np.random.default_rng(0).uniform(-1, 1, (32, 32, 3))
    data = encode_ppm(img)
    assert data.startswith(b"P6\n32 32\n255\n")
    assert len(data) == len(b"P6\n32 32\n255\n") + 32 * 32 * 3
    (tmp_path / "a.ppm").write_bytes(data)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), to_bytes(img))
    with pytest.raises(ValueError):
        encode_ppm(np.zeros((4, 4)))


def test_ppm_non_square_header():
    assert encode_ppm(np.zeros((2, 5, 3))).startswith(b"P6\n5 2\n255\n")


def test_csv_blank_for_missing_and_lf_endings(tmp_path):
    path = write_csv(tmp_path / "t.csv", ("a", "b"), [(1, None), (2, 0.5)])
    assert path.read_bytes() == b"a,b\n1,\n2,0.5\n"


# -- run configuration -----------------------------------------------------------------------

@pytest.mark.parametrize("bad", [{"sed": 1}, {"train": {"gama": 1.0}}, {"bench": {"size": [4]}},
                                 {"preset": "toy_32", "generator": {"latent": 3}},
                                 {"preset": "toy_32", "generator": {"stages": [{"res": 8}]}}])
def test_unknown_config_keys_rejected(bad):
    with pytest.raises(RunConfigError, match="unknown keys"):
        RunConfig.from_dict(bad)


def test_config_values_checked():
    with pytest.raises(RunConfigError):
        RunConfig.from_dict({"dtype": "f16"})
    with pytest.raises(RunConfigError):
        RunConfig.from_dict({"preset": "toy_32", "generator": {"initial_size": 4}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"preset": "nope"})


def test_config_overrides_and_resolution():
    cfg = RunConfig.from_dict({"preset": "toy_32", "seed": 4,
                               "generator": {"norm": "layer", "attention_mode": "axial"}})
    g = cfg.generator_config()
    assert (g.norm, g.seed, g.stages[0].self_attn.mode) == ("layer", 4, "axial")
    assert cfg.resolved()["resolved_generator"]["norm"] == "layer"
    assert RunConfig().with_default_preset("toy_8").preset == "toy_8"
    assert RunConfig(preset="toy_32").with_default_preset("toy_8").preset == "toy_32"


def test_config_file_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"preset": "toy_32", "colour": 1}')
    code, _, err = run(capsys, "generate", "--config", bad, "--out", tmp_path)
    assert code == 2 and "unknown keys" in err
    bad.write_text("{not json")
    assert run(capsys, "params", "--config", bad)[0] == 2


# -- commands --------------------------------------------------------------------------------

def test_params_with_reference(capsys):
    code, out, _ = run(capsys, "params", "--preset", "hit_b_256")
    assert code == 0
    rows = list(csv.reader(out.splitlines()[1:-1]))
    assert rows[0] == ["group", "params", "reference", "deviation"]
    assert [r[0] for r in rows[1:]] == ["latent"] + [f"stage {i}" for i in range(1, 7)] + ["total"]
    assert sum(int(r[1]) for r in rows[1:-1]) == int(rows[-1][1])
    assert rows[-1][2] == "46.22M"


def test_params_without_reference(capsys):
    code, out, _ = run(capsys, "params", "--preset", "toy_32")
    assert code == 0 and out.splitlines()[1] == "group,params"
    assert out.splitlines()[-2] == "total,63846"


def test_generate_writes_ppm_and_manifest(tmp_path, capsys):
    code, out, _ = run(capsys, "generate", "--seed", 3, "--count", 2, "--out", tmp_path)
    assert code == 0
    assert header_of(out)["latent_seeds"] == [3, 4]
    for s in (3, 4):
        data = (tmp_path / f"sample_seed{s}.ppm").read_bytes()
        assert data.startswith(b"P6\n32 32\n255\n") and len(data) == 13 + 32 * 32 * 3
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert [m["latent_seed"] for m in manifest["images"]] == [3, 4]
    assert manifest["config"]["resolved_generator"]["name"] == "toy_32"


def test_generate_is_repeatable(tmp_path, capsys):
    for sub in ("a", "b"):
        assert run(capsys, "generate", "--seed", 9, "--out", tmp_path / sub)[0] == 0
    assert (tmp_path / "a" / "sample_seed9.ppm").read_bytes() == (tmp_path / "b" / "sample_seed9.ppm").read_bytes()


def test_interpolate_endpoints_match_generate(tmp_path, capsys):
    assert run(capsys, "interpolate", "--seed-a", 1, "--seed-b", 2, "--steps", 3, "--out", tmp_path)[0] == 0
    assert run(capsys, "generate", "--seed", 1, "--count", 2, "--out", tmp_path)[0] == 0
    assert (tmp_path / "interp_1_2_000.ppm").read_bytes() == (tmp_path / "sample_seed1.ppm").read_bytes()
    assert (tmp_path / "interp_1_2_002.ppm").read_bytes() == (tmp_path / "sample_seed2.ppm").read_bytes()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "generate"


def test_argument_errors(capsys, tmp_path):
    assert run(capsys, "generate", "--count", 0, "--out", tmp_path)[0] == 2
    assert run(capsys, "interpolate", "--steps", 1, "--out", tmp_path)[0] == 2
    with pytest.raises(SystemExit):
        cli.main(["bench", "--modes", "sparse"])
    with pytest.raises(SystemExit):
        cli.main(["generate", "--preset", "hit_zz"])


def test_train_short_run(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"steps": 2, "batch_size": 4, "eval_every": 1, "eval_samples": 16,
                                         "disc_hidden": 8}}))
    code, out, _ = run(capsys, "train", "--config", cfg, "--out", tmp_path)
    assert code == 0
    assert header_of(out)["config"]["preset"] == "toy_8"
    rows = list(csv.reader((tmp_path / "train.csv").read_text().splitlines()))
    assert rows[0] == ["step", "loss_d", "loss_g", "r1", "moment_distance"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
    assert json.loads((tmp_path / "train.config.json").read_text())["config"]["train"]["steps"] == 2


def test_bench_small(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "--sizes", "256", "--modes", "full,multi_axis,axial,interleaved",
                       "--repeats", 1, "--out", tmp_path)
    assert code == 0
    rows = list(csv.reader((tmp_path / "bench.csv").read_text().splitlines()))
    assert tuple(rows[0]) == BENCH_HEADER
    assert [r[1] for r in rows[1:]] == ["full", "multi_axis", "axial", "interleaved"]
    counts = {r[1]: int(r[2]) for r in rows[1:]}
    assert counts["full"] == 16 * counts["multi_axis"]
    assert "wall-time ratio" in out


def test_verify_roundtrip_suite(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "--suite", "roundtrip", "--out", tmp_path)
    assert code == 0
    lines = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert lines[0] == "name,max_error,threshold,verdict"
    assert all(ln.endswith(",PASS") for ln in lines[1:]) and len(lines) > 5
    assert (tmp_path / "verify.csv").exists() and (tmp_path / "verify.config.json").exists()


# -- benchmark and verification internals ---------------------------------------------------------

def test_bench_rows_and_ratios():
    rows = run_bench([16, 64], ["full", "multi_axis"], repeats=1, dim=8)
    check_ratios(rows)
    assert [r.logit_count for r in rows if r.N == 16] == [512, 128]
    assert len(wall_ratios(rows)) == 2
    with pytest.raises(AssertionError):
        check_ratios([BenchRow(16, "full", 500, 1), BenchRow(16, "multi_axis", 128, 1)])
    with pytest.raises(ValueError):
        bench_cell(15, "full")
    assert BenchRow(4, "full", 8, None).cells()[-1] == "skipped"


def test_verify_suites_cover_enough_properties():
    names = [r.name for r in run_suite("roundtrip")]
    assert len(set(names)) == len(names)
    assert SUITES == ("gradcheck", "equivalence", "roundtrip")


def test_verify_catches_a_broken_gradient_rule():
    original = BACKWARD_RULES["exp"]
    BACKWARD_RULES["exp"] = lambda g, ins, out: (ops.mul(ops.mul(g, out), 1.001),)
    try:
        results = {r.name: r for r in run_suite("gradcheck")}
    finally:
        BACKWARD_RULES["exp"] = original
    assert not results["gradcheck.exp"].passed
    assert results["gradcheck.exp"].line().endswith(",FAIL")
    assert results["gradcheck.add"].passed
    assert {r.name: r.passed for r in run_suite("gradcheck")}["gradcheck.exp"]


def test_verify_all_exit_code_and_count(capsys):
    code, out, _ = run(capsys, "verify")
    lines = [ln for ln in out.splitlines() if not ln.startswith("#")][1:]
    assert code == 0
    assert len(lines) >= 20
    assert out.splitlines()[-1].startswith(f"# {len(lines)}/{len(lines)} properties passed")
