import json
import math
import re
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperbat.cli import build_parser, config_from_args, main
from hyperbat.config import GridSpec, Mode, RunConfig
from hyperbat.errors import ConfigInvalid
from hyperbat.output import read_csv
from hyperbat.params import BatteryParams, PulseSpec


def run_cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    columns, rows = read_csv(text)
    return columns, np.array(rows)


# -- trace ----------------------------------------------------------------------------


def test_trace_columns(capsys):
    code, out, _ = run_cli(["trace", "--g", "2", "--gamma", "1", "--grid", "0:5:11"], capsys)
    assert code == 0
    columns, data = table(out)
    assert columns == ["t", "E_norm", "ergotropy_norm", "D", "P"]
    assert data.shape == (11, 5)
    assert out.startswith("# schema: hyperbat-v1\n")
    assert "# units: t=1/gamma;" in out
    np.testing.assert_allclose(data[:, 1], data[:, 4], rtol=1e-11)  # E / (omega_b C) is P
    assert np.all(data[:, 2] <= data[:, 1] + 1e-12)


def test_undriven_trace_has_zero_energy_columns(capsys):
    code, out, _ = run_cli(["trace", "--omega-drive", "0", "--grid", "0:5:11"], capsys)
    assert code == 0
    _, data = table(out)
    assert np.all(data[:, 1] == 0) and np.all(data[:, 2] == 0)
    assert np.all(data[:, 3] == 1)


def test_trace_zeros_at_rotation_half_periods(capsys):
    code, out, _ = run_cli(["trace", "--g", "2", "--gamma", "1", "--grid", "0:5:5001"], capsys)
    assert code == 0
    _, data = table(out)
    t, E = data[:, 0], data[:, 1]
    G = math.sqrt(4 - 1 / 16)
    # the signed amplitude sqrt(E) flips sign at each zero; root-find it linearly
    amp = np.sqrt(E)
    minima = [i for i in range(1, len(t) - 1) if E[i] <= E[i - 1] and E[i] <= E[i + 1]]
    assert len(minima) == 3
    sign = np.ones_like(amp)
    for i in minima:
        j = i if amp[i - 1] - amp[i] < amp[i + 1] - amp[i] else i + 1  # first point past the zero
        sign[j:] *= -1
    signed = amp * sign
    roots = []
    for i in range(len(t) - 1):
        if signed[i] == 0:
            roots.append(t[i])
        elif signed[i] * signed[i + 1] < 0:
            roots.append(t[i] - signed[i] * (t[i + 1] - t[i]) / (signed[i + 1] - signed[i]))
    roots = [r for r in roots if r > 0]
    np.testing.assert_allclose(roots, [n * math.pi / G for n in (1, 2, 3)], atol=1e-6)


def test_trace_is_deterministic(tmp_path):
    path = tmp_path / "a.csv"
    payloads = []
    for _ in range(2):
        assert main(["trace", "--g", "0.3", "--grid", "0:5:51", "--out", str(path)]) == 0
        payloads.append(path.read_bytes())
    assert payloads[0] == payloads[1]


def test_normalized_columns_do_not_depend_on_level_spacing(capsys):
    rows = []
    for w in ("1", "7.5"):
        code, out, _ = run_cli(["trace", "--omega-b", w, "--omega-drive", "1.3", "--grid", "0:5:21"], capsys)
        assert code == 0
        rows.append(table(out)[1])
    np.testing.assert_array_equal(rows[0], rows[1])
    code, out, _ = run_cli(["trace", "--omega-b", "1", "--omega-drive", "0.2", "--grid", "0:5:21"], capsys)
    np.testing.assert_allclose(table(out)[1][:, 1], rows[0][:, 1], rtol=1e-12)


def test_trace_with_oracle(capsys):
    argv = ["trace", "--g", "1", "--omega-drive", "0.5", "--grid", "0:2:5", "--oracle", "on"]
    code, out, _ = run_cli(argv, capsys)
    assert code == 0
    columns, data = table(out)
    assert columns[5:] == ["oracle_E_norm", "oracle_ergotropy_norm", "oracle_D", "oracle_truncation_weight"]
    mask = data[:, 1] > 0
    assert np.max(np.abs(data[mask, 5] / data[mask, 1] - 1)) < 1e-3
    assert np.max(np.abs(data[:, 6] - data[:, 2])) < 1e-3
    assert np.all(data[:, 8] < 1e-6)


def test_trace_with_finite_pulse_oracle(capsys):
    argv = ["trace", "--omega-b", "20", "--g", "2", "--omega-drive", "0.5", "--pulse", "rectangular",
            "--tau", "0.0005", "--n-max", "20", "--grid", "0:0.5:3", "--oracle", "on", "--format", "json"]
    code, out, _ = run_cli(argv, capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["data"][0][5] is None  # the pulse is still on at t = 0
    assert doc["data"][2][5] == pytest.approx(doc["data"][2][1], rel=1e-2)


# -- sweep ----------------------------------------------------------------------------


def test_sweep_at_the_ep_and_strong_coupling(capsys):
    code, out, _ = run_cli(["sweep", "--quantity", "tE", "--grid", "0.25:10:2"], capsys)
    assert code == 0
    columns, data = table(out)
    assert columns == ["g_over_gamma", "tE_gamma", "tE_weak_gamma", "tE_strong_gamma", "regime"]
    assert data[0, 1] == pytest.approx(4.0, rel=1e-15) and data[0, 4] == 0
    code, out, _ = run_cli(["sweep", "--quantity", "Emax", "--grid", "0.25:10:2"], capsys)
    columns, data = table(out)
    assert data[0, 1] == pytest.approx(math.exp(-2), rel=1e-11)
    assert abs(data[1, 1] / (1 - math.pi / 40) - 1) < 1e-2
    assert data[1, 3] == pytest.approx(1 - math.pi / 40, rel=1e-11)


def test_default_sweep_spans_both_asymptotes(capsys):
    code, out, _ = run_cli(["sweep", "--quantity", "tE"], capsys)
    _, data = table(out)
    assert data.shape == (81, 5)
    assert data[0, 0] == pytest.approx(0.01) and data[-1, 0] == pytest.approx(100)
    assert np.all(np.diff(data[:, 1]) < 0)
    assert abs(data[0, 1] / data[0, 2] - 1) < 0.05 and abs(data[-1, 1] / data[-1, 3] - 1) < 1e-3


def test_sweep_needs_loss(capsys):
    code, _, err = run_cli(["sweep", "--gamma", "0"], capsys)
    assert code == 1 and "gamma" in err


# -- verify ----------------------------------------------------------------------------


def test_verify_small_case_passes(capsys):
    code, out, err = run_cli(["verify", "--g", "1", "--omega-drive", "0.5", "--grid", "0:2:5"], capsys)
    assert code == 0 and "PASS" in err
    columns, data = table(out)
    row = dict(zip(columns, data[0]))
    assert row["passed"] == 1 and row["certified"] == 1 and row["rel_err_oracle"] < 1e-3
    assert row["first_moments"] < 1e-8


def test_verify_tiny_cutoff_fails_with_certificate_note(capsys):
    argv = ["verify", "--omega-drive", "1.5", "--n-max", "4", "--g", "2", "--grid", "0:2:3", "--format", "json"]
    code, out, err = run_cli(argv, capsys)
    assert code == 2 and "FAIL" in err
    doc = json.loads(out)
    assert doc["meta"]["status"] == "FAIL"
    assert "truncation certificate violated" in doc["meta"]["notes"]["0"]


def test_verify_lossless_conservation_rows(capsys):
    code, out, _ = run_cli(["verify", "--gamma", "0", "--oracle", "off"], capsys)
    assert code == 0
    columns, data = table(out)
    conservation = data[:, columns.index("conservation")]
    assert data.shape[0] == 18 and np.all(conservation < 1e-8)


def test_verify_parallel_matches_serial(capsys):
    rows = []
    for jobs in ("1", "2"):
        code, out, _ = run_cli(["verify", "--oracle", "off", "--jobs", jobs], capsys)
        assert code == 0
        rows.append(table(out)[1])
    np.testing.assert_array_equal(rows[0], rows[1])


# -- figures ----------------------------------------------------------------------------


@pytest.mark.parametrize("preset", ["fig2a", "fig2b", "fig2c"])
def test_figure_presets_write_data_and_script(preset, tmp_path, capsys):
    code, _, _ = run_cli(["figure", "--preset", preset, "--out", str(tmp_path), "--format", "json"], capsys)
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(f"{preset}.{x}" for x in ("csv", "gp", "json"))
    script = (tmp_path / f"{preset}.gp").read_text()
    assert f'"{preset}.csv"' in script and "plot " in script
    referenced = set(re.findall(r'"([^"]+\.(?:csv|json|dat|txt))"', script))
    assert referenced == {f"{preset}.csv"}


def test_fig2a_columns(tmp_path):
    assert main(["figure", "--preset", "fig2a", "--out", str(tmp_path)]) == 0
    columns, _ = read_csv((tmp_path / "fig2a.csv").read_text())
    assert columns == ["t", "E_norm"] + [f"ergotropy_norm_Omega_{x}" for x in ("0.1", "0.5", "1", "2", "5")]


# -- configuration -------------------------------------------------------------------------


def test_json_output_round_trips_the_config(capsys):
    argv = ["trace", "--g", "0.7", "--gamma", "0.9", "--omega-b", "3", "--grid", "0:4:9", "--format", "json",
            "--pulse", "gaussian", "--tau", "0.01"]
    code, out, _ = run_cli(argv, capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == "hyperbat-v1"
    assert RunConfig.from_dict(doc["config"]) == config_from_args(build_parser().parse_args(argv))


def test_config_file_and_flag_override(tmp_path, capsys):
    base = RunConfig(params=BatteryParams(g=0.5, gamma=2.0), grid=GridSpec(0, 3, 4))
    path = tmp_path / "run.json"
    path.write_text(base.to_json())
    code, out, _ = run_cli(["trace", "--config", str(path), "--g", "1", "--format", "json"], capsys)
    assert code == 0
    cfg = json.loads(out)["config"]
    assert cfg["params"]["g"] == 1.0 and cfg["params"]["gamma"] == 2.0 and cfg["grid"]["count"] == 4


@pytest.mark.parametrize("argv", [
    ["trace", "--grid", "0:1:1"],
    ["trace", "--grid", "0:1:5:log"],
    ["trace", "--g", "-1"],
    ["trace", "--oracle", "maybe"],
    ["trace", "--config", "/nonexistent/run.json"],
    ["trace", "--tau", "-0.1"],
    ["nonsense"],
    [],
])
def test_usage_errors_exit_1(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 1


def test_unknown_config_fields_rejected(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"params": {"g": 1.0}, "colour": "red"}))
    code, _, err = run_cli(["trace", "--config", str(path)], capsys)
    assert code == 1 and "colour" in err


def test_jobs_environment_default(monkeypatch):
    monkeypatch.setenv("HYPERBAT_JOBS", "3")
    assert config_from_args(build_parser().parse_args(["verify"])).jobs == 3
    assert config_from_args(build_parser().parse_args(["verify", "--jobs", "2"])).jobs == 2
    monkeypatch.setenv("HYPERBAT_JOBS", "many")
    assert main(["verify", "--oracle", "off"]) == 1


@pytest.mark.parametrize("argv", [
    ["trace", "--oracle", "on", "--tol", "1e-30", "--grid", "0:1:2", "--omega-drive", "0.5"],
    ["trace", "--oracle", "on", "--n-max", "4", "--omega-drive", "1.5", "--grid", "0:1:2"],
])
def test_numerical_failures_exit_3(argv, capsys):
    code, _, err = run_cli(argv, capsys)
    assert code == 3 and "numerical failure" in err


def test_verify_defaults_to_oracle_on():
    cfg = config_from_args(build_parser().parse_args(["verify"]))
    assert cfg.oracle is True and cfg.mode is Mode.VERIFY
    assert config_from_args(build_parser().parse_args(["trace"])).oracle is False


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=0.01, max_value=10), st.floats(min_value=0, max_value=10),
    st.floats(min_value=0.01, max_value=50), st.floats(min_value=0, max_value=3),
    st.sampled_from(list(Mode)), st.booleans(), st.one_of(st.none(), st.integers(min_value=1, max_value=200)),
    st.one_of(st.none(), st.floats(min_value=1e-4, max_value=1.0)),
)
def test_config_json_round_trip(g, gamma, omega_b, Omega, mode, oracle, n_max, tau):
    pulse = PulseSpec.delta() if tau is None else PulseSpec.finite(tau, "rectangular")
    cfg = RunConfig(params=BatteryParams(omega_b=omega_b, g=g, gamma=gamma, Omega=Omega), pulse=pulse,
                    mode=mode, oracle=oracle, n_max=n_max, grid=GridSpec(0.5, 2.0, 7, log=True))
    assert RunConfig.from_json(cfg.to_json()) == cfg


def test_grid_spec_parsing():
    assert GridSpec.parse("0:5:101") == GridSpec(0.0, 5.0, 101)
    assert GridSpec.parse("0.01:100:5:log").values() == pytest.approx([0.01, 0.1, 1, 10, 100])
    for bad in ("1:2", "a:b:c", "0:1:3:cubic", "1:0:3:log"):
        with pytest.raises(ConfigInvalid):
            GridSpec.parse(bad)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hyperbat.cli", "sweep", "--grid", "1:2:2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.startswith("# schema: hyperbat-v1")
