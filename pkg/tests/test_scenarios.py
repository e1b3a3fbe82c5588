import logging
import math
import re

import numpy as np
import pytest

from afcsim import counting
from afcsim.cli import main as cli_main
from afcsim.scenarios import (
    Calibration,
    ConfigError,
    Scenario,
    apply_overrides,
    calibrate_alpha,
    load_scenario,
    preset_path,
    run_cases,
    run_fig2,
    run_fig4,
    scenario_from_dict,
    scenario_hash,
    write_case_table,
)

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


def load_preset(name):
    return scenario_from_dict(tomllib.loads(preset_path(name).read_text()))


class TestLoading:
    def test_empty_file_gives_baseline(self, tmp_path, caplog):
        path = tmp_path / "empty.toml"
        path.write_text("")
        with caplog.at_level(logging.INFO):
            scn = load_scenario(path)
        assert scn == Scenario()
        assert any("defaulted" in rec.message for rec in caplog.records)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[nonsense]\nx = 1\n")
        with pytest.raises(ConfigError, match="nonsense"):
            load_scenario(path)

    def test_unknown_key_rejected_with_path(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[converter]\nlenght_cm = 2.6\n")
        with pytest.raises(ConfigError, match=r"\[converter\].*lenght_cm"):
            load_scenario(path)

    def test_invariant_violation_reports_section(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[detection]\nlots = 7\n")
        with pytest.raises(ConfigError, match="detection"):
            load_scenario(path)

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("not toml ][")
        with pytest.raises(ConfigError):
            load_scenario(path)

    def test_overrides(self):
        data = apply_overrides({}, ["run.pump_power_w=0.2", "pulse.shape=square"])
        scn = scenario_from_dict(data)
        assert scn.run.pump_power_w == 0.2
        assert scn.pulse.shape == "square"

    def test_bad_override(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["no_equals_sign"])

    def test_hash_stable_and_sensitive(self):
        a = Scenario()
        b = scenario_from_dict(apply_overrides({}, ["run.seed=999"]))
        assert scenario_hash(a) == scenario_hash(Scenario())
        assert scenario_hash(a) != scenario_hash(b)


class TestPresets:
    def test_fig2_preset(self):
        scn = load_preset("fig2")
        assert scn.run.cases == ("fc_only",)
        for anchor in (0.144, 0.252, 0.36):
            assert anchor in scn.run.pump_powers_w
        assert scn.pulse.fwhm_ns == 140.0

    def test_fig3_preset(self):
        scn = load_preset("fig3")
        assert scn.run.cases == ("fc_only", "pit", "echo")
        assert scn.run.pump_power_w == 0.144
        assert scn.run.storage_times_us == (1.6,)
        assert min(scn.run.mu_values) == 0.05 and max(scn.run.mu_values) == 2.0
        assert scn.detection.signal_window_length_ns == 400.0
        assert scn.detection.noise_window_length_ns == 2360.0

    def test_fig4_preset(self):
        scn = load_preset("fig4")
        assert scn.pulse.fwhm_ns == 560.0
        assert scn.detection.signal_window_length_ns == 1200.0
        assert scn.run.storage_times_us == (1.6, 2.5, 5.0, 7.5, 10.0)
        assert scn.run.mu_per_storage == (1.0, 1.0, 1.0, 1.0, 0.4)

    @pytest.mark.parametrize("name", ["fig2", "fig3", "fig4"])
    def test_preset_numerics_carry_comments(self, name):
        # every numeric entry traces to a commented anchor on or near its line
        lines = preset_path(name).read_text().splitlines()
        for i, line in enumerate(lines):
            if "=" not in line or line.lstrip().startswith("#"):
                continue
            if not re.search(r"\d", line.split("=", 1)[1]):
                continue
            context = lines[max(0, i - 3) : i + 1]
            assert any("#" in l for l in context), f"{name}: uncommented numeric: {line}"

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset_path("fig7")


class TestCalibration:
    def test_alpha_matches_closed_form(self, baseline_scenario, calibration):
        # independent arithmetic for the converter-only anchor
        eta_dev = 0.22 * math.sin(2.6 * math.sqrt(0.144)) ** 2
        dark = 10.0 * 400e-9
        expected = (eta_dev * 0.6 / 2.70 - dark) / 0.144**2
        assert calibrate_alpha(baseline_scenario) == pytest.approx(expected, rel=1e-12)
        assert calibration.alpha == pytest.approx(expected, rel=1e-12)

    def test_depth_scale_hits_anchor(self, baseline_scenario, pipeline, calibration):
        out, eta, _, _ = pipeline.echo_solution(1.6, calibration.depth_scale)
        assert eta == pytest.approx(0.198, abs=1e-3)
        assert 0 < calibration.depth_scale <= 1


@pytest.fixture(scope="module")
def fig2_rows():
    return run_fig2(load_preset("fig2"))


class TestFig2:
    @pytest.fixture
    def rows(self, fig2_rows):
        return fig2_rows

    def test_rows_ordered_by_power(self, rows):
        powers = [r["pump_power_w"] for r in rows]
        assert powers == sorted(powers)

    def test_zero_power_row(self, rows):
        r0 = rows[0]
        assert r0["eta_dev"] == 0.0
        # darks only: 10 Hz x 400 ns
        assert r0["noise_per_pulse"] == pytest.approx(4e-6, rel=0.5)

    def test_efficiency_anchor_252mw(self, rows):
        r = next(r for r in rows if abs(r["pump_power_w"] - 0.252) < 1e-9)
        assert 0.20 <= r["eta_dev"] <= 0.22

    def test_noise_grows_quadratically(self, rows):
        # pump-noise dominated rows scale as P^2
        r1 = next(r for r in rows if abs(r["pump_power_w"] - 0.18) < 1e-9)
        r2 = next(r for r in rows if abs(r["pump_power_w"] - 0.36) < 1e-9)
        assert r2["noise_per_pulse"] / r1["noise_per_pulse"] == pytest.approx(4.0, rel=0.05)

    def test_snr_crosses_one_near_peak_power(self, rows):
        snrs = {r["pump_power_w"]: r["snr"] for r in rows}
        assert snrs[0.144] == pytest.approx(2.70, rel=0.05)
        assert snrs[0.252] > 1.0
        assert snrs[0.36] < 1.0


@pytest.fixture(scope="module")
def fig3_results(calibration):
    return run_cases(load_preset("fig3"), calibration)


class TestRunCases:
    @pytest.fixture
    def results(self, fig3_results):
        return fig3_results

    def test_three_cases_present(self, results):
        assert sorted(r.case for r in results) == ["echo", "fc_only", "pit"]

    def test_mu1_anchors(self, results):
        mu1 = {r.case: r.fit.mu1 for r in results}
        assert mu1["fc_only"] == pytest.approx(0.37, abs=0.04)
        assert mu1["pit"] == pytest.approx(0.23, abs=0.03)
        assert mu1["echo"] <= mu1["fc_only"] / 100.0

    def test_pit_noise_reduction(self, results):
        # the weak-axis line absorbs a third of the broadband noise
        fc = next(r for r in results if r.case == "fc_only")
        pit = next(r for r in results if r.case == "pit")
        n_fc = np.mean([p.n_counts for p in fc.points])
        n_pit = np.mean([p.n_counts for p in pit.points])
        assert n_pit / n_fc == pytest.approx(0.67 * 0.66, rel=0.05)

    def test_total_efficiency_measured(self, results):
        echo = next(r for r in results if r.case == "echo")
        eta, sigma = echo.eta_tot_measured
        assert eta == pytest.approx(0.0200, abs=0.002)

    def test_inset_trace_ratio(self, results):
        # stored-and-retrieved trace peaks roughly an order below the input
        echo = next(r for r in results if r.case == "echo")
        fc = next(r for r in results if r.case == "fc_only")
        h_echo = echo.histograms[("echo", 1.6, 0.1)]
        h_fc = fc.histograms[("fc_only", 1.6, 0.1)]
        # smooth over 5 bins before peak comparison
        k = np.ones(5) / 5.0
        pk_echo = np.convolve(h_echo.counts, k, mode="same").max()
        pk_fc = np.convolve(h_fc.counts, k, mode="same").max()
        assert 5.0 <= pk_fc / pk_echo <= 20.0

    def test_replay_determinism(self, results, calibration, tmp_path):
        scn = load_preset("fig3")
        again = run_cases(scn, calibration)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_case_table(results, scn, p1)
        write_case_table(again, scn, p2)
        assert p1.read_bytes() == p2.read_bytes()


@pytest.fixture(scope="module")
def fig4_rows(calibration):
    return run_fig4(load_preset("fig4"), calibration)


class TestFig4:
    @pytest.fixture
    def rows(self, fig4_rows):
        return fig4_rows

    def test_flat_then_rolloff(self, rows):
        eta = {r["storage_time_us"]: r["eta_afc"] for r in rows}
        assert all(eta[t] >= 0.15 for t in (1.6, 2.5, 5.0))
        assert eta[7.5] < 0.10
        assert eta[10.0] < 0.10

    def test_total_efficiency_above_one_percent(self, rows):
        for r in rows:
            if r["storage_time_us"] <= 5.0:
                assert r["eta_tot"] > 0.01

    def test_snr_above_100_up_to_5us(self, rows):
        for r in rows:
            if r["storage_time_us"] <= 5.0:
                assert r["snr"] > 100.0

    def test_long_storage_uses_reduced_mu(self, rows):
        last = next(r for r in rows if r["storage_time_us"] == 10.0)
        assert last["mu_in"] == 0.4


class TestCli:
    def test_calibrate_and_fig2(self, tmp_path, capsys):
        assert cli_main(["calibrate", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "calibration.toml").exists()
        assert cli_main(["fig2", "--out", str(tmp_path), "--seed", "3"]) == 0
        assert (tmp_path / "fig2_results.csv").exists()
        out = capsys.readouterr().out
        assert "alpha" in out

    def test_run_scenario_file(self, tmp_path):
        path = tmp_path / "scn.toml"
        path.write_text(
            '[run]\ncases = ["fc_only"]\nmu_values = [0.5, 1.0]\n'
            "[detection]\npulses_total = 60000\nlots = 10\npulses_per_lot = 6000\n"
        )
        assert cli_main(["run", str(path), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "run_results.csv").exists()

    def test_config_error_exit_code(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[typo_section]\nz = 1\n")
        assert cli_main(["run", str(path), "--out", str(tmp_path)]) == 2

    def test_dump_profile_pit_only(self, tmp_path):
        assert (
            cli_main(
                [
                    "dump-profile",
                    "--out",
                    str(tmp_path),
                    "--override",
                    "memory.pit_only=true",
                ]
            )
            == 0
        )
        dump = tmp_path / "profile_pit.txt"
        data = np.loadtxt(dump)
        assert data.shape[1] == 2
        inside = np.abs(data[:, 0]) < 5.0
        assert data[inside, 1].max() < 1e-6
        assert data[~inside, 1].max() > 10.0


class TestErrorShrinkage:
    def test_mu1_error_scales_with_ensemble(self, calibration):
        # quadrupling the pulse budget halves the fitted uncertainty
        base = load_preset("fig3")
        small = scenario_from_dict(
            apply_overrides(
                {},
                [
                    "run.cases=['fc_only']",
                    "detection.pulses_total=300000",
                    "detection.lots=50",
                    "detection.pulses_per_lot=6000",
                ],
            )
        )
        big = scenario_from_dict(apply_overrides({}, ["run.cases=['fc_only']"]))
        f_small = run_cases(small, calibration)[0].fit
        f_big = run_cases(big, calibration)[0].fit
        ratio = f_small.mu1_sigma / f_big.mu1_sigma
        assert ratio == pytest.approx(2.0, rel=0.15)
