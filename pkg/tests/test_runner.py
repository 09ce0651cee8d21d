import numpy as np
import pytest

from qdhyper import detection as det
from qdhyper import runner
from qdhyper.runner import ConfigError, RunConfig
from qdhyper.source import SourceParams, build_hyper_state

IDEAL = SourceParams(eps=0.0)


class TestConfig:
    def test_defaults(self):
        cfg = runner.parse_config("")
        assert cfg.campaign == "hyper-256"
        assert cfg.n_pairs_per_setting == 10_000

    def test_echo_round_trip(self, tmp_path):
        text = "source.preset = calibrated\nrun.campaign = tb-at-HH\nrun.seed = 7\nrun.pairs = 500\n"
        cfg = runner.parse_config(text).replace(output_dir=tmp_path)
        again = runner.parse_config(runner.dump_config(cfg))
        assert again == cfg

    def test_calibrated_preset(self):
        cfg = runner.parse_config("source.preset = calibrated")
        assert cfg.source.fss == 0.5
        assert cfg.source.cross_dephasing == pytest.approx(0.176, abs=1e-3)

    def test_comments_and_blank_lines(self):
        cfg = runner.parse_config("# header\n\nrun.seed = 3  # trailing\n")
        assert cfg.seed == 3

    @pytest.mark.parametrize(
        "text, key",
        [
            ("run.colour = red", "run.colour"),
            ("source.spin = 1", "source.spin"),
            ("run.pairs = lots", "run.pairs"),
            ("run.campaign = hyper-512", "run.campaign"),
            ("run.pairs = 0", "run.pairs"),
            ("bootstrap.resamples = 3", "bootstrap.resamples"),
            ("run.seed", "run.seed"),
        ],
    )
    def test_invalid_key_names_field(self, text, key):
        with pytest.raises(ConfigError) as info:
            runner.parse_config(text)
        assert info.value.field == key

    def test_invalid_source_value(self):
        with pytest.raises(ConfigError) as info:
            runner.parse_config("source.eps = 2")
        assert info.value.field == "source"


class TestCampaigns:
    def test_setting_counts(self):
        assert len(runner.campaign_settings("pol-only", IDEAL)) == 16
        assert len(runner.campaign_settings("tb-at-HH", IDEAL)) == 4
        assert len(runner.campaign_settings("hyper-256", IDEAL)) == 64

    def test_subspace_campaign_shares_measurement_record(self):
        a = RunConfig(campaign="hyper-256", n_pairs_per_setting=200)
        b = a.replace(campaign="subspace-from-hyper")
        _, _, ca = runner.simulate_campaign(a)
        _, _, cb = runner.simulate_campaign(b)
        assert [pc.counts for pc in ca] == [pc.counts for pc in cb]

    def test_settings_use_independent_streams(self):
        cfg = RunConfig(campaign="tb-at-HH", n_pairs_per_setting=2000)
        _, hists, _ = runner.simulate_campaign(cfg)
        assert not np.array_equal(hists[0].counts, hists[1].counts)

    def test_exact_campaign_has_no_histograms(self):
        _, hists, counts = runner.simulate_campaign(RunConfig(campaign="pol-only"), exact=True)
        assert hists == [] and len(counts) == 16


class TestRun:
    def test_noiseless_polarization(self):
        rep = runner.run(RunConfig(source=IDEAL, campaign="pol-only", n_pairs_per_setting=10**6))
        assert rep.metrics["F_p"] > 0.99
        assert rep.metrics["C_p"] > 0.99
        assert rep.exit_code == runner.EXIT_OK

    def test_deterministic_report(self, tmp_path):
        cfg = RunConfig(campaign="tb-at-HH", n_pairs_per_setting=2000, seed=11)
        r1 = runner.run(cfg.replace(output_dir=tmp_path / "a"))
        r2 = runner.run(cfg.replace(output_dir=tmp_path / "b"))
        assert (tmp_path / "a" / "report.txt").read_bytes() == (tmp_path / "b" / "report.txt").read_bytes()
        assert r1.text == r2.text

    def test_seed_changes_report(self):
        cfg = RunConfig(campaign="tb-at-HH", n_pairs_per_setting=2000)
        assert runner.run(cfg).text != runner.run(cfg.replace(seed=1)).text

    def test_written_artifacts(self, tmp_path):
        rep = runner.run(RunConfig(campaign="tb-at-HH", n_pairs_per_setting=1000, output_dir=tmp_path))
        names = {p.name for p in rep.files}
        assert {"config.txt", "counts.tsv", "peaks.tsv", "rho_timebin.json", "report.txt"} <= names
        assert len(list((tmp_path / "histograms").glob("setting_*_antidiagonal.csv"))) == 4
        # the echoed config reproduces the run
        again = runner.run(runner.load_config(tmp_path / "config.txt").replace(output_dir=None))
        assert again.text == rep.text

    def test_histograms_can_be_skipped(self, tmp_path):
        runner.run(RunConfig(campaign="tb-at-HH", n_pairs_per_setting=500, output_dir=tmp_path,
                             write_histograms=False))
        assert not (tmp_path / "histograms").exists()

    def test_nonconvergence_flagged(self):
        cfg = runner.parse_config("run.campaign = pol-only\nrun.pairs = 1000\nmle.max_iterations = 2")
        rep = runner.run(cfg)
        assert not rep.converged
        assert rep.exit_code == runner.EXIT_CONVERGENCE
        assert "converged=False" in rep.text

    def test_gap_reported_for_hyper_campaigns(self):
        rep = runner.run(runner.parse_config(
            "source.preset = calibrated\nrun.campaign = subspace-from-hyper\nrun.pairs = 2000"))
        gap = runner.hyper_gap(rep.config.source)
        assert gap["gap"] == pytest.approx(gap["model"] - 0.55)
        assert "[hyper fidelity gap]" in rep.text
        assert f"{gap['gap']:+.4f}" in rep.text


class TestSweep:
    def test_ideal_visibility(self):
        res = runner.sweep_phase(RunConfig(source=IDEAL), 16, exact=True)
        assert res.visibility == pytest.approx(1.0, abs=1e-6)

    def test_partial_coherence(self):
        src = IDEAL.replace(tb_dephasing=0.74)
        res = runner.sweep_phase(RunConfig(source=src), 12, exact=True)
        assert res.visibility == pytest.approx(0.74, abs=1e-3)
        # agrees with the middle-region probability read straight off the detector model
        rho = build_hyper_state(src).rho16
        p = [det.outcome_probabilities(rho, det.MeasurementSetting.from_labels("HH", 0.0, x))[(1, 1)]
             for x in (0.0, np.pi)]
        assert (p[0] - p[1]) / (p[0] + p[1]) == pytest.approx(0.74, abs=1e-9)

    def test_visibility_matches_density_matrix(self, calibrated):
        res = runner.sweep_phase(RunConfig(source=calibrated), 8, exact=True)
        rho = build_hyper_state(calibrated).rho16
        assert res.visibility == pytest.approx(runner.timebin_visibility(rho), abs=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_poisson_within_three_sigma(self, seed):
        cfg = RunConfig(source=IDEAL.replace(tb_dephasing=0.74), seed=seed)
        res = runner.sweep_phase(cfg, 16, exact=False)
        assert res.visibility_err > 0
        assert abs(res.visibility - 0.74) < 3 * res.visibility_err

    def test_too_few_points(self):
        with pytest.raises(ConfigError):
            runner.sweep_phase(RunConfig(), 3)

    def test_fit_recovers_sinusoid(self):
        phi = np.linspace(0, 2 * np.pi, 9, endpoint=False)
        a, amp, vis, _ = runner.fit_visibility(phi, 5 + 2 * np.cos(phi - 0.4))
        assert (a, amp, vis) == pytest.approx((5, 2, 0.4), abs=1e-12)
